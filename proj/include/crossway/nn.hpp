#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "crossway/rng.hpp"

namespace crossway {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline constexpr std::array<int, 3> kHeadSizes{5, 5, 3};

// Scaled orthogonal initialization (QR of a Gaussian matrix).
inline Mat orthogonal_init(int rows, int cols, double gain, Rng& rng) {
  const bool tall = rows >= cols;
  const int m = tall ? rows : cols;
  const int n = tall ? cols : rows;
  Mat a(m, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < m; ++i) a(i, j) = rng.normal();
  Eigen::HouseholderQR<Mat> qr(a);
  Mat q = qr.householderQ() * Mat::Identity(m, n);
  // Fix the sign ambiguity so the result is a deterministic function of a.
  Mat r = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
  for (int j = 0; j < n; ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  Mat w = tall ? q : Mat(q.transpose());
  return gain * w;
}

// Two-hidden-layer tanh trunk with linear output layers. Biases are stored
// as n x 1 matrices so every trainable tensor shares one representation.
struct Mlp {
  Mat w1, b1, w2, b2;
  std::vector<Mat> head_w;
  std::vector<Mat> head_b;

  static Mlp init(int in, int h1, int h2, const std::vector<int>& heads,
                  double head_gain, Rng& rng) {
    Mlp m;
    const double g = std::sqrt(2.0);
    m.w1 = orthogonal_init(h1, in, g, rng);
    m.b1 = Mat::Zero(h1, 1);
    m.w2 = orthogonal_init(h2, h1, g, rng);
    m.b2 = Mat::Zero(h2, 1);
    for (int hs : heads) {
      m.head_w.push_back(orthogonal_init(hs, h2, head_gain, rng));
      m.head_b.push_back(Mat::Zero(hs, 1));
    }
    return m;
  }

  Mlp zeros_like() const {
    Mlp z;
    z.w1 = Mat::Zero(w1.rows(), w1.cols());
    z.b1 = Mat::Zero(b1.rows(), 1);
    z.w2 = Mat::Zero(w2.rows(), w2.cols());
    z.b2 = Mat::Zero(b2.rows(), 1);
    for (std::size_t h = 0; h < head_w.size(); ++h) {
      z.head_w.push_back(Mat::Zero(head_w[h].rows(), head_w[h].cols()));
      z.head_b.push_back(Mat::Zero(head_b[h].rows(), 1));
    }
    return z;
  }

  template <typename F>
  void for_each_tensor(F&& f) {
    f(w1);
    f(b1);
    f(w2);
    f(b2);
    for (std::size_t h = 0; h < head_w.size(); ++h) {
      f(head_w[h]);
      f(head_b[h]);
    }
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    const_cast<Mlp*>(this)->for_each_tensor(
        [&](Mat& t) { f(static_cast<const Mat&>(t)); });
  }
};

struct MlpForward {
  Mat x, a1, a2;
  std::vector<Mat> head_out;
};

inline MlpForward mlp_forward(const Mlp& m, const Mat& x) {
  MlpForward f;
  f.x = x;
  f.a1 = ((m.w1 * x).colwise() + m.b1.col(0)).array().tanh();
  f.a2 = ((m.w2 * f.a1).colwise() + m.b2.col(0)).array().tanh();
  f.head_out.resize(m.head_w.size());
  for (std::size_t h = 0; h < m.head_w.size(); ++h)
    f.head_out[h] = (m.head_w[h] * f.a2).colwise() + m.head_b[h].col(0);
  return f;
}

// Accumulate parameter gradients given per-head output gradients.
inline void mlp_backward(const Mlp& m, const MlpForward& f,
                         const std::vector<Mat>& dhead, Mlp& grad) {
  Mat da2 = Mat::Zero(f.a2.rows(), f.a2.cols());
  for (std::size_t h = 0; h < m.head_w.size(); ++h) {
    grad.head_w[h] += dhead[h] * f.a2.transpose();
    grad.head_b[h].col(0) += dhead[h].rowwise().sum();
    da2 += m.head_w[h].transpose() * dhead[h];
  }
  Mat dz2 = da2.array() * (1.0 - f.a2.array().square());
  grad.w2 += dz2 * f.a1.transpose();
  grad.b2.col(0) += dz2.rowwise().sum();
  Mat dz1 = (m.w2.transpose() * dz2).array() * (1.0 - f.a1.array().square());
  grad.w1 += dz1 * f.x.transpose();
  grad.b1.col(0) += dz1.rowwise().sum();
}

inline void softmax_columns(const Mat& logits, Mat& probs, Mat& log_probs) {
  probs.resizeLike(logits);
  log_probs.resizeLike(logits);
  for (int j = 0; j < logits.cols(); ++j) {
    const double m = logits.col(j).maxCoeff();
    Eigen::ArrayXd shifted = logits.col(j).array() - m;
    Eigen::ArrayXd e = shifted.exp();
    const double sum = e.sum();
    probs.col(j) = e / sum;
    log_probs.col(j) = shifted - std::log(sum);
  }
}

// Adam over one network's tensor list.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(Mlp& params, const Mlp& grads) {
    std::vector<Mat*> ts;
    std::vector<const Mat*> gs;
    params.for_each_tensor([&](Mat& t) { ts.push_back(&t); });
    grads.for_each_tensor([&](const Mat& g) { gs.push_back(&g); });
    if (m_.empty()) {
      for (auto* t : ts) {
        m_.emplace_back(Mat::Zero(t->rows(), t->cols()));
        v_.emplace_back(Mat::Zero(t->rows(), t->cols()));
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < ts.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * (*gs[i]);
      v_[i] = (beta2_ * v_[i].array() + (1.0 - beta2_) *
               gs[i]->array().square()).matrix();
      ts[i]->array() -=
          lr_ * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + eps_);
    }
  }

  double learning_rate() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Mat> m_, v_;
};

// Actor (three categorical heads) and critic (scalar head) on separate
// trunks, plus the fixed observation scaling.
struct PolicyParameters {
  int obs_dim = 16;
  int hidden1 = 256;
  int hidden2 = 128;
  Mlp actor;
  Mlp critic;

  static PolicyParameters init(int obs_dim, int hidden1, int hidden2,
                               Rng& rng) {
    PolicyParameters p;
    p.obs_dim = obs_dim;
    p.hidden1 = hidden1;
    p.hidden2 = hidden2;
    p.actor = Mlp::init(obs_dim, hidden1, hidden2,
                        {kHeadSizes[0], kHeadSizes[1], kHeadSizes[2]}, 0.01,
                        rng);
    p.critic = Mlp::init(obs_dim, hidden1, hidden2, {1}, 1.0, rng);
    return p;
  }

  bool finite() const {
    bool ok = true;
    auto check = [&](const Mat& t) { ok = ok && t.allFinite(); };
    actor.for_each_tensor(check);
    critic.for_each_tensor(check);
    return ok;
  }
};

// Fixed feature scaling applied before the first layer: distances, speeds
// and angles land in comparable ranges for the tanh trunk.
inline Vec observation_scale(int obs_dim) {
  Vec s(obs_dim);
  for (int i = 0; i < obs_dim; ++i) {
    switch (i % 4) {
      case 0:
      case 1: s(i) = 1.0 / 7.5; break;
      case 2: s(i) = 1.0 / 10.0; break;
      default: s(i) = 1.0 / M_PI; break;
    }
  }
  return s;
}

namespace ckpt {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f64(std::ostream& os, double d) {
  std::uint64_t u;
  std::memcpy(&u, &d, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline double get_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double d;
  std::memcpy(&d, &u, 8);
  return d;
}

}  // namespace ckpt

inline constexpr char kCheckpointMagic[8] = {'C', 'W', 'A', 'Y',
                                             'P', 'O', 'L', '1'};

// Flat little-endian layout: magic, version, tensor count, then each tensor
// as (rows, cols, row-major f64 payload), actor tensors before critic
// tensors in declaration order.
inline void save_checkpoint(const PolicyParameters& p,
                            const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
  os.write(kCheckpointMagic, 8);
  ckpt::put_u32(os, 1);  // version
  std::uint32_t count = 0;
  p.actor.for_each_tensor([&](const Mat&) { ++count; });
  p.critic.for_each_tensor([&](const Mat&) { ++count; });
  ckpt::put_u32(os, count);
  auto dump = [&](const Mat& t) {
    ckpt::put_u32(os, static_cast<std::uint32_t>(t.rows()));
    ckpt::put_u32(os, static_cast<std::uint32_t>(t.cols()));
    for (int i = 0; i < t.rows(); ++i)
      for (int j = 0; j < t.cols(); ++j) ckpt::put_f64(os, t(i, j));
  };
  p.actor.for_each_tensor(dump);
  p.critic.for_each_tensor(dump);
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

inline void load_checkpoint(PolicyParameters& p, const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw std::runtime_error("bad checkpoint magic: " + path);
  const std::uint32_t version = ckpt::get_u32(is);
  if (version != 1)
    throw std::runtime_error("unsupported checkpoint version");
  std::uint32_t expected = 0;
  p.actor.for_each_tensor([&](const Mat&) { ++expected; });
  p.critic.for_each_tensor([&](const Mat&) { ++expected; });
  if (ckpt::get_u32(is) != expected)
    throw std::runtime_error("checkpoint tensor count mismatch");
  auto read_into = [&](Mat& t) {
    const std::uint32_t rows = ckpt::get_u32(is);
    const std::uint32_t cols = ckpt::get_u32(is);
    if (rows != static_cast<std::uint32_t>(t.rows()) ||
        cols != static_cast<std::uint32_t>(t.cols()))
      throw std::runtime_error("checkpoint shape mismatch");
    for (std::uint32_t i = 0; i < rows; ++i)
      for (std::uint32_t j = 0; j < cols; ++j) t(i, j) = ckpt::get_f64(is);
  };
  p.actor.for_each_tensor(read_into);
  p.critic.for_each_tensor(read_into);
  if (!is) throw std::runtime_error("truncated checkpoint: " + path);
}

}  // namespace crossway
