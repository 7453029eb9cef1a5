#pragma once

#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "crossway/env.hpp"

namespace crossway {

inline const char* outcome_name(EventKind k) {
  switch (k) {
    case EventKind::success: return "success";
    case EventKind::collision: return "collision";
    case EventKind::timeout: return "timeout";
    case EventKind::none: return "none";
  }
  return "?";
}

inline EventKind outcome_from_name(const std::string& s) {
  if (s == "success") return EventKind::success;
  if (s == "collision") return EventKind::collision;
  if (s == "timeout") return EventKind::timeout;
  if (s == "none") return EventKind::none;
  throw std::invalid_argument("unknown outcome kind: " + s);
}

// One line per finished episode in the trace stream.
struct EpisodeRecord {
  long t = 0;  // 1-based episode index, strictly increasing
  int cluster = 0;
  int arm = 0;
  double raw_reward = 0.0;
  double r_norm = 0.0;
  double r_hat_cluster = 0.0;
  double r_hat_arm = 0.0;
  EventKind outcome = EventKind::none;
  int steps = 0;

  nlohmann::json to_json() const {
    return nlohmann::json{
        {"t", t},
        {"cluster", cluster},
        {"arm", arm},
        {"raw_reward", raw_reward},
        {"r_norm", r_norm},
        {"r_hat_cluster", r_hat_cluster},
        {"r_hat_arm", r_hat_arm},
        {"outcome", outcome_name(outcome)},
        {"steps", steps}};
  }

  static EpisodeRecord from_json(const nlohmann::json& j) {
    EpisodeRecord r;
    r.t = j.at("t").get<long>();
    r.cluster = j.at("cluster").get<int>();
    r.arm = j.at("arm").get<int>();
    r.raw_reward = j.at("raw_reward").get<double>();
    r.r_norm = j.at("r_norm").get<double>();
    r.r_hat_cluster = j.at("r_hat_cluster").get<double>();
    r.r_hat_arm = j.at("r_hat_arm").get<double>();
    r.outcome = outcome_from_name(j.at("outcome").get<std::string>());
    r.steps = j.at("steps").get<int>();
    return r;
  }
};

// Live bandit weights captured at synchronization episodes.
struct WeightSnapshot {
  long t = 0;
  std::vector<double> cluster_weights;
  std::vector<std::vector<double>> arm_weights;

  nlohmann::json to_json() const {
    return nlohmann::json{{"t", t},
                          {"clusters", cluster_weights},
                          {"arms", arm_weights}};
  }

  static WeightSnapshot from_json(const nlohmann::json& j) {
    WeightSnapshot s;
    s.t = j.at("t").get<long>();
    s.cluster_weights = j.at("clusters").get<std::vector<double>>();
    s.arm_weights =
        j.at("arms").get<std::vector<std::vector<double>>>();
    return s;
  }
};

// Append-only line-delimited JSON writer; one flush per record so aborted
// runs keep everything written so far.
class JsonlWriter {
 public:
  explicit JsonlWriter(const std::string& path)
      : os_(path, std::ios::trunc) {
    if (!os_) throw std::runtime_error("cannot open for writing: " + path);
  }

  void write(const nlohmann::json& j) {
    os_ << j.dump() << '\n';
    os_.flush();
    if (!os_) throw std::runtime_error("trace write failed");
  }

 private:
  std::ofstream os_;
};

struct JsonlReadResult {
  std::vector<nlohmann::json> records;
  long corrupt_lines = 0;
  long total_lines = 0;
};

inline JsonlReadResult read_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open trace file: " + path);
  JsonlReadResult out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    ++out.total_lines;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
      ++out.corrupt_lines;
    else
      out.records.push_back(std::move(j));
  }
  return out;
}

}  // namespace crossway
