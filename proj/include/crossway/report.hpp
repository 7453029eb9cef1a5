#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "crossway/trace.hpp"

namespace crossway {

struct ReportResult {
  long episodes = 0;
  long corrupt_lines = 0;
  long total_lines = 0;
  std::vector<std::vector<long>> sampled_counts;  // [cluster][arm]
  std::string text;
  nlohmann::json summary;
  bool too_corrupt() const {
    return total_lines > 0 &&
           corrupt_lines * 100 > total_lines;  // > 1% corrupt
  }
};

// Summarize a trace stream (and optional snapshot stream) into the
// sampled-times table, outcome totals and a weight-trajectory series.
inline ReportResult report(const std::string& trace_path,
                           const std::string& snapshot_path = "") {
  ReportResult out;
  JsonlReadResult traces = read_jsonl(trace_path);
  out.corrupt_lines = traces.corrupt_lines;
  out.total_lines = traces.total_lines;

  int n_clusters = 0, n_arms = 0;
  std::vector<EpisodeRecord> records;
  for (const auto& j : traces.records) {
    try {
      EpisodeRecord r = EpisodeRecord::from_json(j);
      n_clusters = std::max(n_clusters, r.cluster + 1);
      n_arms = std::max(n_arms, r.arm + 1);
      records.push_back(r);
    } catch (const std::exception&) {
      ++out.corrupt_lines;
    }
  }
  out.episodes = static_cast<long>(records.size());
  out.sampled_counts.assign(std::max(n_clusters, 1),
                            std::vector<long>(std::max(n_arms, 1), 0));
  long success = 0, collision = 0, timeout = 0;
  for (const auto& r : records) {
    out.sampled_counts[r.cluster][r.arm]++;
    switch (r.outcome) {
      case EventKind::success: ++success; break;
      case EventKind::collision: ++collision; break;
      case EventKind::timeout: ++timeout; break;
      default: break;
    }
  }

  std::ostringstream os;
  os << "episodes: " << out.episodes << "\n";
  os << "outcomes: success " << success << ", collision " << collision
     << ", timeout " << timeout << "\n\n";
  os << "sampled times per cluster and arm\n";
  os << std::left << std::setw(10) << "cluster" << std::setw(10) << "total";
  for (int a = 0; a < n_arms; ++a)
    os << "arm" << a << "      ";
  os << "\n";
  nlohmann::json counts_json = nlohmann::json::array();
  for (int c = 0; c < n_clusters; ++c) {
    long total = 0;
    for (long v : out.sampled_counts[c]) total += v;
    os << std::left << std::setw(10) << c << std::setw(10) << total;
    for (int a = 0; a < n_arms; ++a)
      os << std::left << std::setw(9) << out.sampled_counts[c][a];
    os << "\n";
    counts_json.push_back({{"cluster", c},
                           {"total", total},
                           {"arms", out.sampled_counts[c]}});
  }

  nlohmann::json weight_series = nlohmann::json::array();
  if (!snapshot_path.empty() &&
      std::filesystem::exists(snapshot_path)) {
    JsonlReadResult snaps = read_jsonl(snapshot_path);
    out.total_lines += snaps.total_lines;
    out.corrupt_lines += snaps.corrupt_lines;
    os << "\nweight snapshots: " << snaps.records.size() << "\n";
    for (const auto& j : snaps.records) {
      try {
        WeightSnapshot s = WeightSnapshot::from_json(j);
        weight_series.push_back(s.to_json());
      } catch (const std::exception&) {
        ++out.corrupt_lines;
      }
    }
  }

  out.summary = nlohmann::json{{"episodes", out.episodes},
                               {"success", success},
                               {"collision", collision},
                               {"timeout", timeout},
                               {"sampled_counts", counts_json},
                               {"weights", weight_series},
                               {"corrupt_lines", out.corrupt_lines}};
  out.text = os.str();
  return out;
}

inline void write_report(const ReportResult& r, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::ofstream text((fs::path(out_dir) / "report.txt").string(),
                     std::ios::trunc);
  text << r.text;
  std::ofstream summary((fs::path(out_dir) / "summary.json").string(),
                        std::ios::trunc);
  summary << r.summary.dump(2) << "\n";
}

}  // namespace crossway
