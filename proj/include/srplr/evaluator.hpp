#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "srplr/dataset.hpp"
#include "srplr/model.hpp"

namespace srplr {

/// HIT@K / NDCG@K for one split, with run metadata for reporting.
struct MetricsReport {
  std::string split;
  std::vector<int> ks;
  std::map<int, double> hit;
  std::map<int, double> ndcg;
  std::string label = "full";
  std::string config_hash;
  std::uint64_t seed = 0;
  double wall_clock_sec = 0.0;
  int epoch = 0;

  double at(const std::string& metric, int k) const;
};

struct EvalOptions {
  /// When true, items already in the evaluated history are pushed below
  /// every other candidate. Off by default: pure all-rank evaluation.
  bool exclude_history = false;
  int chunk = 512;
};

/// 1-based rank of the target among all items; ties broken in favor of
/// the smaller item id.
int rank_of_target(const Eigen::VectorXd& scores, int target_id);

/// Ranks every example's target against the full catalog and averages
/// HIT@K and NDCG@K. Never consults sampled negatives.
MetricsReport evaluate_full_rank(const SrplrModel& model,
                                 std::span<const SequenceExample> examples,
                                 const std::vector<int>& ks, const std::string& split_name,
                                 const EvalOptions& options = {});

/// Text table of metric values for >= 2 reports plus relative-improvement
/// rows against the first (baseline) report. Reports must share the eval
/// protocol (same split and K list).
std::string compare_runs(const std::vector<MetricsReport>& reports);

void write_report_file(const std::filesystem::path& path, const std::vector<MetricsReport>& reports);
void write_report_table(const std::filesystem::path& path, const std::vector<MetricsReport>& reports);

}  // namespace srplr
