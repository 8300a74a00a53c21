#include "srplr/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "srplr/errors.hpp"

namespace srplr {

double MetricsReport::at(const std::string& metric, int k) const {
  if (metric == "hit") return hit.at(k);
  if (metric == "ndcg") return ndcg.at(k);
  throw ValidationError("unknown metric '" + metric + "'");
}

int rank_of_target(const Eigen::VectorXd& scores, int target_id) {
  if (target_id < 1 || target_id > static_cast<int>(scores.size())) {
    throw ValidationError("rank_of_target: target out of range");
  }
  const double st = scores(target_id - 1);
  int rank = 1;
  for (Eigen::Index j = 0; j < scores.size(); ++j) {
    const int id = static_cast<int>(j) + 1;
    if (id == target_id) continue;
    if (scores(j) > st || (scores(j) == st && id < target_id)) ++rank;
  }
  return rank;
}

MetricsReport evaluate_full_rank(const SrplrModel& model,
                                 std::span<const SequenceExample> examples,
                                 const std::vector<int>& ks, const std::string& split_name,
                                 const EvalOptions& options) {
  if (examples.empty()) throw ValidationError("evaluate_full_rank: empty split");
  if (ks.empty()) throw ValidationError("evaluate_full_rank: no K values");
  MetricsReport report;
  report.split = split_name;
  report.ks = ks;
  report.label = model.variant().label();
  for (int k : ks) {
    report.hit[k] = 0.0;
    report.ndcg[k] = 0.0;
  }

  const int chunk = std::max(1, options.chunk);
  for (std::size_t start = 0; start < examples.size(); start += static_cast<std::size_t>(chunk)) {
    const std::size_t n = std::min<std::size_t>(chunk, examples.size() - start);
    ag::Mat scores = model.score_batch(examples.subspan(start, n));
    for (std::size_t i = 0; i < n; ++i) {
      const SequenceExample& ex = examples[start + i];
      Eigen::VectorXd row = scores.row(static_cast<Eigen::Index>(i));
      if (options.exclude_history) {
        const double floor = row.minCoeff() - 1.0;
        for (int id : ex.history) {
          if (id != 0 && id != ex.target) row(id - 1) = floor;
        }
      }
      const int rank = rank_of_target(row, ex.target);
      for (int k : ks) {
        if (rank <= k) {
          report.hit[k] += 1.0;
          report.ndcg[k] += 1.0 / std::log2(static_cast<double>(rank) + 1.0);
        }
      }
    }
  }
  const double n = static_cast<double>(examples.size());
  for (int k : ks) {
    report.hit[k] /= n;
    report.ndcg[k] /= n;
  }
  return report;
}

namespace {

std::string format_metric(double v) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4) << v;
  return out.str();
}

std::string format_improvement(double base, double other) {
  if (base == 0.0) return "n/a";
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << (other - base) / base * 100.0 << "%";
  return out.str();
}

}  // namespace

std::string compare_runs(const std::vector<MetricsReport>& reports) {
  if (reports.size() < 2) throw ValidationError("compare_runs: need at least 2 reports");
  const auto& base = reports.front();
  for (const auto& r : reports) {
    if (r.ks != base.ks || r.split != base.split) {
      throw ValidationError("compare_runs: reports use different evaluation protocols");
    }
  }
  std::ostringstream out;
  out << "split: " << base.split << "\n";
  out << std::left << std::setw(24) << "run";
  for (int k : base.ks) out << std::setw(12) << ("HIT@" + std::to_string(k));
  for (int k : base.ks) out << std::setw(12) << ("NDCG@" + std::to_string(k));
  out << "\n";
  for (const auto& r : reports) {
    out << std::left << std::setw(24) << r.label;
    for (int k : base.ks) out << std::setw(12) << format_metric(r.hit.at(k));
    for (int k : base.ks) out << std::setw(12) << format_metric(r.ndcg.at(k));
    out << "\n";
  }
  for (std::size_t i = 1; i < reports.size(); ++i) {
    out << std::left << std::setw(24) << ("impro. (" + reports[i].label + ")");
    for (int k : base.ks) out << std::setw(12) << format_improvement(base.hit.at(k), reports[i].hit.at(k));
    for (int k : base.ks)
      out << std::setw(12) << format_improvement(base.ndcg.at(k), reports[i].ndcg.at(k));
    out << "\n";
  }
  return out.str();
}

void write_report_file(const std::filesystem::path& path,
                       const std::vector<MetricsReport>& reports) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report: " + path.string());
  out << std::setprecision(10);
  for (const auto& r : reports) {
    out << "label = " << r.label << "\n";
    out << "split = " << r.split << "\n";
    out << "seed = " << r.seed << "\n";
    out << "epoch = " << r.epoch << "\n";
    out << "wall_clock_sec = " << r.wall_clock_sec << "\n";
    out << "config_hash = " << r.config_hash << "\n";
    for (int k : r.ks) out << r.split << ".hit@" << k << " = " << r.hit.at(k) << "\n";
    for (int k : r.ks) out << r.split << ".ndcg@" << k << " = " << r.ndcg.at(k) << "\n";
    out << "\n";
  }
}

void write_report_table(const std::filesystem::path& path,
                        const std::vector<MetricsReport>& reports) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report table: " + path.string());
  out << "label\tsplit\tk\thit\tndcg\n" << std::setprecision(10);
  for (const auto& r : reports) {
    for (int k : r.ks) {
      out << r.label << '\t' << r.split << '\t' << k << '\t' << r.hit.at(k) << '\t'
          << r.ndcg.at(k) << '\n';
    }
  }
}

}  // namespace srplr
