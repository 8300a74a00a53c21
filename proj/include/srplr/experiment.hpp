#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "srplr/config.hpp"
#include "srplr/evaluator.hpp"
#include "srplr/trainer.hpp"

namespace srplr {

/// Environment variable naming the default root for relative data_dir
/// paths.
inline constexpr const char* kDataRootEnv = "SRPLR_DATA_ROOT";

/// Loads the split directory (resolving against SRPLR_DATA_ROOT when
/// relative) or generates and splits a synthetic corpus.
DatasetSplit prepare_dataset(const ExperimentConfig& cfg);

/// Fresh model matching the config and the split's id space.
SrplrModel build_model(const ExperimentConfig& cfg, const DatasetSplit& split);

struct RunOutput {
  MetricsReport valid;
  MetricsReport test;
  std::filesystem::path dir;
};

/// Trains per config, evaluates on valid and test, and writes
/// config.resolved, training_log.tsv, report.txt, report.tsv and
/// model.ckpt into the output directory. Refuses a non-empty output
/// directory unless force is set.
RunOutput run_experiment(const ExperimentConfig& cfg, bool force);

enum class SweepAxis { lambda, logic_negatives, mask_r };
SweepAxis sweep_axis_from_string(const std::string& s);

/// One run per value (shared seed), plus sweep_summary.tsv. Values must
/// lie in the documented range of the axis.
std::filesystem::path run_sweep(const ExperimentConfig& base, SweepAxis axis,
                                const std::vector<double>& values, bool force);

struct AblationOutcome {
  std::vector<MetricsReport> test_reports;  // full first, then ablations
  std::vector<std::string> failures;
  std::filesystem::path dir;
};

/// Runs the full model and the three ablation variants with a shared
/// seed; failures in one variant do not stop the others.
AblationOutcome run_ablation(const ExperimentConfig& base, bool force);

struct PreprocessOptions {
  std::filesystem::path input;
  FileFormat format = FileFormat::tsv;
  LoadOptions load;
  int k = 5;
  int max_len = 50;
  std::filesystem::path out_dir;
  bool force = false;
  std::string train_prefixes = "all";
};

/// load -> k-core -> leave-one-out split -> serialized split directory.
/// Returns the post-filter corpus statistics (also printed to `log`).
CorpusStats run_preprocess(const PreprocessOptions& options, std::ostream& log);

}  // namespace srplr
