// Command-line entry points: preprocess raw logs, run single experiments,
// sweep hyperparameters, and run the ablation battery.
//
// Exit codes: 0 success, 2 validation error, 3 runtime failure.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <optional>

#include "srplr/errors.hpp"
#include "srplr/experiment.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

srplr::ExperimentConfig load_with_overrides(const std::string& config_path,
                                            const std::optional<std::string>& out,
                                            const std::optional<std::uint64_t>& seed) {
  auto cfg = srplr::load_config_file(config_path);
  if (out.has_value()) cfg.output_dir = *out;
  if (seed.has_value()) cfg.seed = *seed;
  return cfg;
}

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> values;
  std::string cur;
  for (char c : csv + ",") {
    if (c == ',') {
      if (cur.empty()) continue;
      values.push_back(std::stod(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  return values;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sequential recommendation with a probabilistic logic network"};
  app.require_subcommand(1);

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "k-core filter a raw log and write split files");
  std::string pre_input, pre_out, pre_format = "tsv";
  int pre_k = 5, pre_max_len = 50;
  int pre_user_col = 0, pre_item_col = 1, pre_time_col = 2;
  std::string pre_delim;
  bool pre_force = false;
  pre->add_option("--input", pre_input, "raw interaction file")->required();
  pre->add_option("--out", pre_out, "output split directory")->required();
  pre->add_option("--format", pre_format, "tsv or csv")->check(CLI::IsMember({"tsv", "csv"}));
  pre->add_option("--k", pre_k, "k-core threshold (default 5)");
  pre->add_option("--max-len", pre_max_len, "maximum history length (default 50)");
  pre->add_option("--user-col", pre_user_col, "user column index");
  pre->add_option("--item-col", pre_item_col, "item column index");
  pre->add_option("--time-col", pre_time_col, "timestamp column index (-1 = file order)");
  pre->add_option("--delimiter", pre_delim, "override the field delimiter");
  pre->add_flag("--force", pre_force, "overwrite an existing output directory");

  // run
  auto* run = app.add_subcommand("run", "train and evaluate one configuration");
  std::string run_config;
  std::optional<std::string> run_out;
  std::optional<std::uint64_t> run_seed;
  bool run_force = false;
  run->add_option("--config", run_config, "experiment config file")->required();
  run->add_option("--out", run_out, "output directory (overrides output_dir)");
  run->add_option("--seed", run_seed, "seed override");
  run->add_flag("--force", run_force, "overwrite existing outputs");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "run one config across an axis of values");
  std::string sweep_config, sweep_axis, sweep_values;
  std::optional<std::string> sweep_out;
  std::optional<std::uint64_t> sweep_seed;
  bool sweep_force = false;
  sweep->add_option("--config", sweep_config, "experiment config file")->required();
  sweep->add_option("--axis", sweep_axis, "lambda, logic_negatives or mask_r")->required();
  sweep->add_option("--values", sweep_values, "comma-separated values")->required();
  sweep->add_option("--out", sweep_out, "output directory (overrides output_dir)");
  sweep->add_option("--seed", sweep_seed, "seed override (shared across members)");
  sweep->add_flag("--force", sweep_force, "overwrite existing outputs");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "full model plus the three ablation variants");
  std::string ablate_config;
  std::optional<std::string> ablate_out;
  std::optional<std::uint64_t> ablate_seed;
  bool ablate_force = false;
  ablate->add_option("--config", ablate_config, "experiment config file")->required();
  ablate->add_option("--out", ablate_out, "output directory (overrides output_dir)");
  ablate->add_option("--seed", ablate_seed, "seed override (shared across variants)");
  ablate->add_flag("--force", ablate_force, "overwrite existing outputs");

  CLI11_PARSE(app, argc, argv);

  try {
    if (pre->parsed()) {
      srplr::PreprocessOptions opt;
      opt.input = pre_input;
      opt.out_dir = pre_out;
      opt.format = pre_format == "tsv" ? srplr::FileFormat::tsv : srplr::FileFormat::csv;
      opt.k = pre_k;
      opt.max_len = pre_max_len;
      opt.force = pre_force;
      opt.load.user_col = pre_user_col;
      opt.load.item_col = pre_item_col;
      opt.load.time_col = pre_time_col;
      if (!pre_delim.empty()) opt.load.delimiter = pre_delim[0];
      srplr::run_preprocess(opt, std::cout);
      return 0;
    }
    if (run->parsed()) {
      auto cfg = load_with_overrides(run_config, run_out, run_seed);
      auto out = srplr::run_experiment(cfg, run_force);
      std::cout << "run complete: " << out.dir.string() << "\n";
      for (const auto* r : {&out.valid, &out.test}) {
        for (int k : r->ks) {
          std::cout << r->split << " HIT@" << k << " = " << r->hit.at(k) << ", NDCG@" << k
                    << " = " << r->ndcg.at(k) << "\n";
        }
      }
      return 0;
    }
    if (sweep->parsed()) {
      auto cfg = load_with_overrides(sweep_config, sweep_out, sweep_seed);
      auto axis = srplr::sweep_axis_from_string(sweep_axis);
      auto summary = srplr::run_sweep(cfg, axis, parse_values(sweep_values), sweep_force);
      std::cout << "sweep summary: " << summary.string() << "\n";
      return 0;
    }
    if (ablate->parsed()) {
      auto cfg = load_with_overrides(ablate_config, ablate_out, ablate_seed);
      auto outcome = srplr::run_ablation(cfg, ablate_force);
      std::cout << "ablation reports: " << outcome.test_reports.size() << " of 4\n";
      if (outcome.test_reports.size() >= 2) {
        std::cout << srplr::compare_runs(outcome.test_reports);
      }
      for (const auto& f : outcome.failures) std::cerr << "variant failed: " << f << "\n";
      return outcome.failures.empty() ? 0 : kExitRuntime;
    }
  } catch (const srplr::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const srplr::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
