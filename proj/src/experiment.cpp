#include "srplr/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "srplr/checkpoint.hpp"
#include "srplr/errors.hpp"

namespace srplr {

namespace fs = std::filesystem;

namespace {

fs::path resolve_data_dir(const std::string& dir) {
  fs::path p(dir);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv(kDataRootEnv); root != nullptr && *root != '\0') {
    return fs::path(root) / p;
  }
  return p;
}

void claim_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
    throw ValidationError("output directory " + dir.string() +
                          " already has contents; pass --force to overwrite");
  }
  fs::create_directories(dir);
}

std::string format_axis_value(SweepAxis axis, double v) {
  if (axis == SweepAxis::logic_negatives) return std::to_string(static_cast<int>(v));
  std::ostringstream out;
  out << v;
  return out.str();
}

}  // namespace

DatasetSplit prepare_dataset(const ExperimentConfig& cfg) {
  cfg.validate();
  const TrainPrefixes prefixes =
      cfg.train_prefixes == "all" ? TrainPrefixes::all : TrainPrefixes::last;
  if (!cfg.data_dir.empty()) {
    DatasetSplit split = load_split_dir(resolve_data_dir(cfg.data_dir));
    if (split.max_len != cfg.max_len) {
      throw ValidationError("config max_len (" + std::to_string(cfg.max_len) +
                            ") does not match the split directory's max_len (" +
                            std::to_string(split.max_len) + ")");
    }
    return split;
  }
  auto corpus = generate_synthetic(cfg.synthetic_spec());
  return build_splits(corpus, cfg.max_len, prefixes);
}

SrplrModel build_model(const ExperimentConfig& cfg, const DatasetSplit& split) {
  return SrplrModel(split.item_count, cfg.encoder_config(), cfg.model_variant(),
                    cfg.logic_config(), cfg.seed, split.ids.fingerprint());
}

RunOutput run_experiment(const ExperimentConfig& raw_cfg, bool force) {
  const ExperimentConfig cfg = raw_cfg.resolved();
  cfg.validate();
  if (cfg.output_dir.empty()) {
    throw ValidationError("config key 'output_dir': required for a run");
  }
  const fs::path dir(cfg.output_dir);
  claim_output_dir(dir, force);

  const std::string config_hash = cfg.hash();
  {
    std::ofstream echo(dir / "config.resolved");
    if (!echo) throw IoError("cannot write " + (dir / "config.resolved").string());
    echo << cfg.serialize();
  }

  DatasetSplit split = prepare_dataset(cfg);
  SrplrModel model = build_model(cfg, split);
  TrainConfig train_cfg = cfg.train_config();

  std::ofstream log_file(dir / "training_log.tsv");
  if (!log_file) throw IoError("cannot write " + (dir / "training_log.tsv").string());
  log_file << "# config_hash = " << config_hash << "\n";
  log_file << "epoch\tloss_rec\tloss_logic\tloss_total\tvalid_hit@10\tvalid_ndcg@10\n"
           << std::setprecision(10);

  const auto t0 = std::chrono::steady_clock::now();
  auto callback = [&](const EpochLogRow& row, SrplrModel& m) {
    log_file << row.epoch << '\t' << row.loss_rec << '\t' << row.loss_logic << '\t'
             << row.loss_total << '\t' << row.valid_hit10 << '\t' << row.valid_ndcg10 << '\n';
    log_file.flush();
    if (train_cfg.checkpoint_every > 0 && row.epoch % train_cfg.checkpoint_every == 0) {
      save_checkpoint(dir / ("model_epoch" + std::to_string(row.epoch) + ".ckpt"), m, config_hash);
    }
  };
  TrainResult trained = train(model, split, train_cfg, callback);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  EvalOptions eval_opts;
  eval_opts.exclude_history = cfg.eval_exclude_history;
  const std::vector<int> ks = cfg.parsed_eval_ks();

  RunOutput out;
  out.dir = dir;
  const int final_epoch = train_cfg.select_best_valid ? trained.best_epoch : cfg.epochs;
  auto finalize = [&](MetricsReport r) {
    r.config_hash = config_hash;
    r.seed = cfg.seed;
    r.wall_clock_sec = wall;
    r.epoch = final_epoch;
    return r;
  };
  out.valid = finalize(evaluate_full_rank(model, split.valid, ks, "valid", eval_opts));
  out.test = finalize(evaluate_full_rank(model, split.test, ks, "test", eval_opts));

  write_report_file(dir / "report.txt", {out.valid, out.test});
  write_report_table(dir / "report.tsv", {out.valid, out.test});
  save_checkpoint(dir / "model.ckpt", model, config_hash);
  return out;
}

SweepAxis sweep_axis_from_string(const std::string& s) {
  if (s == "lambda") return SweepAxis::lambda;
  if (s == "logic_negatives") return SweepAxis::logic_negatives;
  if (s == "mask_r") return SweepAxis::mask_r;
  throw ValidationError("unknown sweep axis '" + s + "' (lambda, logic_negatives, mask_r)");
}

std::filesystem::path run_sweep(const ExperimentConfig& base, SweepAxis axis,
                                const std::vector<double>& values, bool force) {
  if (values.empty()) throw ValidationError("sweep: no values given");
  const ExperimentConfig cfg = base.resolved();
  if (cfg.output_dir.empty()) throw ValidationError("config key 'output_dir': required for a sweep");

  const char* axis_name = axis == SweepAxis::lambda ? "lambda"
                          : axis == SweepAxis::logic_negatives ? "logic_negatives"
                                                               : "mask_r";
  for (double v : values) {
    if (axis == SweepAxis::logic_negatives) {
      if (v != std::floor(v) || v < 0.0 || v > 10.0) {
        throw ValidationError("sweep axis logic_negatives: values must be integers in [0, 10]");
      }
    } else if (v < 0.0 || v > 1.0) {
      throw ValidationError(std::string("sweep axis ") + axis_name + ": values must be in [0, 1]");
    }
  }

  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);

  std::vector<RunOutput> runs;
  std::vector<double> run_values;
  for (double v : values) {
    ExperimentConfig member = cfg;
    if (axis == SweepAxis::lambda) member.lambda = v;
    if (axis == SweepAxis::logic_negatives) member.logic_negatives = static_cast<int>(v);
    if (axis == SweepAxis::mask_r) member.mask_r = v;
    const fs::path member_dir = dir / (std::string(axis_name) + "_" + format_axis_value(axis, v));
    if (fs::exists(member_dir) && !fs::is_empty(member_dir) && !force) {
      throw ValidationError("sweep member directory " + member_dir.string() +
                            " already exists; pass --force to overwrite");
    }
    member.output_dir = member_dir.string();
    runs.push_back(run_experiment(member, force));
    run_values.push_back(v);
  }

  const std::vector<int> ks = cfg.parsed_eval_ks();
  const fs::path summary = dir / "sweep_summary.tsv";
  std::ofstream out(summary);
  if (!out) throw IoError("cannot write " + summary.string());
  out << axis_name;
  for (const char* split : {"valid", "test"}) {
    for (int k : ks) out << '\t' << split << "_hit@" << k;
    for (int k : ks) out << '\t' << split << "_ndcg@" << k;
  }
  out << '\n' << std::setprecision(10);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    out << format_axis_value(axis, run_values[i]);
    for (const auto* r : {&runs[i].valid, &runs[i].test}) {
      for (int k : ks) out << '\t' << r->hit.at(k);
      for (int k : ks) out << '\t' << r->ndcg.at(k);
    }
    out << '\n';
  }
  return summary;
}

AblationOutcome run_ablation(const ExperimentConfig& base, bool force) {
  const ExperimentConfig cfg = base.resolved();
  if (cfg.output_dir.empty()) {
    throw ValidationError("config key 'output_dir': required for an ablation battery");
  }
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);

  struct VariantSpec {
    const char* dir_name;
    void (*apply)(ExperimentConfig&);
  };
  const VariantSpec specs[] = {
      {"full", [](ExperimentConfig&) {}},
      {"wo_att", [](ExperimentConfig& c) { c.use_attention = false; }},
      {"wo_neg_oper", [](ExperimentConfig& c) { c.use_negation = false; }},
      {"wo_feat", [](ExperimentConfig& c) { c.use_feature = false; }},
  };

  AblationOutcome outcome;
  outcome.dir = dir;
  for (const auto& spec : specs) {
    ExperimentConfig member = cfg;
    spec.apply(member);
    member.output_dir = (dir / spec.dir_name).string();
    try {
      RunOutput run = run_experiment(member, force);
      outcome.test_reports.push_back(run.test);
    } catch (const std::exception& e) {
      outcome.failures.push_back(std::string(spec.dir_name) + ": " + e.what());
    }
  }

  if (outcome.test_reports.size() >= 2) {
    std::ofstream cmp(dir / "ablation_summary.txt");
    if (!cmp) throw IoError("cannot write ablation summary");
    cmp << compare_runs(outcome.test_reports);
    for (const auto& f : outcome.failures) cmp << "FAILED " << f << "\n";
  }
  return outcome;
}

CorpusStats run_preprocess(const PreprocessOptions& options, std::ostream& log) {
  if (options.k < 1) throw ValidationError("preprocess: k must be >= 1");
  if (options.max_len < 1) throw ValidationError("preprocess: max_len must be >= 1");
  if (fs::exists(options.out_dir) && !fs::is_empty(options.out_dir) && !options.force) {
    throw ValidationError("output directory " + options.out_dir.string() +
                          " already has contents; pass --force to overwrite");
  }

  auto raw = load_interactions(options.input, options.format, options.load);
  if (raw.empty()) throw ValidationError("preprocess: input file has no interactions");
  log << "loaded " << raw.size() << " interactions\n";

  auto filtered = k_core_filter(raw, options.k);
  if (filtered.empty()) {
    throw ValidationError("preprocess: " + std::to_string(options.k) +
                          "-core filtering removed every interaction");
  }
  const CorpusStats stats = corpus_stats(filtered);
  log << std::fixed;
  log << "Users    Items    Ratings   Avg. Len.  Sparsity\n";
  log << stats.users << "   " << stats.items << "   " << stats.ratings << "   "
      << std::setprecision(1) << stats.avg_length << "   " << std::setprecision(2)
      << stats.sparsity * 100.0 << "%\n";

  const TrainPrefixes prefixes =
      options.train_prefixes == "all" ? TrainPrefixes::all : TrainPrefixes::last;
  DatasetSplit split = build_splits(filtered, options.max_len, prefixes);
  if (split.dropped_users > 0) {
    log << "warning: dropped " << split.dropped_users << " users with < 3 interactions\n";
  }
  save_split_dir(split, options.out_dir);
  log << "split written to " << options.out_dir.string() << " (train " << split.train.size()
      << ", valid " << split.valid.size() << ", test " << split.test.size() << ")\n";
  return stats;
}

}  // namespace srplr
