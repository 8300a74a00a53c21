#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "srplr/checkpoint.hpp"
#include "srplr/errors.hpp"
#include "srplr/experiment.hpp"

using namespace srplr;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  auto dir = fs::temp_directory_path() / ("srplr_exp_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig desk_config(const fs::path& out) {
  ExperimentConfig cfg;
  cfg.synthetic_rule = "markov";
  cfg.synthetic_users = 25;
  cfg.synthetic_items = 12;
  cfg.synthetic_len = 8;
  cfg.synthetic_seed = 11;
  cfg.backbone = "gru";
  cfg.dim = 8;
  cfg.max_len = 6;
  cfg.dropout = 0.0;
  cfg.epochs = 2;
  cfg.batch_size = 256;
  cfg.learning_rate = 0.01;
  cfg.seed = 21;
  cfg.eval_ks = "5,10";
  cfg.eval_every = 0;
  cfg.output_dir = out.string();
  return cfg;
}

}  // namespace

TEST_CASE("config round trip is byte identical") {
  ExperimentConfig cfg = desk_config("/tmp/x");
  cfg.lambda = 0.3;
  cfg.learning_rate = 0.002;
  const std::string once = cfg.serialize();
  ExperimentConfig back = parse_config(once);
  CHECK(back == cfg);
  CHECK(back.serialize() == once);
}

TEST_CASE("config parse: unknown, duplicate and malformed keys") {
  try {
    parse_config("nonsense_key = 1\n");
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("nonsense_key") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config("dim = 8\ndim = 9\n"), ValidationError);
  CHECK_THROWS_AS(parse_config("dim eight\n"), ParseError);
  CHECK_THROWS_AS(parse_config("dim = eight\n"), ValidationError);
  // comments and blank lines are fine
  auto cfg = parse_config("# comment\n\ndim = 32  # tail comment\n");
  CHECK(cfg.dim == 32);
}

TEST_CASE("config validation names the offending field") {
  ExperimentConfig cfg;  // neither data_dir nor synthetic_rule
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.synthetic_rule = "markov";
  cfg.logic_negatives = 11;
  try {
    cfg.validate();
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("logic_negatives") != std::string::npos);
  }
}

TEST_CASE("resolved config makes backbone defaults explicit") {
  ExperimentConfig cfg;
  cfg.backbone = "gru";
  CHECK(cfg.resolved().layers == 1);
  cfg.backbone = "self_attention";
  CHECK(cfg.resolved().layers == 2);
  cfg.layers = 3;
  CHECK(cfg.resolved().layers == 3);
  CHECK(cfg.hash() != ExperimentConfig{}.hash());
}

TEST_CASE("run_experiment writes the full artifact set and refuses reruns") {
  auto dir = fresh_dir("run");
  auto cfg = desk_config(dir / "out");
  auto out = run_experiment(cfg, false);

  CHECK(fs::exists(out.dir / "config.resolved"));
  CHECK(fs::exists(out.dir / "training_log.tsv"));
  CHECK(fs::exists(out.dir / "report.txt"));
  CHECK(fs::exists(out.dir / "report.tsv"));
  CHECK(fs::exists(out.dir / "model.ckpt"));

  // resolved echo round-trips and carries explicit defaults
  auto echoed = load_config_file(out.dir / "config.resolved");
  CHECK(echoed == cfg.resolved());
  std::ifstream echo_in(out.dir / "config.resolved");
  std::stringstream buf;
  buf << echo_in.rdbuf();
  CHECK(buf.str() == cfg.resolved().serialize());

  // every artifact embeds the same config hash
  const std::string hash = cfg.resolved().hash();
  std::ifstream log_in(out.dir / "training_log.tsv");
  std::string first_line;
  std::getline(log_in, first_line);
  CHECK(first_line.find(hash) != std::string::npos);
  auto ckpt = load_checkpoint(out.dir / "model.ckpt");
  CHECK(ckpt.config_hash == hash);
  CHECK(out.test.config_hash == hash);

  CHECK_THROWS_AS(run_experiment(cfg, false), ValidationError);  // refusal without force
  auto out2 = run_experiment(cfg, true);                         // force allows rerun
  CHECK(out2.test.hit == out.test.hit);                          // same seed, same metrics
  fs::remove_all(dir);
}

TEST_CASE("checkpoint round trip restores scores exactly") {
  auto dir = fresh_dir("ckpt");
  auto cfg = desk_config(dir / "out");
  auto split = prepare_dataset(cfg);
  auto model = build_model(cfg, split);
  TrainConfig tc = cfg.train_config();
  tc.epochs = 1;
  train(model, split, tc);

  save_checkpoint(dir / "m.ckpt", model, "deadbeef");
  auto loaded = load_checkpoint(dir / "m.ckpt", model.encoder_config(), model.id_fingerprint());
  CHECK(loaded.config_hash == "deadbeef");
  ag::Mat a = model.score_batch(std::span(split.test.data(), 3));
  ag::Mat b = loaded.model.score_batch(std::span(split.test.data(), 3));
  CHECK(a == b);

  // mismatched expectations are errors
  EncoderConfig other = model.encoder_config();
  other.layers += 1;
  CHECK_THROWS_AS(load_checkpoint(dir / "m.ckpt", other, {}), ValidationError);
  CHECK_THROWS_AS(load_checkpoint(dir / "m.ckpt", {}, 0xdeadULL), ValidationError);
  fs::remove_all(dir);
}

TEST_CASE("variant flags flow into report labels") {
  auto dir = fresh_dir("label");
  auto cfg = desk_config(dir / "out");
  cfg.use_attention = false;
  cfg.epochs = 1;
  auto out = run_experiment(cfg, false);
  CHECK(out.test.label == "w/o att");
  fs::remove_all(dir);
}

TEST_CASE("sweep: member runs, summary table, bounds enforcement") {
  auto dir = fresh_dir("sweep");
  auto cfg = desk_config(dir / "sweep");
  cfg.epochs = 1;
  auto summary = run_sweep(cfg, SweepAxis::lambda, {0.0, 0.5, 1.0}, false);
  CHECK(fs::exists(summary));
  CHECK(fs::exists(dir / "sweep" / "lambda_0" / "report.txt"));
  CHECK(fs::exists(dir / "sweep" / "lambda_0.5" / "report.txt"));
  CHECK(fs::exists(dir / "sweep" / "lambda_1" / "report.txt"));

  std::ifstream in(summary);
  std::string header;
  std::getline(in, header);
  CHECK(header.find("test_hit@10") != std::string::npos);
  int rows = 0;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) ++rows;
  CHECK(rows == 3);

  CHECK_THROWS_AS(run_sweep(cfg, SweepAxis::logic_negatives, {11.0}, true), ValidationError);
  CHECK_THROWS_AS(run_sweep(cfg, SweepAxis::logic_negatives, {2.5}, true), ValidationError);
  CHECK_THROWS_AS(run_sweep(cfg, SweepAxis::mask_r, {1.5}, true), ValidationError);
  // overlapping member dirs refuse without force
  CHECK_THROWS_AS(run_sweep(cfg, SweepAxis::lambda, {0.5}, false), ValidationError);
  fs::remove_all(dir);
}

TEST_CASE("ablation battery: four labeled reports and a comparison table") {
  auto dir = fresh_dir("ablate");
  auto cfg = desk_config(dir / "ablate");
  cfg.epochs = 1;
  auto outcome = run_ablation(cfg, false);
  CHECK(outcome.failures.empty());
  REQUIRE(outcome.test_reports.size() == 4);
  CHECK(outcome.test_reports[0].label == "full");
  CHECK(outcome.test_reports[1].label == "w/o att");
  CHECK(outcome.test_reports[2].label == "w/o neg_oper");
  CHECK(outcome.test_reports[3].label == "w/o feat");
  CHECK(fs::exists(dir / "ablate" / "ablation_summary.txt"));

  // the w/o att member equals a standalone run with uniform weights
  auto solo_dir = fresh_dir("ablate_solo");
  auto solo = desk_config(solo_dir / "out");
  solo.epochs = 1;
  solo.use_attention = false;
  auto solo_out = run_experiment(solo, false);
  CHECK(solo_out.test.hit == outcome.test_reports[1].hit);
  CHECK(solo_out.test.ndcg == outcome.test_reports[1].ndcg);
  fs::remove_all(dir);
  fs::remove_all(solo_dir);
}

TEST_CASE("preprocess: stats, split files, refusal semantics") {
  auto dir = fresh_dir("prep");
  // small corpus where 2-core filtering bites
  std::ofstream raw(dir / "raw.tsv");
  for (int u = 1; u <= 6; ++u) {
    for (int t = 0; t < 5; ++t) {
      raw << "u" << u << '\t' << "i" << ((u + t) % 5) << '\t' << t << '\n';
    }
  }
  raw << "loner\ti99\t0\n";  // dies in 2-core
  raw.close();

  PreprocessOptions opt;
  opt.input = dir / "raw.tsv";
  opt.out_dir = dir / "split";
  opt.k = 2;
  opt.max_len = 10;
  std::ostringstream log;
  auto stats = run_preprocess(opt, log);
  CHECK(stats.users == 6);
  CHECK(stats.items == 5);
  CHECK(stats.ratings == 30);
  CHECK(log.str().find("Sparsity") != std::string::npos);
  CHECK(fs::exists(dir / "split" / "train.txt"));

  CHECK_THROWS_AS(run_preprocess(opt, log), ValidationError);  // refusal
  opt.force = true;
  run_preprocess(opt, log);  // force allows

  // empty input: error, nothing written
  std::ofstream(dir / "empty.tsv").close();
  PreprocessOptions bad;
  bad.input = dir / "empty.tsv";
  bad.out_dir = dir / "never";
  CHECK_THROWS_AS(run_preprocess(bad, log), ValidationError);
  CHECK_FALSE(fs::exists(dir / "never" / "train.txt"));
  fs::remove_all(dir);
}

TEST_CASE("data_dir runs resolve against the data root env var") {
  auto dir = fresh_dir("dataroot");
  // build a split under the root
  auto cfg = desk_config(dir / "unused");
  auto split = prepare_dataset(cfg);
  save_split_dir(split, dir / "root" / "corpus");

  ::setenv(kDataRootEnv, (dir / "root").c_str(), 1);
  ExperimentConfig from_dir;
  from_dir.data_dir = "corpus";
  from_dir.max_len = cfg.max_len;
  from_dir.epochs = 0;
  from_dir.backbone = "gru";
  from_dir.dim = 8;
  from_dir.output_dir = (dir / "out").string();
  auto loaded = prepare_dataset(from_dir);
  CHECK(loaded.item_count == split.item_count);
  CHECK(loaded.ids.fingerprint() == split.ids.fingerprint());
  ::unsetenv(kDataRootEnv);

  // max_len mismatch is an error
  from_dir.max_len = cfg.max_len + 1;
  ::setenv(kDataRootEnv, (dir / "root").c_str(), 1);
  CHECK_THROWS_AS(prepare_dataset(from_dir), ValidationError);
  ::unsetenv(kDataRootEnv);
  fs::remove_all(dir);
}

#ifdef SRPLR_CLI_PATH
TEST_CASE("cli exit codes: 0 success, 2 validation, 3 runtime") {
  auto dir = fresh_dir("cli");
  auto cfg = desk_config(dir / "out");
  cfg.epochs = 1;
  std::ofstream(dir / "good.cfg") << cfg.serialize();
  std::ofstream(dir / "bad.cfg") << "mystery_key = 1\n";

  auto run_cli = [&](const std::string& args) {
    const std::string cmd = std::string(SRPLR_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
  };

  CHECK(run_cli("run --config " + (dir / "good.cfg").string()) == 0);
  CHECK(run_cli("run --config " + (dir / "good.cfg").string()) == 2);  // refusal, no --force
  CHECK(run_cli("run --config " + (dir / "good.cfg").string() + " --force") == 0);
  CHECK(run_cli("run --config " + (dir / "bad.cfg").string()) == 2);
  CHECK(run_cli("run --config " + (dir / "missing.cfg").string()) == 3);
  CHECK(run_cli("sweep --config " + (dir / "good.cfg").string() +
                " --axis logic_negatives --values 11 --out " + (dir / "sw").string()) == 2);
  fs::remove_all(dir);
}
#endif
