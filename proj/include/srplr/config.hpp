#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "srplr/beta_logic.hpp"
#include "srplr/encoder.hpp"
#include "srplr/model.hpp"
#include "srplr/synthetic.hpp"
#include "srplr/trainer.hpp"

namespace srplr {

/// Flat, typed experiment configuration. Files are `key = value` lines
/// with `#` comments; unknown or duplicate keys are rejected by name.
/// serialize() emits every key with its resolved value in a fixed order,
/// and parse(serialize(c)) == c byte for byte.
struct ExperimentConfig {
  // data source: exactly one of data_dir / synthetic_rule
  std::string data_dir;
  std::string synthetic_rule;  // "", "markov" or "conjunctive"
  int synthetic_users = 50;
  int synthetic_items = 20;
  int synthetic_len = 12;
  std::uint64_t synthetic_seed = 1;

  // model
  std::string backbone = "self_attention";
  int dim = 64;
  int layers = 0;  // 0 = backbone default (2 attention blocks / 1 gru layer)
  int heads = 2;
  double dropout = 0.5;
  int max_len = 50;

  // variant
  bool use_attention = true;
  bool use_negation = true;
  bool use_feature = true;
  bool use_logic = true;
  double lambda = 0.5;

  // training
  int epochs = 50;
  int batch_size = 2048;
  double learning_rate = 0.002;
  int logic_negatives = 1;
  double mask_r = 0.0;
  std::uint64_t seed = 42;
  std::string eval_ks = "5,10";
  double grad_clip = 0.0;
  int checkpoint_every = 0;
  int eval_every = 1;
  bool select_best_valid = false;

  // logic space
  double eps_clamp = 0.05;
  std::string clamp_mode = "hard";                 // hard | softplus
  std::string attention_input = "post_negation";   // post_negation | pre_negation
  std::string logic_loss_form = "paper";           // paper | bounded
  std::string rec_loss_form = "bce";               // bce | softmax
  bool eval_exclude_history = false;
  std::string train_prefixes = "all";              // all | last

  std::string output_dir;

  bool operator==(const ExperimentConfig&) const = default;

  /// Range and consistency checks; throws ValidationError naming the field.
  void validate() const;

  /// Copy with backbone-dependent defaults made explicit (layers).
  ExperimentConfig resolved() const;

  std::string serialize() const;
  /// FNV-1a hash of the canonical serialization, hex encoded.
  std::string hash() const;

  // typed views over the flat fields
  EncoderConfig encoder_config() const;
  ModelVariant model_variant() const;
  LogicConfig logic_config() const;
  TrainConfig train_config() const;
  std::vector<int> parsed_eval_ks() const;
  SyntheticSpec synthetic_spec() const;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config_file(const std::filesystem::path& path);

}  // namespace srplr
