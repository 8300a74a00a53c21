#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "srplr/autograd.hpp"
#include "srplr/beta_logic.hpp"
#include "srplr/dataset.hpp"
#include "srplr/encoder.hpp"
#include "srplr/rng.hpp"

namespace srplr {

/// Ablation switches. `use_logic` detaches the logic head from the
/// prediction entirely (backbone-only scoring) and is used for baseline
/// comparisons; the three paper ablations are the other flags.
struct ModelVariant {
  bool use_attention = true;  // off = "w/o att" (average pooling weights)
  bool use_negation = true;   // off = "w/o neg_oper" (positives only)
  bool use_feature = true;    // off = "w/o feat" (logic-only scoring)
  bool use_logic = true;      // off = backbone-only scoring
  double lambda = 0.5;

  void validate() const;
  std::string label() const;
  bool operator==(const ModelVariant&) const = default;
};

/// History positives plus sampled negatives feeding one reasoning pass.
struct ReasoningInput {
  std::vector<int> positive_ids;
  std::vector<int> negative_ids;
};

/// The dual network: a shared item embedding table feeding both a neural
/// sequence encoder (feature path) and a Beta-space logic network
/// (probabilistic reasoning path), joined at the prediction layer.
class SrplrModel {
 public:
  SrplrModel(int item_count, EncoderConfig encoder, ModelVariant variant, LogicConfig logic,
             std::uint64_t seed, std::uint64_t id_fingerprint);

  int item_count() const { return item_count_; }
  int dim() const { return encoder_.hidden_size; }
  const EncoderConfig& encoder_config() const { return encoder_; }
  const ModelVariant& variant() const { return variant_; }
  ModelVariant& variant() { return variant_; }
  const LogicConfig& logic_config() const { return logic_; }
  std::uint64_t id_fingerprint() const { return id_fingerprint_; }
  ag::ParameterStore& params() { return params_; }
  const ag::ParameterStore& params() const { return params_; }

  // -- value-level operations (single example, no gradients) --

  /// Embedding rows for a padded history; padding ids map to the zero row.
  ag::Mat embed_sequence(const std::vector<int>& history) const;

  /// Beta embedding of one item under the current transfer matrices.
  BetaEmbedding project_item(int item_id) const;

  /// Conjunction over history positives and (optionally negated) sampled
  /// negatives, Eq-style: attention weights unless the variant pools
  /// uniformly.
  BetaEmbedding reason_sequence(const ReasoningInput& input) const;

  /// Pair-wise logic loss log sigmoid(Dist+ - Dist-) (or the bounded
  /// alternative when configured).
  double logic_loss_value(const BetaEmbedding& vbar, int target_id, int loss_negative_id) const;

  /// Raw scores over all items (ids 1..item_count). Pass the feature
  /// and/or logic representation depending on the variant.
  Eigen::VectorXd predict_scores(const Eigen::VectorXd& h_f, const Eigen::VectorXd& h_l) const;

  /// Per-item binary cross-entropy against a one-hot target.
  double rec_loss_value(const Eigen::VectorXd& scores, int target_id) const;

  static double total_loss_value(double rec, double logic, double lambda);

  /// Feature representation H_f of one example (evaluation mode).
  Eigen::VectorXd feature_representation(const SequenceExample& example) const;

  /// Logic representation H_l = mean of the reasoned distribution.
  Eigen::VectorXd logic_representation(const ReasoningInput& input) const;

  // -- batched paths --

  /// Evaluation scores for a batch (rows align with examples, columns with
  /// item ids 1..item_count). Deterministic: no dropout, no sampling;
  /// reasoning uses history positives only.
  ag::Mat score_batch(std::span<const SequenceExample> examples) const;

  struct TrainingBatch {
    std::span<const SequenceExample> examples;
    /// Per-example reasoning negatives; may be empty vectors.
    std::span<const std::vector<int>> logic_negatives;
    /// One pair-wise loss negative per example.
    std::span<const int> loss_negatives;
  };

  struct LossVars {
    ag::Var rec;
    ag::Var logic;
    ag::Var total;
  };

  /// Builds the joint objective on the tape. Gradients flow to all
  /// parameter groups; lambda = 0 removes the logic loss term but the
  /// logic head still shapes the scores (unless detached by the variant).
  LossVars build_training_graph(ag::Tape& tape, const TrainingBatch& batch, Rng* dropout_rng);

  /// Zeroes the padding row's gradient so the embedding row 0 never moves.
  void mask_padding_gradient();

  TransferParams transfer_params() const;
  AttentionNetParams attention_net_params() const;

 private:
  ag::Var build_scores(ag::Tape& tape, std::optional<ag::Var> h_f, std::optional<ag::Var> h_l) const;
  ag::Var build_logic_representation(ag::Tape& tape, ag::Var emb_table,
                                     std::span<const SequenceExample> examples,
                                     std::span<const std::vector<int>> negatives,
                                     ag::Var* vbar_alpha, ag::Var* vbar_beta) const;

  int item_count_;
  EncoderConfig encoder_;
  ModelVariant variant_;
  LogicConfig logic_;
  std::uint64_t id_fingerprint_;
  ag::ParameterStore params_;
};

}  // namespace srplr
