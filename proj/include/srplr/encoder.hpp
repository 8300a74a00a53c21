#pragma once

#include <span>
#include <string>
#include <vector>

#include "srplr/autograd.hpp"
#include "srplr/dataset.hpp"
#include "srplr/rng.hpp"

namespace srplr {

enum class BackboneKind { gru, self_attention };

std::string to_string(BackboneKind kind);
BackboneKind backbone_from_string(const std::string& s);

/// Sequence encoder settings. hidden_size must equal the embedding
/// dimension so the feature representation can be concatenated with the
/// logic representation at prediction time.
struct EncoderConfig {
  BackboneKind kind = BackboneKind::self_attention;
  int layers = 2;  // stacked GRU layers or attention blocks
  int heads = 2;   // self_attention only
  int hidden_size = 64;
  double dropout = 0.5;
  int max_len = 50;

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

/// Flattened geometry of a batch of padded histories. Positions are
/// indexed flat as example * seq_len + t; `pos_rank` counts real
/// (non-padding) positions from the start of each example, which makes
/// positional embeddings independent of how much padding precedes them.
struct BatchView {
  int batch = 0;
  int seq_len = 0;
  std::vector<int> flat_ids;
  Eigen::VectorXd real_mask;
  std::vector<int> pos_rank;
  std::vector<int> last_flat;
  std::vector<int> targets;

  static BatchView from_examples(std::span<const SequenceExample> examples);
};

/// Registers all encoder parameters ("enc." prefix) with the given store.
/// Dense and embedding weights draw from N(0, 0.02^2); recurrent weights
/// are orthogonal; norms start at identity.
void init_encoder_params(ag::ParameterStore& store, const EncoderConfig& cfg, Rng& rng);

/// Hidden state at the last non-padding position of every example
/// (batch x hidden_size). `emb_flat` holds the gathered item embeddings,
/// one row per flat position. Dropout is applied only when training.
ag::Var encode_batch(ag::Tape& tape, ag::Var emb_flat, const BatchView& view,
                     ag::ParameterStore& store, const EncoderConfig& cfg, Rng* dropout_rng,
                     bool training);

/// Per-position hidden states (batch*seq_len x hidden_size). Only the
/// self-attention backbone exposes this view.
ag::Var encode_positions(ag::Tape& tape, ag::Var emb_flat, const BatchView& view,
                         ag::ParameterStore& store, const EncoderConfig& cfg, Rng* dropout_rng,
                         bool training);

/// Multiplies x by an inverted-dropout mask when training; identity
/// otherwise.
ag::Var dropout(ag::Var x, double p, Rng* rng, bool training);

}  // namespace srplr
