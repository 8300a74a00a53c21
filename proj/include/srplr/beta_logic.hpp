#pragma once

#include <Eigen/Dense>
#include <vector>

#include "srplr/autograd.hpp"

namespace srplr {

/// Settings for the probabilistic logic space.
struct LogicConfig {
  /// Lower clamp bound for Beta shape parameters. The upper bound is
  /// fixed at 1e9. Configurable because the open interval (0, 1e9] has
  /// no canonical floor.
  double eps_clamp = 0.05;
  static constexpr double kClampMax = 1e9;

  enum class ClampMode { hard, softplus };
  ClampMode clamp_mode = ClampMode::hard;

  /// When true (default) the attention MLP sees the post-negation
  /// (reciprocal) parameters of negated participants; when false it sees
  /// the pre-negation parameters.
  bool attention_on_negated = true;

  enum class LogicLossForm { paper, bounded };
  LogicLossForm logic_loss_form = LogicLossForm::paper;

  enum class RecLossForm { bce, softmax };
  RecLossForm rec_loss_form = RecLossForm::bce;

  /// Probability clip inside the recommendation cross-entropy.
  double rec_loss_clip = 1e-8;
};

/// d independent Beta(alpha_k, beta_k) distributions representing an item
/// or a reasoned sequence in logic space. The *_comp vectors carry
/// low-order residuals produced by negation; they make double negation an
/// exact involution and are zero for freshly projected embeddings. All
/// consumers other than negation read only alpha/beta.
struct BetaEmbedding {
  Eigen::ArrayXd alpha;
  Eigen::ArrayXd beta;
  Eigen::ArrayXd alpha_comp;
  Eigen::ArrayXd beta_comp;

  BetaEmbedding() = default;
  BetaEmbedding(Eigen::ArrayXd a, Eigen::ArrayXd b);
  Eigen::Index dim() const { return alpha.size(); }
};

/// The two d x d transfer matrices mapping ID embeddings into Beta
/// parameter space.
struct TransferParams {
  ag::Mat w_alpha;
  ag::Mat w_beta;
};

/// One-hidden-layer MLP R^{2d} -> R^d producing per-dimension attention
/// logits from the concatenated (alpha, beta) of a participant.
struct AttentionNetParams {
  ag::Mat w1;  // 2d x 2d
  Eigen::RowVectorXd b1;
  ag::Mat w2;  // 2d x d
  Eigen::RowVectorXd b2;
};

/// alpha = clamp(rows * W_alpha), beta = clamp(rows * W_beta), row by row.
std::vector<BetaEmbedding> project_to_beta(const ag::Mat& rows, const TransferParams& transfer,
                                           const LogicConfig& cfg);

/// Component-wise reciprocal of both shape vectors, re-clamped.
BetaEmbedding negate(const BetaEmbedding& v, const LogicConfig& cfg);

/// Per-dimension softmax over participants of the attention MLP logits.
/// Returns an n x d matrix whose every column sums to 1.
ag::Mat attention_weights(const std::vector<BetaEmbedding>& participants,
                          const AttentionNetParams& net);

/// Weighted parameter sum; weights must be column-normalized and
/// nonnegative. Result is clamped.
BetaEmbedding conjoin(const std::vector<BetaEmbedding>& participants, const ag::Mat& weights,
                      const LogicConfig& cfg);

/// Sum over dimensions of KL(Beta(target_k) || Beta(sequence_k)), closed
/// form via log-gamma and digamma.
double kl_distance(const BetaEmbedding& target, const BetaEmbedding& sequence);

/// Distribution means alpha / (alpha + beta), strictly inside (0, 1).
Eigen::ArrayXd beta_mean(const BetaEmbedding& v);

/// De Morgan composition negate(conjoin(negations, attention over
/// negations)). Provided for completeness; the model does not use it.
BetaEmbedding disjoin(const std::vector<BetaEmbedding>& participants,
                      const AttentionNetParams& net, const LogicConfig& cfg);

// Tape-level building blocks mirroring the value-level operators; these
// carry gradients and operate on stacked parameter matrices.
namespace logic_ops {

/// Clamp a pre-activation parameter matrix into the legal Beta range.
ag::Var clamp_params(ag::Var x, const LogicConfig& cfg);

/// KL(Beta(a1,b1) || Beta(a2,b2)) elementwise; inputs are N x d matrices,
/// output is N x d of per-dimension divergences.
ag::Var kl_elementwise(ag::Var a1, ag::Var b1, ag::Var a2, ag::Var b2);

}  // namespace logic_ops

}  // namespace srplr
