#include "srplr/beta_logic.hpp"

#include <cmath>

#include "srplr/errors.hpp"
#include "srplr/special.hpp"

namespace srplr {

namespace {

Eigen::ArrayXd clamp_array(const Eigen::ArrayXd& x, const LogicConfig& cfg) {
  if (cfg.clamp_mode == LogicConfig::ClampMode::hard) {
    return x.max(cfg.eps_clamp).min(LogicConfig::kClampMax);
  }
  // softplus reparameterization: smooth positivity, hard ceiling only
  Eigen::ArrayXd out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    out(i) = std::min(softplus(x(i)) + cfg.eps_clamp, LogicConfig::kClampMax);
  }
  return out;
}

void check_valid(const BetaEmbedding& v, const char* who) {
  if (v.alpha.size() != v.beta.size() || v.alpha.size() == 0) {
    throw ValidationError(std::string(who) + ": alpha/beta length mismatch or empty");
  }
}

}  // namespace

BetaEmbedding::BetaEmbedding(Eigen::ArrayXd a, Eigen::ArrayXd b)
    : alpha(std::move(a)), beta(std::move(b)) {
  alpha_comp = Eigen::ArrayXd::Zero(alpha.size());
  beta_comp = Eigen::ArrayXd::Zero(beta.size());
}

std::vector<BetaEmbedding> project_to_beta(const ag::Mat& rows, const TransferParams& transfer,
                                           const LogicConfig& cfg) {
  if (rows.cols() != transfer.w_alpha.rows() || transfer.w_alpha.rows() != transfer.w_alpha.cols() ||
      transfer.w_beta.rows() != transfer.w_alpha.rows() || transfer.w_beta.cols() != transfer.w_alpha.cols()) {
    throw ValidationError("project_to_beta: dimension mismatch between rows and transfer matrices");
  }
  const ag::Mat pre_a = rows * transfer.w_alpha;
  const ag::Mat pre_b = rows * transfer.w_beta;
  std::vector<BetaEmbedding> out;
  out.reserve(static_cast<std::size_t>(rows.rows()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    out.emplace_back(clamp_array(pre_a.row(i).transpose().array(), cfg),
                     clamp_array(pre_b.row(i).transpose().array(), cfg));
  }
  return out;
}

BetaEmbedding negate(const BetaEmbedding& v, const LogicConfig& cfg) {
  check_valid(v, "negate");
  const Eigen::Index d = v.dim();
  BetaEmbedding out;
  out.alpha.resize(d);
  out.beta.resize(d);
  out.alpha_comp.resize(d);
  out.beta_comp.resize(d);
  const bool has_comp = v.alpha_comp.size() == d && v.beta_comp.size() == d;
  for (Eigen::Index k = 0; k < d; ++k) {
    Compensated a{v.alpha(k), has_comp ? v.alpha_comp(k) : 0.0};
    Compensated b{v.beta(k), has_comp ? v.beta_comp(k) : 0.0};
    Compensated ra = compensated_reciprocal(a);
    Compensated rb = compensated_reciprocal(b);
    // Re-clamp for closure; a clamped component drops its residual since
    // the clamp output is an exact bound value.
    if (ra.hi < cfg.eps_clamp || ra.hi > LogicConfig::kClampMax) {
      ra.hi = std::min(std::max(ra.hi, cfg.eps_clamp), LogicConfig::kClampMax);
      ra.lo = 0.0;
    }
    if (rb.hi < cfg.eps_clamp || rb.hi > LogicConfig::kClampMax) {
      rb.hi = std::min(std::max(rb.hi, cfg.eps_clamp), LogicConfig::kClampMax);
      rb.lo = 0.0;
    }
    out.alpha(k) = ra.hi;
    out.alpha_comp(k) = ra.lo;
    out.beta(k) = rb.hi;
    out.beta_comp(k) = rb.lo;
  }
  return out;
}

ag::Mat attention_weights(const std::vector<BetaEmbedding>& participants,
                          const AttentionNetParams& net) {
  if (participants.empty()) throw ValidationError("attention_weights: no participants");
  const Eigen::Index n = static_cast<Eigen::Index>(participants.size());
  const Eigen::Index d = participants.front().dim();
  if (net.w1.rows() != 2 * d || net.w2.cols() != d) {
    throw ValidationError("attention_weights: net shape does not match embedding dimension");
  }
  ag::Mat logits(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const BetaEmbedding& p = participants[static_cast<std::size_t>(i)];
    check_valid(p, "attention_weights");
    if (p.dim() != d) throw ValidationError("attention_weights: inconsistent dimensions");
    Eigen::RowVectorXd in(2 * d);
    in << p.alpha.matrix().transpose(), p.beta.matrix().transpose();
    Eigen::RowVectorXd h = ((in * net.w1) + net.b1).cwiseMax(0.0);
    logits.row(i) = (h * net.w2) + net.b2;
  }
  // Per-dimension softmax across participants; stable via column max.
  ag::Mat w(n, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double m = logits.col(j).maxCoeff();
    Eigen::VectorXd e = (logits.col(j).array() - m).exp();
    w.col(j) = e / e.sum();
  }
  return w;
}

BetaEmbedding conjoin(const std::vector<BetaEmbedding>& participants, const ag::Mat& weights,
                      const LogicConfig& cfg) {
  if (participants.empty()) throw ValidationError("conjoin: no participants");
  const Eigen::Index n = static_cast<Eigen::Index>(participants.size());
  const Eigen::Index d = participants.front().dim();
  if (weights.rows() != n || weights.cols() != d) {
    throw ValidationError("conjoin: weight matrix must be n x d");
  }
  if ((weights.array() < 0.0).any()) throw ValidationError("conjoin: negative weight");
  for (Eigen::Index j = 0; j < d; ++j) {
    const double s = weights.col(j).sum();
    if (std::abs(s - 1.0) > 1e-6) {
      throw ValidationError("conjoin: weight column " + std::to_string(j) +
                            " sums to " + std::to_string(s) + ", expected 1");
    }
  }
  Eigen::ArrayXd a = Eigen::ArrayXd::Zero(d);
  Eigen::ArrayXd b = Eigen::ArrayXd::Zero(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const BetaEmbedding& p = participants[static_cast<std::size_t>(i)];
    check_valid(p, "conjoin");
    if (p.dim() != d) throw ValidationError("conjoin: inconsistent dimensions");
    a += weights.row(i).transpose().array() * p.alpha;
    b += weights.row(i).transpose().array() * p.beta;
  }
  return BetaEmbedding(a.max(cfg.eps_clamp).min(LogicConfig::kClampMax),
                       b.max(cfg.eps_clamp).min(LogicConfig::kClampMax));
}

double kl_distance(const BetaEmbedding& target, const BetaEmbedding& sequence) {
  check_valid(target, "kl_distance");
  check_valid(sequence, "kl_distance");
  if (target.dim() != sequence.dim()) {
    throw ValidationError("kl_distance: dimension mismatch");
  }
  double total = 0.0;
  for (Eigen::Index k = 0; k < target.dim(); ++k) {
    total += kl_beta(target.alpha(k), target.beta(k), sequence.alpha(k), sequence.beta(k));
  }
  return total;
}

Eigen::ArrayXd beta_mean(const BetaEmbedding& v) {
  check_valid(v, "beta_mean");
  return v.alpha / (v.alpha + v.beta);
}

BetaEmbedding disjoin(const std::vector<BetaEmbedding>& participants,
                      const AttentionNetParams& net, const LogicConfig& cfg) {
  if (participants.empty()) throw ValidationError("disjoin: no participants");
  std::vector<BetaEmbedding> negated;
  negated.reserve(participants.size());
  for (const auto& p : participants) negated.push_back(negate(p, cfg));
  const ag::Mat w = attention_weights(negated, net);
  return negate(conjoin(negated, w, cfg), cfg);
}

namespace logic_ops {

ag::Var clamp_params(ag::Var x, const LogicConfig& cfg) {
  if (cfg.clamp_mode == LogicConfig::ClampMode::hard) {
    return ag::clamp(x, cfg.eps_clamp, LogicConfig::kClampMax);
  }
  return ag::clamp_max(ag::add_scalar(ag::softplus(x), cfg.eps_clamp), LogicConfig::kClampMax);
}

ag::Var kl_elementwise(ag::Var a1, ag::Var b1, ag::Var a2, ag::Var b2) {
  using namespace ag;
  // ln B(a2,b2) - ln B(a1,b1)
  Var s1 = add(a1, b1);
  Var s2 = add(a2, b2);
  Var log_beta2 = sub(add(lgamma(a2), lgamma(b2)), lgamma(s2));
  Var log_beta1 = sub(add(lgamma(a1), lgamma(b1)), lgamma(s1));
  Var term0 = sub(log_beta2, log_beta1);
  // (a1-a2) psi(a1) + (b1-b2) psi(b1) + (a2-a1+b2-b1) psi(a1+b1)
  Var term1 = mul(sub(a1, a2), digamma(a1));
  Var term2 = mul(sub(b1, b2), digamma(b1));
  Var term3 = mul(sub(s2, s1), digamma(s1));
  return add(add(term0, term1), add(term2, term3));
}

}  // namespace logic_ops

}  // namespace srplr
