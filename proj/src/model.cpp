#include "srplr/model.hpp"

#include <algorithm>
#include <cmath>

#include "srplr/errors.hpp"
#include "srplr/special.hpp"

namespace srplr {

using ag::Mat;
using ag::Var;

void ModelVariant::validate() const {
  if (lambda < 0.0) throw ValidationError("variant: lambda must be >= 0");
  if (!use_feature && !use_logic) {
    throw ValidationError("variant: at least one of use_feature / use_logic must be on");
  }
}

std::string ModelVariant::label() const {
  std::string out;
  auto append = [&out](const char* tag) {
    if (!out.empty()) out += "+";
    out += tag;
  };
  if (!use_attention) append("w/o att");
  if (!use_negation) append("w/o neg_oper");
  if (!use_feature) append("w/o feat");
  if (!use_logic) append("backbone_only");
  return out.empty() ? "full" : out;
}

namespace {

constexpr double kEmbeddingInitStd = 0.02;

void fill_normal(Mat& m, Rng& rng, double std) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.normal(0.0, std);
}

}  // namespace

SrplrModel::SrplrModel(int item_count, EncoderConfig encoder, ModelVariant variant,
                       LogicConfig logic, std::uint64_t seed, std::uint64_t id_fingerprint)
    : item_count_(item_count),
      encoder_(encoder),
      variant_(variant),
      logic_(logic),
      id_fingerprint_(id_fingerprint) {
  if (item_count_ < 1) throw ValidationError("model: item_count must be >= 1");
  encoder_.validate();
  variant_.validate();
  const int d = encoder_.hidden_size;
  Rng rng(seed);

  auto& emb = params_.create("item_embedding", item_count_ + 1, d);
  Rng emb_rng = rng.fork("embedding");
  fill_normal(emb.value, emb_rng, kEmbeddingInitStd);
  emb.value.row(0).setZero();  // padding row: frozen at zero

  // Transfer matrices are scaled so pre-clamp Beta parameters have unit
  // spread at init; with the table's 0.02 std, a blanket 0.02 init would
  // put nearly every component under the clamp floor.
  Rng tr_rng = rng.fork("transfer");
  const double transfer_std = 1.0 / (kEmbeddingInitStd * std::sqrt(static_cast<double>(d)));
  auto& wa = params_.create("logic.w_alpha", d, d);
  fill_normal(wa.value, tr_rng, transfer_std);
  auto& wb = params_.create("logic.w_beta", d, d);
  fill_normal(wb.value, tr_rng, transfer_std);

  Rng att_rng = rng.fork("attention_net");
  auto& w1 = params_.create("logic.att.w1", 2 * d, 2 * d);
  fill_normal(w1.value, att_rng, kEmbeddingInitStd);
  params_.create("logic.att.b1", 1, 2 * d);
  auto& w2 = params_.create("logic.att.w2", 2 * d, d);
  fill_normal(w2.value, att_rng, kEmbeddingInitStd);
  params_.create("logic.att.b2", 1, d);

  init_encoder_params(params_, encoder_, rng);
}

TransferParams SrplrModel::transfer_params() const {
  return TransferParams{params_.at("logic.w_alpha").value, params_.at("logic.w_beta").value};
}

AttentionNetParams SrplrModel::attention_net_params() const {
  AttentionNetParams net;
  net.w1 = params_.at("logic.att.w1").value;
  net.b1 = params_.at("logic.att.b1").value.row(0);
  net.w2 = params_.at("logic.att.w2").value;
  net.b2 = params_.at("logic.att.b2").value.row(0);
  return net;
}

Mat SrplrModel::embed_sequence(const std::vector<int>& history) const {
  const Mat& table = params_.at("item_embedding").value;
  Mat out(static_cast<Eigen::Index>(history.size()), dim());
  for (std::size_t i = 0; i < history.size(); ++i) {
    const int id = history[i];
    if (id < 0 || id > item_count_) {
      throw ValidationError("embed_sequence: item id " + std::to_string(id) + " out of range");
    }
    out.row(static_cast<Eigen::Index>(i)) = table.row(id);
  }
  return out;
}

BetaEmbedding SrplrModel::project_item(int item_id) const {
  if (item_id < 0 || item_id > item_count_) {
    throw ValidationError("project_item: item id out of range");
  }
  Mat row = params_.at("item_embedding").value.row(item_id);
  return project_to_beta(row, transfer_params(), logic_)[0];
}

BetaEmbedding SrplrModel::reason_sequence(const ReasoningInput& input) const {
  if (input.positive_ids.empty()) {
    throw ValidationError("reason_sequence: positive_ids must be non-empty");
  }
  const TransferParams transfer = transfer_params();
  std::vector<BetaEmbedding> participants;
  participants.reserve(input.positive_ids.size() + input.negative_ids.size());
  for (int id : input.positive_ids) {
    participants.push_back(project_item(id));
  }
  if (variant_.use_negation) {
    for (int id : input.negative_ids) {
      participants.push_back(negate(project_item(id), logic_));
    }
  }
  const int n = static_cast<int>(participants.size());
  Mat weights;
  if (variant_.use_attention) {
    if (logic_.attention_on_negated) {
      weights = attention_weights(participants, attention_net_params());
    } else {
      // attention sees pre-negation parameters, conjunction the negated ones
      std::vector<BetaEmbedding> raw;
      raw.reserve(participants.size());
      for (int id : input.positive_ids) raw.push_back(project_item(id));
      if (variant_.use_negation) {
        for (int id : input.negative_ids) raw.push_back(project_item(id));
      }
      weights = attention_weights(raw, attention_net_params());
    }
  } else {
    weights = Mat::Constant(n, dim(), 1.0 / n);
  }
  return conjoin(participants, weights, logic_);
}

double SrplrModel::logic_loss_value(const BetaEmbedding& vbar, int target_id,
                                    int loss_negative_id) const {
  if (target_id == loss_negative_id) {
    throw ValidationError("logic_loss: target and negative must differ");
  }
  const double dist_pos = kl_distance(project_item(target_id), vbar);
  const double dist_neg = kl_distance(project_item(loss_negative_id), vbar);
  if (logic_.logic_loss_form == LogicConfig::LogicLossForm::paper) {
    return log_sigmoid(dist_pos - dist_neg);
  }
  return -log_sigmoid(dist_neg - dist_pos);
}

Eigen::VectorXd SrplrModel::predict_scores(const Eigen::VectorXd& h_f,
                                           const Eigen::VectorXd& h_l) const {
  const Mat& table = params_.at("item_embedding").value;
  const Mat items = table.bottomRows(item_count_);
  Eigen::VectorXd scores = Eigen::VectorXd::Zero(item_count_);
  if (variant_.use_feature) {
    if (h_f.size() != dim()) throw ValidationError("predict_scores: H_f must have length d");
    scores += items * h_f;
  }
  if (variant_.use_logic) {
    if (h_l.size() != dim()) throw ValidationError("predict_scores: H_l must have length d");
    const TransferParams transfer = transfer_params();
    const Mat alpha = (items * transfer.w_alpha)
                          .cwiseMax(logic_.eps_clamp)
                          .cwiseMin(LogicConfig::kClampMax);
    const Mat beta =
        (items * transfer.w_beta).cwiseMax(logic_.eps_clamp).cwiseMin(LogicConfig::kClampMax);
    const Mat e = alpha.array() / (alpha.array() + beta.array());
    scores += e.matrix() * h_l;
  }
  return scores;
}

double SrplrModel::rec_loss_value(const Eigen::VectorXd& scores, int target_id) const {
  if (target_id < 1 || target_id > static_cast<int>(scores.size())) {
    throw ValidationError("rec_loss: target id out of range");
  }
  const double clip = logic_.rec_loss_clip;
  double total = 0.0;
  for (Eigen::Index j = 0; j < scores.size(); ++j) {
    const double p = std::min(std::max(sigmoid(scores(j)), clip), 1.0 - clip);
    const double y = (j == target_id - 1) ? 1.0 : 0.0;
    total -= y * std::log(p) + (1.0 - y) * std::log1p(-p);
  }
  return total;
}

double SrplrModel::total_loss_value(double rec, double logic, double lambda) {
  if (lambda < 0.0) throw ValidationError("total_loss: lambda must be >= 0");
  return rec + lambda * logic;
}

Eigen::VectorXd SrplrModel::feature_representation(const SequenceExample& example) const {
  ag::Tape tape(false);
  BatchView view = BatchView::from_examples(std::span(&example, 1));
  Var emb = ag::gather_rows(tape.leaf(const_cast<ag::Parameter&>(params_.at("item_embedding"))),
                            view.flat_ids);
  Var h = encode_batch(tape, emb, view, const_cast<ag::ParameterStore&>(params_), encoder_,
                       nullptr, false);
  return tape.val(h).row(0);
}

Eigen::VectorXd SrplrModel::logic_representation(const ReasoningInput& input) const {
  return beta_mean(reason_sequence(input)).matrix();
}

namespace {

/// Slot layout for the batched logic path: seq_len history slots followed
/// by max_negatives sampled-negative slots per example.
struct LogicSlots {
  int slots = 0;
  std::vector<int> flat_ids;
  Eigen::VectorXd keep;
  Mat negation_mask;  // 1.0 on active negative slots
  bool any_negative = false;
};

LogicSlots build_logic_slots(std::span<const SequenceExample> examples,
                             std::span<const std::vector<int>> negatives, bool use_negation,
                             int dim) {
  const int batch = static_cast<int>(examples.size());
  const int seq_len = static_cast<int>(examples.front().history.size());
  int max_negs = 0;
  if (use_negation && !negatives.empty()) {
    for (const auto& n : negatives) max_negs = std::max(max_negs, static_cast<int>(n.size()));
  }
  LogicSlots s;
  s.slots = seq_len + max_negs;
  s.flat_ids.assign(static_cast<std::size_t>(batch * s.slots), 0);
  s.keep = Eigen::VectorXd::Zero(batch * s.slots);
  s.negation_mask = Mat::Zero(batch * s.slots, dim);
  for (int b = 0; b < batch; ++b) {
    const auto& ex = examples[static_cast<std::size_t>(b)];
    for (int t = 0; t < seq_len; ++t) {
      const int id = ex.history[static_cast<std::size_t>(t)];
      const int flat = b * s.slots + t;
      s.flat_ids[static_cast<std::size_t>(flat)] = id;
      if (id != 0) s.keep(flat) = 1.0;
    }
    if (use_negation && !negatives.empty()) {
      const auto& negs = negatives[static_cast<std::size_t>(b)];
      for (std::size_t k = 0; k < negs.size(); ++k) {
        const int flat = b * s.slots + seq_len + static_cast<int>(k);
        s.flat_ids[static_cast<std::size_t>(flat)] = negs[k];
        s.keep(flat) = 1.0;
        s.negation_mask.row(flat).setOnes();
        s.any_negative = true;
      }
    }
  }
  return s;
}

}  // namespace

Var SrplrModel::build_logic_representation(ag::Tape& tape, Var emb_table,
                                           std::span<const SequenceExample> examples,
                                           std::span<const std::vector<int>> negatives,
                                           Var* vbar_alpha, Var* vbar_beta) const {
  const int d = dim();
  LogicSlots slots = build_logic_slots(examples, negatives, variant_.use_negation, d);

  Var rows = ag::gather_rows(emb_table, slots.flat_ids);
  Var wa = tape.leaf(const_cast<ag::Parameter&>(params_.at("logic.w_alpha")));
  Var wb = tape.leaf(const_cast<ag::Parameter&>(params_.at("logic.w_beta")));
  Var alpha_raw = logic_ops::clamp_params(ag::matmul(rows, wa), logic_);
  Var beta_raw = logic_ops::clamp_params(ag::matmul(rows, wb), logic_);

  Var alpha = alpha_raw;
  Var beta = beta_raw;
  if (slots.any_negative) {
    // participants on negative slots enter negated (re-clamped reciprocal)
    Var alpha_neg = logic_ops::clamp_params(ag::reciprocal(alpha_raw), logic_);
    Var beta_neg = logic_ops::clamp_params(ag::reciprocal(beta_raw), logic_);
    Var nm = tape.constant(slots.negation_mask);
    Var pm = tape.constant(Mat::Ones(slots.negation_mask.rows(), d) - slots.negation_mask);
    alpha = ag::add(ag::mul(nm, alpha_neg), ag::mul(pm, alpha_raw));
    beta = ag::add(ag::mul(nm, beta_neg), ag::mul(pm, beta_raw));
  }

  Var weights{};
  if (variant_.use_attention) {
    Var att_alpha = logic_.attention_on_negated ? alpha : alpha_raw;
    Var att_beta = logic_.attention_on_negated ? beta : beta_raw;
    Var inp = ag::concat_cols(att_alpha, att_beta);
    Var w1 = tape.leaf(const_cast<ag::Parameter&>(params_.at("logic.att.w1")));
    Var b1 = tape.leaf(const_cast<ag::Parameter&>(params_.at("logic.att.b1")));
    Var w2 = tape.leaf(const_cast<ag::Parameter&>(params_.at("logic.att.w2")));
    Var b2 = tape.leaf(const_cast<ag::Parameter&>(params_.at("logic.att.b2")));
    Var hidden = ag::relu(ag::add_row(ag::matmul(inp, w1), b1));
    Var logits = ag::add_row(ag::matmul(hidden, w2), b2);
    weights = ag::block_col_softmax(logits, slots.slots, slots.keep);
  } else {
    // average pooling: uniform over active slots, per example
    Mat w = Mat::Zero(slots.keep.size(), d);
    const int batch = static_cast<int>(examples.size());
    for (int b = 0; b < batch; ++b) {
      double active = 0.0;
      for (int s = 0; s < slots.slots; ++s) active += slots.keep(b * slots.slots + s);
      for (int s = 0; s < slots.slots; ++s) {
        if (slots.keep(b * slots.slots + s) != 0.0) {
          w.row(b * slots.slots + s).setConstant(1.0 / active);
        }
      }
    }
    weights = tape.constant(std::move(w));
  }

  Var va = logic_ops::clamp_params(ag::block_sum_rows(ag::mul(weights, alpha), slots.slots), logic_);
  Var vb = logic_ops::clamp_params(ag::block_sum_rows(ag::mul(weights, beta), slots.slots), logic_);
  if (vbar_alpha != nullptr) *vbar_alpha = va;
  if (vbar_beta != nullptr) *vbar_beta = vb;
  // H_l = alpha / (alpha + beta)
  return ag::mul(va, ag::reciprocal(ag::add(va, vb)));
}

Var SrplrModel::build_scores(ag::Tape& tape, std::optional<Var> h_f, std::optional<Var> h_l) const {
  std::vector<int> item_ids(static_cast<std::size_t>(item_count_));
  for (int i = 0; i < item_count_; ++i) item_ids[static_cast<std::size_t>(i)] = i + 1;
  Var table = tape.leaf(const_cast<ag::Parameter&>(params_.at("item_embedding")));
  Var items = ag::gather_rows(table, item_ids);

  std::optional<Var> feature_part;
  std::optional<Var> logic_part;
  if (variant_.use_feature) {
    if (!h_f.has_value()) throw ValidationError("build_scores: variant needs H_f");
    feature_part = ag::matmul_nt(*h_f, items);
  }
  if (variant_.use_logic) {
    if (!h_l.has_value()) throw ValidationError("build_scores: variant needs H_l");
    Var wa = tape.leaf(const_cast<ag::Parameter&>(params_.at("logic.w_alpha")));
    Var wb = tape.leaf(const_cast<ag::Parameter&>(params_.at("logic.w_beta")));
    Var ea = logic_ops::clamp_params(ag::matmul(items, wa), logic_);
    Var eb = logic_ops::clamp_params(ag::matmul(items, wb), logic_);
    Var e = ag::mul(ea, ag::reciprocal(ag::add(ea, eb)));
    logic_part = ag::matmul_nt(*h_l, e);
  }
  if (feature_part && logic_part) return ag::add(*feature_part, *logic_part);
  return feature_part ? *feature_part : *logic_part;
}

Mat SrplrModel::score_batch(std::span<const SequenceExample> examples) const {
  if (examples.empty()) throw ValidationError("score_batch: empty batch");
  ag::Tape tape(false);
  auto& self = const_cast<SrplrModel&>(*this);
  Var table = tape.leaf(self.params_.at("item_embedding"));

  std::optional<Var> h_f;
  std::optional<Var> h_l;
  if (variant_.use_feature) {
    BatchView view = BatchView::from_examples(examples);
    Var emb = ag::gather_rows(table, view.flat_ids);
    h_f = encode_batch(tape, emb, view, self.params_, encoder_, nullptr, false);
  }
  if (variant_.use_logic) {
    // evaluation-time reasoning runs on history positives only
    h_l = self.build_logic_representation(tape, table, examples, {}, nullptr, nullptr);
  }
  Var scores = build_scores(tape, h_f, h_l);
  return tape.val(scores);
}

SrplrModel::LossVars SrplrModel::build_training_graph(ag::Tape& tape, const TrainingBatch& batch,
                                                      Rng* dropout_rng) {
  if (batch.examples.empty()) throw ValidationError("training batch is empty");
  const std::size_t n = batch.examples.size();
  if (batch.loss_negatives.size() != n && variant_.lambda > 0.0) {
    throw ValidationError("training batch needs one loss negative per example");
  }

  Var table = tape.leaf(params_.at("item_embedding"));

  std::optional<Var> h_f;
  if (variant_.use_feature) {
    BatchView view = BatchView::from_examples(batch.examples);
    Var emb = ag::gather_rows(table, view.flat_ids);
    h_f = encode_batch(tape, emb, view, params_, encoder_, dropout_rng, true);
  }

  const bool need_logic_head = variant_.use_logic;
  const bool need_logic_loss = variant_.lambda > 0.0;
  std::optional<Var> h_l;
  Var vbar_alpha{}, vbar_beta{};
  if (need_logic_head || need_logic_loss) {
    h_l = build_logic_representation(tape, table, batch.examples, batch.logic_negatives,
                                     &vbar_alpha, &vbar_beta);
  }

  std::vector<int> target_cols(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int target = batch.examples[i].target;
    if (target < 1 || target > item_count_) {
      throw ValidationError("training example target out of range");
    }
    target_cols[i] = target - 1;
  }

  Var scores = build_scores(tape, h_f, need_logic_head ? h_l : std::optional<Var>{});
  Var rec_per_example =
      logic_.rec_loss_form == LogicConfig::RecLossForm::bce
          ? ag::bce_logits_rowsum(scores, target_cols, logic_.rec_loss_clip)
          : ag::softmax_xent_rows(scores, target_cols);
  Var rec = ag::mean_all(rec_per_example);

  Var logic{};
  if (need_logic_loss) {
    std::vector<int> target_ids(n), neg_ids(n);
    for (std::size_t i = 0; i < n; ++i) {
      target_ids[i] = batch.examples[i].target;
      neg_ids[i] = batch.loss_negatives[i];
      if (neg_ids[i] == target_ids[i]) {
        throw ValidationError("logic loss negative equals the target");
      }
    }
    Var wa = tape.leaf(params_.at("logic.w_alpha"));
    Var wb = tape.leaf(params_.at("logic.w_beta"));
    Var t_rows = ag::gather_rows(table, target_ids);
    Var n_rows = ag::gather_rows(table, neg_ids);
    Var ta = logic_ops::clamp_params(ag::matmul(t_rows, wa), logic_);
    Var tb = logic_ops::clamp_params(ag::matmul(t_rows, wb), logic_);
    Var na = logic_ops::clamp_params(ag::matmul(n_rows, wa), logic_);
    Var nb = logic_ops::clamp_params(ag::matmul(n_rows, wb), logic_);
    Var dist_pos = ag::row_sum(logic_ops::kl_elementwise(ta, tb, vbar_alpha, vbar_beta));
    Var dist_neg = ag::row_sum(logic_ops::kl_elementwise(na, nb, vbar_alpha, vbar_beta));
    Var per_example = logic_.logic_loss_form == LogicConfig::LogicLossForm::paper
                          ? ag::log_sigmoid(ag::sub(dist_pos, dist_neg))
                          : ag::scalar_mul(ag::log_sigmoid(ag::sub(dist_neg, dist_pos)), -1.0);
    logic = ag::mean_all(per_example);
  } else {
    logic = tape.constant(Mat::Zero(1, 1));
  }

  Var total = ag::add(rec, ag::scalar_mul(logic, variant_.lambda));
  return LossVars{rec, logic, total};
}

void SrplrModel::mask_padding_gradient() {
  params_.at("item_embedding").grad.row(0).setZero();
}

}  // namespace srplr
