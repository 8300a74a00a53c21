#include "srplr/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "srplr/errors.hpp"
#include "srplr/evaluator.hpp"

namespace srplr {

void TrainConfig::validate() const {
  if (epochs < 0) throw ValidationError("train: epochs must be >= 0");
  if (batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
  if (learning_rate <= 0.0) throw ValidationError("train: learning_rate must be > 0");
  if (logic_negatives < 0 || logic_negatives > 10) {
    throw ValidationError("train: logic_negatives must be in [0, 10]");
  }
  if (mask_r < 0.0 || mask_r > 1.0) throw ValidationError("train: mask_r must be in [0, 1]");
  if (eval_ks.empty()) throw ValidationError("train: eval_ks must be non-empty");
  for (int k : eval_ks) {
    if (k < 1) throw ValidationError("train: eval_ks entries must be >= 1");
  }
  if (grad_clip < 0.0) throw ValidationError("train: grad_clip must be >= 0");
  if (eval_every < 0) throw ValidationError("train: eval_every must be >= 0");
  if (checkpoint_every < 0) throw ValidationError("train: checkpoint_every must be >= 0");
  if (select_best_valid && eval_every == 0) {
    throw ValidationError("train: select_best_valid requires eval_every > 0");
  }
}

void AdamOptimizer::step(ag::ParameterStore& params, double grad_clip) {
  ++t_;
  if (grad_clip > 0.0) {
    double sq = 0.0;
    for (auto& p : params) sq += p->grad.squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > grad_clip) {
      const double scale = grad_clip / norm;
      for (auto& p : params) p->grad *= scale;
    }
  }
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (auto& p : params) {
    if (!p->trainable) continue;
    p->adam_m = beta1_ * p->adam_m + (1.0 - beta1_) * p->grad;
    p->adam_v = beta2_ * p->adam_v + (1.0 - beta2_) * p->grad.cwiseProduct(p->grad);
    const ag::Mat m_hat = p->adam_m / bc1;
    const ag::Mat v_hat = p->adam_v / bc2;
    p->value -= lr_ * m_hat.cwiseQuotient((v_hat.array().sqrt() + eps_).matrix());
  }
}

namespace {

// Batches larger than this are split into micro-batches whose gradients
// accumulate before the single optimizer step; keeps tape memory bounded
// without changing the objective.
constexpr int kMicroBatch = 256;

}  // namespace

TrainResult train(SrplrModel& model, const DatasetSplit& splits, const TrainConfig& config,
                  const EpochCallback& callback) {
  config.validate();
  const auto t_start = std::chrono::steady_clock::now();
  TrainResult result;
  if (config.epochs == 0 || splits.train.empty()) return result;

  Rng root(config.seed);
  Rng shuffle_rng = root.fork("shuffle");
  Rng negative_rng = root.fork("negatives");
  Rng mask_rng = root.fork("mask");
  Rng dropout_rng = root.fork("dropout");

  AdamOptimizer opt(config.learning_rate);
  std::vector<std::size_t> order(splits.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  SrplrModel best_model = model;
  double best_valid = -1.0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    // Fisher-Yates with our own rng (stdlib shuffle is not pinned)
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = shuffle_rng.bounded(i);
      std::swap(order[i - 1], order[j]);
    }

    double sum_rec = 0.0, sum_logic = 0.0, sum_total = 0.0;
    std::size_t seen = 0;

    for (std::size_t batch_start = 0; batch_start < order.size();
         batch_start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t batch_end =
          std::min(order.size(), batch_start + static_cast<std::size_t>(config.batch_size));
      const std::size_t batch_n = batch_end - batch_start;

      // assemble the batch: masking and fresh negatives per example
      std::vector<SequenceExample> examples;
      std::vector<std::vector<int>> logic_negs;
      std::vector<int> loss_negs;
      examples.reserve(batch_n);
      logic_negs.reserve(batch_n);
      loss_negs.reserve(batch_n);
      for (std::size_t i = batch_start; i < batch_end; ++i) {
        const SequenceExample& raw = splits.train[order[i]];
        SequenceExample ex = config.mask_r > 0.0 ? mask_history(raw, config.mask_r, mask_rng) : raw;
        logic_negs.push_back(
            sample_logic_negatives(ex, config.logic_negatives, splits.item_count, negative_rng));
        loss_negs.push_back(
            sample_logic_negatives(ex, 1, splits.item_count, negative_rng).at(0));
        examples.push_back(std::move(ex));
      }

      model.params().zero_grads();
      double batch_rec = 0.0, batch_logic = 0.0, batch_total = 0.0;
      for (std::size_t micro = 0; micro < batch_n; micro += kMicroBatch) {
        const std::size_t micro_n = std::min<std::size_t>(kMicroBatch, batch_n - micro);
        const double weight = static_cast<double>(micro_n) / static_cast<double>(batch_n);
        ag::Tape tape(true);
        SrplrModel::TrainingBatch tb;
        tb.examples = std::span(examples).subspan(micro, micro_n);
        tb.logic_negatives = std::span(logic_negs).subspan(micro, micro_n);
        tb.loss_negatives = std::span(loss_negs).subspan(micro, micro_n);
        auto losses = model.build_training_graph(tape, tb, &dropout_rng);
        ag::Var weighted = ag::scalar_mul(losses.total, weight);
        tape.backward(weighted);
        batch_rec += weight * tape.val(losses.rec)(0, 0);
        batch_logic += weight * tape.val(losses.logic)(0, 0);
        batch_total += weight * tape.val(losses.total)(0, 0);
      }

      if (!std::isfinite(batch_total)) {
        throw TrainingDiverged("training loss became non-finite (rec=" + std::to_string(batch_rec) +
                                   ", logic=" + std::to_string(batch_logic) + ")",
                               epoch, static_cast<int>(batch_start / config.batch_size));
      }
      model.mask_padding_gradient();
      opt.step(model.params(), config.grad_clip);

      sum_rec += batch_rec * static_cast<double>(batch_n);
      sum_logic += batch_logic * static_cast<double>(batch_n);
      sum_total += batch_total * static_cast<double>(batch_n);
      seen += batch_n;
    }

    EpochLogRow row;
    row.epoch = epoch;
    row.loss_rec = sum_rec / static_cast<double>(seen);
    row.loss_logic = sum_logic / static_cast<double>(seen);
    row.loss_total = sum_total / static_cast<double>(seen);

    if (config.eval_every > 0 && (epoch % config.eval_every == 0 || epoch == config.epochs) &&
        !splits.valid.empty()) {
      auto report = evaluate_full_rank(model, splits.valid, {10}, "valid");
      row.valid_hit10 = report.hit.at(10);
      row.valid_ndcg10 = report.ndcg.at(10);
      if (config.select_best_valid && row.valid_hit10 > best_valid) {
        best_valid = row.valid_hit10;
        best_model = model;
        result.best_epoch = epoch;
      }
    }
    result.log.push_back(row);
    if (callback) callback(row, model);
  }

  if (config.select_best_valid && best_valid >= 0.0) {
    model = best_model;
  } else {
    result.best_epoch = config.epochs;
  }
  result.wall_clock_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

}  // namespace srplr
