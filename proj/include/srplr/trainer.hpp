#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "srplr/dataset.hpp"
#include "srplr/model.hpp"

namespace srplr {

/// Optimization settings. Defaults mirror the standard recipe for this
/// family of models: 50 epochs, batch 2048, lr 0.002, d 64, K in {5, 10}.
struct TrainConfig {
  int epochs = 50;
  int batch_size = 2048;
  double learning_rate = 0.002;
  int logic_negatives = 1;  // reasoning negatives per example, in [0, 10]
  double mask_r = 0.0;      // training-time history masking probability
  std::uint64_t seed = 42;
  std::vector<int> eval_ks{5, 10};
  double grad_clip = 0.0;  // 0 = off
  int checkpoint_every = 0;
  int eval_every = 1;  // epochs between validation passes (0 = never)
  bool select_best_valid = false;

  void validate() const;
};

/// Adam with bias correction. Step order follows parameter creation
/// order, which keeps runs bit-reproducible.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ag::ParameterStore& params, double grad_clip = 0.0);
  int steps_taken() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
};

struct EpochLogRow {
  int epoch = 0;
  double loss_rec = 0.0;
  double loss_logic = 0.0;
  double loss_total = 0.0;
  double valid_hit10 = std::numeric_limits<double>::quiet_NaN();
  double valid_ndcg10 = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  std::vector<EpochLogRow> log;
  int best_epoch = 0;  // only meaningful with select_best_valid
  double wall_clock_sec = 0.0;
};

/// Optional per-epoch hook (checkpointing, progress printing).
using EpochCallback = std::function<void(const EpochLogRow&, SrplrModel&)>;

/// Runs the optimization loop: shuffled batches, per-example history
/// masking and fresh negative sampling, one Adam step per batch. A
/// non-finite loss aborts with TrainingDiverged. Zero epochs return the
/// model untouched.
TrainResult train(SrplrModel& model, const DatasetSplit& splits, const TrainConfig& config,
                  const EpochCallback& callback = nullptr);

}  // namespace srplr
