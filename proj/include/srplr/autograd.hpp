#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace srplr::ag {

using Mat = Eigen::MatrixXd;

/// A named trainable array with gradient and Adam state.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
  Mat adam_m;
  Mat adam_v;
  bool trainable = true;

  void zero_grad() { grad.setZero(); }
};

/// Ordered collection of parameters; iteration order is creation order,
/// which fixes serialization and update order. Copies are deep: the copy
/// owns independent values, gradients and optimizer state.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore& other);
  ParameterStore& operator=(const ParameterStore& other);
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  Parameter& create(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  Parameter* find(const std::string& name);
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  void zero_grads();
  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, Parameter*> index_;
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  Eigen::Index rows() const;
  Eigen::Index cols() const;
};

/// Define-by-run reverse-mode tape over Eigen matrices. A fresh tape is
/// built per forward pass; backward() walks nodes in reverse creation
/// order. With grad_enabled=false the tape records values only, which is
/// the evaluation path.
class Tape {
 public:
  /// back(tape, g) receives the output node's accumulated gradient g.
  using BackFn = std::function<void(Tape&, const Mat&)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Mat value);
  Var leaf(Parameter& p);

  const Mat& val(Var v) const;
  Mat& grad(Var v);
  bool needs_grad(Var v) const;

  /// Backpropagates from a 1x1 root; accumulates into Parameter::grad of
  /// every leaf reached.
  void backward(Var root);

  std::size_t node_count() const { return nodes_.size(); }

  // Internal: used by op implementations.
  Var emit(Mat value, std::initializer_list<Var> parents, BackFn back);

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool needs = false;
    BackFn back;
    Parameter* param = nullptr;
  };
  std::vector<Node> nodes_;
  bool grad_enabled_;
};

// Elementwise and scalar ops.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scalar_mul(Var a, double s);
Var add_scalar(Var a, double s);
Var reciprocal(Var a);
Var relu(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var lgamma(Var a);
Var digamma(Var a);
Var softplus(Var a);
Var log_sigmoid(Var a);
/// Hard clamp; gradient is passed through only where lo <= x <= hi.
Var clamp(Var a, double lo, double hi);
/// min(x, hi) with pass-through gradient where x <= hi.
Var clamp_max(Var a, double hi);

// Linear algebra.
Var matmul(Var a, Var b);
/// a * b^T without materializing the transpose.
Var matmul_nt(Var a, Var b);
/// Adds a 1 x d row vector to every row of a.
Var add_row(Var a, Var row);

// Shape ops.
Var concat_cols(Var a, Var b);
Var slice_cols(Var a, Eigen::Index first, Eigen::Index count);
/// out.row(i) = a.row(rows[i]); backward scatter-adds.
Var gather_rows(Var a, std::vector<int> rows);

// Reductions.
Var sum_all(Var a);
Var mean_all(Var a);
/// (N x d) -> (N x 1) row sums.
Var row_sum(Var a);

// Softmax family.
Var row_softmax(Var a);
/// Softmax across the `block` rows of each consecutive block, per column.
/// keep(i) == 0 rows get weight exactly 0 and receive no gradient.
Var block_col_softmax(Var a, int block, const Eigen::VectorXd& keep);
/// (B*n x d) -> (B x d), summing each block of n rows.
Var block_sum_rows(Var a, int block);

// Batched per-block products for attention. Inputs are B blocks of t rows.
/// out block_b = q_b * k_b^T : (B*t x h) x (B*t x h) -> (B*t x t).
Var bmm_nt(Var q, Var k, int t);
/// out block_b = a_b * v_b : (B*t x t) x (B*t x h) -> (B*t x h).
Var bmm_nn(Var a, Var v, int t);

/// Row-wise layer normalization with learnable 1 x d gain and bias.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-12);

/// Per-row sum over columns of binary cross-entropy against a one-hot
/// target column, computed from logits. Probabilities are clamped to
/// [clip, 1-clip]; clamped entries get zero gradient. Output is N x 1.
Var bce_logits_rowsum(Var scores, std::vector<int> target_cols, double clip);

/// Per-row softmax cross-entropy -log softmax(s)[target]. Output N x 1.
Var softmax_xent_rows(Var scores, std::vector<int> target_cols);

}  // namespace srplr::ag
