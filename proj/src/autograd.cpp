#include "srplr/autograd.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <utility>

#include "srplr/errors.hpp"
#include "srplr/special.hpp"

namespace srplr::ag {

namespace {

void check(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

void check_same_shape(Var a, Var b, const char* op) {
  check(a.rows() == b.rows() && a.cols() == b.cols(),
        std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
            std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
            std::to_string(b.cols()) + ")");
}

inline void acc(Tape& t, Var p, const Mat& g) {
  if (t.needs_grad(p)) t.grad(p) += g;
}

}  // namespace

ParameterStore::ParameterStore(const ParameterStore& other) { *this = other; }

ParameterStore& ParameterStore::operator=(const ParameterStore& other) {
  if (this == &other) return *this;
  params_.clear();
  index_.clear();
  for (const auto& p : other.params_) {
    auto copy = std::make_unique<Parameter>(*p);
    index_[copy->name] = copy.get();
    params_.push_back(std::move(copy));
  }
  return *this;
}

Parameter& ParameterStore::create(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  check(index_.find(name) == index_.end(), "duplicate parameter name: " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = Mat::Zero(rows, cols);
  p->grad = Mat::Zero(rows, cols);
  p->adam_m = Mat::Zero(rows, cols);
  p->adam_v = Mat::Zero(rows, cols);
  Parameter* raw = p.get();
  params_.push_back(std::move(p));
  index_[name] = raw;
  return *raw;
}

Parameter& ParameterStore::at(const std::string& name) {
  auto it = index_.find(name);
  check(it != index_.end(), "unknown parameter: " + name);
  return *it->second;
}

const Parameter& ParameterStore::at(const std::string& name) const {
  auto it = index_.find(name);
  check(it != index_.end(), "unknown parameter: " + name);
  return *it->second;
}

Parameter* ParameterStore::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : it->second;
}

void ParameterStore::zero_grads() {
  for (auto& p : params_) p->zero_grad();
}

Eigen::Index Var::rows() const { return tape->val(*this).rows(); }
Eigen::Index Var::cols() const { return tape->val(*this).cols(); }

Var Tape::constant(Mat value) {
  nodes_.push_back(Node{std::move(value), Mat(), false, nullptr, nullptr});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Parameter& p) {
  Node n;
  n.value = p.value;
  n.needs = grad_enabled_ && p.trainable;
  n.param = &p;
  if (n.needs) n.grad = Mat::Zero(p.value.rows(), p.value.cols());
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

const Mat& Tape::val(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).value; }

Mat& Tape::grad(Var v) { return nodes_.at(static_cast<std::size_t>(v.id)).grad; }

bool Tape::needs_grad(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).needs; }

Var Tape::emit(Mat value, std::initializer_list<Var> parents, BackFn back) {
  bool needs = false;
  if (grad_enabled_) {
    for (Var p : parents) {
      check(p.tape == this, "op mixes nodes from different tapes");
      if (needs_grad(p)) needs = true;
    }
  }
  Node n;
  n.needs = needs;
  if (needs) {
    n.grad = Mat::Zero(value.rows(), value.cols());
    n.back = std::move(back);
  }
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Var root) {
  check(root.tape == this, "backward: foreign root");
  check(val(root).rows() == 1 && val(root).cols() == 1, "backward: root must be 1x1");
  check(grad_enabled_, "backward: tape built with gradients disabled");
  if (!needs_grad(root)) return;
  grad(root)(0, 0) = 1.0;
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.needs) continue;
    if (n.back) n.back(*this, n.grad);
    if (n.param != nullptr) n.param->grad += n.grad;
  }
}

Var add(Var a, Var b) {
  check_same_shape(a, b, "add");
  Tape& t = *a.tape;
  return t.emit(t.val(a) + t.val(b), {a, b}, [a, b](Tape& t, const Mat& g) {
    acc(t, a, g);
    acc(t, b, g);
  });
}

Var sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  Tape& t = *a.tape;
  return t.emit(t.val(a) - t.val(b), {a, b}, [a, b](Tape& t, const Mat& g) {
    acc(t, a, g);
    acc(t, b, -g);
  });
}

Var mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  Tape& t = *a.tape;
  return t.emit(t.val(a).cwiseProduct(t.val(b)), {a, b}, [a, b](Tape& t, const Mat& g) {
    acc(t, a, g.cwiseProduct(t.val(b)));
    acc(t, b, g.cwiseProduct(t.val(a)));
  });
}

Var scalar_mul(Var a, double s) {
  Tape& t = *a.tape;
  return t.emit(t.val(a) * s, {a}, [a, s](Tape& t, const Mat& g) { acc(t, a, g * s); });
}

Var add_scalar(Var a, double s) {
  Tape& t = *a.tape;
  return t.emit(t.val(a).array() + s, {a}, [a](Tape& t, const Mat& g) { acc(t, a, g); });
}

Var reciprocal(Var a) {
  Tape& t = *a.tape;
  return t.emit(t.val(a).cwiseInverse(), {a}, [a](Tape& t, const Mat& g) {
    const Mat inv = t.val(a).cwiseInverse();
    acc(t, a, -g.cwiseProduct(inv.cwiseProduct(inv)));
  });
}

Var relu(Var a) {
  Tape& t = *a.tape;
  return t.emit(t.val(a).cwiseMax(0.0), {a}, [a](Tape& t, const Mat& g) {
    acc(t, a, g.cwiseProduct((t.val(a).array() > 0.0).cast<double>().matrix()));
  });
}

Var sigmoid(Var a) {
  Tape& t = *a.tape;
  auto s = std::make_shared<Mat>(t.val(a).unaryExpr([](double x) { return srplr::sigmoid(x); }));
  Mat v = *s;
  return t.emit(std::move(v), {a}, [a, s](Tape& t, const Mat& g) {
    acc(t, a, g.cwiseProduct((s->array() * (1.0 - s->array())).matrix()));
  });
}

Var tanh(Var a) {
  Tape& t = *a.tape;
  Mat v = t.val(a).array().tanh();
  return t.emit(std::move(v), {a}, [a](Tape& t, const Mat& g) {
    const Mat th = t.val(a).array().tanh();
    acc(t, a, g.cwiseProduct((1.0 - th.array().square()).matrix()));
  });
}

Var exp(Var a) {
  Tape& t = *a.tape;
  Mat v = t.val(a).array().exp();
  return t.emit(std::move(v), {a}, [a](Tape& t, const Mat& g) {
    acc(t, a, g.cwiseProduct(Mat(t.val(a).array().exp())));
  });
}

Var log(Var a) {
  Tape& t = *a.tape;
  Mat v = t.val(a).array().log();
  return t.emit(std::move(v), {a}, [a](Tape& t, const Mat& g) {
    acc(t, a, g.cwiseQuotient(t.val(a)));
  });
}

Var lgamma(Var a) {
  Tape& t = *a.tape;
  Mat v = t.val(a).unaryExpr([](double x) { return std::lgamma(x); });
  return t.emit(std::move(v), {a}, [a](Tape& t, const Mat& g) {
    acc(t, a, g.cwiseProduct(t.val(a).unaryExpr([](double x) { return srplr::digamma(x); })));
  });
}

Var digamma(Var a) {
  Tape& t = *a.tape;
  Mat v = t.val(a).unaryExpr([](double x) { return srplr::digamma(x); });
  return t.emit(std::move(v), {a}, [a](Tape& t, const Mat& g) {
    acc(t, a, g.cwiseProduct(t.val(a).unaryExpr([](double x) { return srplr::trigamma(x); })));
  });
}

Var softplus(Var a) {
  Tape& t = *a.tape;
  Mat v = t.val(a).unaryExpr([](double x) { return srplr::softplus(x); });
  return t.emit(std::move(v), {a}, [a](Tape& t, const Mat& g) {
    acc(t, a, g.cwiseProduct(t.val(a).unaryExpr([](double x) { return srplr::sigmoid(x); })));
  });
}

Var log_sigmoid(Var a) {
  Tape& t = *a.tape;
  Mat v = t.val(a).unaryExpr([](double x) { return srplr::log_sigmoid(x); });
  return t.emit(std::move(v), {a}, [a](Tape& t, const Mat& g) {
    acc(t, a, g.cwiseProduct(t.val(a).unaryExpr([](double x) { return srplr::sigmoid(-x); })));
  });
}

Var clamp(Var a, double lo, double hi) {
  Tape& t = *a.tape;
  Mat v = t.val(a).cwiseMax(lo).cwiseMin(hi);
  return t.emit(std::move(v), {a}, [a, lo, hi](Tape& t, const Mat& g) {
    const auto& x = t.val(a).array();
    Mat mask = ((x >= lo) && (x <= hi)).cast<double>().matrix();
    acc(t, a, g.cwiseProduct(mask));
  });
}

Var clamp_max(Var a, double hi) {
  Tape& t = *a.tape;
  Mat v = t.val(a).cwiseMin(hi);
  return t.emit(std::move(v), {a}, [a, hi](Tape& t, const Mat& g) {
    Mat mask = (t.val(a).array() <= hi).cast<double>().matrix();
    acc(t, a, g.cwiseProduct(mask));
  });
}

Var matmul(Var a, Var b) {
  check(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  Tape& t = *a.tape;
  return t.emit(t.val(a) * t.val(b), {a, b}, [a, b](Tape& t, const Mat& g) {
    acc(t, a, g * t.val(b).transpose());
    acc(t, b, t.val(a).transpose() * g);
  });
}

Var matmul_nt(Var a, Var b) {
  check(a.cols() == b.cols(), "matmul_nt: inner dimension mismatch");
  Tape& t = *a.tape;
  return t.emit(t.val(a) * t.val(b).transpose(), {a, b}, [a, b](Tape& t, const Mat& g) {
    acc(t, a, g * t.val(b));
    acc(t, b, g.transpose() * t.val(a));
  });
}

Var add_row(Var a, Var row) {
  check(row.rows() == 1 && row.cols() == a.cols(), "add_row: row must be 1 x cols(a)");
  Tape& t = *a.tape;
  Mat v = t.val(a).rowwise() + t.val(row).row(0);
  return t.emit(std::move(v), {a, row}, [a, row](Tape& t, const Mat& g) {
    acc(t, a, g);
    acc(t, row, g.colwise().sum());
  });
}

Var concat_cols(Var a, Var b) {
  check(a.rows() == b.rows(), "concat_cols: row count mismatch");
  Tape& t = *a.tape;
  Mat v(a.rows(), a.cols() + b.cols());
  v << t.val(a), t.val(b);
  const Eigen::Index ca = a.cols();
  return t.emit(std::move(v), {a, b}, [a, b, ca](Tape& t, const Mat& g) {
    acc(t, a, g.leftCols(ca));
    acc(t, b, g.rightCols(g.cols() - ca));
  });
}

Var slice_cols(Var a, Eigen::Index first, Eigen::Index count) {
  check(first >= 0 && first + count <= a.cols(), "slice_cols: out of range");
  Tape& t = *a.tape;
  Mat v = t.val(a).middleCols(first, count);
  return t.emit(std::move(v), {a}, [a, first, count](Tape& t, const Mat& g) {
    if (!t.needs_grad(a)) return;
    t.grad(a).middleCols(first, count) += g;
  });
}

Var gather_rows(Var a, std::vector<int> rows) {
  Tape& t = *a.tape;
  const Mat& src = t.val(a);
  Mat v(static_cast<Eigen::Index>(rows.size()), src.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    check(rows[i] >= 0 && rows[i] < src.rows(), "gather_rows: index out of range");
    v.row(static_cast<Eigen::Index>(i)) = src.row(rows[i]);
  }
  auto idx = std::make_shared<std::vector<int>>(std::move(rows));
  return t.emit(std::move(v), {a}, [a, idx](Tape& t, const Mat& g) {
    if (!t.needs_grad(a)) return;
    Mat& ga = t.grad(a);
    for (std::size_t i = 0; i < idx->size(); ++i) {
      ga.row((*idx)[i]) += g.row(static_cast<Eigen::Index>(i));
    }
  });
}

Var sum_all(Var a) {
  Tape& t = *a.tape;
  Mat v(1, 1);
  v(0, 0) = t.val(a).sum();
  return t.emit(std::move(v), {a}, [a](Tape& t, const Mat& g) {
    if (!t.needs_grad(a)) return;
    t.grad(a).array() += g(0, 0);
  });
}

Var mean_all(Var a) {
  Tape& t = *a.tape;
  const double n = static_cast<double>(a.rows() * a.cols());
  Mat v(1, 1);
  v(0, 0) = t.val(a).sum() / n;
  return t.emit(std::move(v), {a}, [a, n](Tape& t, const Mat& g) {
    if (!t.needs_grad(a)) return;
    t.grad(a).array() += g(0, 0) / n;
  });
}

Var row_sum(Var a) {
  Tape& t = *a.tape;
  Mat v = t.val(a).rowwise().sum();
  return t.emit(std::move(v), {a}, [a](Tape& t, const Mat& g) {
    if (!t.needs_grad(a)) return;
    t.grad(a).colwise() += g.col(0);
  });
}

Var row_softmax(Var a) {
  Tape& t = *a.tape;
  Mat v = t.val(a);
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const double m = v.row(i).maxCoeff();
    v.row(i) = (v.row(i).array() - m).exp();
    v.row(i) /= v.row(i).sum();
  }
  Mat stored = v;
  return t.emit(std::move(v), {a}, [a, stored](Tape& t, const Mat& g) {
    if (!t.needs_grad(a)) return;
    Mat& ga = t.grad(a);
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      const double dot = g.row(i).dot(stored.row(i));
      ga.row(i) += (g.row(i).array() - dot).matrix().cwiseProduct(stored.row(i));
    }
  });
}

Var block_col_softmax(Var a, int block, const Eigen::VectorXd& keep) {
  Tape& t = *a.tape;
  const Mat& x = t.val(a);
  check(block >= 1 && x.rows() % block == 0, "block_col_softmax: rows not divisible by block");
  check(keep.size() == x.rows(), "block_col_softmax: keep mask size mismatch");
  const Eigen::Index nblocks = x.rows() / block;
  Mat v = Mat::Zero(x.rows(), x.cols());
  for (Eigen::Index b = 0; b < nblocks; ++b) {
    const Eigen::Index r0 = b * block;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      double m = -std::numeric_limits<double>::infinity();
      for (Eigen::Index r = 0; r < block; ++r) {
        if (keep(r0 + r) != 0.0) m = std::max(m, x(r0 + r, j));
      }
      double z = 0.0;
      for (Eigen::Index r = 0; r < block; ++r) {
        if (keep(r0 + r) != 0.0) {
          v(r0 + r, j) = std::exp(x(r0 + r, j) - m);
          z += v(r0 + r, j);
        }
      }
      for (Eigen::Index r = 0; r < block; ++r) {
        if (keep(r0 + r) != 0.0) v(r0 + r, j) /= z;
      }
    }
  }
  Mat stored = v;
  return t.emit(std::move(v), {a}, [a, stored, block](Tape& t, const Mat& g) {
    if (!t.needs_grad(a)) return;
    Mat& ga = t.grad(a);
    const Eigen::Index nblocks = g.rows() / block;
    for (Eigen::Index b = 0; b < nblocks; ++b) {
      const Eigen::Index r0 = b * block;
      for (Eigen::Index j = 0; j < g.cols(); ++j) {
        double dot = 0.0;
        for (Eigen::Index r = 0; r < block; ++r) dot += g(r0 + r, j) * stored(r0 + r, j);
        for (Eigen::Index r = 0; r < block; ++r) {
          ga(r0 + r, j) += stored(r0 + r, j) * (g(r0 + r, j) - dot);
        }
      }
    }
  });
}

Var block_sum_rows(Var a, int block) {
  Tape& t = *a.tape;
  const Mat& x = t.val(a);
  check(block >= 1 && x.rows() % block == 0, "block_sum_rows: rows not divisible by block");
  const Eigen::Index nblocks = x.rows() / block;
  Mat v = Mat::Zero(nblocks, x.cols());
  for (Eigen::Index b = 0; b < nblocks; ++b) {
    v.row(b) = x.middleRows(b * block, block).colwise().sum();
  }
  return t.emit(std::move(v), {a}, [a, block](Tape& t, const Mat& g) {
    if (!t.needs_grad(a)) return;
    Mat& ga = t.grad(a);
    for (Eigen::Index b = 0; b < g.rows(); ++b) {
      ga.middleRows(b * block, block).rowwise() += g.row(b);
    }
  });
}

Var bmm_nt(Var q, Var k, int tlen) {
  check_same_shape(q, k, "bmm_nt");
  Tape& t = *q.tape;
  const Mat& Q = t.val(q);
  check(tlen >= 1 && Q.rows() % tlen == 0, "bmm_nt: rows not divisible by block length");
  const Eigen::Index nblocks = Q.rows() / tlen;
  const Mat& K = t.val(k);
  Mat v(Q.rows(), tlen);
  for (Eigen::Index b = 0; b < nblocks; ++b) {
    v.middleRows(b * tlen, tlen).noalias() =
        Q.middleRows(b * tlen, tlen) * K.middleRows(b * tlen, tlen).transpose();
  }
  return t.emit(std::move(v), {q, k}, [q, k, tlen](Tape& t, const Mat& g) {
    const Mat& Q = t.val(q);
    const Mat& K = t.val(k);
    const Eigen::Index nblocks = Q.rows() / tlen;
    for (Eigen::Index b = 0; b < nblocks; ++b) {
      const auto gb = g.middleRows(b * tlen, tlen);
      if (t.needs_grad(q)) t.grad(q).middleRows(b * tlen, tlen).noalias() += gb * K.middleRows(b * tlen, tlen);
      if (t.needs_grad(k)) t.grad(k).middleRows(b * tlen, tlen).noalias() += gb.transpose() * Q.middleRows(b * tlen, tlen);
    }
  });
}

Var bmm_nn(Var a, Var x, int tlen) {
  Tape& t = *a.tape;
  const Mat& A = t.val(a);
  const Mat& X = t.val(x);
  check(tlen >= 1 && A.rows() % tlen == 0 && X.rows() == A.rows(), "bmm_nn: bad shapes");
  check(A.cols() == tlen, "bmm_nn: block must be square on the left");
  const Eigen::Index nblocks = A.rows() / tlen;
  Mat v(A.rows(), X.cols());
  for (Eigen::Index b = 0; b < nblocks; ++b) {
    v.middleRows(b * tlen, tlen).noalias() = A.middleRows(b * tlen, tlen) * X.middleRows(b * tlen, tlen);
  }
  return t.emit(std::move(v), {a, x}, [a, x, tlen](Tape& t, const Mat& g) {
    const Mat& A = t.val(a);
    const Mat& X = t.val(x);
    const Eigen::Index nblocks = A.rows() / tlen;
    for (Eigen::Index b = 0; b < nblocks; ++b) {
      const auto gb = g.middleRows(b * tlen, tlen);
      if (t.needs_grad(a)) t.grad(a).middleRows(b * tlen, tlen).noalias() += gb * X.middleRows(b * tlen, tlen).transpose();
      if (t.needs_grad(x)) t.grad(x).middleRows(b * tlen, tlen).noalias() += A.middleRows(b * tlen, tlen).transpose() * gb;
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Tape& t = *x.tape;
  const Mat& X = t.val(x);
  check(gain.rows() == 1 && gain.cols() == X.cols(), "layer_norm: gain must be 1 x d");
  check(bias.rows() == 1 && bias.cols() == X.cols(), "layer_norm: bias must be 1 x d");
  const double d = static_cast<double>(X.cols());
  Mat xhat(X.rows(), X.cols());
  Eigen::VectorXd inv_std(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double m = X.row(i).mean();
    const double var = (X.row(i).array() - m).square().sum() / d;
    const double s = 1.0 / std::sqrt(var + eps);
    inv_std(i) = s;
    xhat.row(i) = (X.row(i).array() - m) * s;
  }
  Mat v = xhat;
  v.array().rowwise() *= t.val(gain).row(0).array();
  v.array().rowwise() += t.val(bias).row(0).array();
  auto xh = std::make_shared<Mat>(std::move(xhat));
  auto istd = std::make_shared<Eigen::VectorXd>(std::move(inv_std));
  return t.emit(std::move(v), {x, gain, bias}, [x, gain, bias, xh, istd, d](Tape& t, const Mat& g) {
    if (t.needs_grad(gain)) t.grad(gain) += (g.array() * xh->array()).colwise().sum().matrix();
    if (t.needs_grad(bias)) t.grad(bias) += g.colwise().sum();
    if (!t.needs_grad(x)) return;
    const auto& gamma = t.val(gain).row(0);
    Mat& gx = t.grad(x);
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      const Eigen::RowVectorXd dxhat = g.row(i).cwiseProduct(gamma);
      const double mean_dxhat = dxhat.mean();
      const double mean_dxhat_xhat = dxhat.cwiseProduct(xh->row(i)).mean();
      gx.row(i) += (*istd)(i) *
                   (dxhat.array() - mean_dxhat - xh->row(i).array() * mean_dxhat_xhat).matrix();
    }
  });
}

Var bce_logits_rowsum(Var scores, std::vector<int> target_cols, double clip) {
  Tape& t = *scores.tape;
  const Mat& S = t.val(scores);
  check(static_cast<Eigen::Index>(target_cols.size()) == S.rows(),
        "bce_logits_rowsum: one target per row required");
  check(clip > 0.0 && clip < 0.5, "bce_logits_rowsum: clip must be in (0, 0.5)");
  const double log_clip = std::log(clip);
  const double log_1m_clip = std::log1p(-clip);
  Mat v(S.rows(), 1);
  for (Eigen::Index i = 0; i < S.rows(); ++i) {
    check(target_cols[static_cast<std::size_t>(i)] >= 0 &&
              target_cols[static_cast<std::size_t>(i)] < S.cols(),
          "bce_logits_rowsum: target column out of range");
    double total = 0.0;
    for (Eigen::Index j = 0; j < S.cols(); ++j) {
      const double s = S(i, j);
      const double p = srplr::sigmoid(s);
      const bool is_target = (j == target_cols[static_cast<std::size_t>(i)]);
      // pc = clamp(p, clip, 1-clip); loss item = -[y ln pc + (1-y) ln(1-pc)]
      double log_pc, log_1m_pc;
      if (p < clip) {
        log_pc = log_clip;
        log_1m_pc = log_1m_clip;
      } else if (p > 1.0 - clip) {
        log_pc = log_1m_clip;
        log_1m_pc = log_clip;
      } else {
        log_pc = srplr::log_sigmoid(s);
        log_1m_pc = srplr::log_sigmoid(-s);
      }
      total -= is_target ? log_pc : log_1m_pc;
    }
    v(i, 0) = total;
  }
  auto targets = std::make_shared<std::vector<int>>(std::move(target_cols));
  return t.emit(std::move(v), {scores}, [scores, targets, clip](Tape& t, const Mat& g) {
    if (!t.needs_grad(scores)) return;
    const Mat& S = t.val(scores);
    Mat& gs = t.grad(scores);
    for (Eigen::Index i = 0; i < S.rows(); ++i) {
      const double gi = g(i, 0);
      const int tc = (*targets)[static_cast<std::size_t>(i)];
      for (Eigen::Index j = 0; j < S.cols(); ++j) {
        const double p = srplr::sigmoid(S(i, j));
        if (p < clip || p > 1.0 - clip) continue;  // clamped: zero gradient
        const double y = (j == tc) ? 1.0 : 0.0;
        gs(i, j) += gi * (p - y);
      }
    }
  });
}

Var softmax_xent_rows(Var scores, std::vector<int> target_cols) {
  Tape& t = *scores.tape;
  const Mat& S = t.val(scores);
  check(static_cast<Eigen::Index>(target_cols.size()) == S.rows(),
        "softmax_xent_rows: one target per row required");
  Mat v(S.rows(), 1);
  for (Eigen::Index i = 0; i < S.rows(); ++i) {
    const double m = S.row(i).maxCoeff();
    const double lse = m + std::log((S.row(i).array() - m).exp().sum());
    v(i, 0) = lse - S(i, target_cols[static_cast<std::size_t>(i)]);
  }
  auto targets = std::make_shared<std::vector<int>>(std::move(target_cols));
  return t.emit(std::move(v), {scores}, [scores, targets](Tape& t, const Mat& g) {
    if (!t.needs_grad(scores)) return;
    const Mat& S = t.val(scores);
    Mat& gs = t.grad(scores);
    for (Eigen::Index i = 0; i < S.rows(); ++i) {
      const double m = S.row(i).maxCoeff();
      Eigen::RowVectorXd p = (S.row(i).array() - m).exp();
      p /= p.sum();
      p(static_cast<Eigen::Index>((*targets)[static_cast<std::size_t>(i)])) -= 1.0;
      gs.row(i) += g(i, 0) * p;
    }
  });
}

}  // namespace srplr::ag
