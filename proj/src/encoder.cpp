#include "srplr/encoder.hpp"

#include <cmath>

#include "srplr/errors.hpp"

namespace srplr {

using ag::Mat;
using ag::Var;

std::string to_string(BackboneKind kind) {
  return kind == BackboneKind::gru ? "gru" : "self_attention";
}

BackboneKind backbone_from_string(const std::string& s) {
  if (s == "gru") return BackboneKind::gru;
  if (s == "self_attention") return BackboneKind::self_attention;
  throw ValidationError("unknown backbone '" + s + "' (expected gru or self_attention)");
}

void EncoderConfig::validate() const {
  if (layers < 1) throw ValidationError("encoder: layers must be >= 1");
  if (hidden_size < 1) throw ValidationError("encoder: hidden_size must be >= 1");
  if (max_len < 1) throw ValidationError("encoder: max_len must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ValidationError("encoder: dropout must be in [0, 1)");
  if (kind == BackboneKind::self_attention) {
    if (heads < 1) throw ValidationError("encoder: heads must be >= 1");
    if (hidden_size % heads != 0) {
      throw ValidationError("encoder: hidden_size must be divisible by heads");
    }
  }
}

BatchView BatchView::from_examples(std::span<const SequenceExample> examples) {
  BatchView v;
  v.batch = static_cast<int>(examples.size());
  if (examples.empty()) return v;
  v.seq_len = static_cast<int>(examples.front().history.size());
  v.flat_ids.reserve(static_cast<std::size_t>(v.batch * v.seq_len));
  v.real_mask = Eigen::VectorXd::Zero(v.batch * v.seq_len);
  v.pos_rank.assign(static_cast<std::size_t>(v.batch * v.seq_len), 0);
  v.last_flat.assign(static_cast<std::size_t>(v.batch), 0);
  v.targets.reserve(static_cast<std::size_t>(v.batch));
  for (int b = 0; b < v.batch; ++b) {
    const auto& ex = examples[static_cast<std::size_t>(b)];
    if (static_cast<int>(ex.history.size()) != v.seq_len) {
      throw ValidationError("batch mixes histories of different lengths");
    }
    int rank = 0;
    int last = -1;
    for (int t = 0; t < v.seq_len; ++t) {
      const int id = ex.history[static_cast<std::size_t>(t)];
      const int flat = b * v.seq_len + t;
      v.flat_ids.push_back(id);
      if (id != 0) {
        v.real_mask(flat) = 1.0;
        v.pos_rank[static_cast<std::size_t>(flat)] = rank++;
        last = flat;
      }
    }
    if (last < 0) throw ValidationError("example with empty history in batch");
    v.last_flat[static_cast<std::size_t>(b)] = last;
    v.targets.push_back(ex.target);
  }
  return v;
}

Var dropout(Var x, double p, Rng* rng, bool training) {
  if (!training || p <= 0.0 || rng == nullptr) return x;
  Mat mask(x.rows(), x.cols());
  const double keep_scale = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < mask.rows(); ++i) {
    for (Eigen::Index j = 0; j < mask.cols(); ++j) {
      mask(i, j) = rng->uniform() < p ? 0.0 : keep_scale;
    }
  }
  return ag::mul(x, x.tape->constant(std::move(mask)));
}

namespace {

Mat orthogonal(int d, Rng& rng) {
  Mat a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = rng.normal();
  Eigen::HouseholderQR<Mat> qr(a);
  Mat q = qr.householderQ();
  // fix signs for determinism across runs with the same stream
  Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < d; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

void fill_normal(Mat& m, Rng& rng, double std) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.normal(0.0, std);
}

constexpr double kInitStd = 0.02;
constexpr double kBanned = -1e9;

void init_gru(ag::ParameterStore& store, const EncoderConfig& cfg, Rng& rng) {
  const int d = cfg.hidden_size;
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = "enc.gru.l" + std::to_string(l) + ".";
    for (const char* gate : {"z", "r", "n"}) {
      auto& wx = store.create(p + "w_x" + gate, d, d);
      fill_normal(wx.value, rng, kInitStd);
      auto& wh = store.create(p + "w_h" + gate, d, d);
      wh.value = orthogonal(d, rng);
      store.create(p + "b_" + gate, 1, d);  // zeros
    }
  }
}

void init_self_attention(ag::ParameterStore& store, const EncoderConfig& cfg, Rng& rng) {
  const int d = cfg.hidden_size;
  auto& pos = store.create("enc.sa.pos", cfg.max_len, d);
  fill_normal(pos.value, rng, kInitStd);
  store.create("enc.sa.ln_in.g", 1, d).value.setOnes();
  store.create("enc.sa.ln_in.b", 1, d);
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = "enc.sa.b" + std::to_string(l) + ".";
    for (const char* mat : {"wq", "wk", "wv", "wo"}) {
      auto& w = store.create(p + mat, d, d);
      fill_normal(w.value, rng, kInitStd);
    }
    for (const char* bias : {"bq", "bk", "bv", "bo"}) store.create(p + bias, 1, d);
    store.create(p + "ln1.g", 1, d).value.setOnes();
    store.create(p + "ln1.b", 1, d);
    auto& w1 = store.create(p + "ffn.w1", d, 4 * d);
    fill_normal(w1.value, rng, kInitStd);
    store.create(p + "ffn.b1", 1, 4 * d);
    auto& w2 = store.create(p + "ffn.w2", 4 * d, d);
    fill_normal(w2.value, rng, kInitStd);
    store.create(p + "ffn.b2", 1, d);
    store.create(p + "ln2.g", 1, d).value.setOnes();
    store.create(p + "ln2.b", 1, d);
  }
}

/// Additive attention mask: causal within the example and closed to
/// padding keys. Real queries therefore never see padding; padding-query
/// rows degenerate to a uniform distribution, and their outputs are never
/// read back.
Mat attention_mask(const BatchView& view) {
  const int T = view.seq_len;
  Mat m = Mat::Zero(static_cast<Eigen::Index>(view.batch) * T, T);
  for (int b = 0; b < view.batch; ++b) {
    for (int t = 0; t < T; ++t) {
      for (int j = 0; j < T; ++j) {
        const bool allowed = j <= t && view.real_mask(b * T + j) != 0.0;
        if (!allowed) m(b * T + t, j) = kBanned;
      }
    }
  }
  return m;
}

Var encode_gru(ag::Tape& tape, Var emb_flat, const BatchView& view, ag::ParameterStore& store,
               const EncoderConfig& cfg, Rng* rng, bool training, bool all_positions_unused) {
  (void)all_positions_unused;
  const int T = view.seq_len;
  const int B = view.batch;
  const int d = cfg.hidden_size;

  // time-major slices of the flat embedding matrix
  std::vector<Var> seq;
  seq.reserve(static_cast<std::size_t>(T));
  Var input = dropout(emb_flat, cfg.dropout, rng, training);
  for (int t = 0; t < T; ++t) {
    std::vector<int> idx(static_cast<std::size_t>(B));
    for (int b = 0; b < B; ++b) idx[static_cast<std::size_t>(b)] = b * T + t;
    seq.push_back(ag::gather_rows(input, std::move(idx)));
  }

  // per-timestep update masks: padding positions keep the previous state
  std::vector<Var> keep_new, keep_old;
  keep_new.reserve(static_cast<std::size_t>(T));
  keep_old.reserve(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    Mat m(B, d);
    for (int b = 0; b < B; ++b) m.row(b).setConstant(view.real_mask(b * T + t));
    keep_new.push_back(tape.constant(m));
    keep_old.push_back(tape.constant(Mat::Ones(B, d) - tape.val(keep_new.back())));
  }

  Var h{};
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = "enc.gru.l" + std::to_string(l) + ".";
    Var wxz = tape.leaf(store.at(p + "w_xz")), whz = tape.leaf(store.at(p + "w_hz"));
    Var wxr = tape.leaf(store.at(p + "w_xr")), whr = tape.leaf(store.at(p + "w_hr"));
    Var wxn = tape.leaf(store.at(p + "w_xn")), whn = tape.leaf(store.at(p + "w_hn"));
    Var bz = tape.leaf(store.at(p + "b_z"));
    Var br = tape.leaf(store.at(p + "b_r"));
    Var bn = tape.leaf(store.at(p + "b_n"));

    h = tape.constant(Mat::Zero(B, d));
    for (int t = 0; t < T; ++t) {
      Var x = seq[static_cast<std::size_t>(t)];
      Var z = ag::sigmoid(ag::add_row(ag::add(ag::matmul(x, wxz), ag::matmul(h, whz)), bz));
      Var r = ag::sigmoid(ag::add_row(ag::add(ag::matmul(x, wxr), ag::matmul(h, whr)), br));
      Var n = ag::tanh(
          ag::add_row(ag::add(ag::matmul(x, wxn), ag::matmul(ag::mul(r, h), whn)), bn));
      // h_new = (1 - z) * n + z * h
      Var h_new = ag::add(ag::mul(ag::add_scalar(ag::scalar_mul(z, -1.0), 1.0), n), ag::mul(z, h));
      h = ag::add(ag::mul(keep_new[static_cast<std::size_t>(t)], h_new),
                  ag::mul(keep_old[static_cast<std::size_t>(t)], h));
      if (l + 1 < cfg.layers) {
        seq[static_cast<std::size_t>(t)] = dropout(h, cfg.dropout, rng, training);
      }
    }
  }
  return h;
}

Var encode_sa_positions(ag::Tape& tape, Var emb_flat, const BatchView& view,
                        ag::ParameterStore& store, const EncoderConfig& cfg, Rng* rng,
                        bool training) {
  const int T = view.seq_len;
  const int d = cfg.hidden_size;
  const int dh = d / cfg.heads;

  Var pos_table = tape.leaf(store.at("enc.sa.pos"));
  Var pos = ag::gather_rows(pos_table, view.pos_rank);
  Var x = ag::add(emb_flat, pos);
  x = ag::layer_norm(x, tape.leaf(store.at("enc.sa.ln_in.g")), tape.leaf(store.at("enc.sa.ln_in.b")));
  x = dropout(x, cfg.dropout, rng, training);

  Var mask = tape.constant(attention_mask(view));
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = "enc.sa.b" + std::to_string(l) + ".";
    Var q = ag::add_row(ag::matmul(x, tape.leaf(store.at(p + "wq"))), tape.leaf(store.at(p + "bq")));
    Var k = ag::add_row(ag::matmul(x, tape.leaf(store.at(p + "wk"))), tape.leaf(store.at(p + "bk")));
    Var v = ag::add_row(ag::matmul(x, tape.leaf(store.at(p + "wv"))), tape.leaf(store.at(p + "bv")));

    Var heads_out{};
    for (int hI = 0; hI < cfg.heads; ++hI) {
      Var qh = ag::slice_cols(q, hI * dh, dh);
      Var kh = ag::slice_cols(k, hI * dh, dh);
      Var vh = ag::slice_cols(v, hI * dh, dh);
      Var scores = ag::add(ag::scalar_mul(ag::bmm_nt(qh, kh, T), scale), mask);
      Var att = ag::row_softmax(scores);
      att = dropout(att, cfg.dropout, rng, training);
      Var oh = ag::bmm_nn(att, vh, T);
      heads_out = hI == 0 ? oh : ag::concat_cols(heads_out, oh);
    }
    Var o = ag::add_row(ag::matmul(heads_out, tape.leaf(store.at(p + "wo"))),
                        tape.leaf(store.at(p + "bo")));
    x = ag::layer_norm(ag::add(x, dropout(o, cfg.dropout, rng, training)),
                       tape.leaf(store.at(p + "ln1.g")), tape.leaf(store.at(p + "ln1.b")));

    Var f = ag::add_row(ag::matmul(x, tape.leaf(store.at(p + "ffn.w1"))),
                        tape.leaf(store.at(p + "ffn.b1")));
    f = ag::add_row(ag::matmul(ag::relu(f), tape.leaf(store.at(p + "ffn.w2"))),
                    tape.leaf(store.at(p + "ffn.b2")));
    x = ag::layer_norm(ag::add(x, dropout(f, cfg.dropout, rng, training)),
                       tape.leaf(store.at(p + "ln2.g")), tape.leaf(store.at(p + "ln2.b")));
  }
  return x;
}

}  // namespace

void init_encoder_params(ag::ParameterStore& store, const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  Rng enc_rng = rng.fork("encoder");
  if (cfg.kind == BackboneKind::gru) {
    init_gru(store, cfg, enc_rng);
  } else {
    init_self_attention(store, cfg, enc_rng);
  }
}

Var encode_batch(ag::Tape& tape, Var emb_flat, const BatchView& view, ag::ParameterStore& store,
                 const EncoderConfig& cfg, Rng* dropout_rng, bool training) {
  cfg.validate();
  if (emb_flat.rows() != static_cast<Eigen::Index>(view.batch) * view.seq_len ||
      emb_flat.cols() != cfg.hidden_size) {
    throw ValidationError("encode_batch: embedding matrix shape mismatch");
  }
  if (cfg.kind == BackboneKind::gru) {
    return encode_gru(tape, emb_flat, view, store, cfg, dropout_rng, training, false);
  }
  Var positions = encode_sa_positions(tape, emb_flat, view, store, cfg, dropout_rng, training);
  return ag::gather_rows(positions, view.last_flat);
}

Var encode_positions(ag::Tape& tape, Var emb_flat, const BatchView& view,
                     ag::ParameterStore& store, const EncoderConfig& cfg, Rng* dropout_rng,
                     bool training) {
  cfg.validate();
  if (cfg.kind != BackboneKind::self_attention) {
    throw ValidationError("per-position outputs are only available for the self-attention backbone");
  }
  return encode_sa_positions(tape, emb_flat, view, store, cfg, dropout_rng, training);
}

}  // namespace srplr
