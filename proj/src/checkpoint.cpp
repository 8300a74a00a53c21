#include "srplr/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "srplr/errors.hpp"

namespace srplr {

namespace {

constexpr char kMagic[8] = {'S', 'R', 'P', 'L', 'R', 'C', 'K', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("checkpoint truncated");
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  const auto n = get<std::uint64_t>(in);
  if (n > (1u << 20)) throw IoError("checkpoint string too large");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw IoError("checkpoint truncated");
  return s;
}

void put_matrix(std::ostream& out, const ag::Mat& m) {
  put<std::int64_t>(out, m.rows());
  put<std::int64_t>(out, m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) put<double>(out, m(i, j));
}

ag::Mat get_matrix(std::istream& in) {
  const auto rows = get<std::int64_t>(in);
  const auto cols = get<std::int64_t>(in);
  if (rows < 0 || cols < 0 || rows * cols > (1ll << 30)) throw IoError("checkpoint matrix too large");
  ag::Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = get<double>(in);
  return m;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const SrplrModel& model,
                     const std::string& config_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, model.id_fingerprint());
  put<std::int32_t>(out, model.item_count());

  const auto& enc = model.encoder_config();
  put<std::int32_t>(out, enc.kind == BackboneKind::gru ? 0 : 1);
  put<std::int32_t>(out, enc.layers);
  put<std::int32_t>(out, enc.heads);
  put<std::int32_t>(out, enc.hidden_size);
  put<double>(out, enc.dropout);
  put<std::int32_t>(out, enc.max_len);

  const auto& variant = model.variant();
  put<std::uint8_t>(out, variant.use_attention);
  put<std::uint8_t>(out, variant.use_negation);
  put<std::uint8_t>(out, variant.use_feature);
  put<std::uint8_t>(out, variant.use_logic);
  put<double>(out, variant.lambda);

  const auto& logic = model.logic_config();
  put<double>(out, logic.eps_clamp);
  put<std::uint8_t>(out, logic.clamp_mode == LogicConfig::ClampMode::hard ? 0 : 1);
  put<std::uint8_t>(out, logic.attention_on_negated);
  put<std::uint8_t>(out, logic.logic_loss_form == LogicConfig::LogicLossForm::paper ? 0 : 1);
  put<std::uint8_t>(out, logic.rec_loss_form == LogicConfig::RecLossForm::bce ? 0 : 1);
  put<double>(out, logic.rec_loss_clip);

  put_string(out, config_hash);

  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.params().size()));
  for (const auto& p : model.params()) {
    put_string(out, p->name);
    put_matrix(out, p->value);
  }
  if (!out) throw IoError("checkpoint write failed: " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 const std::optional<EncoderConfig>& expect_encoder,
                                 std::optional<std::uint64_t> expect_fingerprint) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ValidationError("not a checkpoint file: " + path.string());
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) {
    throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto fingerprint = get<std::uint64_t>(in);
  const auto item_count = get<std::int32_t>(in);

  EncoderConfig enc;
  enc.kind = get<std::int32_t>(in) == 0 ? BackboneKind::gru : BackboneKind::self_attention;
  enc.layers = get<std::int32_t>(in);
  enc.heads = get<std::int32_t>(in);
  enc.hidden_size = get<std::int32_t>(in);
  enc.dropout = get<double>(in);
  enc.max_len = get<std::int32_t>(in);

  ModelVariant variant;
  variant.use_attention = get<std::uint8_t>(in) != 0;
  variant.use_negation = get<std::uint8_t>(in) != 0;
  variant.use_feature = get<std::uint8_t>(in) != 0;
  variant.use_logic = get<std::uint8_t>(in) != 0;
  variant.lambda = get<double>(in);

  LogicConfig logic;
  logic.eps_clamp = get<double>(in);
  logic.clamp_mode =
      get<std::uint8_t>(in) == 0 ? LogicConfig::ClampMode::hard : LogicConfig::ClampMode::softplus;
  logic.attention_on_negated = get<std::uint8_t>(in) != 0;
  logic.logic_loss_form = get<std::uint8_t>(in) == 0 ? LogicConfig::LogicLossForm::paper
                                                     : LogicConfig::LogicLossForm::bounded;
  logic.rec_loss_form =
      get<std::uint8_t>(in) == 0 ? LogicConfig::RecLossForm::bce : LogicConfig::RecLossForm::softmax;
  logic.rec_loss_clip = get<double>(in);

  if (expect_encoder.has_value() && !(enc == *expect_encoder)) {
    throw ValidationError("checkpoint encoder config does not match the expected config");
  }
  if (expect_fingerprint.has_value() && fingerprint != *expect_fingerprint) {
    throw ValidationError("checkpoint was trained against a different id map (fingerprint mismatch)");
  }

  const std::string config_hash = get_string(in);

  SrplrModel model(item_count, enc, variant, logic, /*seed=*/0, fingerprint);
  const auto count = get<std::uint32_t>(in);
  if (count != model.params().size()) {
    throw ValidationError("checkpoint parameter count mismatch");
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = get_string(in);
    ag::Mat value = get_matrix(in);
    auto* p = model.params().find(name);
    if (p == nullptr) throw ValidationError("checkpoint has unknown parameter '" + name + "'");
    if (p->value.rows() != value.rows() || p->value.cols() != value.cols()) {
      throw ValidationError("checkpoint parameter '" + name + "' has mismatched shape");
    }
    p->value = std::move(value);
    p->grad.setZero();
  }
  return LoadedCheckpoint{std::move(model), config_hash};
}

}  // namespace srplr
