#include "srplr/config.hpp"

#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "srplr/errors.hpp"

namespace srplr {

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// One entry per config key: writer for serialization, setter for parsing.
struct Field {
  std::function<std::string(const ExperimentConfig&)> write;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

int parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const int out = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trail");
    return out;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': expected integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trail");
    return out;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': expected number, got '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long out = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trail");
    return out;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': expected unsigned integer, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ValidationError("config key '" + key + "': expected true/false, got '" + v + "'");
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = [] {
    std::vector<std::pair<std::string, Field>> f;
    auto str = [&f](const std::string& key, std::string ExperimentConfig::*member) {
      f.push_back({key,
                   {[member](const ExperimentConfig& c) { return c.*member; },
                    [member](ExperimentConfig& c, const std::string& v) { c.*member = v; }}});
    };
    auto num = [&f](const std::string& key, int ExperimentConfig::*member) {
      f.push_back({key,
                   {[member](const ExperimentConfig& c) { return std::to_string(c.*member); },
                    [member, key](ExperimentConfig& c, const std::string& v) {
                      c.*member = parse_int(key, v);
                    }}});
    };
    auto dbl = [&f](const std::string& key, double ExperimentConfig::*member) {
      f.push_back({key,
                   {[member](const ExperimentConfig& c) { return format_double(c.*member); },
                    [member, key](ExperimentConfig& c, const std::string& v) {
                      c.*member = parse_double(key, v);
                    }}});
    };
    auto u64 = [&f](const std::string& key, std::uint64_t ExperimentConfig::*member) {
      f.push_back({key,
                   {[member](const ExperimentConfig& c) { return std::to_string(c.*member); },
                    [member, key](ExperimentConfig& c, const std::string& v) {
                      c.*member = parse_u64(key, v);
                    }}});
    };
    auto boolean = [&f](const std::string& key, bool ExperimentConfig::*member) {
      f.push_back({key,
                   {[member](const ExperimentConfig& c) { return c.*member ? "true" : "false"; },
                    [member, key](ExperimentConfig& c, const std::string& v) {
                      c.*member = parse_bool(key, v);
                    }}});
    };

    str("data_dir", &ExperimentConfig::data_dir);
    str("synthetic_rule", &ExperimentConfig::synthetic_rule);
    num("synthetic_users", &ExperimentConfig::synthetic_users);
    num("synthetic_items", &ExperimentConfig::synthetic_items);
    num("synthetic_len", &ExperimentConfig::synthetic_len);
    u64("synthetic_seed", &ExperimentConfig::synthetic_seed);
    str("backbone", &ExperimentConfig::backbone);
    num("dim", &ExperimentConfig::dim);
    num("layers", &ExperimentConfig::layers);
    num("heads", &ExperimentConfig::heads);
    dbl("dropout", &ExperimentConfig::dropout);
    num("max_len", &ExperimentConfig::max_len);
    boolean("use_attention", &ExperimentConfig::use_attention);
    boolean("use_negation", &ExperimentConfig::use_negation);
    boolean("use_feature", &ExperimentConfig::use_feature);
    boolean("use_logic", &ExperimentConfig::use_logic);
    dbl("lambda", &ExperimentConfig::lambda);
    num("epochs", &ExperimentConfig::epochs);
    num("batch_size", &ExperimentConfig::batch_size);
    dbl("learning_rate", &ExperimentConfig::learning_rate);
    num("logic_negatives", &ExperimentConfig::logic_negatives);
    dbl("mask_r", &ExperimentConfig::mask_r);
    u64("seed", &ExperimentConfig::seed);
    str("eval_ks", &ExperimentConfig::eval_ks);
    dbl("grad_clip", &ExperimentConfig::grad_clip);
    num("checkpoint_every", &ExperimentConfig::checkpoint_every);
    num("eval_every", &ExperimentConfig::eval_every);
    boolean("select_best_valid", &ExperimentConfig::select_best_valid);
    dbl("eps_clamp", &ExperimentConfig::eps_clamp);
    str("clamp_mode", &ExperimentConfig::clamp_mode);
    str("attention_input", &ExperimentConfig::attention_input);
    str("logic_loss_form", &ExperimentConfig::logic_loss_form);
    str("rec_loss_form", &ExperimentConfig::rec_loss_form);
    boolean("eval_exclude_history", &ExperimentConfig::eval_exclude_history);
    str("train_prefixes", &ExperimentConfig::train_prefixes);
    str("output_dir", &ExperimentConfig::output_dir);
    return f;
  }();
  return table;
}

template <typename T>
void expect_one_of(const std::string& key, const T& value, std::initializer_list<T> allowed) {
  for (const auto& a : allowed) {
    if (value == a) return;
  }
  std::ostringstream msg;
  msg << "config key '" << key << "': invalid value '" << value << "'";
  throw ValidationError(msg.str());
}

}  // namespace

void ExperimentConfig::validate() const {
  const bool has_data = !data_dir.empty();
  const bool has_synth = !synthetic_rule.empty();
  if (has_data == has_synth) {
    throw ValidationError("config: exactly one of data_dir / synthetic_rule must be set");
  }
  if (has_synth) expect_one_of<std::string>("synthetic_rule", synthetic_rule, {"markov", "conjunctive"});
  expect_one_of<std::string>("backbone", backbone, {"gru", "self_attention"});
  if (dim < 1) throw ValidationError("config key 'dim': must be >= 1");
  if (layers < 0) throw ValidationError("config key 'layers': must be >= 0");
  if (heads < 1) throw ValidationError("config key 'heads': must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ValidationError("config key 'dropout': must be in [0, 1)");
  if (max_len < 1) throw ValidationError("config key 'max_len': must be >= 1");
  if (lambda < 0.0) throw ValidationError("config key 'lambda': must be >= 0");
  if (epochs < 0) throw ValidationError("config key 'epochs': must be >= 0");
  if (batch_size < 1) throw ValidationError("config key 'batch_size': must be >= 1");
  if (learning_rate <= 0.0) throw ValidationError("config key 'learning_rate': must be > 0");
  if (logic_negatives < 0 || logic_negatives > 10) {
    throw ValidationError("config key 'logic_negatives': must be in [0, 10]");
  }
  if (mask_r < 0.0 || mask_r > 1.0) throw ValidationError("config key 'mask_r': must be in [0, 1]");
  if (eps_clamp <= 0.0 || eps_clamp >= 1e9) {
    throw ValidationError("config key 'eps_clamp': must be in (0, 1e9)");
  }
  expect_one_of<std::string>("clamp_mode", clamp_mode, {"hard", "softplus"});
  expect_one_of<std::string>("attention_input", attention_input, {"post_negation", "pre_negation"});
  expect_one_of<std::string>("logic_loss_form", logic_loss_form, {"paper", "bounded"});
  expect_one_of<std::string>("rec_loss_form", rec_loss_form, {"bce", "softmax"});
  expect_one_of<std::string>("train_prefixes", train_prefixes, {"all", "last"});
  parsed_eval_ks();  // throws on malformed lists
  model_variant().validate();
}

ExperimentConfig ExperimentConfig::resolved() const {
  ExperimentConfig out = *this;
  if (out.layers == 0) out.layers = out.backbone == "gru" ? 1 : 2;
  return out;
}

std::string ExperimentConfig::serialize() const {
  std::ostringstream out;
  for (const auto& [key, field] : fields()) {
    out << key << " = " << field.write(*this) << "\n";
  }
  return out.str();
}

std::string ExperimentConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : serialize()) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

EncoderConfig ExperimentConfig::encoder_config() const {
  const ExperimentConfig r = resolved();
  EncoderConfig enc;
  enc.kind = backbone_from_string(r.backbone);
  enc.layers = r.layers;
  enc.heads = r.heads;
  enc.hidden_size = r.dim;
  enc.dropout = r.dropout;
  enc.max_len = r.max_len;
  return enc;
}

ModelVariant ExperimentConfig::model_variant() const {
  ModelVariant v;
  v.use_attention = use_attention;
  v.use_negation = use_negation;
  v.use_feature = use_feature;
  v.use_logic = use_logic;
  v.lambda = lambda;
  return v;
}

LogicConfig ExperimentConfig::logic_config() const {
  LogicConfig l;
  l.eps_clamp = eps_clamp;
  l.clamp_mode =
      clamp_mode == "hard" ? LogicConfig::ClampMode::hard : LogicConfig::ClampMode::softplus;
  l.attention_on_negated = attention_input == "post_negation";
  l.logic_loss_form = logic_loss_form == "paper" ? LogicConfig::LogicLossForm::paper
                                                 : LogicConfig::LogicLossForm::bounded;
  l.rec_loss_form =
      rec_loss_form == "bce" ? LogicConfig::RecLossForm::bce : LogicConfig::RecLossForm::softmax;
  return l;
}

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = batch_size;
  t.learning_rate = learning_rate;
  t.logic_negatives = logic_negatives;
  t.mask_r = mask_r;
  t.seed = seed;
  t.eval_ks = parsed_eval_ks();
  t.grad_clip = grad_clip;
  t.checkpoint_every = checkpoint_every;
  t.eval_every = eval_every;
  t.select_best_valid = select_best_valid;
  return t;
}

std::vector<int> ExperimentConfig::parsed_eval_ks() const {
  std::vector<int> ks;
  std::string cur;
  for (char c : eval_ks + ",") {
    if (c == ',') {
      if (cur.empty()) continue;
      ks.push_back(parse_int("eval_ks", trim(cur)));
      if (ks.back() < 1) throw ValidationError("config key 'eval_ks': entries must be >= 1");
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (ks.empty()) throw ValidationError("config key 'eval_ks': must name at least one K");
  return ks;
}

SyntheticSpec ExperimentConfig::synthetic_spec() const {
  SyntheticSpec spec;
  spec.users = synthetic_users;
  spec.items = synthetic_items;
  spec.events_per_user = synthetic_len;
  spec.seed = synthetic_seed;
  spec.rule = synthetic_rule == "markov" ? SyntheticRule::markov : SyntheticRule::conjunctive;
  return spec;
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::map<std::string, const Field*> by_key;
  for (const auto& [key, field] : fields()) by_key[key] = &field;
  std::set<std::string> seen;

  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("expected 'key = value'", lineno);
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto it = by_key.find(key);
    if (it == by_key.end()) {
      throw ValidationError("unknown config key '" + key + "'");
    }
    if (!seen.insert(key).second) {
      throw ValidationError("duplicate config key '" + key + "'");
    }
    it->second->set(cfg, value);
  }
  return cfg;
}

ExperimentConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

}  // namespace srplr
