#include "srplr/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "srplr/errors.hpp"

namespace srplr {

namespace fs = std::filesystem;

std::uint64_t IdMaps::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const std::string& s) {
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;
    h *= 0x100000001b3ULL;
  };
  for (const auto& n : user_names) mix(n);
  h ^= 0xfe;
  for (const auto& n : item_names) mix(n);
  return h;
}

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == delim) {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

std::vector<Interaction> load_interactions(const fs::path& path, FileFormat format,
                                           const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open interaction file: " + path.string());

  const char delim = options.delimiter != '\0' ? options.delimiter
                                               : (format == FileFormat::tsv ? '\t' : ',');
  std::vector<Interaction> out;
  std::string line;
  std::size_t lineno = 0;
  bool first = true;
  int user_col = options.user_col;
  int item_col = options.item_col;
  int time_col = options.time_col;

  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto fields = split_line(line, delim);

    if (first) {
      first = false;
      // Header detection: resolve indices by name when the configured
      // column names all appear in the first row.
      auto find = [&fields](const std::string& name) {
        for (std::size_t i = 0; i < fields.size(); ++i)
          if (fields[i] == name) return static_cast<int>(i);
        return -1;
      };
      const int u = find(options.user_name);
      const int it = find(options.item_name);
      if (u >= 0 && it >= 0) {
        user_col = u;
        item_col = it;
        time_col = options.time_col < 0 ? -1 : find(options.time_name);
        continue;  // consume header
      }
    }

    const int max_col = std::max({user_col, item_col, time_col});
    if (static_cast<int>(fields.size()) <= max_col) {
      throw ParseError("row has " + std::to_string(fields.size()) + " columns, need at least " +
                           std::to_string(max_col + 1),
                       lineno);
    }
    Interaction ev;
    ev.user_id = fields[static_cast<std::size_t>(user_col)];
    ev.item_id = fields[static_cast<std::size_t>(item_col)];
    if (ev.user_id.empty()) throw ParseError("empty user id", lineno);
    if (ev.item_id.empty()) throw ParseError("empty item id", lineno);
    if (time_col >= 0) {
      const std::string& ts = fields[static_cast<std::size_t>(time_col)];
      try {
        std::size_t pos = 0;
        // Timestamps in review dumps are occasionally fractional seconds.
        const double t = std::stod(ts, &pos);
        if (pos != ts.size()) throw ParseError("trailing characters in timestamp", lineno);
        ev.timestamp = static_cast<std::int64_t>(t);
      } catch (const ParseError&) {
        throw;
      } catch (const std::exception&) {
        throw ParseError("unparsable timestamp '" + ts + "'", lineno);
      }
    } else {
      ev.timestamp = static_cast<std::int64_t>(out.size());
    }
    out.push_back(std::move(ev));
  }
  return out;
}

std::vector<Interaction> k_core_filter(const std::vector<Interaction>& interactions, int k) {
  if (k < 1) throw ValidationError("k_core_filter: k must be >= 1");
  std::vector<char> alive(interactions.size(), 1);
  bool changed = true;
  while (changed) {
    changed = false;
    std::unordered_map<std::string, int> ucount, icount;
    for (std::size_t i = 0; i < interactions.size(); ++i) {
      if (!alive[i]) continue;
      ++ucount[interactions[i].user_id];
      ++icount[interactions[i].item_id];
    }
    for (std::size_t i = 0; i < interactions.size(); ++i) {
      if (!alive[i]) continue;
      if (ucount[interactions[i].user_id] < k || icount[interactions[i].item_id] < k) {
        alive[i] = 0;
        changed = true;
      }
    }
  }
  std::vector<Interaction> out;
  for (std::size_t i = 0; i < interactions.size(); ++i) {
    if (alive[i]) out.push_back(interactions[i]);
  }
  return out;
}

namespace {

std::vector<int> pad_history(const std::vector<int>& items, std::size_t begin, std::size_t end,
                             int max_len) {
  // keep the last max_len entries of items[begin, end)
  const std::size_t len = end - begin;
  const std::size_t keep = std::min<std::size_t>(len, static_cast<std::size_t>(max_len));
  std::vector<int> h(static_cast<std::size_t>(max_len), 0);
  for (std::size_t i = 0; i < keep; ++i) {
    h[static_cast<std::size_t>(max_len) - keep + i] = items[end - keep + i];
  }
  return h;
}

}  // namespace

DatasetSplit build_splits(const std::vector<Interaction>& interactions, int max_len,
                          TrainPrefixes prefixes) {
  if (max_len < 1) throw ValidationError("build_splits: max_len must be >= 1");
  DatasetSplit split;
  split.max_len = max_len;

  // Dense ids by first appearance in file order.
  for (const auto& ev : interactions) {
    if (split.ids.user_ids.emplace(ev.user_id, static_cast<int>(split.ids.user_names.size()) + 1)
            .second) {
      split.ids.user_names.push_back(ev.user_id);
    }
    if (split.ids.item_ids.emplace(ev.item_id, static_cast<int>(split.ids.item_names.size()) + 1)
            .second) {
      split.ids.item_names.push_back(ev.item_id);
    }
  }
  split.item_count = static_cast<int>(split.ids.item_names.size());

  // Group events per user, keeping (timestamp, file order) sortable keys.
  struct Event {
    std::int64_t ts;
    std::size_t order;
    int item;
  };
  std::unordered_map<int, std::vector<Event>> by_user;
  for (std::size_t i = 0; i < interactions.size(); ++i) {
    const auto& ev = interactions[i];
    by_user[split.ids.user_ids.at(ev.user_id)].push_back(
        Event{ev.timestamp, i, split.ids.item_ids.at(ev.item_id)});
  }

  split.user_count = static_cast<int>(split.ids.user_names.size());

  // Iterate users in dense-id order for determinism.
  for (int u = 1; u <= split.user_count; ++u) {
    auto it = by_user.find(u);
    if (it == by_user.end()) continue;
    auto& events = it->second;
    std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
      if (a.ts != b.ts) return a.ts < b.ts;
      return a.order < b.order;
    });
    const std::size_t L = events.size();
    if (L < 3) {
      ++split.dropped_users;
      continue;
    }
    std::vector<int> items(L);
    for (std::size_t i = 0; i < L; ++i) items[i] = events[i].item;

    auto make_example = [&](std::size_t hist_end, int target) {
      SequenceExample ex;
      ex.user = u;
      ex.history = pad_history(items, 0, hist_end, max_len);
      ex.target = target;
      ex.history_len = static_cast<int>(std::min<std::size_t>(hist_end, static_cast<std::size_t>(max_len)));
      return ex;
    };

    split.test.push_back(make_example(L - 1, items[L - 1]));
    split.valid.push_back(make_example(L - 2, items[L - 2]));
    if (prefixes == TrainPrefixes::all) {
      // one train example per target position t in [2, L-2] (1-based)
      for (std::size_t t = 2; t + 2 <= L; ++t) {
        split.train.push_back(make_example(t - 1, items[t - 1]));
      }
    } else if (L >= 4) {
      // latest train position only: target at position L-2 (1-based)
      split.train.push_back(make_example(L - 3, items[L - 3]));
    }
  }
  return split;
}

std::vector<int> sample_logic_negatives(const SequenceExample& example, int count, int item_count,
                                        Rng& rng) {
  if (count < 0 || count > 10) throw ValidationError("sample_logic_negatives: count must be in [0, 10]");
  if (count == 0) return {};
  std::unordered_set<int> excluded;
  for (int id : example.history)
    if (id != 0) excluded.insert(id);
  excluded.insert(example.target);
  const int eligible = item_count - static_cast<int>(excluded.size());
  if (count > eligible) {
    throw ValidationError("sample_logic_negatives: requested " + std::to_string(count) +
                          " negatives but only " + std::to_string(eligible) + " items eligible");
  }
  std::unordered_set<int> chosen;
  std::vector<int> out;
  // Rejection sampling; falls back to explicit enumeration when the
  // eligible set is too small for rejection to finish quickly.
  const int max_attempts = 50 * count + 32;
  int attempts = 0;
  while (static_cast<int>(out.size()) < count && attempts < max_attempts) {
    ++attempts;
    const int candidate = 1 + static_cast<int>(rng.bounded(static_cast<std::uint64_t>(item_count)));
    if (excluded.count(candidate) || chosen.count(candidate)) continue;
    chosen.insert(candidate);
    out.push_back(candidate);
  }
  if (static_cast<int>(out.size()) < count) {
    std::vector<int> pool;
    for (int id = 1; id <= item_count; ++id) {
      if (!excluded.count(id) && !chosen.count(id)) pool.push_back(id);
    }
    while (static_cast<int>(out.size()) < count) {
      const std::size_t pick = static_cast<std::size_t>(rng.bounded(pool.size()));
      out.push_back(pool[pick]);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
    }
  }
  return out;
}

SequenceExample mask_history(const SequenceExample& example, double r, Rng& rng) {
  if (r < 0.0 || r > 1.0) throw ValidationError("mask_history: r must be in [0, 1]");
  SequenceExample out = example;
  if (r == 0.0) return out;
  int last_real = -1;
  for (std::size_t i = 0; i < out.history.size(); ++i) {
    if (out.history[i] != 0) last_real = static_cast<int>(i);
  }
  int surviving = 0;
  for (std::size_t i = 0; i < out.history.size(); ++i) {
    if (out.history[i] == 0) continue;
    if (rng.uniform() < r) {
      out.history[i] = 0;
    } else {
      ++surviving;
    }
  }
  if (surviving == 0 && last_real >= 0) {
    out.history[static_cast<std::size_t>(last_real)] = example.history[static_cast<std::size_t>(last_real)];
    surviving = 1;
  }
  out.history_len = surviving;
  return out;
}

CorpusStats corpus_stats(const std::vector<Interaction>& interactions) {
  CorpusStats s;
  std::unordered_set<std::string> users, items;
  for (const auto& ev : interactions) {
    users.insert(ev.user_id);
    items.insert(ev.item_id);
  }
  s.users = static_cast<int>(users.size());
  s.items = static_cast<int>(items.size());
  s.ratings = static_cast<long>(interactions.size());
  s.avg_length = s.users > 0 ? static_cast<double>(s.ratings) / s.users : 0.0;
  const double cells = static_cast<double>(s.users) * static_cast<double>(s.items);
  s.sparsity = cells > 0.0 ? 1.0 - static_cast<double>(s.ratings) / cells : 0.0;
  return s;
}

namespace {

void write_examples(const fs::path& file, const std::vector<SequenceExample>& examples) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  for (const auto& ex : examples) {
    out << ex.user << '\t';
    bool firstItem = true;
    for (int id : ex.history) {
      if (id == 0) continue;
      if (!firstItem) out << ' ';
      out << id;
      firstItem = false;
    }
    out << '\t' << ex.target << '\n';
  }
}

std::vector<SequenceExample> read_examples(const fs::path& file, int max_len) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read " + file.string());
  std::vector<SequenceExample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split_line(line, '\t');
    if (fields.size() != 3) throw ParseError("expected 3 tab-separated fields", lineno);
    SequenceExample ex;
    try {
      ex.user = std::stoi(fields[0]);
      ex.target = std::stoi(fields[2]);
      std::istringstream hist(fields[1]);
      std::vector<int> items;
      int id;
      while (hist >> id) items.push_back(id);
      ex.history.assign(static_cast<std::size_t>(max_len), 0);
      const std::size_t keep = std::min<std::size_t>(items.size(), static_cast<std::size_t>(max_len));
      for (std::size_t i = 0; i < keep; ++i) {
        ex.history[static_cast<std::size_t>(max_len) - keep + i] = items[items.size() - keep + i];
      }
      ex.history_len = static_cast<int>(keep);
    } catch (const std::exception&) {
      throw ParseError("unparsable example row", lineno);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

void write_map(const fs::path& file, const std::vector<std::string>& names) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  for (std::size_t i = 0; i < names.size(); ++i) {
    out << (i + 1) << '\t' << names[i] << '\n';
  }
}

std::vector<std::string> read_map(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read " + file.string());
  std::vector<std::string> names;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split_line(line, '\t');
    if (fields.size() != 2) throw ParseError("expected 'dense<TAB>raw' map row", lineno);
    const int dense = std::stoi(fields[0]);
    if (dense != static_cast<int>(names.size()) + 1) {
      throw ParseError("map rows must be dense and in order", lineno);
    }
    names.push_back(fields[1]);
  }
  return names;
}

}  // namespace

void save_split_dir(const DatasetSplit& split, const fs::path& dir) {
  fs::create_directories(dir);
  {
    std::ofstream meta(dir / "meta.txt");
    if (!meta) throw IoError("cannot write " + (dir / "meta.txt").string());
    meta << "user_count = " << split.user_count << '\n';
    meta << "item_count = " << split.item_count << '\n';
    meta << "max_len = " << split.max_len << '\n';
    meta << "dropped_users = " << split.dropped_users << '\n';
  }
  write_map(dir / "user_map.txt", split.ids.user_names);
  write_map(dir / "item_map.txt", split.ids.item_names);
  write_examples(dir / "train.txt", split.train);
  write_examples(dir / "valid.txt", split.valid);
  write_examples(dir / "test.txt", split.test);
}

DatasetSplit load_split_dir(const fs::path& dir) {
  DatasetSplit split;
  std::ifstream meta(dir / "meta.txt");
  if (!meta) throw IoError("cannot read " + (dir / "meta.txt").string() + " (not a split directory?)");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(meta, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string key, eq;
    long value;
    if (!(row >> key >> eq >> value) || eq != "=") throw ParseError("bad meta row", lineno);
    if (key == "user_count") split.user_count = static_cast<int>(value);
    else if (key == "item_count") split.item_count = static_cast<int>(value);
    else if (key == "max_len") split.max_len = static_cast<int>(value);
    else if (key == "dropped_users") split.dropped_users = static_cast<int>(value);
    else throw ParseError("unknown meta key '" + key + "'", lineno);
  }
  if (split.max_len < 1) throw ValidationError("split meta missing max_len");
  split.ids.user_names = read_map(dir / "user_map.txt");
  split.ids.item_names = read_map(dir / "item_map.txt");
  for (std::size_t i = 0; i < split.ids.user_names.size(); ++i) {
    split.ids.user_ids[split.ids.user_names[i]] = static_cast<int>(i) + 1;
  }
  for (std::size_t i = 0; i < split.ids.item_names.size(); ++i) {
    split.ids.item_ids[split.ids.item_names[i]] = static_cast<int>(i) + 1;
  }
  split.train = read_examples(dir / "train.txt", split.max_len);
  split.valid = read_examples(dir / "valid.txt", split.max_len);
  split.test = read_examples(dir / "test.txt", split.max_len);
  return split;
}

}  // namespace srplr
