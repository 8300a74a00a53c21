#include "srplr/synthetic.hpp"

#include <cmath>
#include <deque>
#include <string>

#include "srplr/errors.hpp"
#include "srplr/rng.hpp"

namespace srplr {

namespace {

void validate(const SyntheticSpec& spec) {
  if (spec.users < 5 || spec.items < 5) {
    throw ValidationError("generate_synthetic: users and items must be >= 5");
  }
  if (spec.events_per_user < 3) {
    throw ValidationError("generate_synthetic: events_per_user must be >= 3");
  }
}

int draw_from_distribution(const std::vector<double>& probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i) + 1;
  }
  return static_cast<int>(probs.size());
}

std::vector<Interaction> generate_markov(const SyntheticSpec& spec) {
  const auto table = markov_transition_table(spec);
  Rng rng(spec.seed);
  Rng walk = rng.fork("walk");
  std::vector<Interaction> out;
  for (int u = 1; u <= spec.users; ++u) {
    int current = 1 + static_cast<int>(walk.bounded(static_cast<std::uint64_t>(spec.items)));
    for (int t = 0; t < spec.events_per_user; ++t) {
      out.push_back(Interaction{"u" + std::to_string(u), "i" + std::to_string(current),
                                static_cast<std::int64_t>(t)});
      current = draw_from_distribution(table[static_cast<std::size_t>(current - 1)], walk);
    }
  }
  return out;
}

std::vector<Interaction> generate_conjunctive(const SyntheticSpec& spec) {
  using R = ConjunctiveRule;
  if (spec.items <= R::kPlantedB) {
    throw ValidationError("generate_synthetic: conjunctive rule needs items > 4");
  }
  Rng rng(spec.seed);
  Rng walk = rng.fork("conjunctive");
  std::vector<Interaction> out;
  for (int u = 1; u <= spec.users; ++u) {
    std::deque<int> window;
    for (int pos = 1; pos <= spec.events_per_user; ++pos) {
      int item;
      if (R::is_rule_position(pos, spec.events_per_user)) {
        bool has_a = false, has_b = false;
        for (int w : window) {
          has_a = has_a || (w == R::kPlantedA);
          has_b = has_b || (w == R::kPlantedB);
        }
        item = (has_a && has_b) ? R::kOutcomeBoth : R::kOutcomeOther;
      } else {
        // fillers: planted items appear with boosted probability so the
        // rule fires on a healthy fraction of positions
        const double u01 = walk.uniform();
        if (u01 < 0.15) {
          item = R::kPlantedA;
        } else if (u01 < 0.30) {
          item = R::kPlantedB;
        } else {
          item = R::kPlantedB + 1 +
                 static_cast<int>(walk.bounded(static_cast<std::uint64_t>(spec.items - R::kPlantedB)));
        }
      }
      out.push_back(Interaction{"u" + std::to_string(u), "i" + std::to_string(item),
                                static_cast<std::int64_t>(pos - 1)});
      window.push_back(item);
      if (static_cast<int>(window.size()) > R::kWindow) window.pop_front();
    }
  }
  return out;
}

}  // namespace

std::vector<std::vector<double>> markov_transition_table(const SyntheticSpec& spec) {
  validate(spec);
  Rng rng(spec.seed);
  Rng tab = rng.fork("transitions");
  std::vector<std::vector<double>> table(static_cast<std::size_t>(spec.items));
  for (int i = 0; i < spec.items; ++i) {
    auto& row = table[static_cast<std::size_t>(i)];
    row.assign(static_cast<std::size_t>(spec.items), 0.0);
    if (spec.onehot_transitions) {
      row[tab.bounded(static_cast<std::uint64_t>(spec.items))] = 1.0;
      continue;
    }
    // peaked softmax rows: stochastic but concentrated enough that
    // sequences are highly predictable from their prefix
    double z = 0.0;
    for (int j = 0; j < spec.items; ++j) {
      row[static_cast<std::size_t>(j)] = std::exp(2.0 * tab.normal());
      z += row[static_cast<std::size_t>(j)];
    }
    for (auto& p : row) p /= z;
  }
  return table;
}

std::vector<Interaction> generate_synthetic(const SyntheticSpec& spec) {
  validate(spec);
  switch (spec.rule) {
    case SyntheticRule::markov:
      return generate_markov(spec);
    case SyntheticRule::conjunctive:
      return generate_conjunctive(spec);
  }
  throw ValidationError("generate_synthetic: unknown rule");
}

}  // namespace srplr
