#pragma once

#include <cstdint>
#include <vector>

#include "srplr/dataset.hpp"

namespace srplr {

enum class SyntheticRule { markov, conjunctive };

/// Recipe for a deterministic test corpus. Two generators:
///  - markov: every user walks a fixed random item-to-item transition
///    table (optionally one-hot rows, which makes the walk fully
///    deterministic given the start item);
///  - conjunctive: most positions are random fillers, but designated rule
///    positions emit one of two outcome items depending on whether a
///    planted item pair both occurred in the recent window. The last
///    position of every user is a rule position, so held-out targets are
///    decided by the rule.
struct SyntheticSpec {
  int users = 50;
  int items = 20;
  SyntheticRule rule = SyntheticRule::markov;
  std::uint64_t seed = 1;
  int events_per_user = 12;
  bool onehot_transitions = false;  // markov only
};

std::vector<Interaction> generate_synthetic(const SyntheticSpec& spec);

/// Fixed structure of the conjunctive rule, exposed so tests can replay
/// the generator's logic independently.
struct ConjunctiveRule {
  static constexpr int kOutcomeBoth = 1;     // emitted when both planted items are in window
  static constexpr int kOutcomeOther = 2;    // emitted otherwise
  static constexpr int kPlantedA = 3;
  static constexpr int kPlantedB = 4;
  static constexpr int kWindow = 5;
  static constexpr int kStride = 4;  // every kStride-th position is a rule position

  static bool is_rule_position(int pos_1based, int seq_len) {
    return pos_1based % kStride == 0 || pos_1based == seq_len;
  }
};

/// The markov transition table the generator uses for a given spec.
/// Row i (0-based item i+1) is a probability distribution over next items.
std::vector<std::vector<double>> markov_transition_table(const SyntheticSpec& spec);

}  // namespace srplr
