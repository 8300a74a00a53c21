#pragma once

// Test-only reference implementations. These deliberately take different
// routes than the library (quadrature instead of closed forms, brute
// force instead of incremental algorithms) so agreement is meaningful.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <vector>

namespace srplr::oracle {

/// Trapezoidal integration of f over [lo, hi] with n panels.
template <typename F>
double trapezoid(F&& f, double lo, double hi, long n) {
  const double h = (hi - lo) / static_cast<double>(n);
  double s = 0.5 * (f(lo) + f(hi));
  for (long i = 1; i < n; ++i) s += f(lo + h * static_cast<double>(i));
  return s * h;
}

/// KL(Beta(a1,b1) || Beta(a2,b2)) by trapezoidal quadrature of
/// p1 ln(p1/p2) after the logit substitution x = sigmoid(u), which turns
/// the endpoint singularities of small shape parameters into integrable
/// exponential tails. Panel counts chosen so the self-convergence error
/// (halving h) stays below 1e-6 for shape parameters in [0.1, 10].
inline double kl_beta_quadrature(double a1, double b1, double a2, double b2) {
  const double lb1 = std::lgamma(a1) + std::lgamma(b1) - std::lgamma(a1 + b1);
  const double lb2 = std::lgamma(a2) + std::lgamma(b2) - std::lgamma(a2 + b2);
  auto integrand = [&](double u) {
    const double log_x = -std::log1p(std::exp(-u));
    const double log_1mx = -std::log1p(std::exp(u));
    const double lp1 = -lb1 + (a1 - 1.0) * log_x + (b1 - 1.0) * log_1mx;
    const double lp2 = -lb2 + (a2 - 1.0) * log_x + (b2 - 1.0) * log_1mx;
    // extra x(1-x) factor is the Jacobian of the substitution
    return std::exp(lp1 + log_x + log_1mx) * (lp1 - lp2);
  };
  const double kCore = 20.0, kTail = 240.0;
  return trapezoid(integrand, -kTail, -kCore, 24000) +
         trapezoid(integrand, -kCore, kCore, 160000) +
         trapezoid(integrand, kCore, kTail, 24000);
}

/// Beta(a, b) density at x in (0, 1).
inline double beta_pdf(double a, double b, double x) {
  const double lb = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  return std::exp(-lb + (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x));
}

/// Remove-until-stable k-core over (user, item) pairs, one deletion per
/// pass, scanning in input order. Returns surviving indices into the
/// original interaction list.
template <typename GetUser, typename GetItem>
std::vector<int> kcore_bruteforce(int n, GetUser user_of, GetItem item_of, int k) {
  std::vector<bool> alive(static_cast<std::size_t>(n), true);
  bool changed = true;
  while (changed) {
    changed = false;
    std::map<decltype(user_of(0)), int> ucount;
    std::map<decltype(item_of(0)), int> icount;
    for (int i = 0; i < n; ++i) {
      if (!alive[static_cast<std::size_t>(i)]) continue;
      ++ucount[user_of(i)];
      ++icount[item_of(i)];
    }
    for (int i = 0; i < n && !changed; ++i) {
      if (!alive[static_cast<std::size_t>(i)]) continue;
      if (ucount[user_of(i)] < k || icount[item_of(i)] < k) {
        // drop every event of the violating entity, then restart
        const bool drop_user = ucount[user_of(i)] < k;
        for (int j = 0; j < n; ++j) {
          if (!alive[static_cast<std::size_t>(j)]) continue;
          if (drop_user ? (user_of(j) == user_of(i)) : (item_of(j) == item_of(i))) {
            alive[static_cast<std::size_t>(j)] = false;
          }
        }
        changed = true;
      }
    }
  }
  std::vector<int> out;
  for (int i = 0; i < n; ++i)
    if (alive[static_cast<std::size_t>(i)]) out.push_back(i);
  return out;
}

/// HIT@K and NDCG@K from a raw score vector, by explicit sorting with the
/// smaller-index tie rule. scores[j] belongs to item id j+1.
inline std::pair<double, double> metrics_by_sorting(const std::vector<double>& scores,
                                                    int target_id, int k) {
  std::vector<int> order(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores[static_cast<std::size_t>(a)] != scores[static_cast<std::size_t>(b)])
      return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
    return a < b;
  });
  int rank = 0;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    if (order[pos] == target_id - 1) {
      rank = static_cast<int>(pos) + 1;
      break;
    }
  }
  if (rank == 0) throw std::logic_error("target not found");
  const double hit = rank <= k ? 1.0 : 0.0;
  const double ndcg = rank <= k ? 1.0 / std::log2(static_cast<double>(rank) + 1.0) : 0.0;
  return {hit, ndcg};
}

}  // namespace srplr::oracle
