#pragma once

#include <cmath>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

namespace srplr {

inline double digamma(double x) { return boost::math::digamma(x); }
inline double trigamma(double x) { return boost::math::trigamma(x); }

/// ln B(a, b) on positive arguments.
inline double log_beta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

/// KL(Beta(a1,b1) || Beta(a2,b2)) in closed form.
inline double kl_beta(double a1, double b1, double a2, double b2) {
  return log_beta(a2, b2) - log_beta(a1, b1) + (a1 - a2) * digamma(a1) +
         (b1 - b2) * digamma(b1) + (a2 - a1 + b2 - b1) * digamma(a1 + b1);
}

inline double sigmoid(double x) {
  if (x >= 0.0) {
    const double z = std::exp(-x);
    return 1.0 / (1.0 + z);
  }
  const double z = std::exp(x);
  return z / (1.0 + z);
}

/// log(sigmoid(x)) without overflow for large |x|.
inline double log_sigmoid(double x) { return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

/// A double plus a low-order residual, representing x = hi + lo to roughly
/// 106 bits. Used to keep the reciprocal operation an exact involution:
/// the rounded reciprocal alone loses the original value for ~16% of
/// doubles, while carrying the residual makes the round trip recover the
/// input bit for bit.
struct Compensated {
  double hi = 0.0;
  double lo = 0.0;
};

/// Reciprocal of (x.hi + x.lo) with a compensated result.
/// hi is within one ulp of the true reciprocal; hi + lo is accurate to
/// ~2^-106 relative, so reciprocal(reciprocal(v)) rounds back to v exactly
/// for all values whose reciprocal stays in the normal range.
inline Compensated compensated_reciprocal(const Compensated& x) {
  const double y = 1.0 / x.hi;
  const double r = std::fma(-y, x.hi, 1.0);  // 1 - y*x.hi, exact
  const double hi_refined = y + (y * r - y * y * x.lo);
  Compensated out;
  out.hi = hi_refined;
  out.lo = (std::fma(-out.hi, x.hi, 1.0) - out.hi * x.lo) / x.hi;
  return out;
}

}  // namespace srplr
