#pragma once

// Special functions and distributions used by the interval procedures.
//
// Conventions:
//   * gamma(a, b) is shape-rate (mean a/b) and is the law of a precision
//     1/sigma^2.  inv_gamma_sigma2_quantile() returns quantiles of sigma^2
//     itself, oriented so that u -> 0 gives sigma^2 -> 0 and u -> 1 gives
//     sigma^2 -> infinity.
//   * "log" variants of CDFs and quantiles work with the natural log of a
//     lower-tail probability, so tails far below 1e-308 stay representable.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

#include "fab/error.hpp"
#include "fab/numerics.hpp"

namespace fab::dist {

struct DistAccuracy {
  double abs_tol = 1e-10;
  int max_iter = 5000;
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2*pi))
inline constexpr double kLogHalf = -0.69314718055994530942;

// ---------------------------------------------------------------------------
// Gamma-function family
// ---------------------------------------------------------------------------

// std::lgamma writes the global signgam on glibc; the reentrant variant does not.
inline double log_gamma(double x) {
#if defined(__GLIBC__)
  int sign = 0;
  return ::lgamma_r(x, &sign);
#else
  return std::lgamma(x);
#endif
}

// lgamma(z) - Stirling's approximation, for z >= 10.
inline double stirling_correction(double z) {
  const double z2 = 1.0 / (z * z);
  return (1.0 / 12.0 -
          z2 * (1.0 / 360.0 - z2 * (1.0 / 1260.0 - z2 * (1.0 / 1680.0 - z2 * (1.0 / 1188.0))))) /
         z;
}

inline double log_beta(double a, double b) {
  if (a < b) std::swap(a, b);  // a >= b
  if (b >= 10.0) {
    const double corr = stirling_correction(a) + stirling_correction(b) - stirling_correction(a + b);
    return kLogSqrt2Pi - (a - 0.5) * std::log1p(b / a) + (b - 0.5) * std::log(b) -
           b * std::log(a + b) + corr;
  }
  if (a >= 10.0) {
    // lgamma(a) - lgamma(a + b) without cancellation.
    const double ratio = -(a - 0.5) * std::log1p(b / a) - b * std::log(a + b) + b +
                         stirling_correction(a) - stirling_correction(a + b);
    return log_gamma(b) + ratio;
  }
  return log_gamma(a) + log_gamma(b) - log_gamma(a + b);
}

inline double digamma(double x) {
  if (!(x > 0.0)) throw DomainError("digamma: argument must be positive");
  double acc = 0.0;
  while (x < 12.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double x2 = 1.0 / (x * x);
  return acc + std::log(x) - 0.5 / x -
         x2 * (1.0 / 12.0 - x2 * (1.0 / 120.0 - x2 * (1.0 / 252.0 - x2 * (1.0 / 240.0 - x2 / 132.0))));
}

inline double trigamma(double x) {
  if (!(x > 0.0)) throw DomainError("trigamma: argument must be positive");
  double acc = 0.0;
  while (x < 12.0) {
    acc += 1.0 / (x * x);
    x += 1.0;
  }
  const double x2 = 1.0 / (x * x);
  return acc + 1.0 / x + x2 / 2.0 +
         x2 / x * (1.0 / 6.0 - x2 * (1.0 / 30.0 - x2 * (1.0 / 42.0 - x2 * (1.0 / 30.0 - x2 * 5.0 / 66.0))));
}

// ---------------------------------------------------------------------------
// Standard normal
// ---------------------------------------------------------------------------

inline double std_normal_log_pdf(double x) { return -0.5 * x * x - kLogSqrt2Pi; }
inline double std_normal_pdf(double x) { return std::exp(std_normal_log_pdf(x)); }

namespace detail {
// Mills ratio (1 - Phi(t)) / phi(t) for t >= 3 by backward continued fraction.
inline double mills_ratio(double t) {
  double frac = 0.0;
  for (int k = 60; k >= 1; --k) frac = k / (t + frac);
  return 1.0 / (t + frac);
}

// phi(t) with t^2 split so the exponent carries no rounding error.
inline double std_normal_pdf_split(double t) {
  const double th = std::ldexp(std::floor(std::ldexp(t, 16)), -16);
  const double tl = t - th;
  return std::exp(-0.5 * th * th) * std::exp(-0.5 * tl * (t + th)) * (std::numbers::inv_sqrtpi / std::numbers::sqrt2);
}
}  // namespace detail

inline double std_normal_cdf(double x) {
  if (std::isnan(x)) throw DomainError("std_normal_cdf: NaN argument");
  if (x < -3.0) return detail::std_normal_pdf_split(-x) * detail::mills_ratio(-x);
  return 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0);
}

inline double std_normal_log_cdf(double x) {
  if (std::isnan(x)) throw DomainError("std_normal_log_cdf: NaN argument");
  if (x < -10.0) return std_normal_log_pdf(x) + std::log(detail::mills_ratio(-x));
  if (x > 0.0) return std::log1p(-0.5 * std::erfc(x * std::numbers::sqrt2 / 2.0));
  return std::log(std_normal_cdf(x));
}

namespace detail {

// Wichura's AS241 (PPND16).  q = p - 1/2; r = sqrt(-log(min(p, 1-p))) is
// only needed in the tails and may be supplied from a log probability.
inline double ppnd16_central(double q) {
  const double r = 0.180625 - q * q;
  return q *
         (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
               6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
             1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
           1.3314166789178437745e+2) * r + 3.3871328727963666080e+0) /
         (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
               3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
             5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
           4.2313330701600911252e+1) * r + 1.0);
}

// Magnitude of the quantile in the tail, as a function of r.
inline double ppnd16_tail(double r) {
  if (r <= 5.0) {
    r -= 1.6;
    return (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                 2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
               3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
             4.63033784615654529590e+0) * r + 1.42343711074968357734e+0) /
           (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
               6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
             2.05319162663775882187e+0) * r + 1.0);
  }
  r -= 5.0;
  return (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
               1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
             2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
           5.46378491116411436990e+0) * r + 6.65790464350110377720e+0) /
         (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
               1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
             1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
           5.99832206555887937690e-1) * r + 1.0);
}

}  // namespace detail

inline double std_normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("std_normal_quantile: p must lie in (0, 1)");
  const double q = p - 0.5;
  if (std::fabs(q) <= 0.425) return detail::ppnd16_central(q);
  const double r = std::sqrt(-std::log(q < 0.0 ? p : 1.0 - p));
  const double x = detail::ppnd16_tail(r);
  return q < 0.0 ? -x : x;
}

// Quantile at lower-tail probability exp(log_p), log_p <= 0.
inline double std_normal_quantile_log(double log_p) {
  if (std::isnan(log_p) || log_p > 0.0)
    throw DomainError("std_normal_quantile_log: log probability must be <= 0");
  if (log_p == 0.0) return kInf;
  if (log_p == -kInf) return -kInf;
  if (log_p > kLogHalf) return -std_normal_quantile(-std::expm1(log_p));
  if (log_p > -700.0) return std_normal_quantile(std::exp(log_p));
  // Far lower tail: AS241 start, then Newton on log Phi.
  double x = -detail::ppnd16_tail(std::sqrt(-log_p));
  for (int it = 0; it < 20; ++it) {
    const double lc = std_normal_log_cdf(x);
    const double slope = std::exp(std_normal_log_pdf(x) - lc);
    const double dx = (lc - log_p) / slope;
    x -= dx;
    if (std::fabs(dx) <= 1e-15 * std::fabs(x)) break;
  }
  return x;
}

// ---------------------------------------------------------------------------
// Regularized incomplete beta
// ---------------------------------------------------------------------------

struct TailPair {
  double lower;  // I_x(a, b)
  double upper;  // 1 - I_x(a, b)
};

namespace detail {

// log of x^a y^b / (a B(a, b)), y = 1 - x supplied separately.
inline double ibeta_log_front(double a, double b, double x, double y) {
  const double lx = x > 0.5 ? std::log1p(-y) : std::log(x);
  const double ly = y > 0.5 ? std::log1p(-x) : std::log(y);
  return a * lx + b * ly - log_beta(a, b) - std::log(a);
}

// Modified Lentz evaluation of the incomplete-beta continued fraction, in
// extended precision: near x = (a+1)/(a+b+2) with large a the partial
// numerators approach -1 and double loses about 1e-12 absolute.
inline double ibeta_cf(double a_in, double b_in, double x_in, double y_in, int max_iter) {
  using R = long double;
  constexpr R tiny = 1e-300L;
  const R eps = std::numeric_limits<R>::epsilon();
  const R a = a_in, b = b_in, x = x_in, y = y_in;
  const R qab = a + b, qap = a + 1, qam = a - 1;
  R c = 1;
  // 1 - qab x / qap; the y form avoids cancellation when x ~ 1.
  R d = x < 0.5L ? 1 - qab * x / qap : (1 - b + qab * y) / qap;
  if (std::fabs(d) < tiny) d = tiny;
  d = 1 / d;
  R h = d;
  for (int m = 1; m <= max_iter; ++m) {
    const R m2 = 2 * m;
    R aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1 / d;
    const R del = d * c;
    h *= del;
    if (std::fabs(del - 1) < eps) return static_cast<double>(h);
  }
  throw ConvergenceError("incomplete beta continued fraction did not converge",
                         static_cast<double>(h), max_iter);
}

inline int ibeta_iterations(double a, double b) {
  return 1000 + static_cast<int>(20.0 * std::sqrt(a + b));
}

}  // namespace detail

// I_x(a, b) and its complement.  y must equal 1 - x; passing it separately
// keeps precision when x is close to 1.
inline TailPair ibeta_pair(double a, double b, double x, double y) {
  if (!(a > 0.0 && b > 0.0)) throw DomainError("ibeta: shape parameters must be positive");
  if (!(x >= 0.0 && y >= 0.0)) throw DomainError("ibeta: x must lie in [0, 1]");
  if (x == 0.0) return {0.0, 1.0};
  if (y == 0.0) return {1.0, 0.0};
  const int iters = detail::ibeta_iterations(a, b);
  if (x * (a + b + 2.0) < a + 1.0) {
    const double lo = std::exp(detail::ibeta_log_front(a, b, x, y)) * detail::ibeta_cf(a, b, x, y, iters);
    return {lo, 1.0 - lo};
  }
  const double up = std::exp(detail::ibeta_log_front(b, a, y, x)) * detail::ibeta_cf(b, a, y, x, iters);
  return {1.0 - up, up};
}

inline double ibeta(double a, double b, double x) { return ibeta_pair(a, b, x, 1.0 - x).lower; }

// log I_x(a, b), accurate when the value is tiny.
inline double log_ibeta(double a, double b, double x, double y) {
  if (!(a > 0.0 && b > 0.0)) throw DomainError("ibeta: shape parameters must be positive");
  if (x <= 0.0) return -kInf;
  if (y <= 0.0) return 0.0;
  const int iters = detail::ibeta_iterations(a, b);
  if (x * (a + b + 2.0) < a + 1.0)
    return detail::ibeta_log_front(a, b, x, y) + std::log(detail::ibeta_cf(a, b, x, y, iters));
  const double up = std::exp(detail::ibeta_log_front(b, a, y, x)) * detail::ibeta_cf(b, a, y, x, iters);
  return std::log1p(-up);
}

// ---------------------------------------------------------------------------
// Student t
// ---------------------------------------------------------------------------

namespace detail {
inline void check_df(double nu) {
  if (!(nu > 0.0)) throw DomainError("degrees of freedom must be positive");
}
// x_b = nu / (nu + t^2), y_b = t^2 / (nu + t^2), both computed directly.
inline std::pair<double, double> t_beta_args(double t, double nu) {
  const double t2 = t * t;
  if (t2 > nu) {
    const double r = nu / t2;
    return {r / (1.0 + r), 1.0 / (1.0 + r)};
  }
  const double r = t2 / nu;
  return {1.0 / (1.0 + r), r / (1.0 + r)};
}
}  // namespace detail

inline double t_log_pdf(double x, double nu) {
  detail::check_df(nu);
  if (std::fabs(x) > 1e100)  // x^2 would overflow
    return -0.5 * (nu + 1.0) * (2.0 * std::log(std::fabs(x)) - std::log(nu)) - 0.5 * std::log(nu) -
           log_beta(0.5 * nu, 0.5);
  return -0.5 * (nu + 1.0) * std::log1p(x * x / nu) - 0.5 * std::log(nu) - log_beta(0.5 * nu, 0.5);
}

inline double t_pdf(double x, double nu) { return std::exp(t_log_pdf(x, nu)); }

inline double t_cdf(double x, double nu) {
  detail::check_df(nu);
  if (std::isnan(x)) throw DomainError("t_cdf: NaN argument");
  if (x == 0.0) return 0.5;
  if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
  const auto [xb, yb] = detail::t_beta_args(x, nu);
  const double tail = 0.5 * ibeta_pair(0.5 * nu, 0.5, xb, yb).lower;
  return x < 0.0 ? tail : 1.0 - tail;
}

inline double t_log_cdf(double x, double nu) {
  detail::check_df(nu);
  if (std::isnan(x)) throw DomainError("t_log_cdf: NaN argument");
  if (x == 0.0) return kLogHalf;
  if (std::isinf(x)) return x > 0 ? 0.0 : -kInf;
  if (x < -1e100)  // I_z(a, b) = z^a / (a B(a, b)) to double precision
    return (0.5 * nu - 1.0) * std::log(nu) - nu * std::log(-x) - log_beta(0.5 * nu, 0.5);
  const auto [xb, yb] = detail::t_beta_args(x, nu);
  if (x < 0.0) return kLogHalf + log_ibeta(0.5 * nu, 0.5, xb, yb);
  return std::log1p(-0.5 * ibeta_pair(0.5 * nu, 0.5, xb, yb).lower);
}

// Quantile at lower-tail probability exp(log_p) for log_p <= log(1/2).
// Safeguarded Newton on log F inside a bracket whose far end comes from the
// polynomial tail F(t) ~ nu^(nu/2 - 1) |t|^-nu / B(nu/2, 1/2).
inline double t_quantile_lower_log(double log_p, double nu) {
  detail::check_df(nu);
  if (!(log_p <= kLogHalf)) throw DomainError("t_quantile_lower_log: need log_p <= log(1/2)");
  if (log_p == kLogHalf) return 0.0;
  if (log_p == -kInf) return -kInf;
  const double p = std::exp(log_p);
  if (nu == 1.0) {
    if (p > 1e-300) return -1.0 / std::tan(std::numbers::pi * p);
    return -std::exp(-std::log(std::numbers::pi) - log_p);
  }
  if (nu == 2.0) {
    if (p > 1e-300) return -(1.0 - 2.0 * p) / std::sqrt(2.0 * p * (1.0 - p));
    return -std::exp(-0.5 * (std::log(2.0) + log_p));
  }
  const double log_tail = ((0.5 * nu - 1.0) * std::log(nu) - log_beta(0.5 * nu, 0.5) - log_p) / nu;
  double lo = -std::exp(log_tail);  // F(lo) <= p
  if (std::isinf(lo)) return -kInf;
  double hi = 0.0;                  // F(hi) = 1/2 >= p

  const double z = std_normal_quantile_log(log_p);
  const double z2 = z * z;
  double t = z + z * (z2 + 1.0) / (4.0 * nu) + z * ((5.0 * z2 + 16.0) * z2 + 3.0) / (96.0 * nu * nu);
  if (!(t > lo && t < hi)) t = (lo < -1.0) ? -std::sqrt(-lo) : 0.5 * lo;

  for (int it = 0; it < 200; ++it) {
    const double lf = t_log_cdf(t, nu);
    const double g = lf - log_p;
    if (g == 0.0) return t;
    if (g < 0.0)
      lo = t;
    else
      hi = t;
    const double slope = std::exp(t_log_pdf(t, nu) - lf);
    double next = t - g / slope;
    if (!(next > lo && next < hi)) {
      // Bisect, geometrically when the bracket spans decades.
      next = (lo < -1.0 && hi < -1e-3) ? -std::exp(0.5 * (std::log(-lo) + std::log(-hi))) : 0.5 * (lo + hi);
    }
    if (std::fabs(next - t) <= 4.0 * std::numeric_limits<double>::epsilon() * std::fabs(t) ||
        hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::fabs(lo))
      return next;
    t = next;
  }
  return t;
}

inline double t_quantile(double p, double nu) {
  detail::check_df(nu);
  if (!(p > 0.0 && p < 1.0)) throw DomainError("t_quantile: p must lie in (0, 1)");
  if (p == 0.5) return 0.0;
  if (p < 0.5) return t_quantile_lower_log(std::log(p), nu);
  return -t_quantile_lower_log(std::log1p(-p), nu);
}

// Upper tail of the F(d1, d2) distribution.
inline double f_sf(double f, double d1, double d2) {
  if (!(d1 > 0.0 && d2 > 0.0)) throw DomainError("f_sf: degrees of freedom must be positive");
  if (f <= 0.0) return 1.0;
  const double denom = d2 + d1 * f;
  return ibeta_pair(0.5 * d2, 0.5 * d1, d2 / denom, d1 * f / denom).lower;
}

// ---------------------------------------------------------------------------
// Regularized incomplete gamma and gamma/chi-square quantiles
// ---------------------------------------------------------------------------

namespace detail {

// log(x^a e^-x / Gamma(a)) with the large-a cancellation removed.
inline double gamma_log_front(double a, double x) {
  if (a < 10.0) return a * std::log(x) - x - log_gamma(a);
  const double r = x / a;
  // log1p only near r = 1; far from it r - 1 has already lost the digits
  const double dev = std::fabs(r - 1.0) < 0.5 ? (r - 1.0) - std::log1p(r - 1.0) : (r - 1.0) - std::log(r);
  return -a * dev + 0.5 * std::log(a) - kLogSqrt2Pi - stirling_correction(a);
}

struct GammaParts {
  double log_front;
  bool series;   // true: value is P; false: value is Q
  double factor; // P (or Q) = exp(log_front) * factor
};

inline GammaParts gamma_parts(double a, double x) {
  const double lf = gamma_log_front(a, x);
  const int max_iter = 2000 + static_cast<int>(50.0 * std::sqrt(a));
  if (x < a + 1.0) {
    double ap = a, del = 1.0 / a, sum = del;
    for (int n = 0; n < max_iter; ++n) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::fabs(del) < std::fabs(sum) * 1e-16) return {lf, true, sum};
    }
    throw ConvergenceError("incomplete gamma series did not converge", sum, max_iter);
  }
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i <= max_iter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16) return {lf, false, h};
  }
  throw ConvergenceError("incomplete gamma continued fraction did not converge", h, max_iter);
}

}  // namespace detail

// P(a, x) and Q(a, x) = 1 - P(a, x).
inline TailPair gamma_pq(double a, double x) {
  if (!(a > 0.0)) throw DomainError("gamma_pq: shape must be positive");
  if (std::isnan(x)) throw DomainError("gamma_pq: NaN argument");
  if (x <= 0.0) return {0.0, 1.0};
  if (std::isinf(x)) return {1.0, 0.0};
  const auto parts = detail::gamma_parts(a, x);
  const double v = std::exp(parts.log_front) * parts.factor;
  return parts.series ? TailPair{v, 1.0 - v} : TailPair{1.0 - v, v};
}

// Solves P(a, x) = p where q = 1 - p is supplied for precision.
inline double gamma_quantile(double a, double p, double q) {
  if (!(a > 0.0)) throw DomainError("gamma_quantile: shape must be positive");
  if (!(p > 0.0 && q > 0.0)) throw DomainError("gamma_quantile: probability must lie in (0, 1)");
  const bool use_lower = p <= q;
  const double target = std::log(use_lower ? p : q);

  // g(s) = log P(a, e^s) - log p   (increasing), or
  // g(s) = log Q(a, e^s) - log q   (decreasing; sign flipped below).
  auto eval = [&](double s, double& slope) {
    const double x = std::exp(s);
    const auto parts = detail::gamma_parts(a, x);
    double logv;
    if (use_lower)
      logv = parts.series ? parts.log_front + std::log(parts.factor)
                          : std::log1p(-std::exp(parts.log_front) * parts.factor);
    else
      logv = parts.series ? std::log1p(-std::exp(parts.log_front) * parts.factor)
                          : parts.log_front + std::log(parts.factor);
    // d/ds P(a, e^s) = exp(log_front).
    slope = std::exp(parts.log_front - logv);
    return use_lower ? logv - target : target - logv;  // increasing in s
  };

  const double z = std_normal_quantile(p < 0.5 ? p : 1.0 - q);
  double x0 = a * std::pow(std::max(1e-3, 1.0 - 1.0 / (9.0 * a) + z / (3.0 * std::sqrt(a))), 3.0);
  if (use_lower && a < 1.0) x0 = std::min(x0, std::exp((std::log(p) + log_gamma(a + 1.0)) / a));
  double s = std::log(std::max(x0, 1e-300));

  double lo = -kInf, hi = kInf;
  for (int it = 0; it < 300; ++it) {
    double slope = 0.0;
    const double g = eval(s, slope);
    if (g == 0.0) break;
    if (g < 0.0)
      lo = s;
    else
      hi = s;
    double next = s - g / slope;
    if (!std::isfinite(next) || next <= lo || next >= hi) {
      if (std::isfinite(lo) && std::isfinite(hi))
        next = 0.5 * (lo + hi);
      else if (std::isfinite(lo))
        next = lo + 2.0;
      else
        next = hi - 2.0;
    }
    const double step = next - s;
    s = next;
    if (std::fabs(step) <= 1e-15 * std::max(1.0, std::fabs(s))) break;
  }
  return std::exp(s);
}

inline double chi_square_quantile(double u, double k) {
  if (!(k > 0.0)) throw DomainError("chi_square_quantile: degrees of freedom must be positive");
  if (!(u > 0.0 && u < 1.0)) throw DomainError("chi_square_quantile: u must lie in (0, 1)");
  return 2.0 * gamma_quantile(0.5 * k, u, 1.0 - u);
}

// Quantile of sigma^2 when 1/sigma^2 ~ gamma(shape a, rate b).
// Pr(sigma^2 <= s) = Q(a, b / s), so s = b / P^{-1}(a, 1 - u).
inline double inv_gamma_sigma2_quantile(double u, double a, double b) {
  if (!(u > 0.0 && u < 1.0)) throw DomainError("inv_gamma_sigma2_quantile: u must lie in (0, 1)");
  if (!(a > 0.0 && b > 0.0)) throw DomainError("inv_gamma_sigma2_quantile: a and b must be positive");
  return b / gamma_quantile(a, 1.0 - u, u);
}

// Same, with 1 - u supplied separately so u near 1 keeps its precision.
inline double inv_gamma_sigma2_quantile(double u, double one_minus_u, double a, double b) {
  if (!(u > 0.0 && one_minus_u > 0.0)) throw DomainError("inv_gamma_sigma2_quantile: u must lie in (0, 1)");
  if (!(a > 0.0 && b > 0.0)) throw DomainError("inv_gamma_sigma2_quantile: a and b must be positive");
  return b / gamma_quantile(a, one_minus_u, u);
}

// ---------------------------------------------------------------------------
// Noncentral t
// ---------------------------------------------------------------------------

namespace detail {

// Poisson-mixture series started at the modal term and summed outward,
// with incomplete-beta recurrences.  The backward sweep runs first so the
// forward stopping rule can use the full Poisson mass already consumed.
// Requires t > 0.
inline double nct_cdf_positive(double t, double nu, double delta, const DistAccuracy& acc) {
  const auto [xb, yb] = t_beta_args(t, nu);
  // The mixture integrates I_x(i + 1/2, nu/2) and I_x(i + 1, nu/2) with
  // x = t^2 / (nu + t^2).
  const double bx = yb, by = xb;
  const double b = 0.5 * nu;
  const double lam = 0.5 * delta * delta;
  const double base = std_normal_cdf(-delta);
  if (bx == 0.0) return base;

  const double k = std::floor(lam);
  const double log_lam = lam > 0.0 ? std::log(lam) : 0.0;
  const double p_k = std::exp(-lam + k * log_lam - log_gamma(k + 1.0));
  const double q_k = std::exp(-lam + k * log_lam - log_gamma(k + 1.5)) * delta / std::numbers::sqrt2;

  const double a1 = k + 0.5, a2 = k + 1.0;
  const double i1 = ibeta_pair(a1, b, bx, by).lower;
  const double i2 = ibeta_pair(a2, b, bx, by).lower;
  // g(a) = x^a y^b / (a B(a, b)); I_x(a + 1, b) = I_x(a, b) - g(a).
  const double lx = bx > 0.5 ? std::log1p(-by) : std::log(bx);
  const double ly = by > 0.5 ? std::log1p(-bx) : std::log(by);
  auto g_at = [&](double a) { return std::exp(a * lx + b * ly - log_beta(a, b) - std::log(a)); };
  const double g1 = g_at(a1), g2 = g_at(a2);

  numerics::CompensatedSum sum;
  sum.add(p_k * i1 + q_k * i2);
  double mass = p_k;

  // Backward: g(a - 1) = g(a) a / ((a + b - 1) x), I(a - 1) = I(a) + g(a - 1).
  {
    double p = p_k, q = q_k, ia = i1, ib = i2, ga = g1, gb = g2;
    for (double i = k - 1.0; i >= 0.0; i -= 1.0) {
      ga *= (i + 1.5) / ((i + 0.5 + b) * bx);
      gb *= (i + 2.0) / ((i + 1.0 + b) * bx);
      ia += ga;
      ib += gb;
      p *= (i + 1.0) / lam;
      q *= (i + 1.5) / lam;
      sum.add(p * ia + q * ib);
      mass += p;
      // Poisson terms fall off at least geometrically (ratio i / lam) below the mode.
      const double ratio = i / lam;
      if (ratio < 1.0 && (p + std::fabs(q)) * ratio / (1.0 - ratio) <= 0.25 * acc.abs_tol) break;
    }
  }
  // Forward.
  {
    double p = p_k, q = q_k, ia = i1, ib = i2, ga = g1, gb = g2;
    const double c_bound = 1.0 + std::fabs(delta) / std::sqrt(2.0 * (k + 1.0));
    for (int j = 1;; ++j) {
      const double i = k + j;
      ia -= ga;
      ib -= gb;
      ga *= bx * (a1 + j - 1.0 + b) / (a1 + j);
      gb *= bx * (a2 + j - 1.0 + b) / (a2 + j);
      p *= lam / i;
      q *= lam / (i + 0.5);
      sum.add(p * ia + q * ib);
      mass += p;
      const double remainder = std::max(0.0, 1.0 - mass) * c_bound * std::max(ia, 0.0);
      if (j > 2 && remainder <= 0.25 * acc.abs_tol) break;
      if (j >= acc.max_iter)
        throw ConvergenceError("noncentral t series did not converge", base + 0.5 * sum.value(), j);
    }
  }
  return base + 0.5 * sum.value();
}

}  // namespace detail

inline double noncentral_t_cdf(double x, double nu, double delta, const DistAccuracy& acc = {}) {
  detail::check_df(nu);
  if (!std::isfinite(x) || !std::isfinite(delta))
    throw DomainError("noncentral_t_cdf: x and delta must be finite");
  if (delta == 0.0) return t_cdf(x, nu);
  double v;
  if (x >= 0.0) {
    v = x == 0.0 ? std_normal_cdf(-delta) : detail::nct_cdf_positive(x, nu, delta, acc);
  } else {
    v = 1.0 - detail::nct_cdf_positive(-x, nu, -delta, acc);
  }
  return std::clamp(v, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------

// One independently seeded generator per worker or replication.  Streams
// with the same (seed, index) produce identical sequences.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                      0x9e3779b9u};
    engine_.seed(seq);
  }

  double normal() { return normal_(engine_); }
  double normal(double mean, double sd) { return mean + sd * normal_(engine_); }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double chi_square(double k) { return std::gamma_distribution<double>(0.5 * k, 2.0)(engine_); }
  // Draw of a gamma(shape, rate) variate.
  double gamma(double shape, double rate) {
    return std::gamma_distribution<double>(shape, 1.0 / rate)(engine_);
  }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

inline std::vector<RngStream> rng_streams(std::uint64_t seed, std::size_t n_streams) {
  if (n_streams == 0) throw DomainError("rng_streams: need at least one stream");
  std::vector<RngStream> out;
  out.reserve(n_streams);
  for (std::size_t i = 0; i < n_streams; ++i) out.emplace_back(seed, i);
  return out;
}

}  // namespace fab::dist
