#pragma once

// Interval records, w-functions and the generic endpoint solver shared by
// the z- and t-interval procedures.
//
// A w-function splits the error rate alpha between the two tails of the
// acceptance region at each theta.  It reports the split as logs of the two
// tail probabilities, log(alpha (1 - w)) and log(alpha w), so that w very
// close to 0 or 1 stays representable.

#include <cmath>
#include <concepts>
#include <limits>
#include <string>
#include <string_view>

#include "fab/distributions.hpp"
#include "fab/error.hpp"
#include "fab/numerics.hpp"

namespace fab {

enum class Method { umau_z, fab_z, umau_t, fab_t, fab_homoscedastic, fab_heteroscedastic, eb };

inline std::string_view method_name(Method m) {
  switch (m) {
    case Method::umau_z: return "umau-z";
    case Method::fab_z: return "fab-z";
    case Method::umau_t: return "umau";
    case Method::fab_t: return "fab-t";
    case Method::fab_homoscedastic: return "fab-homo";
    case Method::fab_heteroscedastic: return "fab-hetero";
    case Method::eb: return "eb";
  }
  return "unknown";
}

struct SolverDiagnostics {
  int iterations = 0;          // total function evaluations over both endpoints
  bool converged = true;
  double residual_lower = 0.0; // |theta^L - (y + se q_{alpha(1-w)})|
  double residual_upper = 0.0; // |theta^U - (y + se q_{1-alpha w})|
  std::string note;            // fallbacks and other remarks
};

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  double alpha = 0.05;
  Method method = Method::umau_t;
  SolverDiagnostics diagnostics;

  double width() const { return upper - lower; }
  bool contains(double theta) const { return lower < theta && theta < upper; }
};

// ---------------------------------------------------------------------------
// Sampling distributions of the pivot (y - theta) / se
// ---------------------------------------------------------------------------

struct NormalPivot {
  double log_cdf(double x) const { return dist::std_normal_log_cdf(x); }
  double quantile_log(double log_p) const { return dist::std_normal_quantile_log(log_p); }
  double quantile(double p) const { return dist::std_normal_quantile(p); }
};

struct StudentPivot {
  double nu;
  double log_cdf(double x) const { return dist::t_log_cdf(x, nu); }
  double quantile_log(double log_p) const {
    if (log_p <= dist::kLogHalf) return dist::t_quantile_lower_log(log_p, nu);
    return -dist::t_quantile_lower_log(std::log(-std::expm1(log_p)), nu);
  }
  double quantile(double p) const { return dist::t_quantile(p, nu); }
};

template <class D>
concept PivotDistribution = requires(const D& d, double x) {
  { d.log_cdf(x) } -> std::convertible_to<double>;
  { d.quantile_log(x) } -> std::convertible_to<double>;
  { d.quantile(x) } -> std::convertible_to<double>;
};

// ---------------------------------------------------------------------------
// w-functions
// ---------------------------------------------------------------------------

struct TailSplit {
  double log_lower;  // log(alpha (1 - w)): probability in the lower tail of A_w(theta)
  double log_upper;  // log(alpha w)
};

template <class W>
concept WFunction = requires(const W& w, double theta) {
  { w.split(theta) } -> std::convertible_to<TailSplit>;
  { w.alpha() } -> std::convertible_to<double>;
};

inline void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0, 1)");
}

inline TailSplit split_from_w(double w, double alpha) {
  const double la = std::log(alpha);
  return {la + std::log1p(-w), la + std::log(w)};
}

class ConstantW {
 public:
  ConstantW(double w, double alpha) : w_(w), alpha_(alpha) {
    check_alpha(alpha);
    if (!(w > 0.0 && w < 1.0)) throw DomainError("ConstantW: w must lie in (0, 1)");
  }
  TailSplit split(double) const { return split_from_w(w_, alpha_); }
  double value(double) const { return w_; }
  double alpha() const { return alpha_; }

 private:
  double w_;
  double alpha_;
};

// ---------------------------------------------------------------------------
// Endpoint solver
// ---------------------------------------------------------------------------

struct SolverOptions {
  double rel_tol = 1e-8;  // residual tolerance in units of se
  int max_iter = 200;
  int max_expand = 200;
};

namespace detail {

struct Endpoint {
  double theta;
  int evaluations;
  bool converged;
};

// Root of a monotone f on the side dir of start, where f(start) <= 0 in
// exact arithmetic.  The far bracket end is the hint if it brackets,
// otherwise found by geometric expansion.
template <class F>
Endpoint solve_monotone(F&& f, double start, double dir, double step, const SolverOptions& opt,
                        double xtol, double far_hint = std::numeric_limits<double>::quiet_NaN()) {
  int evals = 0;
  auto fc = [&](double x) {
    ++evals;
    return f(x);
  };
  double a = start, fa = fc(a);
  // A positive value here is rounding: w has saturated and start is the root.
  if (fa >= 0.0) return {a, evals, true};
  double b = a, fb = fa;
  bool found = false;
  if (std::isfinite(far_hint) && (far_hint - start) * dir > 0.0) {
    b = far_hint;
    fb = fc(b);
    found = numerics::detail::opposite(fa, fb);
    if (fb == 0.0) return {b, evals, true};
    if (!found) {
      a = b;
      fa = fb;
    }
  }
  for (int k = 0; !found && k < opt.max_expand; ++k) {
    b = a + dir * step;
    fb = fc(b);
    if (fb == 0.0) return {b, evals, true};
    if (numerics::detail::opposite(fa, fb)) {
      found = true;
      break;
    }
    a = b;
    fa = fb;
    step *= 2.0;
  }
  if (!found) throw ConvergenceError("endpoint bracket expansion failed", a, evals);
  const auto r = numerics::brent_root(fc, a, b, fa, fb, xtol, opt.max_iter);
  return {r.x, evals, r.converged};
}

}  // namespace detail

// Solves for the FAB interval endpoints
//   F((y - theta^U)/se) = alpha w(theta^U),
//   F((theta^L - y)/se) = alpha (1 - w(theta^L)),
// where F is the pivot CDF.  Both root functions are monotone in theta
// for nondecreasing w.  center_hint (e.g. mu for w_psi) tightens brackets.
template <WFunction W, PivotDistribution D>
Interval solve_interval(double y, double se, const W& w, const D& pivot, Method method,
                        double center_hint = std::numeric_limits<double>::quiet_NaN(),
                        const SolverOptions& opt = {}) {
  if (!std::isfinite(y)) throw DomainError("solve_interval: estimate must be finite");
  if (!(se > 0.0) || !std::isfinite(se)) throw DomainError("solve_interval: scale must be positive");
  const double alpha = w.alpha();
  check_alpha(alpha);

  // Upper endpoint: decreasing f_U = log F((y - t)/se) - log(alpha w(t)); use -f_U.
  auto g_up = [&](double t) { return w.split(t).log_upper - pivot.log_cdf((y - t) / se); };
  // Lower endpoint: increasing f_L = log F((t - y)/se) - log(alpha (1 - w(t))).
  auto g_lo = [&](double t) { return pivot.log_cdf((t - y) / se) - w.split(t).log_lower; };

  const double q1a = pivot.quantile(1.0 - alpha);
  const double q1a2 = pivot.quantile(1.0 - 0.5 * alpha);
  const double xtol = 1e-13 * se;
  const double step = 10.0 * se;

  // theta^U >= y + se q_{1-alpha}; theta^U <= max(mu, y + se q_{1-alpha/2}) when w_psi.
  double hint_u = std::numeric_limits<double>::quiet_NaN();
  double hint_l = std::numeric_limits<double>::quiet_NaN();
  if (std::isfinite(center_hint)) {
    hint_u = std::max(center_hint, y + se * q1a2) + 1e-9 * se;
    hint_l = std::min(center_hint, y - se * q1a2) - 1e-9 * se;
  }
  const auto up = detail::solve_monotone(g_up, y + se * q1a, +1.0, step, opt, xtol, hint_u);
  const auto lo = detail::solve_monotone([&](double t) { return -g_lo(t); }, y - se * q1a, -1.0, step, opt, xtol, hint_l);

  Interval out;
  out.lower = lo.theta;
  out.upper = up.theta;
  out.alpha = alpha;
  out.method = method;
  out.diagnostics.iterations = up.evaluations + lo.evaluations;
  out.diagnostics.converged = up.converged && lo.converged;

  const TailSplit su = w.split(out.upper), sl = w.split(out.lower);
  out.diagnostics.residual_upper = std::fabs(out.upper - (y - se * pivot.quantile_log(su.log_upper)));
  out.diagnostics.residual_lower = std::fabs(out.lower - (y + se * pivot.quantile_log(sl.log_lower)));
  const double tol = opt.rel_tol * se;
  if (!(out.diagnostics.residual_upper <= tol && out.diagnostics.residual_lower <= tol))
    out.diagnostics.converged = false;
  if (!out.diagnostics.converged)
    throw ConvergenceError("interval endpoints did not meet the residual tolerance",
                           std::max(out.diagnostics.residual_upper, out.diagnostics.residual_lower),
                           out.diagnostics.iterations);
  if (!(out.lower < out.upper)) throw ConvergenceError("solver returned an empty interval");
  return out;
}

// Grid inversion of the acceptance sets: every grid theta whose acceptance
// region contains y.  Independent of the root finder; used as a test oracle.
struct GridSpec {
  double lo;
  double hi;
  std::size_t n;
  double at(std::size_t i) const {
    return n <= 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
};

template <WFunction W, PivotDistribution D>
std::vector<double> invert_region_oracle(double y, const W& w, double se, const D& pivot,
                                         const GridSpec& grid) {
  std::vector<double> accepted;
  for (std::size_t i = 0; i < grid.n; ++i) {
    const double theta = grid.at(i);
    const TailSplit s = w.split(theta);
    // A_w(theta) = (theta - se q_{1 - alpha w}, theta - se q_{alpha (1-w)}) in y.
    const double y_lo = theta + se * pivot.quantile_log(s.log_upper);
    const double y_hi = theta - se * pivot.quantile_log(s.log_lower);
    if (y_lo < y && y < y_hi) accepted.push_back(theta);
  }
  return accepted;
}

}  // namespace fab
