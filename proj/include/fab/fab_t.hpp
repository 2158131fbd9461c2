#pragma once

// FAB t-intervals for unknown variance.
//
// Under the prior theta ~ N(mu, tau^2), 1/sigma^2 ~ gamma(a, b), the pivot
// T = (Ybar - theta)/(S/sqrt(n)) at a fixed theta satisfies, given sigma^2,
// c T ~ noncentral t_{n-1}(lambda) with c = sqrt(sigma^2/n)/sqrt(sigma^2/n + tau^2)
// and lambda = c (mu - theta)/(sigma/sqrt(n)).  The Bayes-optimal w at theta
// minimizes the marginal probability that T falls in the acceptance region.
//
// Two evaluators are provided:
//   * BayesTObjective: the exact objective through the noncentral t CDF,
//     minimized by Brent's method; used for w-tables.
//   * BayesTWFunction: solves the first-order condition of the same
//     objective with the marginal density of T written as a normal mixture
//     over sigma^2 and chi-square nodes.  It also solves each endpoint as a
//     single root in theta, which is what makes per-group use in large
//     simulations affordable.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "fab/distributions.hpp"
#include "fab/error.hpp"
#include "fab/fab_z.hpp"
#include "fab/interval.hpp"
#include "fab/numerics.hpp"
#include "fab/parallel.hpp"

namespace fab {

struct NormalInvGammaPrior {
  double mu = 0.0;
  double tau2 = 1.0;
  double a = 1.0;  // shape of 1/sigma^2
  double b = 1.0;  // rate of 1/sigma^2
  int n = 2;

  void validate() const {
    if (!std::isfinite(mu)) throw DomainError("prior mu must be finite");
    if (!(tau2 > 0.0) || !std::isfinite(tau2)) throw DomainError("prior tau2 must be positive");
    if (!(a > 0.0) || !std::isfinite(a)) throw DomainError("prior a must be positive");
    if (!(b > 0.0) || !std::isfinite(b)) throw DomainError("prior b must be positive");
    if (n < 2) throw DomainError("prior n must be at least 2");
  }
  // Scale proxy for sigma^2: the prior mean when it exists.
  double sigma2_scale() const { return a > 1.0 ? b / (a - 1.0) : b; }
};

struct QuadratureConfig {
  int n_nodes = 41;      // sigma^2 nodes
  int n_chi_nodes = 41;  // chi-square nodes (first-order-condition route only)
  void validate() const {
    if (n_nodes < 5 || n_chi_nodes < 5) throw DomainError("quadrature needs at least 5 nodes");
  }
};

inline constexpr double kWMin = 1e-6;
inline constexpr double kWMax = 1.0 - 1e-6;

// Gauss-Legendre rule in s on (0, 1) carried to probability scale by
// u = s^3 / (s^3 + (1-s)^3).  Quantile integrands are singular at both
// ends (sigma^2 near u = 0 goes like 1/log(1/u)), and the cubic map damps
// them.  Both u and 1 - u are kept so the upper tail keeps its precision.
struct ProbabilityRule {
  std::vector<double> u, one_minus_u, weight;
};

inline ProbabilityRule probability_rule(int n_nodes) {
  const auto rule = numerics::gauss_legendre(static_cast<std::size_t>(n_nodes), 0.0, 1.0);
  ProbabilityRule out;
  for (std::size_t k = 0; k < rule.size(); ++k) {
    const double s = rule.nodes[k], r = 1.0 - s;
    const double s3 = s * s * s, r3 = r * r * r, den = s3 + r3;
    out.u.push_back(s3 / den);
    out.one_minus_u.push_back(r3 / den);
    out.weight.push_back(rule.weights[k] * 3.0 * s * s * r * r / (den * den));
  }
  return out;
}

struct SigmaNodes {
  std::vector<double> sigma2;
  std::vector<double> weight;
};

inline SigmaNodes sigma_nodes(const NormalInvGammaPrior& prior, int n_nodes) {
  const ProbabilityRule rule = probability_rule(n_nodes);
  SigmaNodes out;
  for (std::size_t k = 0; k < rule.u.size(); ++k)
    out.sigma2.push_back(dist::inv_gamma_sigma2_quantile(rule.u[k], rule.one_minus_u[k], prior.a, prior.b));
  out.weight = rule.weight;
  return out;
}

// ---------------------------------------------------------------------------
// Exact objective
// ---------------------------------------------------------------------------

class BayesTObjective {
 public:
  BayesTObjective(const NormalInvGammaPrior& prior, double alpha, const QuadratureConfig& quad = {})
      : prior_(prior), alpha_(alpha), nu_(prior.n - 1.0) {
    prior.validate();
    quad.validate();
    check_alpha(alpha);
    const SigmaNodes nodes = sigma_nodes(prior, quad.n_nodes);
    for (std::size_t k = 0; k < nodes.sigma2.size(); ++k) {
      const double v = nodes.sigma2[k] / prior.n;  // sigma^2 / n
      const double c = std::sqrt(v) / std::sqrt(v + prior.tau2);
      c_.push_back(c);
      lambda_scale_.push_back(c / std::sqrt(v));
      weight_.push_back(nodes.weight[k]);
    }
  }

  // Marginal probability that T lies in the acceptance region
  // (t_{alpha w}, t_{1 - alpha (1-w)}) at theta.
  double accept_prob(double w, double theta) const {
    if (!(w > 0.0 && w < 1.0)) throw DomainError("accept_prob: w must lie in (0, 1)");
    const double lo = dist::t_quantile(alpha_ * w, nu_);
    const double hi = -dist::t_quantile(alpha_ * (1.0 - w), nu_);
    numerics::CompensatedSum acc;
    for (std::size_t k = 0; k < c_.size(); ++k) {
      const double lam = lambda_scale_[k] * (prior_.mu - theta);
      const double p = dist::noncentral_t_cdf(c_[k] * hi, nu_, lam, accuracy_) -
                       dist::noncentral_t_cdf(c_[k] * lo, nu_, lam, accuracy_);
      acc.add(weight_[k] * p);
    }
    return std::clamp(acc.value(), 0.0, 1.0);
  }

  double alpha() const { return alpha_; }
  const NormalInvGammaPrior& prior() const { return prior_; }

 private:
  NormalInvGammaPrior prior_;
  double alpha_;
  double nu_;
  dist::DistAccuracy accuracy_{1e-11, 5000};
  std::vector<double> c_, lambda_scale_, weight_;
};

inline double marginal_accept_prob(double w, double theta, const NormalInvGammaPrior& prior,
                                   double alpha, const QuadratureConfig& quad = {}) {
  return BayesTObjective(prior, alpha, quad).accept_prob(w, theta);
}

// argmin over w in [1e-6, 1 - 1e-6] of the exact objective.  Brent's method
// on the whole range, checked against starts at 0.1, 0.5, 0.9 and the range
// ends; a better start triggers a local Brent search around it.
inline double w_bayes_t(double theta, const BayesTObjective& obj, double tol = 1e-6) {
  auto f = [&](double w) { return obj.accept_prob(w, theta); };
  auto best = numerics::brent_minimize(f, kWMin, kWMax, tol);
  double best_w = best.x, best_f = best.fx;
  const double starts[] = {kWMin, 0.1, 0.5, 0.9, kWMax};
  double start_f[5];
  for (int i = 0; i < 5; ++i) start_f[i] = f(starts[i]);
  for (int i = 0; i < 5; ++i) {
    if (start_f[i] < best_f - 1e-13) {
      const double lo = starts[std::max(i - 1, 0)], hi = starts[std::min(i + 1, 4)];
      const auto local = numerics::brent_minimize(f, lo, hi, tol);
      if (local.fx <= start_f[i]) {
        best_w = local.x;
        best_f = local.fx;
      } else {
        best_w = starts[i];
        best_f = start_f[i];
      }
    }
  }
  if (!std::isfinite(best_f)) throw ConvergenceError("w_bayes_t: objective not finite", best_w);
  return best_w;
}

inline double w_bayes_t(double theta, const NormalInvGammaPrior& prior, double alpha,
                        const QuadratureConfig& quad = {}) {
  return w_bayes_t(theta, BayesTObjective(prior, alpha, quad));
}

// ---------------------------------------------------------------------------
// Tabulated w-function
// ---------------------------------------------------------------------------

// Piecewise-linear interpolation of nondecreasing knot values; constant
// beyond the end knots.
class WFunctionTable {
 public:
  WFunctionTable(std::vector<double> theta_knots, std::vector<double> w_values, double alpha)
      : theta_(std::move(theta_knots)), w_(std::move(w_values)), alpha_(alpha) {
    check_alpha(alpha);
    if (theta_.size() < 2 || theta_.size() != w_.size())
      throw DomainError("WFunctionTable: need matching knot and value arrays of size >= 2");
    for (std::size_t i = 0; i < theta_.size(); ++i) {
      if (!(w_[i] > 0.0 && w_[i] < 1.0)) throw DomainError("WFunctionTable: w must lie in (0, 1)");
      if (i > 0 && !(theta_[i] > theta_[i - 1]))
        throw DomainError("WFunctionTable: knots must be strictly increasing");
      if (i > 0 && w_[i] < w_[i - 1]) throw DomainError("WFunctionTable: w must be nondecreasing");
    }
  }

  double value(double theta) const {
    if (theta <= theta_.front()) return w_.front();
    if (theta >= theta_.back()) return w_.back();
    const auto it = std::upper_bound(theta_.begin(), theta_.end(), theta);
    const std::size_t j = static_cast<std::size_t>(it - theta_.begin());
    const double t = (theta - theta_[j - 1]) / (theta_[j] - theta_[j - 1]);
    return w_[j - 1] + t * (w_[j] - w_[j - 1]);
  }
  TailSplit split(double theta) const { return split_from_w(value(theta), alpha_); }
  double alpha() const { return alpha_; }
  const std::vector<double>& knots() const { return theta_; }
  const std::vector<double>& values() const { return w_; }

 private:
  std::vector<double> theta_;
  std::vector<double> w_;
  double alpha_;
};

inline GridSpec default_w_grid(const NormalInvGammaPrior& prior, std::size_t knots = 501) {
  const double half = 8.0 * std::sqrt(prior.tau2 + prior.sigma2_scale() / prior.n);
  return {prior.mu - half, prior.mu + half, knots};
}

struct WTableBuild {
  WFunctionTable table;
  std::vector<double> raw;  // per-knot argmins before the isotonic projection
  std::size_t adjusted;     // knots changed by the projection
};

inline WTableBuild build_w_table_detailed(const NormalInvGammaPrior& prior, double alpha,
                                          const QuadratureConfig& quad, const GridSpec& grid) {
  if (grid.n < 2 || !(grid.hi > grid.lo)) throw DomainError("build_w_table: bad grid");
  const BayesTObjective obj(prior, alpha, quad);
  std::vector<double> knots(grid.n), raw(grid.n);
  for (std::size_t i = 0; i < grid.n; ++i) knots[i] = grid.at(i);
  parallel::parallel_for(grid.n, [&](std::size_t i) { raw[i] = w_bayes_t(knots[i], obj); });
  std::vector<double> w = numerics::isotonic_nondecreasing(raw);
  std::size_t adjusted = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] != raw[i]) ++adjusted;
    w[i] = std::clamp(w[i], kWMin, kWMax);
  }
  return {WFunctionTable(std::move(knots), std::move(w), alpha), std::move(raw), adjusted};
}

inline WFunctionTable build_w_table(const NormalInvGammaPrior& prior, double alpha,
                                    const QuadratureConfig& quad, const GridSpec& grid) {
  return build_w_table_detailed(prior, alpha, quad, grid).table;
}

inline WFunctionTable build_w_table(const NormalInvGammaPrior& prior, double alpha,
                                    const QuadratureConfig& quad = {}) {
  return build_w_table(prior, alpha, quad, default_w_grid(prior));
}

// ---------------------------------------------------------------------------
// Intervals
// ---------------------------------------------------------------------------

inline void check_t_inputs(double ybar, double s2, int n, double nu) {
  if (!std::isfinite(ybar)) throw DomainError("sample mean must be finite");
  if (!(s2 > 0.0) || !std::isfinite(s2)) throw DomainError("variance estimate must be positive");
  if (n < 1) throw DomainError("sample size must be positive");
  if (!(nu > 0.0)) throw DomainError("degrees of freedom must be positive");
}

inline Interval umau_t_interval(double ybar, double s2, int n, double nu, double alpha) {
  check_t_inputs(ybar, s2, n, nu);
  check_alpha(alpha);
  const double h = std::sqrt(s2 / n) * dist::t_quantile(1.0 - 0.5 * alpha, nu);
  Interval out;
  out.lower = ybar - h;
  out.upper = ybar + h;
  out.alpha = alpha;
  out.method = Method::umau_t;
  return out;
}

// FAB t-interval for any w-function; nu is the df behind s2.
template <WFunction W>
Interval fab_t_interval(double ybar, double s2, int n, const W& w, double nu,
                        double center_hint = std::numeric_limits<double>::quiet_NaN(),
                        Method method = Method::fab_t, const SolverOptions& opt = {}) {
  check_t_inputs(ybar, s2, n, nu);
  return solve_interval(ybar, std::sqrt(s2 / n), w, StudentPivot{nu}, method, center_hint, opt);
}

// Plug-in form: w_psi with psi = (mu, tau2, s2/n) style parameters.
inline Interval fab_t_interval(double ybar, double s2, int n, const PsiW& w, double nu,
                               Method method = Method::fab_t, const SolverOptions& opt = {}) {
  return fab_t_interval(ybar, s2, n, w, nu, w.mu(), method, opt);
}

// ---------------------------------------------------------------------------
// First-order-condition route
// ---------------------------------------------------------------------------

class BayesTWFunction {
 public:
  BayesTWFunction(const NormalInvGammaPrior& prior, double alpha, const QuadratureConfig& quad = {})
      : prior_(prior), alpha_(alpha), nu_(prior.n - 1.0) {
    prior.validate();
    quad.validate();
    check_alpha(alpha);
    const SigmaNodes sn = sigma_nodes(prior, quad.n_nodes);
    const ProbabilityRule chi = probability_rule(quad.n_chi_nodes);
    std::vector<double> root_v(chi.u.size());
    for (std::size_t m = 0; m < root_v.size(); ++m)
      root_v[m] = std::sqrt(2.0 * dist::gamma_quantile(0.5 * nu_, chi.u[m], chi.one_minus_u[m]) / nu_);
    const double inv_sqrt_2pi = std::exp(-dist::kLogSqrt2Pi);
    for (std::size_t k = 0; k < sn.sigma2.size(); ++k) {
      const double se = std::sqrt(sn.sigma2[k] / prior.n);
      const double sd = std::sqrt(sn.sigma2[k] / prior.n + prior.tau2);
      inv_sd_.push_back(1.0 / sd);
      for (std::size_t m = 0; m < root_v.size(); ++m) {
        const double ratio = se * root_v[m] / sd;  // s_km / sd_k
        scale_.push_back(ratio);
        coef_.push_back(sn.weight[k] * chi.weight[m] * ratio * inv_sqrt_2pi);
      }
    }
    n_chi_ = root_v.size();
  }

  // Marginal density of T at x for parameter theta.
  double marginal_density(double x, double theta) const {
    const double delta = prior_.mu - theta;
    double acc = 0.0;
    std::size_t idx = 0;
    for (double isd : inv_sd_) {
      const double d = delta * isd;
      for (std::size_t m = 0; m < n_chi_; ++m, ++idx) {
        const double z = x * scale_[idx] - d;
        acc += coef_[idx] * std::exp(-0.5 * z * z);
      }
    }
    return acc;
  }

  // Derivative of the objective in w, divided by alpha:
  // g(u)/f(u) - g(l)/f(l) with l = t_{alpha w}, u = t_{1-alpha(1-w)}.
  double foc(double w, double theta) const {
    const double l = dist::t_quantile_lower_log(std::log(alpha_ * w), nu_);
    const double u = -dist::t_quantile_lower_log(std::log(alpha_ * (1.0 - w)), nu_);
    return ratio(u, theta) - ratio(l, theta);
  }

  double value(double theta) const {
    const double f_lo = foc(kWMin, theta);
    if (f_lo >= 0.0) return kWMin;
    const double f_hi = foc(kWMax, theta);
    if (f_hi <= 0.0) return kWMax;
    const auto r = numerics::brent_root([&](double w) { return foc(w, theta); }, kWMin, kWMax, f_lo,
                                        f_hi, 1e-12);
    return r.x;
  }
  TailSplit split(double theta) const { return split_from_w(value(theta), alpha_); }
  double alpha() const { return alpha_; }
  const NormalInvGammaPrior& prior() const { return prior_; }

  // FAB t-interval with this w-function.  Each endpoint is a single root in
  // theta: at the upper endpoint w(theta) must equal
  // w*(theta) = F((ybar - theta)/se)/alpha, and the sign of the
  // first-order condition at w* says on which side of w(theta) it lies.
  Interval interval(double ybar, double s2, const SolverOptions& opt = {}) const {
    check_t_inputs(ybar, s2, prior_.n, nu_);
    const double se = std::sqrt(s2 / prior_.n);
    const double log_alpha = std::log(alpha_);
    const StudentPivot pivot{nu_};

    // Both root functions are <= 0 at the inner bracket end and change sign
    // once moving outward.  Upper: positive once w* < w(theta).
    auto h_up = [&](double theta) {
      const double x = (ybar - theta) / se;  // = t_{alpha w*}
      const double log_ws = pivot.log_cdf(x) - log_alpha;
      if (log_ws >= std::log(kWMax)) return -1.0;
      if (log_ws <= std::log(kWMin)) return 1.0;
      const double ws = std::exp(log_ws);
      const double u = -dist::t_quantile_lower_log(std::log(alpha_ * (1.0 - ws)), nu_);
      return -(ratio(u, theta) - ratio(x, theta));
    };
    // Lower: w* = 1 - F((theta - ybar)/se)/alpha, positive once w* > w(theta).
    auto h_lo = [&](double theta) {
      const double x = (theta - ybar) / se;  // = t_{alpha (1 - w*)}
      const double log_cw = pivot.log_cdf(x) - log_alpha;  // log(1 - w*)
      if (log_cw >= std::log1p(-kWMin)) return -1.0;       // w* <= wmin: w* below w
      if (log_cw <= std::log(1.0 - kWMax)) return 1.0;
      const double ws = -std::expm1(log_cw);
      const double l = dist::t_quantile_lower_log(std::log(alpha_ * ws), nu_);
      return ratio(-x, theta) - ratio(l, theta);  // foc(w*) > 0 iff w* above w
    };

    const double q1a = pivot.quantile(1.0 - alpha_);
    const double xtol = 1e-13 * se;
    const double step = 10.0 * se;
    const auto up = detail::solve_monotone(h_up, ybar + se * q1a, +1.0, step, opt, xtol);
    const auto lo = detail::solve_monotone(h_lo, ybar - se * q1a, -1.0, step, opt, xtol);
    Interval out;
    out.lower = lo.theta;
    out.upper = up.theta;
    out.alpha = alpha_;
    out.method = Method::fab_t;
    out.diagnostics.iterations = up.evaluations + lo.evaluations;
    out.diagnostics.converged = up.converged && lo.converged;
    // Residuals against an independent evaluation of w at the endpoints.
    const TailSplit su = split(out.upper), sl = split(out.lower);
    out.diagnostics.residual_upper = std::fabs(out.upper - (ybar - se * pivot.quantile_log(su.log_upper)));
    out.diagnostics.residual_lower = std::fabs(out.lower - (ybar + se * pivot.quantile_log(sl.log_lower)));
    if (!out.diagnostics.converged)
      throw ConvergenceError("fab t endpoints did not converge", 0.0, out.diagnostics.iterations);
    if (!(out.lower < out.upper)) throw ConvergenceError("solver returned an empty interval");
    return out;
  }

 private:
  double ratio(double x, double theta) const {
    const double lf = dist::t_log_pdf(x, nu_);
    return marginal_density(x, theta) * std::exp(-lf);
  }

  NormalInvGammaPrior prior_;
  double alpha_;
  double nu_;
  std::size_t n_chi_ = 0;
  std::vector<double> inv_sd_, scale_, coef_;
};

}  // namespace fab
