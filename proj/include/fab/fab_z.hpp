#pragma once

// FAB z-intervals for a normal estimate with known variance.
//
// The optimal w-function is w_psi(theta) = g^{-1}(2 sigma (theta - mu) / tau^2)
// with g(w) = z_{alpha w} - z_{alpha (1 - w)}.  w_psi saturates to 0 or 1 in
// double precision a few sigma away from mu, so g^{-1} is evaluated in
// quantile space: with A = z_{alpha w}, B = z_{alpha (1-w)} we have A - B = v
// and Phi(A) + Phi(B) = alpha, which is solved for the smaller of A, B.

#include <cmath>
#include <limits>

#include "fab/distributions.hpp"
#include "fab/error.hpp"
#include "fab/interval.hpp"
#include "fab/numerics.hpp"

namespace fab {

// Across-group mean and variance, and the sampling variance of the estimate
// (sigma^2, or sigma^2 / n for a group mean).
struct HomoHierParams {
  double mu = 0.0;
  double tau2 = 1.0;
  double sigma2_eff = 1.0;

  void validate() const {
    if (!std::isfinite(mu)) throw DomainError("mu must be finite");
    if (!(tau2 > 0.0) || !std::isfinite(tau2)) throw DomainError("tau2 must be positive");
    if (!(sigma2_eff > 0.0) || !std::isfinite(sigma2_eff))
      throw DomainError("sigma2 must be positive");
  }
};

// Relative floor on tau^2 below which the z procedures fall back to UMAU.
inline constexpr double kTau2FloorRel = 1e-12;

struct ZSplit {
  double a;  // z_{alpha w}
  double b;  // z_{alpha (1 - w)}
  TailSplit logs;
  double w;
};

namespace detail {

// For v >= 0: returns B = z_{alpha(1-w)} <= z_{alpha/2} solving
// z_{alpha - Phi(B)} - B = v, with A = z_{alpha - Phi(B)}.
inline ZSplit z_split_nonneg(double v, double alpha) {
  const double za = dist::std_normal_quantile(alpha);
  const double za2 = dist::std_normal_quantile(0.5 * alpha);
  if (v == 0.0) {
    const double lh = std::log(0.5 * alpha);
    return {za2, za2, {lh, lh}, 0.5};
  }
  double lo = za2 - v;
  double hi = std::min(za - v, za2);
  auto eval = [&](double b, double& a, double& phib) {
    phib = dist::std_normal_cdf(b);
    a = (phib < alpha) ? dist::std_normal_quantile(alpha - phib) : -dist::kInf;
    return a - b - v;  // decreasing in b
  };
  double b = std::clamp(za - v, lo, hi);
  double a = 0.0, phib = 0.0;
  for (int it = 0; it < 100; ++it) {
    const double h = eval(b, a, phib);
    if (h == 0.0) break;
    if (h > 0.0)
      lo = b;
    else
      hi = b;
    // dA/dB = -phi(B)/phi(A)
    const double slope = -std::exp(dist::std_normal_log_pdf(b) - dist::std_normal_log_pdf(a)) - 1.0;
    double next = b - h / slope;
    if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
    const double step = next - b;
    b = next;
    if (std::fabs(step) <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::fabs(b)) ||
        hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::fabs(b)))
      break;
  }
  eval(b, a, phib);
  ZSplit out;
  out.a = a;
  out.b = b;
  out.logs.log_lower = dist::std_normal_log_cdf(b);
  out.logs.log_upper = std::log(alpha - phib);
  out.w = 1.0 - phib / alpha;
  return out;
}

}  // namespace detail

// Quantile-space form of g^{-1}: the tail split at g(w) = v.
inline ZSplit z_split(double v, double alpha) {
  check_alpha(alpha);
  if (std::isnan(v)) throw DomainError("z_split: NaN argument");
  if (v >= 0.0) return detail::z_split_nonneg(v, alpha);
  // w(-v) = 1 - w(v): the two tails swap.
  const ZSplit s = detail::z_split_nonneg(-v, alpha);
  return {s.b, s.a, {s.logs.log_upper, s.logs.log_lower}, 1.0 - s.w};
}

inline double g(double w, double alpha) {
  check_alpha(alpha);
  if (!(w > 0.0 && w < 1.0)) throw DomainError("g: w must lie in (0, 1)");
  return dist::std_normal_quantile(alpha * w) - dist::std_normal_quantile(alpha * (1.0 - w));
}

inline double g_inverse(double v, double alpha) {
  if (!std::isfinite(v)) throw DomainError("g_inverse: argument must be finite");
  const ZSplit s = z_split(v, alpha);
  if (!std::isfinite(s.a) || !std::isfinite(s.b))
    throw ConvergenceError("g_inverse: tail split failed", s.w);
  return s.w;
}

// w_psi as a w-function object.
class PsiW {
 public:
  PsiW(const HomoHierParams& psi, double alpha)
      : mu_(psi.mu), slope_(2.0 * std::sqrt(psi.sigma2_eff) / psi.tau2), alpha_(alpha) {
    psi.validate();
    check_alpha(alpha);
  }
  double argument(double theta) const { return slope_ * (theta - mu_); }
  TailSplit split(double theta) const { return z_split(argument(theta), alpha_).logs; }
  double value(double theta) const { return z_split(argument(theta), alpha_).w; }
  double alpha() const { return alpha_; }
  double mu() const { return mu_; }

 private:
  double mu_;
  double slope_;
  double alpha_;
};

inline double w_psi(double theta, const HomoHierParams& psi, double alpha) {
  return PsiW(psi, alpha).value(theta);
}

inline Interval umau_z_interval(double y, double sigma2, double alpha) {
  check_alpha(alpha);
  if (!std::isfinite(y)) throw DomainError("umau_z_interval: estimate must be finite");
  if (!(sigma2 > 0.0)) throw DomainError("umau_z_interval: sigma2 must be positive");
  const double h = std::sqrt(sigma2) * dist::std_normal_quantile(1.0 - 0.5 * alpha);
  Interval out;
  out.lower = y - h;
  out.upper = y + h;
  out.alpha = alpha;
  out.method = Method::umau_z;
  return out;
}

inline Interval fab_z_interval(double y, const HomoHierParams& psi, double alpha,
                               const SolverOptions& opt = {}) {
  psi.validate();
  check_alpha(alpha);
  if (psi.tau2 <= kTau2FloorRel * psi.sigma2_eff) {
    Interval out = umau_z_interval(y, psi.sigma2_eff, alpha);
    out.diagnostics.note = "tau2 at floor; UMAU fallback";
    return out;
  }
  return solve_interval(y, std::sqrt(psi.sigma2_eff), PsiW(psi, alpha), NormalPivot{},
                        Method::fab_z, psi.mu, opt);
}

// Expected width of the FAB z-interval at theta, by Gauss-Legendre
// quadrature over y in theta +- 10 sigma.
inline double fab_z_expected_width(double theta, const HomoHierParams& psi, double alpha,
                                   std::size_t nodes = 201) {
  psi.validate();
  const double s = std::sqrt(psi.sigma2_eff);
  const auto rule = numerics::gauss_legendre(nodes, theta - 10.0 * s, theta + 10.0 * s);
  numerics::CompensatedSum acc;
  for (std::size_t i = 0; i < rule.size(); ++i) {
    const double y = rule.nodes[i];
    const double dens = dist::std_normal_pdf((y - theta) / s) / s;
    acc.add(rule.weights[i] * dens * fab_z_interval(y, psi, alpha).width());
  }
  return acc.value();
}

}  // namespace fab
