#pragma once

// Hyperparameter estimation for the hierarchical normal models:
//   homoscedastic:   ybar_j ~ N(mu, tau^2 + sigma^2/n_j), x2_j ~ sigma^2 chi^2_{n_j-1}
//   heteroscedastic: as above with sigma_j^2, 1/sigma_j^2 ~ gamma(a, b) (shape-rate)
// plus the empirical-Bayes posterior interval and the Brown-Forsythe form of
// Levene's test.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "fab/data.hpp"
#include "fab/distributions.hpp"
#include "fab/error.hpp"
#include "fab/interval.hpp"
#include "fab/numerics.hpp"

namespace fab {

inline constexpr double kTau2FloorFactor = 1e-10;

struct HomoEstimate {
  double mu = 0.0;
  double tau2 = 0.0;
  double sigma2 = 0.0;  // within-group variance
  double loglik = 0.0;
  int iterations = 0;
  bool tau2_at_floor = false;
  std::vector<double> trace;  // log-likelihood after each accepted step
};

namespace detail {

inline int count_with_variance(std::span<const GroupSummary> g) {
  return static_cast<int>(std::count_if(g.begin(), g.end(), [](const GroupSummary& s) { return s.n >= 2; }));
}

struct HomoLik {
  std::span<const GroupSummary> groups;

  double profile_mu(double tau2, double sigma2) const {
    numerics::CompensatedSum num, den;
    for (const auto& g : groups) {
      const double w = 1.0 / (tau2 + sigma2 / g.n);
      num.add(w * g.ybar);
      den.add(w);
    }
    return num.value() / den.value();
  }

  // Log-likelihood (up to a constant) with mu profiled out, and its
  // gradient in (log tau2, log sigma2).
  double value(double u, double s, double* grad = nullptr, double* mu_out = nullptr) const {
    const double tau2 = std::exp(u), sigma2 = std::exp(s);
    const double mu = profile_mu(tau2, sigma2);
    numerics::CompensatedSum ll;
    double g_tau = 0.0, g_sig = 0.0;
    for (const auto& g : groups) {
      const double v = tau2 + sigma2 / g.n;
      const double r = g.ybar - mu;
      const double k = g.n - 1.0;
      ll.add(-0.5 * k * s - g.x2 / (2.0 * sigma2) - 0.5 * std::log(v) - r * r / (2.0 * v));
      const double dv = -0.5 / v + r * r / (2.0 * v * v);
      g_tau += dv;
      g_sig += -0.5 * k / sigma2 + g.x2 / (2.0 * sigma2 * sigma2) + dv / g.n;
    }
    if (grad) {
      grad[0] = g_tau * tau2;
      grad[1] = g_sig * sigma2;
    }
    if (mu_out) *mu_out = mu;
    return ll.value();
  }
};

// Damped Newton ascent in two log-parameters with a lower bound on the
// first coordinate relative to the second (u >= s + floor_offset).  The
// Hessian is a central difference of the analytic gradient.  Every accepted
// step increases the objective.
template <class F>
void newton_ascent_2d(F&& f, double& u, double& s, double floor_offset, int max_iter,
                      std::vector<double>& trace, int& iterations, bool& at_floor) {
  double grad[2];
  double val = f(u, s, grad);
  trace.push_back(val);
  at_floor = false;
  for (iterations = 0; iterations < max_iter; ++iterations) {
    const double u_floor = s + floor_offset;
    at_floor = u <= u_floor + 1e-12 && grad[0] < 0.0;
    const double pg0 = at_floor ? 0.0 : grad[0];
    if (std::hypot(pg0, grad[1]) < 1e-10 * std::max(1.0, std::fabs(val))) return;

    constexpr double h = 1e-5;
    double gp[2], gm[2], H[2][2];
    f(u + h, s, gp);
    f(u - h, s, gm);
    H[0][0] = (gp[0] - gm[0]) / (2 * h);
    H[1][0] = (gp[1] - gm[1]) / (2 * h);
    f(u, s + h, gp);
    f(u, s - h, gm);
    H[0][1] = (gp[0] - gm[0]) / (2 * h);
    H[1][1] = (gp[1] - gm[1]) / (2 * h);
    const double off = 0.5 * (H[0][1] + H[1][0]);

    double du, ds;
    if (at_floor) {
      du = 0.0;
      ds = H[1][1] < 0.0 ? -grad[1] / H[1][1] : grad[1];
    } else {
      const double det = H[0][0] * H[1][1] - off * off;
      if (H[0][0] < 0.0 && det > 0.0) {
        du = -(H[1][1] * grad[0] - off * grad[1]) / det;
        ds = -(-off * grad[0] + H[0][0] * grad[1]) / det;
      } else {
        du = grad[0];
        ds = grad[1];
      }
    }
    const double len = std::hypot(du, ds);
    if (len > 2.0) {
      du *= 2.0 / len;
      ds *= 2.0 / len;
    }
    double t = 1.0;
    bool accepted = false;
    for (int k = 0; k < 60; ++k, t *= 0.5) {
      double nu = u + t * du, ns = s + t * ds;
      if (nu < ns + floor_offset) nu = ns + floor_offset;
      double ng[2];
      const double nv = f(nu, ns, ng);
      if (std::isfinite(nv) && nv >= val) {
        const bool moved = nu != u || ns != s;
        u = nu;
        s = ns;
        std::copy(ng, ng + 2, grad);
        const double gain = nv - val;
        val = nv;
        trace.push_back(val);
        accepted = moved;
        if (gain <= 1e-14 * std::max(1.0, std::fabs(val)) && t * len < 1e-10) return;
        break;
      }
    }
    if (!accepted) return;  // no ascent direction left at working precision
  }
}

}  // namespace detail

// Moment estimates: sigma2 = mean s2 over groups with n >= 2, mu = mean ybar,
// tau2 = var(ybar) - sigma2 mean(1/n), floored.
inline HomoEstimate fit_moments(std::span<const GroupSummary> groups) {
  if (groups.size() < 2 || detail::count_with_variance(groups) < 2)
    throw DataError("fit_moments: need at least two groups with n >= 2");
  numerics::CompensatedSum s2, yb, inv_n;
  int m = 0;
  for (const auto& g : groups) {
    if (g.n >= 2) {
      s2.add(g.s2);
      ++m;
    }
    yb.add(g.ybar);
    inv_n.add(1.0 / g.n);
  }
  const double p = static_cast<double>(groups.size());
  HomoEstimate e;
  e.sigma2 = s2.value() / m;
  e.mu = yb.value() / p;
  numerics::CompensatedSum dev;
  for (const auto& g : groups) dev.add((g.ybar - e.mu) * (g.ybar - e.mu));
  const double var_ybar = dev.value() / (p - 1.0);
  const double sigma2_pos = e.sigma2 > 0.0 ? e.sigma2 : std::numeric_limits<double>::min();
  const double floor = kTau2FloorFactor * sigma2_pos;
  const double raw = var_ybar - e.sigma2 * inv_n.value() / p;
  e.tau2 = std::max(raw, floor);
  e.tau2_at_floor = raw <= floor;
  e.sigma2 = sigma2_pos;
  return e;
}

inline HomoEstimate fit_moments(const std::vector<GroupSummary>& groups) {
  return fit_moments(std::span<const GroupSummary>(groups));
}

// Marginal maximum likelihood of (mu, tau2, sigma2) in the one-way
// random-effects model.  tau2 is floored at 1e-10 sigma2.
inline HomoEstimate fit_homoscedastic_mle(std::span<const GroupSummary> groups, int max_iter = 200) {
  if (groups.size() < 2) throw DataError("fit_homoscedastic_mle: need at least two groups");
  double total_df = 0.0, total_x2 = 0.0;
  for (const auto& g : groups) {
    total_df += g.n - 1.0;
    total_x2 += g.x2;
  }
  if (total_df <= 0.0) throw DataError("fit_homoscedastic_mle: need more observations than groups");

  HomoEstimate e;
  if (total_x2 <= 0.0) {
    // No within-group spread: the likelihood is unbounded as sigma2 -> 0.
    double lo = groups.front().ybar, hi = lo;
    for (const auto& g : groups) {
      lo = std::min(lo, g.ybar);
      hi = std::max(hi, g.ybar);
    }
    if (hi > lo) throw DataError("fit_homoscedastic_mle: zero within-group variation");
    e.mu = lo;
    e.sigma2 = 1e-12 * std::max(1.0, lo * lo);
    e.tau2 = kTau2FloorFactor * e.sigma2;
    e.tau2_at_floor = true;
    return e;
  }

  const detail::HomoLik lik{groups};
  double sigma2_0 = total_x2 / total_df;
  double tau2_0 = sigma2_0;
  if (detail::count_with_variance(groups) >= 2) {
    const HomoEstimate m = fit_moments(groups);
    tau2_0 = std::max(m.tau2, 1e-3 * sigma2_0);
  }
  double u = std::log(tau2_0), s = std::log(sigma2_0);
  auto f = [&](double uu, double ss, double* grad) { return lik.value(uu, ss, grad); };
  bool at_floor = false;
  detail::newton_ascent_2d(f, u, s, std::log(kTau2FloorFactor), max_iter, e.trace, e.iterations, at_floor);
  if (e.iterations >= max_iter)
    throw ConvergenceError("fit_homoscedastic_mle: no convergence", e.trace.back(), e.iterations);
  e.loglik = lik.value(u, s, nullptr, &e.mu);
  e.tau2 = std::exp(u);
  e.sigma2 = std::exp(s);
  e.tau2_at_floor = at_floor || u <= s + std::log(kTau2FloorFactor) + 1e-9;
  return e;
}

inline HomoEstimate fit_homoscedastic_mle(const std::vector<GroupSummary>& groups, int max_iter = 200) {
  return fit_homoscedastic_mle(std::span<const GroupSummary>(groups), max_iter);
}

inline HomoEstimate fit_homoscedastic_mle(const GroupedData& data, int max_iter = 200) {
  return fit_homoscedastic_mle(summaries_only(summarize(data)), max_iter);
}

// ---------------------------------------------------------------------------
// Gamma model for the precisions
// ---------------------------------------------------------------------------

struct GammaPrecisionFit {
  double a = 1.0;
  double b = 1.0;
  double loglik = 0.0;
  double grad_norm = 0.0;  // in (a, b)
  int iterations = 0;
  bool a_at_cap = false;   // a hit the cap: the precisions look identical
};

inline constexpr double kGammaShapeCap = 1e6;

namespace detail {

struct GammaLik {
  std::span<const GroupSummary> groups;

  // Log marginal density of the x2_j in (a, b), the x2-only factor dropped.
  double value(double a, double b) const {
    numerics::CompensatedSum ll;
    const double lb = std::log(b), lga = dist::log_gamma(a);
    for (const auto& g : groups) {
      if (g.n < 2) continue;
      const double k = 0.5 * (g.n - 1.0);
      ll.add(dist::log_gamma(a + k) - lga + a * lb - (a + k) * std::log(b + 0.5 * g.x2));
    }
    return ll.value();
  }
  void derivatives(double a, double b, double g[2], double H[2][2]) const {
    double ga = 0.0, gb = 0.0, haa = 0.0, hab = 0.0, hbb = 0.0;
    const double psi_a = dist::digamma(a), tri_a = dist::trigamma(a), lb = std::log(b);
    for (const auto& gr : groups) {
      if (gr.n < 2) continue;
      const double k = 0.5 * (gr.n - 1.0);
      const double c = b + 0.5 * gr.x2;
      ga += dist::digamma(a + k) - psi_a + lb - std::log(c);
      gb += a / b - (a + k) / c;
      haa += dist::trigamma(a + k) - tri_a;
      hab += 1.0 / b - 1.0 / c;
      hbb += -a / (b * b) + (a + k) / (c * c);
    }
    g[0] = ga;
    g[1] = gb;
    H[0][0] = haa;
    H[0][1] = H[1][0] = hab;
    H[1][1] = hbb;
  }
};

}  // namespace detail

// Marginal MLE of (a, b) from the within-group sums of squares; Newton
// ascent in (log a, log b) with analytic derivatives.
inline GammaPrecisionFit fit_gamma_precision_mml(std::span<const GroupSummary> groups,
                                                 int max_iter = 500) {
  if (detail::count_with_variance(groups) < 2)
    throw DataError("fit_gamma_precision_mml: need at least two groups with n >= 2");
  double sum_s2 = 0.0;
  int m = 0;
  bool any_spread = false;
  for (const auto& g : groups) {
    if (g.n < 2) continue;
    sum_s2 += g.s2;
    ++m;
    any_spread = any_spread || g.x2 > 0.0;
  }
  if (!any_spread) throw DataError("fit_gamma_precision_mml: all within-group sums of squares are zero");

  const detail::GammaLik lik{groups};
  double la = std::log(2.0), lb = std::log(sum_s2 / m);  // prior mean of sigma^2 = b/(a-1)
  double val = lik.value(std::exp(la), std::exp(lb));
  GammaPrecisionFit fit;
  const double cap = std::log(kGammaShapeCap);
  for (fit.iterations = 0; fit.iterations < max_iter; ++fit.iterations) {
    const double a = std::exp(la), b = std::exp(lb);
    double g[2], H[2][2];
    lik.derivatives(a, b, g, H);
    // Chain rule to log parameters.
    const double G0 = a * g[0], G1 = b * g[1];
    const double H00 = a * a * H[0][0] + G0, H11 = b * b * H[1][1] + G1, H01 = a * b * H[0][1];
    fit.a_at_cap = la >= cap - 1e-12 && G0 > 0.0;
    const double pg0 = fit.a_at_cap ? 0.0 : G0;
    if (std::hypot(pg0, G1) < 1e-10 * std::max(1.0, std::fabs(val))) break;

    double d0, d1;
    if (fit.a_at_cap) {
      d0 = 0.0;
      d1 = H11 < 0.0 ? -G1 / H11 : G1;
    } else {
      const double det = H00 * H11 - H01 * H01;
      if (H00 < 0.0 && det > 0.0) {
        d0 = -(H11 * G0 - H01 * G1) / det;
        d1 = -(-H01 * G0 + H00 * G1) / det;
      } else {
        d0 = G0;
        d1 = G1;
      }
    }
    const double len = std::hypot(d0, d1);
    if (len > 3.0) {
      d0 *= 3.0 / len;
      d1 *= 3.0 / len;
    }
    double t = 1.0;
    bool accepted = false;
    for (int k = 0; k < 60; ++k, t *= 0.5) {
      const double na = std::min(la + t * d0, cap);
      const double nb = lb + t * d1;
      const double nv = lik.value(std::exp(na), std::exp(nb));
      if (std::isfinite(nv) && nv >= val) {
        accepted = na != la || nb != lb;
        la = na;
        lb = nb;
        val = nv;
        break;
      }
    }
    if (!accepted) break;
  }
  fit.a = std::exp(la);
  fit.b = std::exp(lb);
  fit.loglik = val;
  double g[2], H[2][2];
  lik.derivatives(fit.a, fit.b, g, H);
  fit.a_at_cap = fit.a >= kGammaShapeCap * (1.0 - 1e-9) && g[0] > 0.0;
  fit.grad_norm = fit.a_at_cap ? std::fabs(g[1]) : std::hypot(g[0], g[1]);
  if (fit.iterations >= max_iter)
    throw ConvergenceError("fit_gamma_precision_mml: no convergence", val, fit.iterations);
  return fit;
}

inline GammaPrecisionFit fit_gamma_precision_mml(const std::vector<GroupSummary>& groups,
                                                 int max_iter = 500) {
  return fit_gamma_precision_mml(std::span<const GroupSummary>(groups), max_iter);
}

// How groups with a single observation get a variance in the mean-level fit.
enum class SingletonPolicy { prior_mean_or_exclude, exclude };

// Posterior-mean-type variance estimates (b + x2/2)/(a + (n-1)/2).  Groups
// with n = 1 get the prior mean b/(a-1) when a > 1 and NaN otherwise
// (callers drop NaN groups).
inline std::vector<double> eb_variances(std::span<const GroupSummary> groups, double a, double b,
                                        SingletonPolicy policy = SingletonPolicy::prior_mean_or_exclude) {
  if (!(a > 0.0 && b > 0.0)) throw DomainError("eb_variances: a and b must be positive");
  std::vector<double> out;
  out.reserve(groups.size());
  for (const auto& g : groups) {
    if (g.n >= 2) {
      out.push_back((b + 0.5 * g.x2) / (a + 0.5 * (g.n - 1.0)));
    } else if (policy == SingletonPolicy::prior_mean_or_exclude && a > 1.0) {
      out.push_back(b / (a - 1.0));
    } else {
      out.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }
  return out;
}

inline std::vector<double> eb_variances(const std::vector<GroupSummary>& groups, double a, double b,
                                        SingletonPolicy policy = SingletonPolicy::prior_mean_or_exclude) {
  return eb_variances(std::span<const GroupSummary>(groups), a, b, policy);
}

struct PluginFit {
  double mu = 0.0;
  double tau2 = 0.0;
  double loglik = 0.0;
  bool tau2_at_floor = false;
  std::vector<double> trace;  // best log-likelihood so far, per evaluation
};

// Maximizes prod_j phi((ybar_j - mu)/sqrt(v_j)) / sqrt(v_j), v_j = sigma2_j/n_j + tau2,
// over mu and tau2 >= floor.  mu is profiled out as the precision-weighted
// mean; log tau2 is scanned on a grid and refined with Brent's method.
// Groups whose variance is NaN are skipped.
inline PluginFit fit_plugin_mu_tau(std::span<const GroupSummary> groups, std::span<const double> sigma2) {
  if (groups.size() != sigma2.size()) throw DomainError("fit_plugin_mu_tau: size mismatch");
  std::vector<double> ybar, se2;
  for (std::size_t j = 0; j < groups.size(); ++j) {
    if (std::isnan(sigma2[j])) continue;
    if (!(sigma2[j] > 0.0)) throw DomainError("fit_plugin_mu_tau: variances must be positive");
    ybar.push_back(groups[j].ybar);
    se2.push_back(sigma2[j] / groups[j].n);
  }
  if (ybar.size() < 2) throw DataError("fit_plugin_mu_tau: need at least two usable groups");

  const std::size_t p = ybar.size();
  double mean_se2 = 0.0, ymin = ybar[0], ymax = ybar[0], se2max = 0.0;
  for (std::size_t j = 0; j < p; ++j) {
    mean_se2 += se2[j] / p;
    ymin = std::min(ymin, ybar[j]);
    ymax = std::max(ymax, ybar[j]);
    se2max = std::max(se2max, se2[j]);
  }
  const double floor = kTau2FloorFactor * mean_se2;

  PluginFit fit;
  double best = -std::numeric_limits<double>::infinity();
  auto profile = [&](double u, double* mu_out) {
    const double tau2 = std::exp(u);
    numerics::CompensatedSum num, den;
    for (std::size_t j = 0; j < p; ++j) {
      const double w = 1.0 / (se2[j] + tau2);
      num.add(w * ybar[j]);
      den.add(w);
    }
    const double mu = num.value() / den.value();
    numerics::CompensatedSum ll;
    for (std::size_t j = 0; j < p; ++j) {
      const double v = se2[j] + tau2;
      const double r = ybar[j] - mu;
      ll.add(-0.5 * std::log(v) - 0.5 * r * r / v);
    }
    if (mu_out) *mu_out = mu;
    const double val = ll.value();
    best = std::max(best, val);
    fit.trace.push_back(best);
    return val;
  };

  const double u_lo = std::log(floor);
  const double range = ymax - ymin;
  const double u_hi = std::log(std::max(10.0 * (range * range + se2max), 100.0 * floor));
  constexpr int grid = 81;
  std::vector<double> us(grid), vals(grid);
  int arg = 0;
  for (int i = 0; i < grid; ++i) {
    us[i] = u_lo + (u_hi - u_lo) * i / (grid - 1.0);
    vals[i] = profile(us[i], nullptr);
    if (vals[i] > vals[arg]) arg = i;
  }
  const double a = us[std::max(arg - 1, 0)], b = us[std::min(arg + 1, grid - 1)];
  const auto r = numerics::brent_minimize([&](double u) { return -profile(u, nullptr); }, a, b, 1e-10);
  double u_best = us[arg];
  if (-r.fx > vals[arg]) u_best = r.x;
  fit.loglik = profile(u_best, &fit.mu);
  fit.tau2 = std::exp(u_best);
  fit.tau2_at_floor = u_best <= u_lo + 1e-6;
  if (fit.tau2_at_floor) fit.tau2 = floor;
  return fit;
}

inline PluginFit fit_plugin_mu_tau(const std::vector<GroupSummary>& groups, const std::vector<double>& sigma2) {
  return fit_plugin_mu_tau(std::span<const GroupSummary>(groups), std::span<const double>(sigma2));
}

// Shrinkage interval with t_{n-1} quantiles.
inline Interval eb_posterior_interval(const GroupSummary& g, double mu, double tau2, double alpha) {
  check_alpha(alpha);
  if (g.n < 2) throw DataError("eb_posterior_interval: need n >= 2");
  if (!(g.s2 > 0.0)) throw DataError("eb_posterior_interval: sample variance must be positive");
  if (!(tau2 > 0.0)) throw DomainError("eb_posterior_interval: tau2 must be positive");
  const double prec = 1.0 / tau2 + g.n / g.s2;
  const double center = (mu / tau2 + g.ybar * g.n / g.s2) / prec;
  const double half = dist::t_quantile(1.0 - 0.5 * alpha, g.n - 1.0) / std::sqrt(prec);
  Interval out;
  out.lower = center - half;
  out.upper = center + half;
  out.alpha = alpha;
  out.method = Method::eb;
  return out;
}

// ---------------------------------------------------------------------------
// Levene's test, median-centred
// ---------------------------------------------------------------------------

struct LeveneResult {
  double f = 0.0;
  double p_value = 1.0;
  double df1 = 0.0;
  double df2 = 0.0;
  int groups_used = 0;
};

inline double median(std::vector<double> v) {
  if (v.empty()) throw DataError("median of empty set");
  const std::size_t m = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m), v.end());
  const double hi = v[m];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m));
  return 0.5 * (lo + hi);
}

inline LeveneResult levene_test(const GroupedData& data) {
  std::vector<std::vector<double>> z;
  for (const auto& [id, ys] : data) {
    if (ys.size() < 2) continue;
    const double med = median(ys);
    std::vector<double> d;
    d.reserve(ys.size());
    for (double y : ys) d.push_back(std::fabs(y - med));
    z.push_back(std::move(d));
  }
  if (z.size() < 2) throw DataError("levene_test: need at least two groups with n >= 2");
  std::size_t total = 0;
  numerics::CompensatedSum grand;
  std::vector<double> means;
  for (const auto& d : z) {
    numerics::CompensatedSum s;
    for (double v : d) {
      s.add(v);
      grand.add(v);
    }
    means.push_back(s.value() / d.size());
    total += d.size();
  }
  const double gm = grand.value() / total;
  numerics::CompensatedSum ssb, ssw;
  for (std::size_t j = 0; j < z.size(); ++j) {
    ssb.add(z[j].size() * (means[j] - gm) * (means[j] - gm));
    for (double v : z[j]) ssw.add((v - means[j]) * (v - means[j]));
  }
  LeveneResult r;
  r.groups_used = static_cast<int>(z.size());
  r.df1 = z.size() - 1.0;
  r.df2 = static_cast<double>(total) - z.size();
  if (r.df2 <= 0.0) throw DataError("levene_test: no residual degrees of freedom");
  if (ssw.value() <= 0.0) {
    r.f = ssb.value() > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    r.p_value = ssb.value() > 0.0 ? 0.0 : 1.0;
    return r;
  }
  r.f = (ssb.value() / r.df1) / (ssw.value() / r.df2);
  r.p_value = dist::f_sf(r.f, r.df1, r.df2);
  return r;
}

}  // namespace fab
