#pragma once

// Per-group intervals for grouped data: the homoscedastic FAB procedure with
// split variance pools, the heteroscedastic FAB procedure with leave-one-out
// hyperparameters, and the UMAU and empirical-Bayes baselines.
//
// For every target group j the w-function is built from data that exclude
// group j, so each interval keeps exact 1 - alpha coverage for its own mean.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "fab/data.hpp"
#include "fab/error.hpp"
#include "fab/fab_t.hpp"
#include "fab/fab_z.hpp"
#include "fab/hierarchy.hpp"
#include "fab/interval.hpp"
#include "fab/parallel.hpp"

namespace fab {

// Hyperparameters behind one group's interval; NaN where not used.
struct HyperUsed {
  double mu = std::numeric_limits<double>::quiet_NaN();
  double tau2 = std::numeric_limits<double>::quiet_NaN();
  double sigma2 = std::numeric_limits<double>::quiet_NaN();
  double a = std::numeric_limits<double>::quiet_NaN();
  double b = std::numeric_limits<double>::quiet_NaN();
};

struct GroupInterval {
  std::string group;
  GroupSummary summary;
  Interval interval;
  double df = 0.0;
  double s2_used = 0.0;      // variance estimate behind the pivot
  HyperUsed hyper;
  std::string fallback;      // non-empty when the group was degraded to UMAU
};

struct SkippedGroup {
  std::string group;
  std::string reason;
};

struct MultigroupResult {
  std::vector<GroupInterval> intervals;
  std::vector<SkippedGroup> skipped;

  const GroupInterval* find(const std::string& group) const {
    for (const auto& g : intervals)
      if (g.group == group) return &g;
    return nullptr;
  }
  double mean_width() const {
    if (intervals.empty()) return std::numeric_limits<double>::quiet_NaN();
    numerics::CompensatedSum s;
    for (const auto& g : intervals) s.add(g.interval.width());
    return s.value() / static_cast<double>(intervals.size());
  }
};

// ---------------------------------------------------------------------------
// Group splitting for the homoscedastic procedure
// ---------------------------------------------------------------------------

struct SplitPlan {
  std::size_t target = 0;               // index into the sorted group list
  std::vector<std::size_t> pool;        // p1 - 1 groups pooled for the variance
  std::vector<std::size_t> estimation;  // the rest, for the hyperparameters
};

// Groups are taken in identifier order; the pool is the p1 - 1 groups
// following the target cyclically.
inline SplitPlan make_split_plan(std::size_t p, std::size_t target, int p1) {
  if (p1 < 2) throw DomainError("split plan: p1 must be at least 2");
  if (p < static_cast<std::size_t>(p1) + 2)
    throw DataError("split plan: need p >= p1 + 2 groups (p = " + std::to_string(p) +
                    ", p1 = " + std::to_string(p1) + ")");
  if (target >= p) throw DomainError("split plan: target out of range");
  SplitPlan plan;
  plan.target = target;
  std::vector<bool> used(p, false);
  used[target] = true;
  for (int k = 1; k < p1; ++k) {
    const std::size_t idx = (target + static_cast<std::size_t>(k)) % p;
    plan.pool.push_back(idx);
    used[idx] = true;
  }
  for (std::size_t i = 0; i < p; ++i)
    if (!used[i]) plan.estimation.push_back(i);
  return plan;
}

struct P1Policy {
  int fixed = 0;        // > 0 forces this p1
  int target_df = 50;   // otherwise the smallest p1 with p1 (n - 1) >= target_df

  // n is the smallest group size; the result is capped at ceil(p/2) and p - 2.
  int choose(std::size_t p, int n) const {
    if (fixed > 0) return fixed;
    if (n < 2) throw DataError("p1 policy: groups need n >= 2");
    int p1 = std::max(2, (target_df + n - 2) / (n - 1));
    const int cap = std::min(static_cast<int>((p + 1) / 2), static_cast<int>(p) - 2);
    return std::max(2, std::min(p1, cap));
  }
};

struct PooledVariance {
  double s2 = 0.0;
  double df = 0.0;
};

// Pools the target with the pool groups.  With a common n this is the
// p1 (n - 1) df estimate; unequal sizes use the summed df.
inline PooledVariance pooled_variance(const GroupSummary& target, const std::vector<GroupSummary>& pool,
                                      bool require_common_n = false) {
  if (target.n < 2) throw DataError("pooled_variance: target needs n >= 2");
  numerics::CompensatedSum x2;
  double df = target.n - 1.0;
  x2.add(target.x2);
  for (const auto& g : pool) {
    if (g.n < 2) throw DataError("pooled_variance: pooled groups need n >= 2");
    if (require_common_n && g.n != target.n) throw DataError("pooled_variance: group sizes differ");
    x2.add(g.x2);
    df += g.n - 1.0;
  }
  if (!(x2.value() > 0.0)) throw DataError("pooled_variance: pooled sum of squares is zero");
  return {x2.value() / df, df};
}

enum class HomoEstimator { moments, mle };

struct HomoOptions {
  P1Policy p1;
  HomoEstimator estimator = HomoEstimator::moments;
  SolverOptions solver;
  std::size_t threads = parallel::thread_count();
};

namespace detail {

inline GroupInterval umau_fallback(const NamedSummary& g, double alpha, std::string reason) {
  GroupInterval r;
  r.group = g.group;
  r.summary = g.summary;
  r.df = g.summary.n - 1.0;
  r.s2_used = g.summary.s2;
  r.interval = umau_t_interval(g.summary.ybar, g.summary.s2, g.summary.n, r.df, alpha);
  r.interval.diagnostics.note = reason;
  r.fallback = std::move(reason);
  return r;
}

inline void split_eligible(const std::vector<NamedSummary>& all, std::vector<NamedSummary>& eligible,
                           std::vector<SkippedGroup>& skipped, bool need_spread = true) {
  for (const auto& g : all) {
    if (g.summary.n < 2)
      skipped.push_back({g.group, "n = 1: no within-group variance"});
    else if (need_spread && !(g.summary.s2 > 0.0))
      skipped.push_back({g.group, "zero sample variance"});
    else
      eligible.push_back(g);
  }
}

template <class F>
MultigroupResult run_per_group(std::vector<NamedSummary> eligible, std::vector<SkippedGroup> skipped,
                               std::size_t threads, F&& per_group) {
  MultigroupResult out;
  out.intervals.resize(eligible.size());
  parallel::parallel_for(eligible.size(), [&](std::size_t j) { out.intervals[j] = per_group(j); }, threads);
  out.skipped = std::move(skipped);
  return out;
}

}  // namespace detail

// Homoscedastic FAB interval for group `target` of the eligible (n >= 2)
// groups, sorted by identifier.
inline GroupInterval fab_homoscedastic_group(const std::vector<NamedSummary>& groups, std::size_t target,
                                             double alpha, int p1, const HomoOptions& opt = {}) {
  const SplitPlan plan = make_split_plan(groups.size(), target, p1);
  const NamedSummary& g = groups[target];
  std::vector<GroupSummary> pool, est;
  for (std::size_t k : plan.pool) pool.push_back(groups[k].summary);
  for (std::size_t k : plan.estimation) est.push_back(groups[k].summary);

  GroupInterval r;
  r.group = g.group;
  r.summary = g.summary;
  PooledVariance pv;
  HomoEstimate psi;
  try {
    pv = pooled_variance(g.summary, pool);
    psi = opt.estimator == HomoEstimator::mle ? fit_homoscedastic_mle(est) : fit_moments(est);
  } catch (const Error& e) {
    return detail::umau_fallback(g, alpha, std::string("estimation failed: ") + e.what());
  }
  r.df = pv.df;
  r.s2_used = pv.s2;
  r.hyper.mu = psi.mu;
  r.hyper.tau2 = psi.tau2;
  r.hyper.sigma2 = psi.sigma2;
  const HomoHierParams hp{psi.mu, psi.tau2, psi.sigma2 / g.summary.n};
  try {
    if (psi.tau2_at_floor || psi.tau2 <= kTau2FloorRel * hp.sigma2_eff) {
      // The w-function is a step at mu; use w = 1/2 with the pooled df.
      r.interval = fab_t_interval(g.summary.ybar, pv.s2, g.summary.n, ConstantW(0.5, alpha), pv.df,
                                  g.summary.ybar, Method::fab_homoscedastic, opt.solver);
      r.interval.diagnostics.note = "tau2 at floor; w = 1/2";
    } else {
      r.interval = fab_t_interval(g.summary.ybar, pv.s2, g.summary.n, PsiW(hp, alpha), pv.df,
                                  Method::fab_homoscedastic, opt.solver);
    }
  } catch (const Error& e) {
    return detail::umau_fallback(g, alpha, std::string("interval failed: ") + e.what());
  }
  return r;
}

inline MultigroupResult fab_homoscedastic(const std::vector<NamedSummary>& all, double alpha,
                                          const HomoOptions& opt = {}) {
  check_alpha(alpha);
  std::vector<NamedSummary> eligible;
  std::vector<SkippedGroup> skipped;
  detail::split_eligible(all, eligible, skipped);
  if (eligible.size() < 3) throw DataError("fab_homoscedastic: need at least three groups with n >= 2");
  int n_min = eligible.front().summary.n;
  for (const auto& g : eligible) n_min = std::min(n_min, g.summary.n);
  const int p1 = opt.p1.choose(eligible.size(), n_min);
  make_split_plan(eligible.size(), 0, p1);  // validates p against p1 up front
  return detail::run_per_group(eligible, std::move(skipped), opt.threads, [&](std::size_t j) {
    return fab_homoscedastic_group(eligible, j, alpha, p1, opt);
  });
}

inline MultigroupResult fab_homoscedastic(const GroupedData& data, double alpha, const HomoOptions& opt = {}) {
  return fab_homoscedastic(summarize(data), alpha, opt);
}

// ---------------------------------------------------------------------------
// Heteroscedastic procedure
// ---------------------------------------------------------------------------

struct HeteroHyperParams {
  double mu = 0.0;
  double tau2 = 1.0;
  double a = 1.0;
  double b = 1.0;
};

struct HeteroOptions {
  QuadratureConfig quad;
  bool use_table = false;  // tabulated w with isotonic projection instead of the direct route
  std::size_t table_knots = 501;
  SingletonPolicy singletons = SingletonPolicy::prior_mean_or_exclude;
  SolverOptions solver;
  std::size_t threads = parallel::thread_count();
};

// (a, b) by marginal ML, EB variances, then the plug-in (mu, tau2).
inline HeteroHyperParams fit_hetero_hyper(const std::vector<GroupSummary>& groups,
                                          SingletonPolicy singletons = SingletonPolicy::prior_mean_or_exclude) {
  const GammaPrecisionFit gf = fit_gamma_precision_mml(groups);
  const std::vector<double> v = eb_variances(groups, gf.a, gf.b, singletons);
  const PluginFit pf = fit_plugin_mu_tau(groups, v);
  return {pf.mu, pf.tau2, gf.a, gf.b};
}

// FAB t interval for all[target] with hyperparameters estimated from every
// other group (including n = 1 groups, per the singleton policy).
inline GroupInterval fab_heteroscedastic_group(const std::vector<NamedSummary>& all, std::size_t target,
                                               double alpha, const HeteroOptions& opt = {}) {
  const NamedSummary& g = all.at(target);
  if (g.summary.n < 2) throw DataError("fab_heteroscedastic_group: target needs n >= 2");
  std::vector<GroupSummary> others;
  others.reserve(all.size() - 1);
  for (std::size_t k = 0; k < all.size(); ++k)
    if (k != target) others.push_back(all[k].summary);

  GroupInterval r;
  r.group = g.group;
  r.summary = g.summary;
  r.df = g.summary.n - 1.0;
  r.s2_used = g.summary.s2;
  HeteroHyperParams h;
  try {
    h = fit_hetero_hyper(others, opt.singletons);
  } catch (const Error& e) {
    return detail::umau_fallback(g, alpha, std::string("leave-one-out fit failed: ") + e.what());
  }
  r.hyper.mu = h.mu;
  r.hyper.tau2 = h.tau2;
  r.hyper.a = h.a;
  r.hyper.b = h.b;
  try {
    const NormalInvGammaPrior prior{h.mu, h.tau2, h.a, h.b, g.summary.n};
    if (opt.use_table) {
      const auto table = build_w_table(prior, alpha, opt.quad, default_w_grid(prior, opt.table_knots));
      r.interval = fab_t_interval(g.summary.ybar, g.summary.s2, g.summary.n, table, r.df, h.mu,
                                  Method::fab_heteroscedastic, opt.solver);
    } else {
      r.interval = BayesTWFunction(prior, alpha, opt.quad).interval(g.summary.ybar, g.summary.s2, opt.solver);
      r.interval.method = Method::fab_heteroscedastic;
    }
  } catch (const Error& e) {
    return detail::umau_fallback(g, alpha, std::string("interval failed: ") + e.what());
  }
  return r;
}

inline MultigroupResult fab_heteroscedastic(const std::vector<NamedSummary>& all, double alpha,
                                            const HeteroOptions& opt = {}) {
  check_alpha(alpha);
  opt.quad.validate();
  std::vector<std::size_t> targets;
  std::vector<SkippedGroup> skipped;
  for (std::size_t k = 0; k < all.size(); ++k) {
    if (all[k].summary.n < 2)
      skipped.push_back({all[k].group, "n = 1: no within-group variance"});
    else if (!(all[k].summary.s2 > 0.0))
      skipped.push_back({all[k].group, "zero sample variance"});
    else
      targets.push_back(k);
  }
  if (detail::count_with_variance(summaries_only(all)) < 3)
    throw DataError("fab_heteroscedastic: need at least three groups with n >= 2");
  MultigroupResult out;
  out.intervals.resize(targets.size());
  parallel::parallel_for(
      targets.size(), [&](std::size_t i) { out.intervals[i] = fab_heteroscedastic_group(all, targets[i], alpha, opt); },
      opt.threads);
  out.skipped = std::move(skipped);
  return out;
}

inline MultigroupResult fab_heteroscedastic(const GroupedData& data, double alpha, const HeteroOptions& opt = {}) {
  return fab_heteroscedastic(summarize(data), alpha, opt);
}

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

inline MultigroupResult umau_all(const std::vector<NamedSummary>& all, double alpha) {
  check_alpha(alpha);
  std::vector<NamedSummary> eligible;
  std::vector<SkippedGroup> skipped;
  detail::split_eligible(all, eligible, skipped);
  if (eligible.empty()) throw DataError("umau_all: no group has n >= 2 with positive variance");
  return detail::run_per_group(eligible, std::move(skipped), 1, [&](std::size_t j) {
    GroupInterval r;
    r.group = eligible[j].group;
    r.summary = eligible[j].summary;
    r.df = r.summary.n - 1.0;
    r.s2_used = r.summary.s2;
    r.interval = umau_t_interval(r.summary.ybar, r.summary.s2, r.summary.n, r.df, alpha);
    return r;
  });
}

inline MultigroupResult umau_all(const GroupedData& data, double alpha) { return umau_all(summarize(data), alpha); }

// Empirical-Bayes posterior intervals with (mu, tau2) from the plug-in fit
// on all groups.
inline MultigroupResult eb_all(const std::vector<NamedSummary>& all, double alpha,
                               SingletonPolicy singletons = SingletonPolicy::prior_mean_or_exclude) {
  check_alpha(alpha);
  if (all.size() < 2) throw DataError("eb_all: need at least two groups");
  const HeteroHyperParams h = fit_hetero_hyper(summaries_only(all), singletons);
  std::vector<NamedSummary> eligible;
  std::vector<SkippedGroup> skipped;
  detail::split_eligible(all, eligible, skipped);
  return detail::run_per_group(eligible, std::move(skipped), 1, [&](std::size_t j) {
    GroupInterval r;
    r.group = eligible[j].group;
    r.summary = eligible[j].summary;
    r.df = r.summary.n - 1.0;
    r.s2_used = r.summary.s2;
    r.hyper.mu = h.mu;
    r.hyper.tau2 = h.tau2;
    r.hyper.a = h.a;
    r.hyper.b = h.b;
    r.interval = eb_posterior_interval(r.summary, h.mu, h.tau2, alpha);
    return r;
  });
}

inline MultigroupResult eb_all(const GroupedData& data, double alpha) { return eb_all(summarize(data), alpha); }

}  // namespace fab
