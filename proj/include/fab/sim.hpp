#pragma once

// Monte Carlo studies: per-group coverage and width of the multigroup
// procedures under fixed group means and variances, and risk (expected
// width) curves for the single-group intervals.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fab/data.hpp"
#include "fab/distributions.hpp"
#include "fab/error.hpp"
#include "fab/fab_t.hpp"
#include "fab/fab_z.hpp"
#include "fab/multigroup.hpp"
#include "fab/numerics.hpp"
#include "fab/parallel.hpp"

namespace fab::sim {

enum class Procedure { umau, fab_hetero, eb, fab_homo };

inline const char* procedure_name(Procedure p) {
  switch (p) {
    case Procedure::umau: return "umau";
    case Procedure::fab_hetero: return "fab-hetero";
    case Procedure::eb: return "eb";
    case Procedure::fab_homo: return "fab-homo";
  }
  return "?";
}

inline Procedure parse_procedure(const std::string& s) {
  for (Procedure p : {Procedure::umau, Procedure::fab_hetero, Procedure::eb, Procedure::fab_homo})
    if (s == procedure_name(p)) return p;
  throw DomainError("unknown procedure '" + s + "'");
}

// Fixed group means, variances and sizes.
struct Truth {
  std::vector<std::string> groups;
  std::vector<int> n;
  std::vector<double> theta;
  std::vector<double> sigma2;

  std::size_t size() const { return groups.size(); }
  void validate() const {
    const std::size_t p = groups.size();
    if (p == 0) throw DomainError("truth: no groups");
    if (n.size() != p || theta.size() != p || sigma2.size() != p) throw DomainError("truth: size mismatch");
    for (std::size_t j = 0; j < p; ++j) {
      if (n[j] < 1) throw DomainError("truth: group sizes must be positive");
      if (!std::isfinite(theta[j])) throw DomainError("truth: means must be finite");
      if (!(sigma2[j] > 0.0) || !std::isfinite(sigma2[j])) throw DomainError("truth: variances must be positive");
    }
  }
};

// theta_j = ybar_j and sigma2_j = s2_j.  Groups of size one get the pooled
// within-group variance.
inline Truth truth_from_data(const GroupedData& data) {
  Truth t;
  numerics::CompensatedSum x2;
  double df = 0.0;
  const auto sums = summarize(data);
  for (const auto& g : sums) {
    x2.add(g.summary.x2);
    df += g.summary.n - 1.0;
  }
  if (!(df > 0.0) || !(x2.value() > 0.0)) throw DataError("truth_from_data: no within-group variation");
  const double pooled = x2.value() / df;
  for (const auto& g : sums) {
    t.groups.push_back(g.group);
    t.n.push_back(g.summary.n);
    t.theta.push_back(g.summary.ybar);
    t.sigma2.push_back(g.summary.n >= 2 && g.summary.s2 > 0.0 ? g.summary.s2 : pooled);
  }
  return t;
}

struct SimConfig {
  Truth truth;
  int reps = 2000;
  std::uint64_t seed = 1;
  std::vector<Procedure> procedures{Procedure::umau, Procedure::fab_hetero, Procedure::eb};
  double alpha = 0.05;
  HeteroOptions hetero;
  HomoOptions homo;
  std::size_t threads = parallel::thread_count();

  void validate() const {
    truth.validate();
    if (reps < 1) throw DomainError("reps must be at least 1");
    if (procedures.empty()) throw DomainError("at least one procedure is required");
    check_alpha(alpha);
  }
};

struct ProcedureStats {
  Procedure procedure = Procedure::umau;
  std::vector<long> covered;     // per group
  std::vector<long> count;       // replications with an interval
  std::vector<long> fallbacks;   // intervals degraded to UMAU
  std::vector<double> mean_width;
  long failed_reps = 0;          // replications where the whole procedure failed

  double coverage(std::size_t j) const {
    return count[j] > 0 ? static_cast<double>(covered[j]) / count[j] : std::numeric_limits<double>::quiet_NaN();
  }
  double coverage_se(std::size_t j) const {
    const double c = coverage(j);
    return std::sqrt(c * (1.0 - c) / count[j]);
  }
  // Averages over groups that received intervals.
  double average_coverage() const {
    numerics::CompensatedSum s;
    int m = 0;
    for (std::size_t j = 0; j < count.size(); ++j)
      if (count[j] > 0) {
        s.add(coverage(j));
        ++m;
      }
    return m ? s.value() / m : std::numeric_limits<double>::quiet_NaN();
  }
  double average_width() const {
    numerics::CompensatedSum s;
    int m = 0;
    for (std::size_t j = 0; j < count.size(); ++j)
      if (count[j] > 0) {
        s.add(mean_width[j]);
        ++m;
      }
    return m ? s.value() / m : std::numeric_limits<double>::quiet_NaN();
  }
};

struct HomogeneityTest {
  double statistic = 0.0;
  double df = 0.0;
  double p_value = 1.0;
};

// Pearson chi-square test that all groups share one coverage rate.
inline HomogeneityTest coverage_homogeneity(const ProcedureStats& s) {
  long cov = 0, tot = 0;
  int groups = 0;
  for (std::size_t j = 0; j < s.count.size(); ++j)
    if (s.count[j] > 0) {
      cov += s.covered[j];
      tot += s.count[j];
      ++groups;
    }
  HomogeneityTest t;
  if (groups < 2 || cov == 0 || cov == tot) return t;
  const double c = static_cast<double>(cov) / tot;
  numerics::CompensatedSum chi;
  for (std::size_t j = 0; j < s.count.size(); ++j) {
    if (s.count[j] == 0) continue;
    const double e1 = s.count[j] * c, e0 = s.count[j] * (1.0 - c);
    const double o1 = s.covered[j], o0 = s.count[j] - o1;
    chi.add((o1 - e1) * (o1 - e1) / e1 + (o0 - e0) * (o0 - e0) / e0);
  }
  t.statistic = chi.value();
  t.df = groups - 1.0;
  t.p_value = dist::gamma_pq(0.5 * t.df, 0.5 * t.statistic).upper;
  return t;
}

struct SimResult {
  std::vector<std::string> groups;
  std::vector<int> n;
  std::vector<double> theta;
  std::vector<ProcedureStats> procedures;
  int reps = 0;
  std::uint64_t seed = 0;
  double seconds = 0.0;
};

// Draws one data set from the truth with the stream for replication `rep`.
inline std::vector<NamedSummary> draw_dataset(const Truth& truth, std::uint64_t seed, std::uint64_t rep) {
  dist::RngStream rng(seed, rep);
  std::vector<NamedSummary> out(truth.size());
  std::vector<double> y;
  for (std::size_t j = 0; j < truth.size(); ++j) {
    y.resize(static_cast<std::size_t>(truth.n[j]));
    const double sd = std::sqrt(truth.sigma2[j]);
    for (double& v : y) v = rng.normal(truth.theta[j], sd);
    out[j] = {truth.groups[j], summarize(y)};
  }
  return out;
}

inline MultigroupResult run_procedure(Procedure p, const std::vector<NamedSummary>& data, double alpha,
                                      const HeteroOptions& hetero, const HomoOptions& homo) {
  switch (p) {
    case Procedure::umau: return umau_all(data, alpha);
    case Procedure::fab_hetero: return fab_heteroscedastic(data, alpha, hetero);
    case Procedure::eb: return eb_all(data, alpha, hetero.singletons);
    case Procedure::fab_homo: return fab_homoscedastic(data, alpha, homo);
  }
  throw DomainError("unknown procedure");
}

// Replications run in parallel; each writes its own slot and the reduction
// runs in replication order, so results do not depend on the thread count.
inline SimResult simulate_study(const SimConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t p = cfg.truth.size(), np = cfg.procedures.size();
  const std::size_t R = static_cast<std::size_t>(cfg.reps);

  // Per replication, procedure and group: width (NaN = no interval),
  // containment, fallback flag.  A failed procedure has all widths NaN and
  // failed[] set.
  std::vector<double> width(R * np * p, std::numeric_limits<double>::quiet_NaN());
  std::vector<unsigned char> hit(R * np * p, 0), fell(R * np * p, 0), failed(R * np, 0);

  HeteroOptions hetero = cfg.hetero;
  HomoOptions homo = cfg.homo;
  hetero.threads = 1;
  homo.threads = 1;

  parallel::parallel_for(
      R,
      [&](std::size_t r) {
        const auto data = draw_dataset(cfg.truth, cfg.seed, r);
        for (std::size_t k = 0; k < np; ++k) {
          MultigroupResult res;
          try {
            res = run_procedure(cfg.procedures[k], data, cfg.alpha, hetero, homo);
          } catch (const Error&) {
            failed[r * np + k] = 1;
            continue;
          }
          // Intervals come back in identifier order, as does the truth.
          std::size_t j = 0;
          for (const auto& gi : res.intervals) {
            while (j < p && cfg.truth.groups[j] != gi.group) ++j;
            if (j == p) break;
            const std::size_t at = (r * np + k) * p + j;
            width[at] = gi.interval.width();
            hit[at] = gi.interval.contains(cfg.truth.theta[j]) ? 1 : 0;
            fell[at] = gi.fallback.empty() ? 0 : 1;
          }
        }
      },
      cfg.threads);

  SimResult out;
  out.groups = cfg.truth.groups;
  out.n = cfg.truth.n;
  out.theta = cfg.truth.theta;
  out.reps = cfg.reps;
  out.seed = cfg.seed;
  for (std::size_t k = 0; k < np; ++k) {
    ProcedureStats s;
    s.procedure = cfg.procedures[k];
    s.covered.assign(p, 0);
    s.count.assign(p, 0);
    s.fallbacks.assign(p, 0);
    s.mean_width.assign(p, std::numeric_limits<double>::quiet_NaN());
    std::vector<numerics::CompensatedSum> wsum(p);
    for (std::size_t r = 0; r < R; ++r) {
      if (failed[r * np + k]) {
        ++s.failed_reps;
        continue;
      }
      for (std::size_t j = 0; j < p; ++j) {
        const std::size_t at = (r * np + k) * p + j;
        if (std::isnan(width[at])) continue;
        ++s.count[j];
        s.covered[j] += hit[at];
        s.fallbacks[j] += fell[at];
        wsum[j].add(width[at]);
      }
    }
    for (std::size_t j = 0; j < p; ++j)
      if (s.count[j] > 0) s.mean_width[j] = wsum[j].value() / s.count[j];
    out.procedures.push_back(std::move(s));
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

// ---------------------------------------------------------------------------
// Risk curves
// ---------------------------------------------------------------------------

struct RiskRow {
  double theta = 0.0;
  double fab = 0.0;     // expected width of the FAB interval
  double fab_se = 0.0;  // Monte Carlo standard error (0 for quadrature)
  double umau = 0.0;    // expected width of the UMAU interval
};

inline std::vector<double> linear_grid(double lo, double hi, std::size_t n) {
  if (n == 0) throw DomainError("grid needs at least one point");
  if (n == 1) return {lo};
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = lo + (hi - lo) * static_cast<double>(i) / (n - 1.0);
  return g;
}

// Expected widths of the FAB z-interval by quadrature.
inline std::vector<RiskRow> risk_curve_z(const HomoHierParams& psi, double alpha, const std::vector<double>& thetas,
                                         std::size_t nodes = 201) {
  psi.validate();
  check_alpha(alpha);
  const double umau = 2.0 * std::sqrt(psi.sigma2_eff) * dist::std_normal_quantile(1.0 - 0.5 * alpha);
  std::vector<RiskRow> rows(thetas.size());
  parallel::parallel_for(thetas.size(), [&](std::size_t i) {
    if (!std::isfinite(thetas[i])) throw DomainError("risk_curve_z: grid must be finite");
    rows[i] = {thetas[i], fab_z_expected_width(thetas[i], psi, alpha, nodes), 0.0, umau};
  });
  return rows;
}

// Monte Carlo cross-check of one point of the z risk curve.
inline RiskRow risk_point_z_mc(const HomoHierParams& psi, double alpha, double theta, int draws, std::uint64_t seed) {
  psi.validate();
  dist::RngStream rng(seed, 0);
  const double sd = std::sqrt(psi.sigma2_eff);
  numerics::CompensatedSum s, s2;
  for (int i = 0; i < draws; ++i) {
    const double w = fab_z_interval(rng.normal(theta, sd), psi, alpha).width();
    s.add(w);
    s2.add(w * w);
  }
  const double m = s.value() / draws;
  const double var = std::max(0.0, s2.value() / draws - m * m);
  return {theta, m, std::sqrt(var / draws), 2.0 * sd * dist::std_normal_quantile(1.0 - 0.5 * alpha)};
}

// Expected widths of a t-interval procedure by Monte Carlo over (ybar, s2).
// sigma2 is drawn from the prior (marginal risk) unless fixed_sigma2 is
// given.  interval(ybar, s2) returns the FAB interval; the UMAU width is
// computed on the same draws.
inline std::vector<RiskRow> risk_curve_t(const std::function<Interval(double, double)>& interval,
                                         const NormalInvGammaPrior& prior, double alpha,
                                         const std::vector<double>& thetas, int reps, std::uint64_t seed,
                                         double fixed_sigma2 = std::numeric_limits<double>::quiet_NaN(),
                                         std::size_t threads = parallel::thread_count()) {
  prior.validate();
  check_alpha(alpha);
  if (reps < 2) throw DomainError("risk_curve_t: need at least two replications");
  const int n = prior.n;
  const double nu = n - 1.0;
  const double tq = dist::t_quantile(1.0 - 0.5 * alpha, nu);
  std::vector<RiskRow> rows(thetas.size());
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    const double theta = thetas[i];
    if (!std::isfinite(theta)) throw DomainError("risk_curve_t: grid must be finite");
    std::vector<double> fw(static_cast<std::size_t>(reps)), uw(static_cast<std::size_t>(reps));
    parallel::parallel_for(
        static_cast<std::size_t>(reps),
        [&](std::size_t r) {
          dist::RngStream rng(seed, (static_cast<std::uint64_t>(i) << 32) | r);
          const double sigma2 = std::isnan(fixed_sigma2) ? 1.0 / rng.gamma(prior.a, prior.b) : fixed_sigma2;
          const double ybar = rng.normal(theta, std::sqrt(sigma2 / n));
          const double s2 = sigma2 * rng.chi_square(nu) / nu;
          fw[r] = interval(ybar, s2).width();
          uw[r] = 2.0 * tq * std::sqrt(s2 / n);
        },
        threads);
    numerics::CompensatedSum s, ss, u;
    for (int r = 0; r < reps; ++r) {
      s.add(fw[r]);
      ss.add(fw[r] * fw[r]);
      u.add(uw[r]);
    }
    const double m = s.value() / reps;
    const double var = std::max(0.0, (ss.value() - reps * m * m) / (reps - 1.0));
    rows[i] = {theta, m, std::sqrt(var / reps), u.value() / reps};
  }
  return rows;
}

}  // namespace fab::sim
