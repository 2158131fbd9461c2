#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/inverse_gamma.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/gauss.hpp>

#include <cmath>
#include <random>

#include "fab/fab_t.hpp"
#include "fab/fab_z.hpp"

using namespace fab;
namespace bm = boost::math;

namespace {

const NormalInvGammaPrior kPrior{0.0, 1.0, 1.0, 10.0, 10};

// P(t_{alpha w} < T < t_{1-alpha(1-w)}) at theta under the prior, by a
// nested Gauss rule over sigma^2 and the chi-square variable in their
// probability scales, using Boost's quantiles.
double accept_prob_oracle(double w, double theta, const NormalInvGammaPrior& p, double alpha) {
  const double nu = p.n - 1.0;
  const bm::students_t td(nu);
  const double lo = bm::quantile(td, alpha * w), hi = bm::quantile(bm::complement(td, alpha * (1.0 - w)));
  const bm::inverse_gamma ig(p.a, p.b);
  const bm::chi_squared cs(nu);
  const bm::normal nd;
  auto inner = [&](double u) {
    const double s2 = bm::quantile(ig, u);
    const double sd = std::sqrt(s2 / p.n + p.tau2);
    auto f = [&](double v) {
      const double chi = bm::quantile(cs, v);
      const double se_hat = std::sqrt(s2 * chi / nu / p.n);
      return bm::cdf(nd, (hi * se_hat - (p.mu - theta)) / sd) - bm::cdf(nd, (lo * se_hat - (p.mu - theta)) / sd);
    };
    // split the unit interval to follow the quantile singularities
    return bm::quadrature::gauss<double, 30>::integrate(f, 0.0, 0.01) +
           bm::quadrature::gauss<double, 30>::integrate(f, 0.01, 0.99) +
           bm::quadrature::gauss<double, 30>::integrate(f, 0.99, 1.0);
  };
  double s = 0.0;
  const double cuts[] = {0.0, 1e-4, 0.01, 0.2, 0.5, 0.8, 0.99, 0.9999, 1.0};
  for (int i = 0; i < 8; ++i) s += bm::quadrature::gauss<double, 30>::integrate(inner, cuts[i], cuts[i + 1]);
  return s;
}

}  // namespace

TEST(FabT, ConstantHalfIsUmau) {
  for (double ybar : {-3.0, 0.0, 2.2}) {
    const Interval f = fab_t_interval(ybar, 2.5, 7, ConstantW(0.5, 0.05), 6.0);
    const Interval u = umau_t_interval(ybar, 2.5, 7, 6.0, 0.05);
    EXPECT_NEAR(f.lower, u.lower, 1e-12);
    EXPECT_NEAR(f.upper, u.upper, 1e-12);
  }
}

TEST(FabT, LargeDfPluginMatchesZ) {
  const HomoHierParams psi{0.0, 0.25, 1.0};
  for (double y : {-2.0, 0.0, 0.5, 3.0}) {
    const Interval t = fab_t_interval(y, 1.0, 1, PsiW(psi, 0.05), 1e6);
    const Interval z = fab_z_interval(y, psi, 0.05);
    EXPECT_NEAR(t.lower, z.lower, 1e-3);
    EXPECT_NEAR(t.upper, z.upper, 1e-3);
  }
}

TEST(FabT, AcceptProbMatchesOracle) {
  const BayesTObjective obj(kPrior, 0.05);
  for (double theta : {0.0, 1.0, -4.0}) {
    for (double w : {0.2, 0.5, 0.7}) {
      EXPECT_NEAR(obj.accept_prob(w, theta), accept_prob_oracle(w, theta, kPrior, 0.05), 2e-7)
          << "theta=" << theta << " w=" << w;
    }
  }
}

// tests/oracles/accept_prob_reference.py
TEST(FabT, AcceptProbSpotValues) {
  const BayesTObjective obj(kPrior, 0.05);
  EXPECT_NEAR(obj.accept_prob(0.7, 1.0), 0.768247846457879, 1e-8);
  EXPECT_NEAR(obj.accept_prob(0.7, -1.0), 0.8286372531336217, 1e-8);
}

TEST(FabT, WIsHalfAtMuAndMonotone) {
  const BayesTWFunction fast(kPrior, 0.05);
  EXPECT_NEAR(fast.value(0.0), 0.5, 1e-9);
  double prev = 0.0;
  for (double th = -6.0; th <= 6.0; th += 0.25) {
    const double w = fast.value(th);
    EXPECT_GE(w, prev - 1e-9) << th;
    prev = w;
  }
}

TEST(FabT, DirectRouteMatchesExactObjective) {
  const BayesTObjective obj(kPrior, 0.05);
  const BayesTWFunction fast(kPrior, 0.05);
  for (double theta : {-2.0, -0.5, 0.5, 1.0, 3.0}) {
    const double we = w_bayes_t(theta, obj, 1e-8);
    const double wf = fast.value(theta);
    EXPECT_NEAR(wf, we, 2e-4) << theta;
    // The objective is flat at the optimum: values agree much more tightly.
    EXPECT_NEAR(obj.accept_prob(wf, theta), obj.accept_prob(we, theta), 1e-7) << theta;
  }
}

TEST(FabT, TableIsMonotoneAndClamped) {
  const NormalInvGammaPrior p{0.0, 1.0, 1.0, 10.0, 10};
  const GridSpec grid{-6.0, 6.0, 25};
  const auto build = build_w_table_detailed(p, 0.05, {}, grid);
  const auto& v = build.table.values();
  for (std::size_t i = 1; i < v.size(); ++i) EXPECT_GE(v[i], v[i - 1]);
  for (double x : v) {
    EXPECT_GE(x, kWMin);
    EXPECT_LE(x, kWMax);
  }
  EXPECT_DOUBLE_EQ(build.table.value(-100.0), v.front());
  EXPECT_DOUBLE_EQ(build.table.value(100.0), v.back());
}

TEST(FabT, TableInterpolationAndRefinement) {
  const NormalInvGammaPrior p{0.0, 1.0, 1.0, 10.0, 10};
  const GridSpec grid = default_w_grid(p);
  const auto table = build_w_table(p, 0.05, QuadratureConfig{}, grid);
  const auto fine = build_w_table(p, 0.05, QuadratureConfig{}, GridSpec{grid.lo, grid.hi, 2 * grid.n - 1});
  const double h = (grid.hi - grid.lo) / (grid.n - 1.0);
  for (std::size_t i = 7; i + 1 < grid.n; i += 37) {
    const double mid = grid.at(i) + 0.5 * h;  // off-knot
    EXPECT_NEAR(table.value(mid), w_bayes_t(mid, p, 0.05), 1e-3) << mid;
    EXPECT_NEAR(table.value(mid), fine.value(mid), 1e-3) << mid;
  }
}

TEST(FabT, TableAndDirectIntervalsAgree) {
  const NormalInvGammaPrior p{0.0, 1.0, 1.0, 10.0, 10};
  const auto table = build_w_table(p, 0.05);
  const BayesTWFunction fast(p, 0.05);
  const double se = std::sqrt(8.0 / 10.0);
  for (double ybar : {-3.0, 0.0, 1.0, 4.0}) {
    const Interval a = fab_t_interval(ybar, 8.0, 10, table, 9.0, 0.0);
    const Interval b = fast.interval(ybar, 8.0);
    // a 1e-3 error in w moves an endpoint by about alpha 1e-3 / f(t) standard errors
    EXPECT_NEAR(a.lower, b.lower, 2e-3 * se) << ybar;
    EXPECT_NEAR(a.upper, b.upper, 2e-3 * se) << ybar;
  }
}

TEST(FabT, DirectIntervalAtMu) {
  const BayesTWFunction fast(kPrior, 0.05);
  const Interval iv = fast.interval(0.0, 8.0);
  EXPECT_NEAR(iv.lower, -iv.upper, 1e-9);
  EXPECT_LT(iv.width(), umau_t_interval(0.0, 8.0, 10, 9.0, 0.05).width());
}

TEST(FabT, GridOracleAgrees) {
  const BayesTWFunction fast(kPrior, 0.05);
  for (double ybar : {-2.5, 0.4, 3.0}) {
    const Interval iv = fast.interval(ybar, 6.0);
    const double se = std::sqrt(6.0 / 10.0);
    const GridSpec grid{iv.lower - 0.5, iv.upper + 0.5, 2001};
    const auto acc = invert_region_oracle(ybar, fast, se, StudentPivot{9.0}, grid);
    ASSERT_FALSE(acc.empty());
    const double h = (grid.hi - grid.lo) / (grid.n - 1.0);
    EXPECT_NEAR(acc.front(), iv.lower, h);
    EXPECT_NEAR(acc.back(), iv.upper, h);
  }
}

TEST(FabT, PluginWidthBound) {
  std::mt19937_64 eng(5);
  std::uniform_real_distribution<double> u(-5.0, 5.0), l(-2.0, 2.0);
  for (int i = 0; i < 200; ++i) {
    const int n = 2 + static_cast<int>(eng() % 20);
    const double ybar = u(eng), s2 = std::exp(l(eng)), tau2 = std::exp(l(eng));
    const HomoHierParams psi{0.0, tau2, s2 / n};
    const Interval iv = fab_t_interval(ybar, s2, n, PsiW(psi, 0.05), n - 1.0);
    const double tq = dist::t_quantile(0.975, n - 1.0);
    EXPECT_LT(iv.width(), std::fabs(ybar) + std::sqrt(s2 / n) * 2.0 * tq);
  }
}

TEST(FabT, RejectsBadInput) {
  EXPECT_THROW(umau_t_interval(0.0, -1.0, 5, 4.0, 0.05), DomainError);
  EXPECT_THROW(BayesTWFunction(NormalInvGammaPrior{0.0, 1.0, 1.0, 10.0, 1}, 0.05), DomainError);
  EXPECT_THROW(WFunctionTable({0.0, 1.0}, {0.6, 0.4}, 0.05), DomainError);
}
