#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "fab/distributions.hpp"
#include "fab/fab_t.hpp"
#include "fab/hierarchy.hpp"

using namespace fab;

namespace {

std::vector<GroupSummary> homo_data(int p, int n, double mu, double tau2, double sigma2, std::uint64_t seed) {
  dist::RngStream r(seed, 0);
  std::vector<GroupSummary> out;
  std::vector<double> y(static_cast<std::size_t>(n));
  for (int j = 0; j < p; ++j) {
    const double th = r.normal(mu, std::sqrt(tau2));
    for (double& v : y) v = r.normal(th, std::sqrt(sigma2));
    out.push_back(summarize(y));
  }
  return out;
}

}  // namespace

TEST(Summary, Basics) {
  const auto s = summarize(std::vector<double>{1.0, 2.0, 6.0});
  EXPECT_EQ(s.n, 3);
  EXPECT_DOUBLE_EQ(s.ybar, 3.0);
  EXPECT_DOUBLE_EQ(s.x2, 14.0);
  EXPECT_DOUBLE_EQ(s.s2, 7.0);
  EXPECT_THROW(summarize(std::vector<double>{}), DataError);
}

TEST(Levene, HandComputedExample) {
  const GroupedData d{{"a", {1, 2, 3}}, {"b", {4, 6, 8}}};
  const auto r = levene_test(d);
  EXPECT_NEAR(r.f, 0.8, 1e-14);
  EXPECT_EQ(r.df1, 1.0);
  EXPECT_EQ(r.df2, 4.0);
  EXPECT_NEAR(r.p_value, 0.42164825517619406, 1e-13);
}

TEST(Levene, SkipsSingletonsAndNeedsTwoGroups) {
  const GroupedData d{{"a", {1, 2, 3}}, {"b", {4, 6, 8}}, {"c", {5}}};
  EXPECT_EQ(levene_test(d).groups_used, 2);
  EXPECT_THROW(levene_test(GroupedData{{"a", {1, 2}}, {"b", {3}}}), DataError);
}

TEST(Moments, RecoversTruth) {
  const auto g = homo_data(5000, 10, 1.0, 0.5, 2.0, 1);
  const auto e = fit_moments(g);
  EXPECT_NEAR(e.mu, 1.0, 0.05);
  EXPECT_NEAR(e.tau2, 0.5, 0.05 * 0.5 * 2);
  EXPECT_NEAR(e.sigma2, 2.0, 0.05 * 2.0);
}

TEST(Moments, FloorWhenMeansUnderDispersed) {
  std::vector<GroupSummary> g;
  for (int j = 0; j < 4; ++j) g.push_back(summarize(std::vector<double>{0.0, 2.0, 4.0}));
  const auto e = fit_moments(g);
  EXPECT_DOUBLE_EQ(e.mu, 2.0);
  EXPECT_TRUE(e.tau2_at_floor);
  EXPECT_DOUBLE_EQ(e.tau2, kTau2FloorFactor * e.sigma2);
  EXPECT_THROW(fit_moments(std::vector<GroupSummary>{g[0]}), DataError);
}

TEST(HomoMle, RecoversTruthWithinThreeSe) {
  // p = 2000, n = 10.  Asymptotic SEs: sigma2 ~ sigma2 sqrt(2/(p(n-1))),
  // mu ~ sqrt((tau2 + sigma2/n)/p), tau2 ~ sqrt(2/p) (tau2 + sigma2/n).
  const double mu = 1.0, tau2 = 0.5, sigma2 = 2.0;
  const int p = 2000, n = 10;
  const auto g = homo_data(p, n, mu, tau2, sigma2, 2);
  const auto e = fit_homoscedastic_mle(g);
  const double v = tau2 + sigma2 / n;
  EXPECT_NEAR(e.mu, mu, 3.0 * std::sqrt(v / p));
  EXPECT_NEAR(e.sigma2, sigma2, 3.0 * sigma2 * std::sqrt(2.0 / (p * (n - 1.0))));
  EXPECT_NEAR(e.tau2, tau2, 3.0 * std::sqrt(2.0 / p) * v);
  for (std::size_t i = 1; i < e.trace.size(); ++i) EXPECT_GE(e.trace[i], e.trace[i - 1]);
}

TEST(HomoMle, IsAStationaryPoint) {
  const auto g = homo_data(60, 5, 0.0, 1.0, 1.0, 3);
  const auto e = fit_homoscedastic_mle(g);
  // Perturbing either variance component lowers the likelihood.
  auto ll = [&](double tau2, double sigma2) {
    double mu_num = 0, mu_den = 0;
    for (const auto& s : g) {
      const double w = 1.0 / (tau2 + sigma2 / s.n);
      mu_num += w * s.ybar;
      mu_den += w;
    }
    const double mu = mu_num / mu_den;
    double out = 0;
    for (const auto& s : g) {
      const double v = tau2 + sigma2 / s.n;
      out += -0.5 * (s.n - 1) * std::log(sigma2) - s.x2 / (2 * sigma2) - 0.5 * std::log(v) -
             (s.ybar - mu) * (s.ybar - mu) / (2 * v);
    }
    return out;
  };
  const double base = ll(e.tau2, e.sigma2);
  for (double f : {0.99, 1.01}) {
    EXPECT_LT(ll(e.tau2 * f, e.sigma2), base);
    EXPECT_LT(ll(e.tau2, e.sigma2 * f), base);
  }
}

TEST(HomoMle, ConstantData) {
  const GroupedData d{{"a", {3, 3, 3}}, {"b", {3, 3}}, {"c", {3, 3, 3, 3}}};
  const auto e = fit_homoscedastic_mle(d);
  EXPECT_DOUBLE_EQ(e.mu, 3.0);
  EXPECT_TRUE(e.tau2_at_floor);
  EXPECT_DOUBLE_EQ(e.tau2, kTau2FloorFactor * e.sigma2);
}

TEST(HomoMle, Preconditions) {
  EXPECT_THROW(fit_homoscedastic_mle(GroupedData{{"a", {1, 2}}}), DataError);
  EXPECT_THROW(fit_homoscedastic_mle(GroupedData{{"a", {1}}, {"b", {2}}}), DataError);
}

TEST(HomoMle, LocationScaleEquivariance) {
  const auto g = homo_data(40, 6, 0.0, 1.0, 1.0, 4);
  std::vector<GroupSummary> h = g;
  for (auto& s : h) {
    s.ybar = 3.0 * s.ybar + 7.0;
    s.x2 *= 9.0;
    s.s2 *= 9.0;
  }
  const auto a = fit_homoscedastic_mle(g), b = fit_homoscedastic_mle(h);
  EXPECT_NEAR(b.mu, 3.0 * a.mu + 7.0, 1e-6);
  EXPECT_NEAR(b.tau2, 9.0 * a.tau2, 1e-6 * b.tau2);
  EXPECT_NEAR(b.sigma2, 9.0 * a.sigma2, 1e-6 * b.sigma2);
}

TEST(GammaMml, RecoversShapeAndRate) {
  dist::RngStream r(9, 0);
  std::vector<GroupSummary> g;
  std::vector<double> y(10);
  for (int j = 0; j < 5000; ++j) {
    const double sd = 1.0 / std::sqrt(r.gamma(2.0, 5.0));
    for (double& v : y) v = r.normal(0.0, sd);
    g.push_back(summarize(y));
  }
  const auto f = fit_gamma_precision_mml(g);
  EXPECT_LE(f.grad_norm, 1e-6);
  // within 3 standard errors from the observed information
  const detail::GammaLik lik{g};
  double grad[2], h[2][2];
  lik.derivatives(f.a, f.b, grad, h);
  const double det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
  EXPECT_NEAR(f.a, 2.0, 3.0 * std::sqrt(-h[1][1] / det));
  EXPECT_NEAR(f.b, 5.0, 3.0 * std::sqrt(-h[0][0] / det));
  // Local maximum: +-1% perturbations lower the objective.
  for (double s : {0.99, 1.01}) {
    EXPECT_LT(lik.value(f.a * s, f.b), f.loglik);
    EXPECT_LT(lik.value(f.a, f.b * s), f.loglik);
  }
}

TEST(GammaMml, SharedVarianceConcentrates) {
  dist::RngStream r(10, 0);
  std::vector<GroupSummary> g;
  std::vector<double> y(10);
  for (int j = 0; j < 3000; ++j) {
    for (double& v : y) v = r.normal(0.0, 2.0);
    g.push_back(summarize(y));
  }
  const auto f = fit_gamma_precision_mml(g);
  EXPECT_GT(f.a, 100.0);
  EXPECT_NEAR(f.b / f.a, 4.0, 0.2);
}

TEST(GammaMml, DegenerateData) {
  std::vector<GroupSummary> g(3, summarize(std::vector<double>{1.0, 1.0, 1.0}));
  EXPECT_THROW(fit_gamma_precision_mml(g), DataError);
  EXPECT_THROW(fit_gamma_precision_mml(std::vector<GroupSummary>{summarize(std::vector<double>{1.0, 2.0})}), DataError);
}

TEST(EbVariances, Formula) {
  GroupSummary s;
  s.n = 10;
  s.x2 = 9.0;
  s.s2 = 1.0;
  EXPECT_DOUBLE_EQ(eb_variances(std::vector<GroupSummary>{s}, 1.0, 10.0)[0], (10.0 + 4.5) / (1.0 + 4.5));
  s.x2 = 0.0;
  EXPECT_DOUBLE_EQ(eb_variances(std::vector<GroupSummary>{s}, 1.0, 10.0)[0], 10.0 / 5.5);
  GroupSummary one;
  one.n = 1;
  EXPECT_DOUBLE_EQ(eb_variances(std::vector<GroupSummary>{one}, 3.0, 4.0)[0], 2.0);
  EXPECT_TRUE(std::isnan(eb_variances(std::vector<GroupSummary>{one}, 0.8, 4.0)[0]));
  EXPECT_TRUE(std::isnan(eb_variances(std::vector<GroupSummary>{one}, 3.0, 4.0, SingletonPolicy::exclude)[0]));
  EXPECT_THROW(eb_variances(std::vector<GroupSummary>{s}, 0.0, 1.0), DomainError);
}

TEST(EbVariances, LargeNFollowsData) {
  GroupSummary s;
  s.n = 100001;
  s.s2 = 3.0;
  s.x2 = 3.0 * 100000;
  EXPECT_NEAR(eb_variances(std::vector<GroupSummary>{s}, 2.0, 1.0)[0], 3.0, 1e-4);
}

TEST(Plugin, RecoversTruth) {
  const int p = 2000;
  const auto g = homo_data(p, 10, 1.0, 0.5, 2.0, 12);
  const std::vector<double> v(g.size(), 2.0);
  const auto f = fit_plugin_mu_tau(g, v);
  const double var = 0.5 + 0.2;
  EXPECT_NEAR(f.mu, 1.0, 3.0 * std::sqrt(var / p));
  EXPECT_NEAR(f.tau2, 0.5, 3.0 * std::sqrt(2.0 / p) * var);
  for (std::size_t i = 1; i < f.trace.size(); ++i) EXPECT_GE(f.trace[i], f.trace[i - 1]);
}

TEST(Plugin, EqualWeightsGiveUnweightedMean) {
  std::vector<GroupSummary> g;
  for (double m : {-4.0, 0.0, 1.0, 9.0}) {
    GroupSummary s;
    s.n = 4;
    s.ybar = m;
    s.s2 = 1.0;
    s.x2 = 3.0;
    g.push_back(s);
  }
  const auto f = fit_plugin_mu_tau(g, std::vector<double>(4, 1.0));
  EXPECT_NEAR(f.mu, 1.5, 1e-9);
}

TEST(Plugin, FloorWhenUnderDispersed) {
  std::vector<GroupSummary> g;
  for (double m : {0.0, 0.01, -0.01, 0.005}) {
    GroupSummary s;
    s.n = 4;
    s.ybar = m;
    s.s2 = 1.0;
    s.x2 = 3.0;
    g.push_back(s);
  }
  const auto f = fit_plugin_mu_tau(g, std::vector<double>(4, 1.0));
  EXPECT_TRUE(f.tau2_at_floor);
}

TEST(EbInterval, LimitsAndWidthRatio) {
  GroupSummary s;
  s.n = 8;
  s.ybar = 2.0;
  s.s2 = 3.0;
  s.x2 = 21.0;
  const Interval u = umau_t_interval(s.ybar, s.s2, s.n, 7.0, 0.05);
  const Interval wide = eb_posterior_interval(s, 0.0, 1e12, 0.05);
  EXPECT_NEAR(wide.lower, u.lower, 1e-9);
  EXPECT_NEAR(wide.upper, u.upper, 1e-9);
  const Interval tight = eb_posterior_interval(s, 0.0, 1e-12, 0.05);
  EXPECT_NEAR(0.5 * (tight.lower + tight.upper), 0.0, 1e-9);
  EXPECT_LT(tight.width(), 1e-5);
  for (double tau2 : {0.01, 0.3, 2.0, 50.0}) {
    const Interval e = eb_posterior_interval(s, 0.0, tau2, 0.05);
    EXPECT_NEAR(e.width() / u.width(), std::sqrt(tau2 / (tau2 + s.s2 / s.n)), 1e-12);
    EXPECT_LT(e.width(), u.width());
  }
  GroupSummary one;
  one.n = 1;
  EXPECT_THROW(eb_posterior_interval(one, 0.0, 1.0, 0.05), DataError);
}

TEST(Estimators, RelabelingInvariance) {
  const auto g = homo_data(30, 6, 0.0, 1.0, 1.0, 13);
  auto h = g;
  std::reverse(h.begin(), h.end());
  const auto a = fit_gamma_precision_mml(g), b = fit_gamma_precision_mml(h);
  EXPECT_NEAR(a.a, b.a, 1e-8 * a.a);
  EXPECT_NEAR(a.b, b.b, 1e-8 * a.b);
  const auto m1 = fit_homoscedastic_mle(g), m2 = fit_homoscedastic_mle(h);
  EXPECT_NEAR(m1.tau2, m2.tau2, 1e-8);
}
