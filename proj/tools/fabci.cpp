// fabci: command-line front end for the FAB interval library.
//
//   fabci estimate   --input data.csv [--model homo|hetero]
//   fabci interval   --method M [--input data.csv | --y/--ybar/--s2/--n ...]
//   fabci simulate   --input data.csv --reps R --seed S --out DIR
//   fabci risk-curve --kind z|t --grid lo:hi:count ...
//
// Exit codes: 0 success, 2 usage or parse error, 3 numerical
// non-convergence, 4 inadequate data.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fab/fab.hpp"

namespace {

using json = nlohmann::ordered_json;
using fab::io::fmt;

constexpr int kExitUsage = 2;
constexpr int kExitConvergence = 3;
constexpr int kExitData = 4;

struct UsageError : fab::Error {
  using fab::Error::Error;
};

// JSON numbers keep full precision; non-finite values become null.
json jnum(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void emit(const std::string& text, const std::string& out) {
  if (out.empty() || out == "-")
    std::cout << text;
  else
    fab::io::write_atomic(out, text);
}

std::vector<double> parse_grid(const std::string& spec) {
  if (spec.empty()) throw UsageError("--grid is required");
  std::vector<double> vals;
  if (spec.find(':') != std::string::npos) {
    std::stringstream ss(spec);
    std::string a, b, c;
    if (!std::getline(ss, a, ':') || !std::getline(ss, b, ':') || !std::getline(ss, c))
      throw UsageError("--grid expects lo:hi:count");
    try {
      const int n = std::stoi(c);
      if (n < 1) throw UsageError("--grid count must be positive");
      return fab::sim::linear_grid(std::stod(a), std::stod(b), static_cast<std::size_t>(n));
    } catch (const std::logic_error&) {
      throw UsageError("--grid expects lo:hi:count");
    }
  }
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      vals.push_back(std::stod(item));
    } catch (const std::logic_error&) {
      throw UsageError("bad --grid value '" + item + "'");
    }
  }
  return vals;
}

struct Args {
  std::string input, out, method, model = "homo", kind = "z", format = "csv", procedures = "umau,fab-hetero,eb";
  std::string grid;
  double alpha = 0.05;
  std::optional<double> mu, tau2, sigma2, a, b, y, ybar, s2;
  std::optional<int> n, p1;
  int reps = 2000;
  std::uint64_t seed = 1;
  int quad_nodes = 41;
  bool w_table = false, mle = false;
};

template <class T>
T need(const std::optional<T>& v, const char* flag, const std::string& method) {
  if (!v) throw UsageError(std::string("--") + flag + " is required for " + method);
  return *v;
}

fab::QuadratureConfig quad_from(const Args& a) {
  fab::QuadratureConfig q;
  q.n_nodes = a.quad_nodes;
  q.n_chi_nodes = a.quad_nodes;
  q.validate();
  return q;
}

// ---------------------------------------------------------------------------

int cmd_estimate(const Args& args) {
  if (args.input.empty()) throw UsageError("--input is required");
  const auto data = fab::io::read_grouped_csv(args.input);
  const auto sums = fab::summarize(data);
  json j;
  j["groups"] = sums.size();
  std::size_t total = 0;
  for (const auto& g : sums) total += static_cast<std::size_t>(g.summary.n);
  j["observations"] = total;
  if (args.model == "homo") {
    const auto e = fab::fit_homoscedastic_mle(fab::summaries_only(sums));
    j["model"] = "homo";
    j["mu"] = jnum(e.mu);
    j["tau2"] = jnum(e.tau2);
    j["sigma2"] = jnum(e.sigma2);
    j["loglik"] = jnum(e.loglik);
    j["iterations"] = e.iterations;
    j["tau2_at_floor"] = e.tau2_at_floor;
  } else if (args.model == "hetero") {
    const auto all = fab::summaries_only(sums);
    const auto g = fab::fit_gamma_precision_mml(all);
    const auto v = fab::eb_variances(all, g.a, g.b);
    const auto pf = fab::fit_plugin_mu_tau(all, v);
    j["model"] = "hetero";
    j["mu"] = jnum(pf.mu);
    j["tau2"] = jnum(pf.tau2);
    j["a"] = jnum(g.a);
    j["b"] = jnum(g.b);
    j["a_at_cap"] = g.a_at_cap;
  } else {
    throw UsageError("--model must be homo or hetero");
  }
  try {
    const auto lv = fab::levene_test(data);
    j["levene"] = {{"F", jnum(lv.f)}, {"p_value", jnum(lv.p_value)}, {"df1", lv.df1}, {"df2", lv.df2}};
  } catch (const fab::DataError& e) {
    j["levene"] = nullptr;
  }
  emit(j.dump(2) + "\n", args.out);
  return 0;
}

// ---------------------------------------------------------------------------

struct Row {
  std::string group;
  int n;
  double ybar, s2, lower, upper, df;
  std::string_view method;
};

std::string render(const std::vector<Row>& rows, const std::vector<fab::SkippedGroup>& skipped,
                   const std::string& format) {
  if (format == "json") {
    json j;
    j["intervals"] = json::array();
    for (const auto& r : rows)
      j["intervals"].push_back({{"group", r.group},
                                {"n", r.n},
                                {"ybar", jnum(r.ybar)},
                                {"s2", jnum(r.s2)},
                                {"lower", jnum(r.lower)},
                                {"upper", jnum(r.upper)},
                                {"width", jnum(r.upper - r.lower)},
                                {"method", std::string(r.method)},
                                {"df", jnum(r.df)}});
    j["skipped"] = json::array();
    for (const auto& s : skipped) j["skipped"].push_back({{"group", s.group}, {"reason", s.reason}});
    return j.dump(2) + "\n";
  }
  if (format != "csv") throw UsageError("--format must be csv or json");
  std::string s = "group,n,ybar,s2,lower,upper,width,method,df\n";
  for (const auto& r : rows)
    s += r.group + "," + std::to_string(r.n) + "," + fmt(r.ybar) + "," + fmt(r.s2) + "," + fmt(r.lower) + "," +
         fmt(r.upper) + "," + fmt(r.upper - r.lower) + "," + std::string(r.method) + "," + fmt(r.df) + "\n";
  return s;
}

Row row_from(const fab::GroupInterval& g) {
  return {g.group, g.summary.n, g.summary.ybar, g.summary.s2, g.interval.lower, g.interval.upper, g.df,
          fab::method_name(g.interval.method)};
}

int cmd_interval(const Args& args) {
  const std::string& m = args.method;
  if (m.empty()) throw UsageError("--method is required");
  fab::check_alpha(args.alpha);
  std::vector<Row> rows;
  std::vector<fab::SkippedGroup> skipped;

  if (m == "fab-z") {
    const double y = args.y ? *args.y : need(args.ybar, "y", m);
    const fab::HomoHierParams psi{need(args.mu, "mu", m), need(args.tau2, "tau2", m), need(args.sigma2, "sigma2", m)};
    const auto iv = fab::fab_z_interval(y, psi, args.alpha);
    rows.push_back({"y", 1, y, psi.sigma2_eff, iv.lower, iv.upper, std::numeric_limits<double>::infinity(),
                    fab::method_name(iv.method)});
  } else if (m == "fab-t") {
    const int n = need(args.n, "n", m);
    const fab::NormalInvGammaPrior prior{need(args.mu, "mu", m), need(args.tau2, "tau2", m), need(args.a, "a", m),
                                         need(args.b, "b", m), n};
    const double ybar = need(args.ybar, "ybar", m), s2 = need(args.s2, "s2", m);
    fab::Interval iv;
    if (args.w_table) {
      const auto table = fab::build_w_table(prior, args.alpha, quad_from(args));
      iv = fab::fab_t_interval(ybar, s2, n, table, n - 1.0, prior.mu);
    } else {
      iv = fab::BayesTWFunction(prior, args.alpha, quad_from(args)).interval(ybar, s2);
    }
    rows.push_back({"y", n, ybar, s2, iv.lower, iv.upper, n - 1.0, fab::method_name(iv.method)});
  } else if (m == "umau" && args.input.empty()) {
    const int n = need(args.n, "n", m);
    const double ybar = need(args.ybar, "ybar", m), s2 = need(args.s2, "s2", m);
    const auto iv = fab::umau_t_interval(ybar, s2, n, n - 1.0, args.alpha);
    rows.push_back({"y", n, ybar, s2, iv.lower, iv.upper, n - 1.0, fab::method_name(iv.method)});
  } else if (m == "umau" || m == "eb" || m == "fab-homo" || m == "fab-hetero") {
    if (args.input.empty()) throw UsageError("--input is required for " + m);
    const auto sums = fab::summarize(fab::io::read_grouped_csv(args.input));
    fab::MultigroupResult res;
    if (m == "umau") {
      res = fab::umau_all(sums, args.alpha);
    } else if (m == "eb") {
      res = fab::eb_all(sums, args.alpha);
    } else if (m == "fab-homo") {
      fab::HomoOptions o;
      if (args.p1) o.p1.fixed = *args.p1;
      if (args.mle) o.estimator = fab::HomoEstimator::mle;
      res = fab::fab_homoscedastic(sums, args.alpha, o);
    } else {
      fab::HeteroOptions o;
      o.quad = quad_from(args);
      o.use_table = args.w_table;
      res = fab::fab_heteroscedastic(sums, args.alpha, o);
    }
    for (const auto& g : res.intervals) {
      rows.push_back(row_from(g));
      if (!g.fallback.empty()) skipped.push_back({g.group, "fell back to umau: " + g.fallback});
    }
    for (const auto& s : res.skipped) skipped.push_back(s);
  } else {
    throw UsageError("unknown method '" + m + "' (fab-z, fab-t, fab-homo, fab-hetero, umau, eb)");
  }
  emit(render(rows, skipped, args.format), args.out);
  if (args.format == "csv")
    for (const auto& s : skipped) std::cerr << "skipped " << s.group << ": " << s.reason << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_simulate(const Args& args) {
  if (args.input.empty()) throw UsageError("--input is required");
  if (args.out.empty()) throw UsageError("--out DIR is required");
  fab::sim::SimConfig cfg;
  cfg.truth = fab::sim::truth_from_data(fab::io::read_grouped_csv(args.input));
  cfg.reps = args.reps;
  cfg.seed = args.seed;
  cfg.alpha = args.alpha;
  cfg.hetero.quad = quad_from(args);
  cfg.hetero.use_table = args.w_table;
  if (args.p1) cfg.homo.p1.fixed = *args.p1;
  cfg.procedures.clear();
  std::stringstream ss(args.procedures);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      cfg.procedures.push_back(fab::sim::parse_procedure(item));
    } catch (const fab::DomainError& e) {
      throw UsageError(e.what());
    }
  }
  const auto res = fab::sim::simulate_study(cfg);

  std::filesystem::create_directories(args.out);
  std::string cov = "group,n,theta,procedure,coverage,coverage_se,mean_width,count,fallbacks\n";
  json summary;
  summary["reps"] = res.reps;
  summary["seed"] = res.seed;
  summary["alpha"] = cfg.alpha;
  summary["groups"] = res.groups.size();
  summary["procedures"] = json::array();
  bool study_failed = false;
  for (const auto& s : res.procedures) {
    for (std::size_t j = 0; j < res.groups.size(); ++j) {
      if (s.count[j] == 0) continue;
      cov += res.groups[j] + "," + std::to_string(res.n[j]) + "," + fmt(res.theta[j]) + "," +
             fab::sim::procedure_name(s.procedure) + "," + fmt(s.coverage(j)) + "," + fmt(s.coverage_se(j)) + "," +
             fmt(s.mean_width[j]) + "," + std::to_string(s.count[j]) + "," + std::to_string(s.fallbacks[j]) + "\n";
    }
    const auto h = fab::sim::coverage_homogeneity(s);
    summary["procedures"].push_back({{"procedure", fab::sim::procedure_name(s.procedure)},
                                     {"average_coverage", jnum(s.average_coverage())},
                                     {"average_width", jnum(s.average_width())},
                                     {"failed_reps", s.failed_reps},
                                     {"homogeneity_chi2", jnum(h.statistic)},
                                     {"homogeneity_df", h.df},
                                     {"homogeneity_p_value", jnum(h.p_value)}});
    if (s.failed_reps == res.reps) study_failed = true;
  }
  const std::filesystem::path dir(args.out);
  fab::io::write_atomic(dir / "coverage.csv", cov);
  fab::io::write_atomic(dir / "summary.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << "\n";
  if (study_failed) {
    std::cerr << "error: a procedure failed in every replication\n";
    return kExitData;
  }
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_risk_curve(const Args& args) {
  fab::check_alpha(args.alpha);
  const auto grid = parse_grid(args.grid);
  std::string out;
  if (args.kind == "z") {
    const fab::HomoHierParams psi{need(args.mu, "mu", "z"), need(args.tau2, "tau2", "z"),
                                  need(args.sigma2, "sigma2", "z")};
    const auto rows = fab::sim::risk_curve_z(psi, args.alpha, grid);
    out = "theta,expected_width_fab,expected_width_umau,mc_width_fab,mc_se\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      out += fmt(r.theta) + "," + fmt(r.fab) + "," + fmt(r.umau);
      if (args.reps > 1) {
        const auto mc = fab::sim::risk_point_z_mc(psi, args.alpha, r.theta, args.reps, args.seed + i);
        out += "," + fmt(mc.fab) + "," + fmt(mc.fab_se) + "\n";
      } else {
        out += ",,\n";
      }
    }
  } else if (args.kind == "t") {
    const int n = need(args.n, "n", "t");
    const fab::NormalInvGammaPrior prior{need(args.mu, "mu", "t"), need(args.tau2, "tau2", "t"), need(args.a, "a", "t"),
                                         need(args.b, "b", "t"), n};
    std::function<fab::Interval(double, double)> iv;
    std::optional<fab::WFunctionTable> table;
    std::optional<fab::BayesTWFunction> direct;
    if (args.w_table) {
      table.emplace(fab::build_w_table(prior, args.alpha, quad_from(args)));
      iv = [&](double yb, double s2) { return fab::fab_t_interval(yb, s2, n, *table, n - 1.0, prior.mu); };
    } else {
      direct.emplace(prior, args.alpha, quad_from(args));
      iv = [&](double yb, double s2) { return direct->interval(yb, s2); };
    }
    const double fixed = args.sigma2 ? *args.sigma2 : std::numeric_limits<double>::quiet_NaN();
    const auto rows = fab::sim::risk_curve_t(iv, prior, args.alpha, grid, args.reps, args.seed, fixed);
    out = "theta,expected_width_fab,se_fab,expected_width_umau\n";
    for (const auto& r : rows) out += fmt(r.theta) + "," + fmt(r.fab) + "," + fmt(r.fab_se) + "," + fmt(r.umau) + "\n";
  } else {
    throw UsageError("--kind must be z or t");
  }
  emit(out, args.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FAB confidence intervals for grouped data"};
  app.require_subcommand(1);
  Args args;

  auto common = [&](CLI::App* c) {
    c->add_option("--alpha", args.alpha, "error rate")->capture_default_str();
    c->add_option("--out", args.out, "output file (directory for simulate); stdout if omitted");
  };
  auto hyper = [&](CLI::App* c) {
    c->add_option("--mu", args.mu, "prior mean of the group means");
    c->add_option("--tau2", args.tau2, "prior variance of the group means");
    c->add_option("--a", args.a, "gamma shape for 1/sigma^2");
    c->add_option("--b", args.b, "gamma rate for 1/sigma^2");
    c->add_option("--n", args.n, "group sample size");
    c->add_option("--quad-nodes", args.quad_nodes, "quadrature nodes for the t w-function")->capture_default_str();
    c->add_flag("--w-table", args.w_table, "tabulate w on a grid with isotonic projection");
  };

  auto* est = app.add_subcommand("estimate", "hyperparameter estimates and Levene's test");
  est->add_option("--input", args.input, "CSV file with columns group,value")->required();
  est->add_option("--model", args.model, "homo or hetero")->capture_default_str();
  est->add_option("--out", args.out, "output file");

  auto* itv = app.add_subcommand("interval", "confidence intervals");
  common(itv);
  hyper(itv);
  itv->add_option("--method", args.method, "fab-z, fab-t, fab-homo, fab-hetero, umau, eb")->required();
  itv->add_option("--input", args.input, "CSV file with columns group,value");
  itv->add_option("--sigma2", args.sigma2, "sampling variance of y (fab-z)");
  itv->add_option("--y", args.y, "estimate (fab-z)");
  itv->add_option("--ybar", args.ybar, "sample mean");
  itv->add_option("--s2", args.s2, "sample variance");
  itv->add_option("--p1", args.p1, "groups in each variance pool (fab-homo)");
  itv->add_flag("--mle", args.mle, "maximum likelihood for the fab-homo hyperparameters");
  itv->add_option("--format", args.format, "csv or json")->capture_default_str();
  itv->add_option("--seed", args.seed, "accepted for symmetry with simulate; intervals are deterministic");

  auto* sim = app.add_subcommand("simulate", "coverage and width study with theta = ybar, sigma2 = s2");
  common(sim);
  sim->add_option("--input", args.input, "CSV file with columns group,value")->required();
  sim->add_option("--reps", args.reps, "replications")->capture_default_str();
  sim->add_option("--seed", args.seed, "random seed")->capture_default_str();
  sim->add_option("--procedures", args.procedures, "comma-separated: umau, fab-hetero, eb, fab-homo")
      ->capture_default_str();
  sim->add_option("--quad-nodes", args.quad_nodes, "quadrature nodes")->capture_default_str();
  sim->add_option("--p1", args.p1, "groups in each variance pool (fab-homo)");
  sim->add_flag("--w-table", args.w_table, "tabulated w-functions");

  auto* risk = app.add_subcommand("risk-curve", "expected width as a function of theta");
  common(risk);
  hyper(risk);
  risk->add_option("--kind", args.kind, "z or t")->capture_default_str();
  risk->add_option("--sigma2", args.sigma2, "sampling variance (z); fixed sigma^2 for the conditional t curve");
  risk->add_option("--grid", args.grid, "lo:hi:count or a comma-separated list")->required();
  risk->add_option("--reps", args.reps, "Monte Carlo draws per grid point (t; z cross-check when > 1)")
      ->capture_default_str();
  risk->add_option("--seed", args.seed, "random seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*est) return cmd_estimate(args);
    if (*itv) return cmd_interval(args);
    if (*sim) return cmd_simulate(args);
    if (*risk) return cmd_risk_curve(args);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fab::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fab::DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fab::ConvergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConvergence;
  } catch (const fab::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
