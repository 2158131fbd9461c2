#pragma once

// Grouped observations and per-group sufficient statistics.

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fab/error.hpp"
#include "fab/numerics.hpp"

namespace fab {

// Observations keyed by group identifier.  std::map keeps groups sorted by
// identifier, which fixes every downstream iteration order.
using GroupedData = std::map<std::string, std::vector<double>>;

struct GroupSummary {
  int n = 0;
  double ybar = 0.0;
  double s2 = 0.0;  // unbiased sample variance; 0 when n == 1
  double x2 = 0.0;  // sum of squared deviations, (n - 1) s2

  bool has_variance() const { return n >= 2; }
};

inline GroupSummary summarize(const std::vector<double>& y) {
  if (y.empty()) throw DataError("summarize: empty group");
  GroupSummary s;
  s.n = static_cast<int>(y.size());
  numerics::CompensatedSum sum;
  for (double v : y) {
    if (!std::isfinite(v)) throw DataError("summarize: non-finite observation");
    sum.add(v);
  }
  s.ybar = sum.value() / s.n;
  numerics::CompensatedSum ss;
  for (double v : y) ss.add((v - s.ybar) * (v - s.ybar));
  s.x2 = ss.value();
  s.s2 = s.n >= 2 ? s.x2 / (s.n - 1) : 0.0;
  return s;
}

struct NamedSummary {
  std::string group;
  GroupSummary summary;
};

inline std::vector<NamedSummary> summarize(const GroupedData& data) {
  std::vector<NamedSummary> out;
  out.reserve(data.size());
  for (const auto& [id, ys] : data) out.push_back({id, summarize(ys)});
  return out;
}

inline std::vector<GroupSummary> summaries_only(const std::vector<NamedSummary>& named) {
  std::vector<GroupSummary> out;
  out.reserve(named.size());
  for (const auto& g : named) out.push_back(g.summary);
  return out;
}

}  // namespace fab
