#include "acq/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "acq/error.hpp"

namespace acq::oracle {

namespace {

void CheckInfeasible(const McKpInstance& instance) {
  if (instance.item_count() == 0) Fail(ErrorKind::kInvalidArgument, "oracle: no items");
  const std::int64_t shortfall = instance.MinQuotaSum() - instance.capacity();
  if (shortfall > 0) {
    Fail(ErrorKind::kInfeasible,
         "oracle: smallest quotas exceed capacity by " + std::to_string(shortfall));
  }
}

}  // namespace

OracleResult ExhaustiveMckp(const McKpInstance& instance) {
  double combinations = 1.0;
  for (std::size_t i = 0; i < instance.item_count(); ++i) {
    combinations *= static_cast<double>(instance.candidates(i).size());
  }
  if (combinations > 1e7) Fail(ErrorKind::kInvalidArgument, "exhaustive: more than 1e7 choices");
  CheckInfeasible(instance);

  const std::size_t n = instance.item_count();
  std::vector<std::size_t> current(n, 0);
  OracleResult best;
  best.method = Method::kExhaustive;
  best.objective = -std::numeric_limits<double>::infinity();
  // Odometer over all choice vectors.
  while (true) {
    std::int64_t used = 0;
    double value = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Candidate& c = instance.candidates(i)[current[i]];
      used += c.quota;
      value += c.reward;
    }
    if (used <= instance.capacity() && value > best.objective) {
      best.objective = value;
      best.choices = current;
    }
    std::size_t i = 0;
    while (i < n && ++current[i] == instance.candidates(i).size()) current[i++] = 0;
    if (i == n) break;
  }
  return best;
}

OracleResult DpMckpExact(const McKpInstance& instance) {
  const std::int64_t capacity = instance.capacity();
  if (capacity < 0 || capacity > 100000) {
    Fail(ErrorKind::kInvalidArgument, "dp: capacity must be in [0, 1e5]");
  }
  if (instance.item_count() > 1000) Fail(ErrorKind::kInvalidArgument, "dp: more than 1e3 items");
  CheckInfeasible(instance);

  const std::size_t n = instance.item_count();
  const std::size_t width = static_cast<std::size_t>(capacity) + 1;
  const double kUnreachable = -std::numeric_limits<double>::infinity();
  // value[c]: best reward with total quota exactly c over the items so far.
  std::vector<double> value(width, kUnreachable);
  std::vector<double> next(width);
  std::vector<std::uint8_t> pick(n * width, 0);
  value[0] = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(next.begin(), next.end(), kUnreachable);
    auto cands = instance.candidates(i);
    for (std::size_t c = 0; c < width; ++c) {
      for (std::size_t k = 0; k < cands.size(); ++k) {
        const auto q = static_cast<std::size_t>(cands[k].quota);
        if (q > c || value[c - q] == kUnreachable) continue;
        const double v = value[c - q] + cands[k].reward;
        if (v > next[c]) {
          next[c] = v;
          pick[i * width + c] = static_cast<std::uint8_t>(k);
        }
      }
    }
    value.swap(next);
  }
  const auto best_it = std::max_element(value.begin(), value.end());
  OracleResult result;
  result.method = Method::kDp;
  result.objective = *best_it;
  result.choices.resize(n);
  std::size_t c = static_cast<std::size_t>(best_it - value.begin());
  for (std::size_t i = n; i-- > 0;) {
    const std::size_t k = pick[i * width + c];
    result.choices[i] = k;
    c -= static_cast<std::size_t>(instance.candidates(i)[k].quota);
  }
  return result;
}

DualOptimum LpBreakpointOptimum(const McKpInstance& instance) {
  if (instance.candidate_count() > 10000) {
    Fail(ErrorKind::kInvalidArgument, "lp_breakpoint: more than 1e4 candidates");
  }
  std::vector<double> breakpoints{0.0};
  for (std::size_t i = 0; i < instance.item_count(); ++i) {
    auto c = instance.candidates(i);
    for (std::size_t a = 0; a < c.size(); ++a) {
      for (std::size_t b = a + 1; b < c.size(); ++b) {
        const double lambda = (c[b].reward - c[a].reward) / (c[b].quota - c[a].quota);
        if (lambda > 0.0) breakpoints.push_back(lambda);
      }
    }
  }
  std::sort(breakpoints.begin(), breakpoints.end());
  std::vector<double> unique;
  for (double b : breakpoints) {
    if (unique.empty() || b - unique.back() > 1e-12) unique.push_back(b);
  }
  DualOptimum best{std::numeric_limits<double>::infinity(), 0.0};
  for (double lambda : unique) {
    // Direct evaluation, independent of the allocator's tie-breaking.
    double total = lambda * static_cast<double>(instance.capacity());
    for (std::size_t i = 0; i < instance.item_count(); ++i) {
      double m = -std::numeric_limits<double>::infinity();
      for (const Candidate& cand : instance.candidates(i)) {
        m = std::max(m, cand.reward - lambda * cand.quota);
      }
      total += m;
    }
    if (total < best.value) best = {total, lambda};
  }
  return best;
}

}  // namespace acq::oracle
