#pragma once

#include <cstddef>
#include <vector>

#include "acq/allocator.hpp"

namespace acq::oracle {

enum class Method { kExhaustive, kDp, kLpBreakpoint };

struct OracleResult {
  double objective = 0.0;
  std::vector<std::size_t> choices;
  Method method = Method::kExhaustive;
};

// Full enumeration of every choice vector. Requires prod(K_i) <= 1e7.
OracleResult ExhaustiveMckp(const McKpInstance& instance);

// Capacity-indexed dynamic program. Requires C <= 1e5 and at most 1e3 items.
OracleResult DpMckpExact(const McKpInstance& instance);

struct DualOptimum {
  double value = 0.0;
  double lambda = 0.0;
};

// Minimum of the piecewise-linear dual over lambda >= 0, found by evaluating
// every same-item breakpoint (r_a - r_b) / (c_a - c_b) and lambda = 0.
DualOptimum LpBreakpointOptimum(const McKpInstance& instance);

}  // namespace acq::oracle
