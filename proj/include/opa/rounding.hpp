#pragma once

// Guarded integer rounding shared by every module that converts proportion
// bands into integer share bounds. The guard absorbs representation error in
// products like p_upper * n (e.g. 0.7 * 100 = 70.000000000000014), so a share
// sitting exactly on a band edge never counts as a violation. All violation
// accounting must use these helpers so the modules agree bit for bit.

#include <cmath>

namespace opa::rounding {

inline constexpr double kGuard = 1e-9;

inline long long floor_guarded(double v) { return static_cast<long long>(std::floor(v + kGuard)); }

inline long long ceil_guarded(double v) { return static_cast<long long>(std::ceil(v - kGuard)); }

}  // namespace opa::rounding
