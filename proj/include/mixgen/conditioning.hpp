#pragma once

#include <cmath>

namespace mixgen {

// Compresses property magnitudes before they enter the numeric channel:
// sign(x) * log(|x| + 1). Odd and strictly monotone.
inline double signed_log(double x) { return std::copysign(std::log1p(std::fabs(x)), x); }

inline double signed_log_inverse(double y) { return std::copysign(std::expm1(std::fabs(y)), y); }

}  // namespace mixgen
