#pragma once

#include <cstdint>
#include <span>

namespace iboss {

// Order statistics by expected-linear-time selection. k is 1-based: k = 1
// is the minimum, k = n the maximum. Ties resolve to the same value a full
// sort would produce at that position.

// Works on a private copy of the input.
double kth_smallest(std::span<const double> values, std::int64_t k);

// Permutes the buffer it is given; for hot paths that own a scratch copy.
double kth_smallest_inplace(std::span<double> values, std::int64_t k);

struct TailThresholds {
  double lower;  // r-th smallest
  double upper;  // r-th largest, i.e. (n - r + 1)-th smallest
};

// Both tail cut points of one vector in a single scratch copy. Requires
// 1 <= r <= n; when 2r > n the tails overlap and lower may exceed upper.
TailThresholds tail_thresholds(std::span<const double> values, std::int64_t r);

}  // namespace iboss
