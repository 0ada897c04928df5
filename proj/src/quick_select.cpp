#include "iboss/quick_select.hpp"

#include <algorithm>
#include <array>
#include <utility>
#include <vector>

#include "iboss/errors.hpp"

namespace iboss {
namespace {

// Fixed-seed xorshift for the fallback pivot, so selection stays
// deterministic run to run.
struct PivotRng {
  std::uint64_t s = 0x2545F4914F6CDD1Dull;
  std::uint64_t next() {
    s ^= s << 13;
    s ^= s >> 7;
    s ^= s << 17;
    return s;
  }
};

// Moves the median of v[lo], v[mid], v[hi] into v[lo].
void median_of_three_to_front(double* v, std::int64_t lo, std::int64_t hi) {
  const std::int64_t mid = lo + (hi - lo) / 2;
  if (v[mid] < v[lo]) std::swap(v[mid], v[lo]);
  if (v[hi] < v[lo]) std::swap(v[hi], v[lo]);
  if (v[hi] < v[mid]) std::swap(v[hi], v[mid]);  // sorted triple, median at mid
  std::swap(v[lo], v[mid]);
}

// Hoare partition around pivot = v[lo]. Returns j with lo <= j < hi such
// that v[lo..j] <= pivot <= v[j+1..hi]; both sides are nonempty so the
// caller always makes progress. Equal keys spread over both sides, which
// keeps constant vectors near the best case.
std::int64_t hoare_partition(double* v, std::int64_t lo, std::int64_t hi) {
  const double pivot = v[lo];
  std::int64_t i = lo - 1;
  std::int64_t j = hi + 1;
  for (;;) {
    do {
      ++i;
    } while (v[i] < pivot);
    do {
      --j;
    } while (v[j] > pivot);
    if (i >= j) return j;
    std::swap(v[i], v[j]);
  }
}

}  // namespace

double kth_smallest_inplace(std::span<double> values, std::int64_t k) {
  const std::int64_t n = static_cast<std::int64_t>(values.size());
  if (n == 0) throw OtherError("order statistic of an empty vector");
  if (k < 1 || k > n) {
    throw OtherError("order statistic k = " + std::to_string(k) +
                     " outside [1, " + std::to_string(n) + "]");
  }
  double* v = values.data();
  const std::int64_t target = k - 1;
  std::int64_t lo = 0;
  std::int64_t hi = n - 1;
  PivotRng rng;
  int bad_splits = 0;
  constexpr std::int64_t kSampledWindow = 1024;
  constexpr int kSample = 64;
  while (lo < hi) {
    const std::int64_t len = hi - lo + 1;
    if (bad_splits >= 2) {
      // Median-of-three keeps hitting adversarial layouts; switch to a
      // random pivot, which bounds the expected work regardless of input.
      const std::int64_t pick =
          lo + static_cast<std::int64_t>(rng.next() % static_cast<std::uint64_t>(len));
      std::swap(v[lo], v[pick]);
    } else if (len >= kSampledWindow) {
      // Rank-calibrated pivot, Floyd-Rivest style: sort a strided sample and
      // take the entry whose sample rank sits just past the target's rank
      // fraction. A tail rank then sheds most of the window in one
      // partition instead of halving its way down.
      std::array<std::pair<double, std::int64_t>, kSample> sample;
      const std::int64_t stride = len / kSample;
      for (int s = 0; s < kSample; ++s) {
        const std::int64_t pos = lo + s * stride + stride / 2;
        sample[static_cast<std::size_t>(s)] = {v[pos], pos};
      }
      std::sort(sample.begin(), sample.end());
      const double frac =
          static_cast<double>(target - lo + 1) / static_cast<double>(len);
      int si = static_cast<int>(frac * kSample) + (frac <= 0.5 ? 2 : -2);
      si = std::clamp(si, 0, kSample - 1);
      std::swap(v[lo], v[sample[static_cast<std::size_t>(si)].second]);
    } else {
      median_of_three_to_front(v, lo, hi);
    }
    const std::int64_t j = hoare_partition(v, lo, hi);
    const std::int64_t next_len = (target <= j) ? (j - lo + 1) : (hi - j);
    if (8 * next_len > 7 * len) {
      ++bad_splits;
    } else {
      bad_splits = 0;
    }
    if (target <= j) {
      hi = j;
    } else {
      lo = j + 1;
    }
  }
  return v[target];
}

double kth_smallest(std::span<const double> values, std::int64_t k) {
  std::vector<double> scratch(values.begin(), values.end());
  return kth_smallest_inplace(scratch, k);
}

TailThresholds tail_thresholds(std::span<const double> values, std::int64_t r) {
  const std::int64_t n = static_cast<std::int64_t>(values.size());
  if (n == 0) throw OtherError("tail thresholds of an empty vector");
  if (r < 1 || r > n) {
    throw QuotaError("tail quota r = " + std::to_string(r) + " outside [1, " +
                     std::to_string(n) + "]");
  }
  std::vector<double> scratch(values.begin(), values.end());
  const double lower = kth_smallest_inplace(scratch, r);
  const double upper = kth_smallest_inplace(scratch, n - r + 1);
  return {lower, upper};
}

}  // namespace iboss
