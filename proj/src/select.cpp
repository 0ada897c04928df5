#include "iboss/select.hpp"

#include <algorithm>

#include "iboss/errors.hpp"
#include "iboss/quick_select.hpp"

namespace iboss {

IbossParams IbossParams::from(std::int64_t k, int p) {
  if (k < 1) throw QuotaError("subdata size k must be positive, got " + std::to_string(k));
  if (p < 1) throw QuotaError("need at least one covariate");
  return {k, ceil_div(k, 2 * static_cast<std::int64_t>(p))};
}

SelectionResult iboss_select(const DataBlock& block, std::int64_t k,
                             SelectionNotes* notes) {
  const std::int64_t n = block.rows();
  const int p = block.p();
  if (k > n) throw QuotaInfeasible(k, n);
  const IbossParams params = IbossParams::from(k, p);
  const std::int64_t r = params.r;

  SelectionResult result;
  result.requested_k = k;
  result.per_covariate_counts.assign(static_cast<std::size_t>(p), {0, 0});

  std::vector<std::int64_t> selected;      // sorted ascending at loop entry
  selected.reserve(static_cast<std::size_t>(std::min(n, 2 * p * r)));
  std::vector<std::int64_t> added;
  std::vector<double> pool;
  pool.reserve(static_cast<std::size_t>(n));

  for (int j = 0; j < p; ++j) {
    const std::int64_t taken = static_cast<std::int64_t>(selected.size());
    if (taken >= k) break;
    const double* col = block.covariates.col(j).data();

    // Pool = values of covariate j over rows not yet selected, gathered by
    // a merge scan against the sorted selection (no hash lookups). Nothing
    // is selected yet on the first covariate, so that gather is a copy.
    if (selected.empty()) {
      pool.assign(col, col + n);
    } else {
      pool.clear();
      std::size_t s = 0;
      for (std::int64_t i = 0; i < n; ++i) {
        if (s < selected.size() && selected[s] == i) {
          ++s;
          continue;
        }
        pool.push_back(col[i]);
      }
    }
    const std::int64_t m = static_cast<std::int64_t>(pool.size());
    if (m == 0) break;
    if (notes != nullptr) {
      const auto [mn, mx] = std::minmax_element(pool.begin(), pool.end());
      if (*mn == *mx) notes->degenerate_covariates.push_back(j);
    }

    // Tail cut points among the remaining rows. Small pools clamp the
    // order-statistic indices; the tails then overlap and the per-row scan
    // below resolves membership.
    const std::int64_t lo_idx = std::min(r, m);
    const std::int64_t hi_idx = std::max(m - r + 1, std::int64_t{1});
    const double lower = kth_smallest_inplace(pool, lo_idx);
    const double upper = kth_smallest_inplace(pool, hi_idx);

    // One ascending pass: first r remaining rows in each tail win; a row in
    // both tails (overlap or equal thresholds) goes to the lower tail.
    added.clear();
    std::int64_t n_lower = 0, n_upper = 0;
    std::size_t s = 0;
    for (std::int64_t i = 0; i < n; ++i) {
      if (taken + static_cast<std::int64_t>(added.size()) >= k) break;
      if (n_lower >= r && n_upper >= r) break;
      if (s < selected.size() && selected[s] == i) {
        ++s;
        continue;
      }
      const double v = col[i];
      if (n_lower < r && v <= lower) {
        added.push_back(i);
        ++n_lower;
      } else if (n_upper < r && v >= upper) {
        added.push_back(i);
        ++n_upper;
      }
    }
    result.per_covariate_counts[static_cast<std::size_t>(j)] = {n_lower, n_upper};

    const std::size_t mid = selected.size();
    selected.insert(selected.end(), added.begin(), added.end());
    std::inplace_merge(selected.begin(),
                       selected.begin() + static_cast<std::ptrdiff_t>(mid),
                       selected.end());
  }

  result.indices.resize(selected.size());
  for (std::size_t i = 0; i < selected.size(); ++i) {
    result.indices[i] = selected[i] + block.row_offset;
  }
  return result;
}

}  // namespace iboss
