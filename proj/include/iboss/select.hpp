#pragma once

#include <cstdint>
#include <vector>

#include "iboss/types.hpp"

namespace iboss {

struct IbossParams {
  std::int64_t k = 0;
  std::int64_t r = 0;  // per-tail quota per covariate, ceil(k / (2p))

  static IbossParams from(std::int64_t k, int p);
};

// Covariates that were constant among the not-yet-selected rows when their
// turn came; their two tails collapse to a single threshold. A warning,
// not an error: the scan still honors quotas and the exclusion set.
struct SelectionNotes {
  std::vector<int> degenerate_covariates;
};

// Two-tail extreme-row selection on one block. Covariates are processed in
// order; for each, tail thresholds are computed over the rows not yet
// selected, then rows are taken in ascending row order: up to r from the
// lower tail (value <= lower threshold), up to r from the upper (value >=
// upper), skipping rows already selected, stopping as soon as the subdata
// reaches k rows or both quotas are exhausted. A row satisfying both tail
// conditions counts against the lower tail. Deterministic; indices come
// back globally offset and sorted ascending.
SelectionResult iboss_select(const DataBlock& block, std::int64_t k,
                             SelectionNotes* notes = nullptr);

}  // namespace iboss
