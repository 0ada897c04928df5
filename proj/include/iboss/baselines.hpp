#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "iboss/pipeline.hpp"
#include "iboss/types.hpp"

namespace iboss {

// Uniform Poisson subsampling: every row of the block is included
// independently with probability target_size / rows. The draw is keyed by
// (seed, block index, row index), so the result does not depend on block
// processing order or thread count. Expected size is target_size; the
// actual size is binomial.
SelectionResult poisson_subsample(const DataBlock& block,
                                  std::int64_t target_size,
                                  std::uint64_t seed);

// Full-data divide-and-conquer benchmark: OLS on every row of each block,
// combined by inverse-covariance weighting. With a common sigma2 this
// equals the pooled full-data OLS estimator.
AggregatedFit full_data_dnc_fit(std::span<const DataBlock> blocks,
                                std::optional<double> sigma2 = std::nullopt);

}  // namespace iboss
