#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "iboss/select.hpp"
#include "iboss/types.hpp"

namespace iboss {

enum class Partitioning { Sequential, RandomShuffle };

struct DncParams {
  std::int64_t k = 0;          // combined subdata size target
  int B = 1;                   // number of partitions
  Partitioning partitioning = Partitioning::Sequential;
  std::uint64_t shuffle_seed = 0;
  int max_threads = 0;         // 0 = library default
};

// Per-block share of k and the per-tail quota. The guard mirrors the
// block-level selection: k < 2pB means the raw per-tail share k/(2pB)
// rounds below one point per tail, so the run aborts instead of silently
// returning an empty selection.
std::int64_t dnc_block_k(std::int64_t k, int B);
std::int64_t dnc_quota(std::int64_t k, int p, int B);  // throws QuotaUnderflow

// Deterministic pseudorandom permutation of 0..n_rows-1; block b is the
// b-th chunk of ceil(n_rows / B) consecutive positions.
std::vector<std::int64_t> shuffle_assignment(std::int64_t n_rows, int B,
                                             std::uint64_t seed);

// In-memory partition of (z, y) into B blocks of ceil(n/B) rows (last one
// short). Under RandomShuffle the rows are first dealt to blocks by
// shuffle_assignment, keeping source order inside each block to match the
// streaming file splitter; layout_to_source maps the new global row ids
// back to source rows (empty for Sequential).
struct PartitionedData {
  std::vector<DataBlock> blocks;
  std::vector<std::int64_t> layout_to_source;
};

PartitionedData partition_rows(const Matrix& z, const Vector* y, int B,
                               Partitioning partitioning = Partitioning::Sequential,
                               std::uint64_t seed = 0);

// Out-of-core counterpart of the RandomShuffle partition: streams a binary
// dataset into B block files in out_dir, each receiving its assigned rows
// in source order.
std::vector<std::filesystem::path> shuffle_split_binary(
    const std::filesystem::path& source, int B, std::uint64_t seed,
    const std::filesystem::path& out_dir);

// Union of per-block selections, each block processed independently with
// subdata size ceil(k/B). Blocks map over threads; the merge walks blocks
// in ascending index so the result is bitwise identical at any thread
// count. run_dnc_select_serial is the plain-loop reference the parallel
// path is tested against.
SelectionResult run_dnc_select(std::span<const DataBlock> blocks,
                               const DncParams& params,
                               SelectionNotes* notes = nullptr);
SelectionResult run_dnc_select_serial(std::span<const DataBlock> blocks,
                                      const DncParams& params,
                                      SelectionNotes* notes = nullptr);

struct AggregatedFit {
  Vector beta;
  Matrix cov;
  std::vector<OlsFit> per_block_fits;
};

// Weighting for the estimator aggregation: a common (known or pooled)
// error variance makes the inverse-covariance-weighted combination equal
// the pooled-subdata OLS estimator exactly; per-block estimated variances
// are the practical variant and give up that identity.
enum class WeightMode { CommonVariance, PerBlockVariance };

// Per-block subdata OLS fits combined as beta = (sum_b M_b)^{-1} sum_b
// M_b beta_b with M_b the inverse of block b's coefficient covariance.
AggregatedFit run_dnc_aggregate(std::span<const DataBlock> blocks,
                                const DncParams& params,
                                std::optional<double> sigma2,
                                WeightMode mode = WeightMode::CommonVariance);

// Shared combiner: per-block Gram matrices (X_b^T X_b), their betas and
// variances, reduced in ascending block order.
AggregatedFit aggregate_inverse_covariance(
    const std::vector<Matrix>& grams, const std::vector<Vector>& betas,
    const std::vector<double>& sigma2s, std::vector<OlsFit> fits);

}  // namespace iboss
