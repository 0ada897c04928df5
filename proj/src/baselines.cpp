#include "iboss/baselines.hpp"

#include <string>
#include <vector>

#include "iboss/errors.hpp"
#include "iboss/estimation.hpp"
#include "iboss/rng.hpp"

namespace iboss {

SelectionResult poisson_subsample(const DataBlock& block,
                                  std::int64_t target_size,
                                  std::uint64_t seed) {
  const std::int64_t rows = block.rows();
  if (target_size < 0 || target_size > rows) {
    throw OtherError("subsample target " + std::to_string(target_size) +
                     " outside [0, " + std::to_string(rows) + "]");
  }
  SelectionResult out;
  out.requested_k = target_size;
  if (rows == 0) return out;
  const double prob =
      static_cast<double>(target_size) / static_cast<double>(rows);
  const std::uint64_t block_key = rng::derive_key(
      seed, rng::label::kPoisson, static_cast<std::uint64_t>(block.block_index));
  for (std::int64_t i = 0; i < rows; ++i) {
    rng::Stream draw(rng::derive_key(block_key, rng::label::kPoisson,
                                     static_cast<std::uint64_t>(i)));
    if (draw.next_unit() < prob) out.indices.push_back(block.row_offset + i);
  }
  return out;
}

AggregatedFit full_data_dnc_fit(std::span<const DataBlock> blocks,
                                std::optional<double> sigma2) {
  if (blocks.empty()) throw OtherError("no blocks to fit");
  const int B = static_cast<int>(blocks.size());
  std::vector<Matrix> grams(static_cast<std::size_t>(B));
  std::vector<Vector> betas(static_cast<std::size_t>(B));
  std::vector<double> sigma2s(static_cast<std::size_t>(B));
  std::vector<OlsFit> fits(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) {
    const DataBlock& block = blocks[static_cast<std::size_t>(b)];
    if (!block.has_responses()) {
      throw FormatError("block " + std::to_string(b) + " carries no response");
    }
    const std::size_t ub = static_cast<std::size_t>(b);
    try {
      const Matrix x = with_intercept(block.covariates);
      fits[ub] = ols_fit(x, block.responses, sigma2);
      grams[ub] = x.transpose() * x;
      betas[ub] = fits[ub].beta;
      sigma2s[ub] = sigma2.value_or(fits[ub].sigma2_hat);
    } catch (const Error& e) {
      throw SingularBlockFit(b, e.what());
    }
  }
  return aggregate_inverse_covariance(grams, betas, sigma2s, std::move(fits));
}

}  // namespace iboss
