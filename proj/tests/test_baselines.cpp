#include <algorithm>
#include <cmath>
#include <iterator>
#include <set>
#include <vector>

#include "doctest.h"
#include "iboss/baselines.hpp"
#include "iboss/errors.hpp"
#include "iboss/estimation.hpp"
#include "iboss/harness.hpp"
#include "iboss/pipeline.hpp"
#include "iboss/simgen.hpp"
#include "iboss/types.hpp"

using namespace iboss;

namespace {

DataBlock zero_block(std::int64_t rows, int index = 0, std::int64_t offset = 0) {
  DataBlock b;
  b.block_index = index;
  b.row_offset = offset;
  b.covariates = Matrix::Zero(rows, 1);
  return b;
}

}  // namespace

TEST_CASE("degenerate inclusion probabilities") {
  const DataBlock b = zero_block(50);
  const SelectionResult all = poisson_subsample(b, 50, 1);
  REQUIRE(all.size() == 50);
  for (std::int64_t i = 0; i < 50; ++i) CHECK(all.indices[static_cast<std::size_t>(i)] == i);
  CHECK(all.requested_k == 50);

  const SelectionResult none = poisson_subsample(b, 0, 1);
  CHECK(none.size() == 0);
  CHECK(none.requested_k == 0);

  CHECK_THROWS_AS(poisson_subsample(b, 51, 1), OtherError);
  CHECK_THROWS_AS(poisson_subsample(b, -1, 1), OtherError);
}

TEST_CASE("sampling is deterministic under the seed") {
  const DataBlock b = zero_block(2000);
  const SelectionResult a1 = poisson_subsample(b, 200, 7);
  const SelectionResult a2 = poisson_subsample(b, 200, 7);
  CHECK(a1.indices == a2.indices);
  const SelectionResult other = poisson_subsample(b, 200, 8);
  CHECK(a1.indices != other.indices);
  CHECK(std::is_sorted(a1.indices.begin(), a1.indices.end()));
}

TEST_CASE("row draws depend on the block index, not processing order") {
  DataBlock near = zero_block(1000, 3, 0);
  DataBlock far = zero_block(1000, 3, 5000);
  const SelectionResult at_zero = poisson_subsample(near, 100, 9);
  const SelectionResult shifted = poisson_subsample(far, 100, 9);
  // same block index, same local picks, shifted global ids
  REQUIRE(at_zero.size() == shifted.size());
  for (std::int64_t i = 0; i < at_zero.size(); ++i) {
    CHECK(shifted.indices[static_cast<std::size_t>(i)] ==
          at_zero.indices[static_cast<std::size_t>(i)] + 5000);
  }
  DataBlock other_block = zero_block(1000, 4, 0);
  const SelectionResult different = poisson_subsample(other_block, 100, 9);
  CHECK(different.indices != at_zero.indices);
}

TEST_CASE("sample sizes follow the binomial moments") {
  const std::int64_t rows = 100000;
  const std::int64_t target = 1000;
  const DataBlock b = zero_block(rows);
  double total = 0.0;
  for (int seed = 0; seed < 200; ++seed) {
    total += double(poisson_subsample(b, target, 1000 + seed).size());
  }
  const double mean = total / 200.0;
  // 3 sigma of a single draw, the loose published band
  CHECK(std::abs(mean - double(target)) <= 3.0 * std::sqrt(1000.0 * 0.99));
  // and the tight band for a 200-draw mean
  CHECK(std::abs(mean - double(target)) <=
        3.0 * std::sqrt(1000.0 * 0.99 / 200.0));
}

TEST_CASE("independent seeds overlap like independent samples") {
  const std::int64_t rows = 100000;
  const std::int64_t target = 1000;  // inclusion probability 0.01
  const DataBlock b = zero_block(rows);
  double total_overlap = 0.0;
  const int pairs = 50;
  for (int i = 0; i < pairs; ++i) {
    const SelectionResult s1 = poisson_subsample(b, target, 5000 + 2 * i);
    const SelectionResult s2 = poisson_subsample(b, target, 5001 + 2 * i);
    std::vector<std::int64_t> common;
    std::set_intersection(s1.indices.begin(), s1.indices.end(),
                          s2.indices.begin(), s2.indices.end(),
                          std::back_inserter(common));
    total_overlap += double(common.size());
  }
  const double mean_overlap = total_overlap / pairs;
  const double expected = double(rows) * 0.01 * 0.01;  // 10
  const double se = std::sqrt(expected * (1.0 - 0.0001) / pairs);
  CHECK(std::abs(mean_overlap - expected) <= 3.0 * se);
}

TEST_CASE("single-block full fit is plain least squares") {
  Matrix z = generate_covariates(CovariateCase::Normal, 300, 3, 90);
  Vector y = generate_responses(z, 1.0, Vector::Ones(3), 91);
  const auto parts = partition_rows(z, &y, 1);
  const AggregatedFit agg = full_data_dnc_fit(parts.blocks, 1.0);
  const OlsFit direct = ols_fit(with_intercept(z), y, 1.0);
  CHECK((agg.beta - direct.beta).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((agg.cov - direct.cov).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("blockwise full fits merge into the pooled fit") {
  Matrix z = generate_covariates(CovariateCase::Normal, 1003, 2, 92);
  Vector y = generate_responses(z, 1.0, Vector::Ones(2), 93);
  const auto parts = partition_rows(z, &y, 4);
  const AggregatedFit agg = full_data_dnc_fit(parts.blocks, 1.0);
  const OlsFit pooled = ols_fit(with_intercept(z), y, 1.0);
  CHECK((agg.beta - pooled.beta).norm() <= 1e-8 * std::max(1.0, pooled.beta.norm()));
  CHECK((agg.cov - pooled.cov).norm() <= 1e-8 * pooled.cov.norm());
  REQUIRE(agg.per_block_fits.size() == 4);
  std::int64_t used = 0;
  for (const auto& fit : agg.per_block_fits) used += fit.n_used;
  CHECK(used == 1003);
}

TEST_CASE("identical designs weight every block equally") {
  Matrix z(4, 1);
  z << 0.0, 1.0, 2.0, 3.0;
  Vector y1(4), y2(4);
  y1 << 1.0, 2.0, 3.0, 4.0;
  y2 << 2.0, 4.0, 6.0, 8.0;
  std::vector<DataBlock> blocks(2);
  blocks[0].covariates = z;
  blocks[0].responses = y1;
  blocks[1].block_index = 1;
  blocks[1].row_offset = 4;
  blocks[1].covariates = z;
  blocks[1].responses = y2;
  const AggregatedFit agg = full_data_dnc_fit(blocks, 1.0);
  const Vector b1 = ols_fit(with_intercept(z), y1, 1.0).beta;
  const Vector b2 = ols_fit(with_intercept(z), y2, 1.0).beta;
  CHECK((agg.beta - 0.5 * (b1 + b2)).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("a singular full-data block is identified") {
  std::vector<DataBlock> blocks(2);
  blocks[0].covariates = generate_covariates(CovariateCase::Normal, 30, 2, 94);
  blocks[0].responses =
      generate_responses(blocks[0].covariates, 1.0, Vector::Ones(2), 95);
  blocks[1].block_index = 1;
  blocks[1].row_offset = 30;
  blocks[1].covariates = Matrix::Ones(30, 2);
  blocks[1].responses = Vector::Ones(30);
  try {
    full_data_dnc_fit(blocks, 1.0);
    FAIL("expected SingularBlockFit");
  } catch (const SingularBlockFit& e) {
    CHECK(e.block == 1);
  }
}

TEST_CASE("two-tail selection dominates uniform sampling") {
  // Heavy tails make the ordering structural: extreme rows carry far more
  // information than a uniform draw, so a 2x margin has wide headroom.
  ExperimentConfig cfg;
  cfg.cov_case = CovariateCase::T2;
  cfg.p = 10;
  cfg.n_grid = {20000};
  cfg.k_grid = {500};
  cfg.b_grid = {1, 4};
  cfg.methods = {Method::IbossDnc, Method::Poisson};
  cfg.replications = 50;
  cfg.seed = 96;
  const auto rows = run_experiment(cfg);

  double poisson_mse = -1.0;
  for (const auto& row : rows) {
    if (row.method == "poisson" && row.b == 1) poisson_mse = row.mse_slopes;
  }
  REQUIRE(poisson_mse > 0.0);
  for (const auto& row : rows) {
    if (row.method != "iboss") continue;
    CAPTURE(row.b);
    CHECK(row.mse_slopes * 2.0 < poisson_mse);
  }
}
