#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "doctest.h"
#include "iboss/errors.hpp"
#include "iboss/estimation.hpp"
#include "iboss/rng.hpp"
#include "iboss/select.hpp"
#include "iboss/simgen.hpp"
#include "iboss/types.hpp"

using namespace iboss;

namespace {

DataBlock column_block(const std::vector<double>& values) {
  DataBlock b;
  b.covariates.resize(static_cast<std::int64_t>(values.size()), 1);
  for (std::size_t i = 0; i < values.size(); ++i) {
    b.covariates(static_cast<std::int64_t>(i), 0) = values[i];
  }
  return b;
}

}  // namespace

TEST_CASE("per-tail quota arithmetic") {
  CHECK(IbossParams::from(4, 1).r == 2);
  CHECK(IbossParams::from(400, 50).r == 4);
  CHECK(IbossParams::from(401, 50).r == 5);
  CHECK(IbossParams::from(1, 3).r == 1);
  CHECK_THROWS_AS(IbossParams::from(0, 1), QuotaError);
  CHECK_THROWS_AS(IbossParams::from(4, 0), QuotaError);
}

TEST_CASE("single covariate, both tails, worked by hand") {
  const DataBlock b = column_block({0.1, 0.9, 0.5, 0.0, 1.0, 0.4});
  const SelectionResult res = iboss_select(b, 4);
  CHECK(res.indices == std::vector<std::int64_t>{0, 1, 3, 4});
  CHECK(res.requested_k == 4);
  REQUIRE(res.per_covariate_counts.size() == 1);
  CHECK(res.per_covariate_counts[0].first == 2);
  CHECK(res.per_covariate_counts[0].second == 2);
}

TEST_CASE("constant covariate resolves ties by scan order") {
  const DataBlock b = column_block({3.0, 3.0, 3.0, 3.0});
  SelectionNotes notes;
  const SelectionResult res = iboss_select(b, 2, &notes);
  CHECK(res.indices == std::vector<std::int64_t>{0, 1});
  CHECK(res.per_covariate_counts[0].first == 1);
  CHECK(res.per_covariate_counts[0].second == 1);
  REQUIRE(notes.degenerate_covariates.size() == 1);
  CHECK(notes.degenerate_covariates[0] == 0);
}

TEST_CASE("asking for the whole block returns every row") {
  const DataBlock one = column_block({0.3, 0.7, 0.1, 0.9, 0.5, 0.2});
  const SelectionResult all = iboss_select(one, 6);
  CHECK(all.indices == std::vector<std::int64_t>{0, 1, 2, 3, 4, 5});

  DataBlock two;
  two.covariates = generate_covariates(CovariateCase::Normal, 9, 2, 11);
  const SelectionResult res = iboss_select(two, 9);
  CHECK(res.size() == 9);
}

TEST_CASE("oversized requests are rejected") {
  const DataBlock b = column_block({1.0, 2.0, 3.0});
  CHECK_THROWS_AS(iboss_select(b, 4), QuotaInfeasible);
  CHECK_THROWS_AS(iboss_select(b, 0), QuotaError);
}

TEST_CASE("global indices honor the block offset") {
  DataBlock b = column_block({0.1, 0.9, 0.5, 0.0, 1.0, 0.4});
  b.row_offset = 100;
  const SelectionResult res = iboss_select(b, 4);
  CHECK(res.indices == std::vector<std::int64_t>{100, 101, 103, 104});
}

TEST_CASE("selection is deterministic") {
  DataBlock b;
  b.covariates = generate_covariates(CovariateCase::Normal, 500, 3, 12);
  const SelectionResult a = iboss_select(b, 60);
  const SelectionResult c = iboss_select(b, 60);
  CHECK(a.indices == c.indices);
  CHECK(a.per_covariate_counts == c.per_covariate_counts);
}

TEST_CASE("one-covariate selection matches the sort oracle") {
  rng::Stream s(rng::derive_key(303, 1));
  for (int trial = 0; trial < 100; ++trial) {
    const std::int64_t n = 10 + static_cast<std::int64_t>(s.next_below(200));
    std::vector<double> values(static_cast<std::size_t>(n));
    for (auto& v : values) v = s.next_gaussian();
    std::int64_t k = 2 + 2 * static_cast<std::int64_t>(s.next_below(
                             static_cast<std::uint64_t>(n / 2)));
    k = std::min(k, n);
    const std::int64_t r = ceil_div(k, 2);
    if (2 * r > n) continue;  // tails must not collide for the oracle

    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::int64_t a, std::int64_t b) {
                       return values[static_cast<std::size_t>(a)] <
                              values[static_cast<std::size_t>(b)];
                     });
    std::set<std::int64_t> expected;
    for (std::int64_t i = 0; i < r; ++i) {
      expected.insert(order[static_cast<std::size_t>(i)]);
      expected.insert(order[static_cast<std::size_t>(n - 1 - i)]);
    }
    const SelectionResult res = iboss_select(column_block(values), k);
    const std::set<std::int64_t> got(res.indices.begin(), res.indices.end());
    CAPTURE(trial);
    REQUIRE(got == expected);
  }
}

TEST_CASE("indices are sorted, unique, and counted exactly once") {
  rng::Stream seeds(rng::derive_key(303, 2));
  for (int trial = 0; trial < 40; ++trial) {
    const int p = 1 + static_cast<int>(seeds.next_below(5));
    const std::int64_t n = 50 + static_cast<std::int64_t>(seeds.next_below(400));
    DataBlock b;
    b.covariates =
        generate_covariates(CovariateCase::Normal, n, p, seeds.next_below(1u << 30));
    const std::int64_t k =
        std::min<std::int64_t>(n, 2 * p + static_cast<std::int64_t>(seeds.next_below(
                                              static_cast<std::uint64_t>(n))));
    const SelectionResult res = iboss_select(b, k);
    const std::int64_t r = IbossParams::from(k, p).r;

    REQUIRE(res.size() == k);  // n >= k, so the quota is always met
    REQUIRE(std::is_sorted(res.indices.begin(), res.indices.end()));
    REQUIRE(std::adjacent_find(res.indices.begin(), res.indices.end()) ==
            res.indices.end());
    REQUIRE(res.indices.front() >= 0);
    REQUIRE(res.indices.back() < n);

    std::int64_t counted = 0;
    for (const auto& [lo, hi] : res.per_covariate_counts) {
      REQUIRE(lo <= r);
      REQUIRE(hi <= r);
      counted += lo + hi;
    }
    REQUIRE(counted == res.size());
  }
}

TEST_CASE("first-covariate tails dominate the unselected rows") {
  rng::Stream seeds(rng::derive_key(303, 3));
  for (int trial = 0; trial < 20; ++trial) {
    DataBlock b;
    b.covariates =
        generate_covariates(CovariateCase::Normal, 400, 3, seeds.next_below(1u << 30));
    const std::int64_t k = 60;
    const std::int64_t r = IbossParams::from(k, 3).r;
    const SelectionResult res = iboss_select(b, k);

    std::vector<bool> chosen(400, false);
    for (std::int64_t i : res.indices) chosen[static_cast<std::size_t>(i)] = true;
    std::vector<double> col0(400);
    for (int i = 0; i < 400; ++i) col0[static_cast<std::size_t>(i)] = b.covariates(i, 0);
    std::vector<double> sorted = col0;
    std::sort(sorted.begin(), sorted.end());
    // every row at or beyond either covariate-1 tail threshold is selected
    const double lo = sorted[static_cast<std::size_t>(r - 1)];
    const double hi = sorted[static_cast<std::size_t>(400 - r)];
    for (int i = 0; i < 400; ++i) {
      if (col0[static_cast<std::size_t>(i)] <= lo || col0[static_cast<std::size_t>(i)] >= hi) {
        CAPTURE(i);
        REQUIRE(chosen[static_cast<std::size_t>(i)]);
      }
    }
  }
}

TEST_CASE("information beats random subsets nearly always") {
  rng::Stream seeds(rng::derive_key(303, 4));
  const std::int64_t n = 10000;
  const int p = 2;
  const std::int64_t k = 40;
  int wins = 0;
  for (int trial = 0; trial < 100; ++trial) {
    DataBlock b;
    b.covariates =
        generate_covariates(CovariateCase::Normal, n, p, seeds.next_below(1u << 30));
    const SelectionResult sel = iboss_select(b, k);
    std::vector<std::int64_t> local(sel.indices.begin(), sel.indices.end());
    auto [zs, ys] = extract_rows(b, local);
    const Matrix xs = with_intercept(zs);
    const double det_iboss = (xs.transpose() * xs).determinant();

    std::vector<std::int64_t> deck(static_cast<std::size_t>(n));
    std::iota(deck.begin(), deck.end(), 0);
    bool all_below = true;
    for (int draw = 0; draw < 200 && all_below; ++draw) {
      for (std::int64_t i = 0; i < k; ++i) {
        const std::int64_t j =
            i + static_cast<std::int64_t>(
                    seeds.next_below(static_cast<std::uint64_t>(n - i)));
        std::swap(deck[static_cast<std::size_t>(i)], deck[static_cast<std::size_t>(j)]);
      }
      std::vector<std::int64_t> rows(deck.begin(), deck.begin() + k);
      auto [zr, yr] = extract_rows(b, rows);
      const Matrix xr = with_intercept(zr);
      all_below = (xr.transpose() * xr).determinant() <= det_iboss;
    }
    wins += all_below;
  }
  CHECK(wins >= 95);
}

TEST_CASE("single-block determinant inequality holds on every case") {
  // det(X*tX*) / zeta >= lambda_min^p / p^p * prod((trimmed range / range)^2)
  // with zeta = k^(p+1) / 4^p * prod(range^2), trimming r from each end.
  const std::int64_t n = 2000;
  const int p = 3;
  const std::int64_t k = 60;
  const std::int64_t r = IbossParams::from(k, p).r;
  for (CovariateCase c : {CovariateCase::Normal, CovariateCase::LogNormal,
                          CovariateCase::T2, CovariateCase::MixOrdered,
                          CovariateCase::MixShuffled}) {
    for (std::uint64_t seed : {901u, 902u, 903u}) {
      DataBlock b;
      b.covariates = generate_covariates(c, n, p, seed);
      const SelectionResult sel = iboss_select(b, k);
      std::vector<std::int64_t> local(sel.indices.begin(), sel.indices.end());
      auto [zs, ys] = extract_rows(b, local);
      const Matrix xs = with_intercept(zs);
      const double det = (xs.transpose() * xs).determinant();

      double zeta = std::pow(double(k), p + 1) / std::pow(4.0, p);
      double bound = std::pow(correlation_summary(zs).lambda_min, p) /
                     std::pow(double(p), p);
      for (int j = 0; j < p; ++j) {
        std::vector<double> col(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) {
          col[static_cast<std::size_t>(i)] = b.covariates(i, j);
        }
        std::sort(col.begin(), col.end());
        const double range = col.back() - col.front();
        const double trimmed = col[static_cast<std::size_t>(n - r)] -
                               col[static_cast<std::size_t>(r - 1)];
        zeta *= range * range;
        bound *= (trimmed / range) * (trimmed / range);
      }
      CAPTURE(covariate_case_name(c));
      CAPTURE(seed);
      REQUIRE(det / zeta >= bound - 1e-9 * std::max(1.0, std::abs(bound)));
    }
  }
}
