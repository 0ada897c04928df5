#include "iboss/simgen.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <numeric>
#include <vector>

#include "iboss/errors.hpp"
#include "iboss/rng.hpp"

namespace iboss {
namespace {

// Lower Cholesky factor of the compound-symmetric scale matrix.
Matrix sigma_cholesky(int p) {
  Eigen::LLT<Matrix> llt(compound_symmetric_sigma(p));
  return llt.matrixL();
}

// n x p matrix of standard normals, one stream per row so any row range
// can be produced independently of the others.
Matrix standard_normals(std::int64_t n, int p, std::uint64_t seed,
                        std::uint64_t label) {
  Matrix g(n, p);
  for (std::int64_t i = 0; i < n; ++i) {
    rng::Stream s(rng::derive_key(seed, label, static_cast<std::uint64_t>(i)));
    for (int j = 0; j < p; ++j) g(i, j) = s.next_gaussian();
  }
  return g;
}

// Correlated normals: row_i = L g_i, i.e. G L^T as a single product.
Matrix correlated_normals(std::int64_t n, int p, std::uint64_t seed) {
  const Matrix l = sigma_cholesky(p);
  return standard_normals(n, p, seed, rng::label::kGauss) * l.transpose();
}

// Multivariate t rows: correlated normal scaled by sqrt(df / w) with
// w ~ chi-square(df) drawn per row from its own stream.
Matrix student_t_rows(std::int64_t n, int p, int df, std::uint64_t seed) {
  Matrix z = correlated_normals(n, p, seed);
  for (std::int64_t i = 0; i < n; ++i) {
    rng::Stream s(
        rng::derive_key(seed, rng::label::kChi, static_cast<std::uint64_t>(i)));
    double w = 0.0;
    for (int m = 0; m < df; ++m) {
      const double g = s.next_gaussian();
      w += g * g;
    }
    z.row(i) *= std::sqrt(static_cast<double>(df) / w);
  }
  return z;
}

Matrix uniform_rows(std::int64_t n, int p, std::uint64_t seed, double lo,
                    double hi) {
  Matrix z(n, p);
  const double span = hi - lo;
  for (std::int64_t i = 0; i < n; ++i) {
    rng::Stream s(rng::derive_key(seed, rng::label::kUniform,
                                  static_cast<std::uint64_t>(i)));
    for (int j = 0; j < p; ++j) z(i, j) = lo + span * s.next_unit();
  }
  return z;
}

Matrix mixture_ordered(std::int64_t n, int p, std::uint64_t seed) {
  if (n % 5 != 0) {
    throw OtherError("mixture cases need a row count divisible by 5, got " +
                     std::to_string(n));
  }
  const std::int64_t m = n / 5;
  std::uint64_t sub[5];
  for (int c = 0; c < 5; ++c) {
    sub[c] = rng::derive_key(seed, rng::label::kMixComponent,
                             static_cast<std::uint64_t>(c));
  }
  Matrix z(n, p);
  z.topRows(m) = correlated_normals(m, p, sub[0]);
  z.middleRows(m, m) = student_t_rows(m, p, 2, sub[1]);
  z.middleRows(2 * m, m) = student_t_rows(m, p, 3, sub[2]);
  z.middleRows(3 * m, m) = uniform_rows(m, p, sub[3], 0.0, 2.0);
  z.bottomRows(m) = correlated_normals(m, p, sub[4]).array().exp();
  return z;
}

}  // namespace

CovariateCase covariate_case_from_name(const std::string& name) {
  if (name == "normal") return CovariateCase::Normal;
  if (name == "lognormal") return CovariateCase::LogNormal;
  if (name == "t2") return CovariateCase::T2;
  if (name == "mix_ordered") return CovariateCase::MixOrdered;
  if (name == "mix_shuffled") return CovariateCase::MixShuffled;
  throw OtherError("unknown covariate case '" + name +
                   "' (expected normal, lognormal, t2, mix_ordered, "
                   "mix_shuffled)");
}

std::string covariate_case_name(CovariateCase c) {
  switch (c) {
    case CovariateCase::Normal: return "normal";
    case CovariateCase::LogNormal: return "lognormal";
    case CovariateCase::T2: return "t2";
    case CovariateCase::MixOrdered: return "mix_ordered";
    case CovariateCase::MixShuffled: return "mix_shuffled";
  }
  throw OtherError("unreachable covariate case");
}

Matrix compound_symmetric_sigma(int p) {
  Matrix s = Matrix::Constant(p, p, 0.5);
  s.diagonal().setOnes();
  return s;
}

Matrix generate_covariates(CovariateCase c, std::int64_t n, int p,
                           std::uint64_t seed) {
  if (n < 1) throw OtherError("need at least one row");
  if (p < 1) throw OtherError("need at least one covariate");
  switch (c) {
    case CovariateCase::Normal:
      return correlated_normals(n, p, seed);
    case CovariateCase::LogNormal:
      // exp of the same draws the Normal case produces under this seed.
      return correlated_normals(n, p, seed).array().exp();
    case CovariateCase::T2:
      return student_t_rows(n, p, 2, seed);
    case CovariateCase::MixOrdered:
      return mixture_ordered(n, p, seed);
    case CovariateCase::MixShuffled: {
      Matrix z = mixture_ordered(n, p, seed);
      std::vector<std::int64_t> order(static_cast<std::size_t>(n));
      std::iota(order.begin(), order.end(), std::int64_t{0});
      rng::Stream s(rng::derive_key(seed, rng::label::kMixShuffle));
      rng::shuffle(std::span<std::int64_t>(order), s);
      Matrix shuffled(n, p);
      for (std::int64_t i = 0; i < n; ++i) {
        shuffled.row(i) = z.row(order[static_cast<std::size_t>(i)]);
      }
      return shuffled;
    }
  }
  throw OtherError("unreachable covariate case");
}

DataBlock generate(CovariateCase c, std::int64_t n, int p, std::uint64_t seed) {
  DataBlock block;
  block.block_index = 0;
  block.row_offset = 0;
  block.covariates = generate_covariates(c, n, p, seed);
  return block;
}

Vector generate_responses(const Matrix& z, double beta0, const Vector& beta1,
                          std::uint64_t seed, double noise_sd) {
  if (beta1.size() != z.cols()) {
    throw FormatError("slope vector length " + std::to_string(beta1.size()) +
                      " does not match " + std::to_string(z.cols()) +
                      " covariates");
  }
  Vector y = (z * beta1).array() + beta0;
  if (noise_sd != 0.0) {
    for (std::int64_t i = 0; i < y.size(); ++i) {
      rng::Stream s(rng::derive_key(seed, rng::label::kNoise,
                                    static_cast<std::uint64_t>(i)));
      y(i) += noise_sd * s.next_gaussian();
    }
  }
  return y;
}

}  // namespace iboss
