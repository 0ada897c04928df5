#pragma once

#include <cstdint>
#include <string>

#include "iboss/types.hpp"

namespace iboss {

// Synthetic covariate distributions used throughout the experiments. All
// share the compound-symmetric scale matrix with unit diagonal and 0.5
// off-diagonal; its eigenvalues are 0.5 and 0.5 + 0.5 p, so it is positive
// definite for every p.
enum class CovariateCase {
  Normal,       // N(0, S)
  LogNormal,    // elementwise exp of Normal draws
  T2,           // multivariate t, 2 degrees of freedom, scale S
  MixOrdered,   // row blocks [Normal; t2; t3; iid U(0,2); LogNormal], N/5 each
  MixShuffled,  // MixOrdered with a seeded row permutation
};

CovariateCase covariate_case_from_name(const std::string& name);
std::string covariate_case_name(CovariateCase c);

// Compound-symmetric scale matrix for dimension p.
Matrix compound_symmetric_sigma(int p);

// Draws N rows of the case's covariate distribution. Row i is produced by
// its own counter-based stream keyed by (seed, component, i), so any row
// range can be generated independently and results do not depend on thread
// count. Mix cases require N divisible by 5.
Matrix generate_covariates(CovariateCase c, std::int64_t n, int p,
                           std::uint64_t seed);

// As above, wrapped in a block starting at global row 0.
DataBlock generate(CovariateCase c, std::int64_t n, int p, std::uint64_t seed);

// y_i = beta0 + z_i . beta1 + eps_i with eps_i iid N(0, noise_sd^2). The
// noise_sd = 0 variant is the exact-recovery testing hook.
Vector generate_responses(const Matrix& z, double beta0, const Vector& beta1,
                          std::uint64_t seed, double noise_sd = 1.0);

}  // namespace iboss
