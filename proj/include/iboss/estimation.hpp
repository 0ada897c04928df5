#pragma once

#include <optional>

#include "iboss/types.hpp"

namespace iboss {

// Ordinary least squares via column-pivoted orthogonal decomposition; the
// normal equations are never formed. x is the full design matrix, intercept
// column included. cov = sigma2 * (X^T X)^{-1} with sigma2 either supplied
// (known-variance mode) or estimated as RSS / (n - d). Throws
// SingularDesign when the triangular factor's diagonal ratio falls below
// 1e-12 and NumericError when there are too few rows.
OlsFit ols_fit(const Matrix& x, const Vector& y,
               std::optional<double> sigma2_known = std::nullopt);

// Column means, sample variances (n - 1 denominator), correlation matrix
// with unit diagonal, and its smallest eigenvalue.
struct CorrelationSummary {
  Vector mean;
  Vector variance;
  Matrix correlation;
  double lambda_min = 0.0;
};

CorrelationSummary correlation_summary(const Matrix& z);

// Smallest eigenvalue of a symmetric matrix. Throws NumericError if the
// input is not symmetric to within a relative 1e-10.
double min_eigenvalue(const Matrix& s);

}  // namespace iboss
