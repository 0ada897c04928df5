#include "iboss/estimation.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <cmath>

#include "iboss/errors.hpp"

namespace iboss {

OlsFit ols_fit(const Matrix& x, const Vector& y,
               std::optional<double> sigma2_known) {
  const std::int64_t n = x.rows();
  const std::int64_t d = x.cols();
  if (y.size() != n) {
    throw FormatError("response length " + std::to_string(y.size()) +
                      " does not match " + std::to_string(n) + " rows");
  }
  const std::int64_t min_rows = sigma2_known ? d : d + 1;
  if (n < min_rows) {
    throw NumericError("need at least " + std::to_string(min_rows) +
                       " rows to fit " + std::to_string(d) +
                       " coefficients, got " + std::to_string(n));
  }

  Eigen::ColPivHouseholderQR<Matrix> qr(x);
  const Matrix r = qr.matrixR().topLeftCorner(d, d).triangularView<Eigen::Upper>();
  // Column pivoting sorts |R_jj| decreasing, so the diagonal ratio is a
  // cheap condition estimate of X.
  const double r_max = std::abs(r(0, 0));
  const double r_min = std::abs(r(d - 1, d - 1));
  const double rcond = r_max > 0.0 ? r_min / r_max : 0.0;
  if (!(rcond >= 1e-12)) throw SingularDesign(rcond);

  OlsFit fit;
  fit.beta = qr.solve(y);
  fit.n_used = n;

  const Vector residuals = y - x * fit.beta;
  if (sigma2_known) {
    fit.sigma2_hat = *sigma2_known;
  } else {
    fit.sigma2_hat = residuals.squaredNorm() / static_cast<double>(n - d);
  }

  // (X^T X)^{-1} = P R^{-1} R^{-T} P^T from X P = Q R.
  const Matrix r_inv =
      r.triangularView<Eigen::Upper>().solve(Matrix::Identity(d, d));
  Matrix gram_inv = r_inv * r_inv.transpose();
  gram_inv = qr.colsPermutation() * gram_inv * qr.colsPermutation().transpose();
  fit.cov = fit.sigma2_hat * 0.5 * (gram_inv + gram_inv.transpose());
  return fit;
}

CorrelationSummary correlation_summary(const Matrix& z) {
  const std::int64_t n = z.rows();
  const std::int64_t p = z.cols();
  if (n < 2) throw NumericError("correlation needs at least 2 rows");

  CorrelationSummary out;
  out.mean = z.colwise().mean();
  const Matrix centered = z.rowwise() - out.mean.transpose();
  Matrix s = (centered.transpose() * centered) / static_cast<double>(n - 1);
  out.variance = s.diagonal();
  for (std::int64_t j = 0; j < p; ++j) {
    if (!(out.variance(j) > 0.0)) throw ConstantColumn(static_cast<int>(j));
  }

  const Vector inv_sd = out.variance.cwiseSqrt().cwiseInverse();
  out.correlation = inv_sd.asDiagonal() * s * inv_sd.asDiagonal();
  out.correlation.diagonal().setOnes();
  out.correlation = 0.5 * (out.correlation + out.correlation.transpose()).eval();
  out.lambda_min = min_eigenvalue(out.correlation);
  return out;
}

double min_eigenvalue(const Matrix& s) {
  if (s.rows() != s.cols()) throw NumericError("eigenvalues of a non-square matrix");
  const double scale = s.cwiseAbs().maxCoeff();
  const double asym = (s - s.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * (1.0 + scale)) {
    throw NumericError("matrix is not symmetric (max asymmetry " +
                       std::to_string(asym) + ")");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(s, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw NumericError("eigenvalue iteration failed to converge");
  }
  return solver.eigenvalues()(0);
}

}  // namespace iboss
