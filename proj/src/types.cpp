#include "iboss/types.hpp"

#include <cmath>

#include "iboss/errors.hpp"

namespace iboss {

void validate_block(const DataBlock& block, const DatasetMeta& meta) {
  if (block.p() != meta.n_covariates) {
    throw FormatError("block " + std::to_string(block.block_index) + " has " +
                      std::to_string(block.p()) + " covariates, dataset has " +
                      std::to_string(meta.n_covariates));
  }
  if (meta.has_response) {
    if (block.responses.size() != block.rows()) {
      throw FormatError("block " + std::to_string(block.block_index) +
                        " response length " + std::to_string(block.responses.size()) +
                        " does not match row count " + std::to_string(block.rows()));
    }
  } else if (block.has_responses()) {
    throw FormatError("block " + std::to_string(block.block_index) +
                      " carries responses but the dataset declares none");
  }
  if (block.row_offset < 0 || block.row_offset + block.rows() > meta.n_rows) {
    throw FormatError("block " + std::to_string(block.block_index) + " spans rows [" +
                      std::to_string(block.row_offset) + ", " +
                      std::to_string(block.row_offset + block.rows()) +
                      ") outside the dataset of " + std::to_string(meta.n_rows) +
                      " rows");
  }
  const std::int64_t n = block.rows();
  const int p = block.p();
  for (int j = 0; j < p; ++j) {
    const double* col = block.covariates.col(j).data();
    for (std::int64_t i = 0; i < n; ++i) {
      if (!std::isfinite(col[i])) throw NonFiniteValue(block.row_offset + i, j);
    }
  }
  if (block.has_responses()) {
    for (std::int64_t i = 0; i < n; ++i) {
      if (!std::isfinite(block.responses(i)))
        throw NonFiniteValue(block.row_offset + i, p);
    }
  }
}

std::pair<Matrix, Vector> extract_rows(const DataBlock& block,
                                       const std::vector<std::int64_t>& local_rows) {
  const std::int64_t m = static_cast<std::int64_t>(local_rows.size());
  Matrix z(m, block.p());
  Vector y;
  if (block.has_responses()) y.resize(m);
  for (std::int64_t i = 0; i < m; ++i) {
    const std::int64_t r = local_rows[static_cast<std::size_t>(i)];
    if (r < 0 || r >= block.rows()) {
      throw OtherError("row index " + std::to_string(r) + " outside block of " +
                       std::to_string(block.rows()) + " rows");
    }
    z.row(i) = block.covariates.row(r);
    if (y.size() > 0) y(i) = block.responses(r);
  }
  return {std::move(z), std::move(y)};
}

Matrix with_intercept(const Matrix& z) {
  Matrix x(z.rows(), z.cols() + 1);
  x.col(0).setOnes();
  x.rightCols(z.cols()) = z;
  return x;
}

}  // namespace iboss
