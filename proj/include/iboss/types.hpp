#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace iboss {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class FileFormat { Binary, Csv };

struct DatasetMeta {
  std::int64_t n_rows = 0;
  int n_covariates = 0;
  bool has_response = false;
  FileFormat format = FileFormat::Binary;
  std::string source;  // path or label, informational only
};

// One contiguous partition of the dataset held in memory. Covariates are
// column-major (Eigen default) so per-covariate scans touch contiguous
// memory; responses may be absent for selection-only workloads.
struct DataBlock {
  int block_index = 0;
  std::int64_t row_offset = 0;  // global index of the block's first row
  Matrix covariates;            // rows x p
  Vector responses;             // rows, or empty

  std::int64_t rows() const { return covariates.rows(); }
  int p() const { return static_cast<int>(covariates.cols()); }
  bool has_responses() const { return responses.size() > 0; }
};

// Outcome of a selection pass. Indices are global row ids, strictly
// increasing; per_covariate_counts[j] holds how many rows covariate j
// contributed from its (lower, upper) tail.
struct SelectionResult {
  std::vector<std::int64_t> indices;
  std::int64_t requested_k = 0;
  std::vector<std::pair<std::int64_t, std::int64_t>> per_covariate_counts;

  std::int64_t size() const { return static_cast<std::int64_t>(indices.size()); }
};

// Least-squares fit with intercept first in beta.
struct OlsFit {
  Vector beta;
  Matrix cov;           // sigma2_hat * (X^T X)^{-1}
  double sigma2_hat = 0.0;
  std::int64_t n_used = 0;
};

// Checks a block against dataset metadata: column count, response presence,
// offset within range, all values finite. Throws FormatError subclasses.
void validate_block(const DataBlock& block, const DatasetMeta& meta);

// Gathers the given block-local rows into a dense covariate matrix and, if
// the block has responses, the matching response vector.
std::pair<Matrix, Vector> extract_rows(const DataBlock& block,
                                       const std::vector<std::int64_t>& local_rows);

// Prepends a column of ones.
Matrix with_intercept(const Matrix& z);

inline std::int64_t ceil_div(std::int64_t a, std::int64_t b) {
  return (a + b - 1) / b;
}

}  // namespace iboss
