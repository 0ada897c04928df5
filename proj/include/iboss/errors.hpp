#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace iboss {

// Failure categories, doubling as the CLI exit-code contract:
// 0 success, 2 malformed input, 3 infeasible selection quota,
// 4 numerical failure, 1 anything else.
enum class ErrorKind : int {
  Other = 1,
  Format = 2,
  Quota = 3,
  Numeric = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string msg)
      : std::runtime_error(std::move(msg)), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

struct FormatError : Error {
  explicit FormatError(std::string msg) : Error(ErrorKind::Format, std::move(msg)) {}
};

struct QuotaError : Error {
  explicit QuotaError(std::string msg) : Error(ErrorKind::Quota, std::move(msg)) {}
};

struct NumericError : Error {
  explicit NumericError(std::string msg) : Error(ErrorKind::Numeric, std::move(msg)) {}
};

struct OtherError : Error {
  explicit OtherError(std::string msg) : Error(ErrorKind::Other, std::move(msg)) {}
};

// Raised when k < 2pB so the per-tail quota of a block-level selection
// rounds to zero. The message text is part of the contract.
struct QuotaUnderflow : QuotaError {
  QuotaUnderflow()
      : QuotaError(
            "The number of data points from each covariate tail is smaller "
            "than one.") {}
};

// Selection asked for more rows than the block holds.
struct QuotaInfeasible : QuotaError {
  QuotaInfeasible(std::int64_t k, std::int64_t rows)
      : QuotaError("subdata size k = " + std::to_string(k) +
                   " exceeds block row count " + std::to_string(rows)) {}
};

struct BlockTooSmall : QuotaError {
  BlockTooSmall(int block, std::int64_t rows, std::int64_t needed)
      : QuotaError("block " + std::to_string(block) + " has " +
                   std::to_string(rows) + " rows, needs at least " +
                   std::to_string(needed)),
        block(block) {}
  int block;
};

struct SingularBlockFit : NumericError {
  SingularBlockFit(int block, std::string why)
      : NumericError("block " + std::to_string(block) +
                     " produced a singular fit: " + std::move(why)),
        block(block) {}
  int block;
};

struct NonFiniteValue : FormatError {
  NonFiniteValue(std::int64_t row, int col)
      : FormatError("non-finite value at row " + std::to_string(row) +
                    ", column " + std::to_string(col)),
        row(row),
        col(col) {}
  std::int64_t row;
  int col;
};

struct MalformedRow : FormatError {
  MalformedRow(std::int64_t line, std::string why)
      : FormatError("malformed row at line " + std::to_string(line) + ": " + why),
        line(line) {}
  std::int64_t line;
};

// File header (or detected format) disagrees with the declared metadata.
struct HeaderMismatch : FormatError {
  explicit HeaderMismatch(std::string msg) : FormatError(std::move(msg)) {}
};

struct IoFailure : OtherError {
  explicit IoFailure(std::string msg) : OtherError(std::move(msg)) {}
};

struct SingularDesign : NumericError {
  explicit SingularDesign(double rcond)
      : NumericError("design matrix is numerically singular (rcond ~ " +
                     std::to_string(rcond) + ")"),
        rcond(rcond) {}
  double rcond;
};

struct ConstantColumn : NumericError {
  explicit ConstantColumn(int col)
      : NumericError("covariate column " + std::to_string(col) +
                     " has zero sample variance"),
        col(col) {}
  int col;
};

}  // namespace iboss
