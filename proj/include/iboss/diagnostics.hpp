#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "iboss/types.hpp"

namespace iboss {

// Order statistics of the FULL data needed by the determinant and variance
// bounds, gathered block by block so no more than one block is ever in
// memory. Quotas: r = ceil(k / (2p)) is the single-partition per-tail
// quota, r_B = ceil(k / (2pB)) the per-block one; k is the nominal
// requested subdata size the quotas derive from.
struct RangeStats {
  std::int64_t n_total = 0;
  int p = 0;
  int B = 0;
  std::int64_t k = 0;
  std::int64_t r = 0;
  std::int64_t r_B = 0;
  Vector full_min, full_max;        // z_(1)j, z_(N)j
  Vector full_low_rb, full_high_rb; // z_(r_B)j, z_(N-r_B+1)j
  Vector full_low_r, full_high_r;   // z_(r)j, z_(N-r+1)j
  Matrix block_low, block_high;     // B x p: z_b(r_B)j, z_b(n_b-r_B+1)j
  std::vector<std::int64_t> block_rows;
};

// Streaming builder: feed blocks one at a time in ascending block order
// (arrival order fixes which row of block_low / block_high a block fills).
class RangeStatsBuilder {
 public:
  RangeStatsBuilder(int p, int B, std::int64_t k);
  void add_block(const DataBlock& block);
  RangeStats finish();

 private:
  RangeStats stats_;
  int seen_ = 0;
  // per covariate: candidate pools for full-data tail order statistics
  std::vector<std::vector<double>> low_pool_, high_pool_;
  std::vector<double> scratch_;
};

RangeStats collect_range_stats(std::span<const DataBlock> blocks,
                               std::int64_t k);

// Analytic ceiling on det of the subdata information matrix over all
// size-k subsets: k^{p+1} / 4^p * prod_j range_j^2. Computed in log space;
// the linear value may overflow to +inf for large p, the log never does.
double log_zeta_upper_bound(std::int64_t k, int p, const Vector& ranges);
double zeta_upper_bound(std::int64_t k, int p, const Vector& ranges);

// Lower bounds on det / zeta. c_r sums per-block trimmed ranges (sharp for
// randomly divided data), c_e uses full-data trimmed ranges (sharp for
// non-overlapping blocks); both carry the lambda_min^p / (Bp)^p prefactor.
struct DetRatioBounds {
  double c_r = 0.0, c_e = 0.0;
  double log_c_r = 0.0, log_c_e = 0.0;
};

DetRatioBounds det_ratio_bounds(const RangeStats& stats, double lambda_min,
                               int B, int p);

// Variance bounds for the subdata OLS estimator with k the ACTUAL subdata
// row count: per slope j a lower bound 4s2/(k range_j^2), two upper bounds
// (block-sum and full-data trimmed ranges), the single-partition
// comparator v_o (quota r), and the intercept floor s2/k. Upper bounds
// degenerate to +inf when lambda_min or a trimmed range vanishes; those
// slopes are listed in degenerate.
struct VarianceBounds {
  Vector v_lower, v_upper_a, v_upper_e, v_o;
  double intercept_lower = 0.0;
  std::vector<int> degenerate;
};

VarianceBounds slope_variance_bounds(const RangeStats& stats,
                                        double lambda_min, std::int64_t k,
                                        int p, int B, double sigma2);

// Checks a known-sigma2 coefficient covariance against the bounds, slope
// by slope, with 1e-9 absolute slack. Report-only: callers decide whether
// a failure is fatal.
struct SandwichSlope {
  double cov_jj = 0.0, lower = 0.0, upper = 0.0;
  bool pass = false;
};

struct SandwichReport {
  std::vector<SandwichSlope> slopes;
  double intercept_cov = 0.0, intercept_lower = 0.0;
  bool intercept_pass = false;
  bool all_pass = false;
};

SandwichReport verify_variance_sandwich(const Matrix& fit_cov,
                                        const VarianceBounds& bounds);

// Everything the bound machinery can say about one selection, plus the
// two intermediate inequalities the bound proofs rest on (determinant
// floor and per-covariate variance chain), checked on every build.
struct DiagnosticsReport {
  std::int64_t k_nominal = 0, k_actual = 0;
  int p = 0, B = 0;
  double lambda_min = 0.0;
  double zeta_n = 0.0, log_zeta_n = 0.0;
  double det_subdata = 0.0, log_det_subdata = 0.0;
  double det_ratio = 0.0, log_det_ratio = 0.0;
  double c_r = 0.0, c_e = 0.0, log_c_r = 0.0, log_c_e = 0.0;
  double lower_bound_used = 0.0;
  bool det_ratio_pass = false;
  VarianceBounds variance;
  bool det_bound_pass = false;       // det >= k (k-1)^p lambda^p prod var
  bool variance_chain_pass = false;  // (k-1) var_j >= r_B/2 * trimmed sums
  bool variance_chain_applicable = false;  // false when tails overlap
  bool has_sandwich = false;
  SandwichReport sandwich;

  std::string to_key_value() const;
};

// subdata_z are the selected covariate rows (union over blocks); fit_cov,
// when given, must be the known-sigma2 coefficient covariance on the same
// subdata.
DiagnosticsReport build_report(const Matrix& subdata_z, const RangeStats& stats,
                               double sigma2, const Matrix* fit_cov = nullptr);

// Key-value serialization of RangeStats for the selection manifest; values
// use %.17g so a read-back reproduces the exact doubles. read_range_stats
// scans every line of the stream and picks out keys under the prefix,
// throwing FormatError when required keys are missing.
void write_range_stats(std::ostream& out, const RangeStats& stats,
                       const std::string& prefix = "rs_");
RangeStats read_range_stats(std::istream& in, const std::string& prefix = "rs_");

}  // namespace iboss
