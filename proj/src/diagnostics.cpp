#include "iboss/diagnostics.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <limits>
#include <map>
#include <ostream>

#include "iboss/errors.hpp"
#include "iboss/estimation.hpp"
#include "iboss/quick_select.hpp"
#include "iboss/select.hpp"

namespace iboss {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct ZeroRange : NumericError {
  explicit ZeroRange(int col)
      : NumericError("covariate " + std::to_string(col) +
                     " has zero full-data range"),
        col(col) {}
  int col;
};

// a >= b - slack, with both sides tracked in log space. A -inf log bound
// is vacuously satisfied; otherwise compare logs first and fall back to
// linear values only when they are representable.
bool ge_with_slack(double log_a, double log_b, double slack) {
  if (std::isinf(log_b) && log_b < 0.0) return true;
  if (log_a >= log_b) return true;
  const double a = std::exp(log_a);
  const double b = std::exp(log_b);
  return std::isfinite(b) && a >= b - slack;
}

double append_format(std::string& out, const char* name, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += name;
  out += '=';
  out += buf;
  out += '\n';
  return v;
}

void append_vector(std::string& out, const std::string& name, const Vector& v) {
  char buf[64];
  for (std::int64_t j = 0; j < v.size(); ++j) {
    std::snprintf(buf, sizeof buf, "%.17g", v(j));
    out += name;
    out += '_';
    out += std::to_string(j + 1);
    out += '=';
    out += buf;
    out += '\n';
  }
}

}  // namespace

RangeStatsBuilder::RangeStatsBuilder(int p, int B, std::int64_t k) {
  if (p < 1 || B < 1 || k < 1) {
    throw OtherError("range stats need positive p, B and k");
  }
  stats_.p = p;
  stats_.B = B;
  stats_.k = k;
  stats_.r = ceil_div(k, 2 * static_cast<std::int64_t>(p));
  stats_.r_B = ceil_div(ceil_div(k, static_cast<std::int64_t>(B)),
                        2 * static_cast<std::int64_t>(p));
  stats_.full_min = Vector::Constant(p, kInf);
  stats_.full_max = Vector::Constant(p, -kInf);
  stats_.full_low_rb.resize(p);
  stats_.full_high_rb.resize(p);
  stats_.full_low_r.resize(p);
  stats_.full_high_r.resize(p);
  stats_.block_low.resize(B, p);
  stats_.block_high.resize(B, p);
  low_pool_.resize(static_cast<std::size_t>(p));
  high_pool_.resize(static_cast<std::size_t>(p));
}

void RangeStatsBuilder::add_block(const DataBlock& block) {
  if (seen_ >= stats_.B) {
    throw OtherError("more blocks added than the declared " +
                     std::to_string(stats_.B));
  }
  if (block.p() != stats_.p) {
    throw FormatError("block covariate count does not match the builder");
  }
  const std::int64_t n_b = block.rows();
  if (n_b < stats_.r_B) {
    throw QuotaError("block of " + std::to_string(n_b) +
                     " rows cannot provide the per-tail quota " +
                     std::to_string(stats_.r_B));
  }
  const int b = seen_++;
  stats_.n_total += n_b;
  stats_.block_rows.push_back(n_b);

  // g smallest / largest values per covariate feed the full-data order
  // statistics: the overall m-th smallest (m <= g) is among the union of
  // per-block g smallest.
  const std::int64_t g = std::min(stats_.r, n_b);
  for (int j = 0; j < stats_.p; ++j) {
    const double* col = block.covariates.col(j).data();
    scratch_.assign(col, col + n_b);
    // Selection leaves the g smallest in the prefix.
    kth_smallest_inplace(scratch_, g);
    auto& lows = low_pool_[static_cast<std::size_t>(j)];
    lows.insert(lows.end(), scratch_.begin(), scratch_.begin() + g);
    // Block-level lower quota stat lives inside that prefix.
    stats_.block_low(b, j) = kth_smallest_inplace(
        std::span<double>(scratch_.data(), static_cast<std::size_t>(g)),
        stats_.r_B);

    scratch_.assign(col, col + n_b);
    kth_smallest_inplace(scratch_, n_b - g + 1);
    auto& highs = high_pool_[static_cast<std::size_t>(j)];
    highs.insert(highs.end(), scratch_.end() - g, scratch_.end());
    stats_.block_high(b, j) = kth_smallest_inplace(
        std::span<double>(scratch_.data() + (n_b - g),
                          static_cast<std::size_t>(g)),
        g - stats_.r_B + 1);

    double lo = col[0], hi = col[0];
    for (std::int64_t i = 1; i < n_b; ++i) {
      lo = std::min(lo, col[i]);
      hi = std::max(hi, col[i]);
    }
    stats_.full_min(j) = std::min(stats_.full_min(j), lo);
    stats_.full_max(j) = std::max(stats_.full_max(j), hi);
  }
}

RangeStats RangeStatsBuilder::finish() {
  if (seen_ != stats_.B) {
    throw OtherError("saw " + std::to_string(seen_) + " blocks, declared " +
                     std::to_string(stats_.B));
  }
  if (stats_.n_total < stats_.r) {
    throw QuotaError("full data of " + std::to_string(stats_.n_total) +
                     " rows cannot provide the per-tail quota " +
                     std::to_string(stats_.r));
  }
  for (int j = 0; j < stats_.p; ++j) {
    auto& lows = low_pool_[static_cast<std::size_t>(j)];
    auto& highs = high_pool_[static_cast<std::size_t>(j)];
    stats_.full_low_rb(j) = kth_smallest(lows, stats_.r_B);
    stats_.full_low_r(j) = kth_smallest(lows, stats_.r);
    const std::int64_t m = static_cast<std::int64_t>(highs.size());
    stats_.full_high_rb(j) = kth_smallest(highs, m - stats_.r_B + 1);
    stats_.full_high_r(j) = kth_smallest(highs, m - stats_.r + 1);
  }
  return std::move(stats_);
}

RangeStats collect_range_stats(std::span<const DataBlock> blocks,
                               std::int64_t k) {
  if (blocks.empty()) throw OtherError("no blocks to scan");
  RangeStatsBuilder builder(blocks[0].p(), static_cast<int>(blocks.size()), k);
  for (const auto& b : blocks) builder.add_block(b);
  return builder.finish();
}

double log_zeta_upper_bound(std::int64_t k, int p, const Vector& ranges) {
  if (ranges.size() != p) throw OtherError("range vector length mismatch");
  if (k < 1) throw OtherError("subdata size must be positive");
  double log_prod = 0.0;
  for (int j = 0; j < p; ++j) {
    if (!(ranges(j) > 0.0)) throw ZeroRange(j);
    log_prod += 2.0 * std::log(ranges(j));
  }
  return (p + 1) * std::log(static_cast<double>(k)) -
         p * std::log(4.0) + log_prod;
}

double zeta_upper_bound(std::int64_t k, int p, const Vector& ranges) {
  if (ranges.size() != p) throw OtherError("range vector length mismatch");
  if (k < 1) throw OtherError("subdata size must be positive");
  double zeta = std::pow(static_cast<double>(k), p + 1) / std::pow(4.0, p);
  for (int j = 0; j < p; ++j) {
    if (!(ranges(j) > 0.0)) throw ZeroRange(j);
    zeta *= ranges(j) * ranges(j);
  }
  return zeta;
}

DetRatioBounds det_ratio_bounds(const RangeStats& stats, double lambda_min,
                               int B, int p) {
  if (B != stats.B || p != stats.p) {
    throw OtherError("bounds requested for a different B or p than the stats");
  }
  const double lambda = std::max(lambda_min, 0.0);
  DetRatioBounds out;
  const double log_prefactor =
      p * (std::log(lambda) -
           std::log(static_cast<double>(B) * static_cast<double>(p)));
  double log_sum_term = 0.0;
  double log_full_term = 0.0;
  for (int j = 0; j < p; ++j) {
    const double range = stats.full_max(j) - stats.full_min(j);
    if (!(range > 0.0)) throw ZeroRange(j);
    double sum = 0.0;
    for (int b = 0; b < B; ++b) {
      const double t = (stats.block_high(b, j) - stats.block_low(b, j)) / range;
      sum += t * t;
    }
    log_sum_term += std::log(sum);
    const double full_t = (stats.full_high_rb(j) - stats.full_low_rb(j)) / range;
    log_full_term += std::log(full_t * full_t);
  }
  out.log_c_r = log_prefactor + log_sum_term;
  out.log_c_e = log_prefactor + log_full_term;
  out.c_r = std::exp(out.log_c_r);
  out.c_e = std::exp(out.log_c_e);
  return out;
}

VarianceBounds slope_variance_bounds(const RangeStats& stats,
                                        double lambda_min, std::int64_t k,
                                        int p, int B, double sigma2) {
  if (B != stats.B || p != stats.p) {
    throw OtherError("bounds requested for a different B or p than the stats");
  }
  if (k < 1) throw OtherError("subdata size must be positive");
  VarianceBounds out;
  out.v_lower.resize(p);
  out.v_upper_a.resize(p);
  out.v_upper_e.resize(p);
  out.v_o.resize(p);
  out.intercept_lower = sigma2 / static_cast<double>(k);
  const double lambda = std::max(lambda_min, 0.0);
  const double kd = static_cast<double>(k);
  for (int j = 0; j < p; ++j) {
    const double range = stats.full_max(j) - stats.full_min(j);
    if (!(range > 0.0)) throw ZeroRange(j);
    out.v_lower(j) = 4.0 * sigma2 / (kd * range * range);

    double block_sq_sum = 0.0;
    for (int b = 0; b < B; ++b) {
      const double t = stats.block_high(b, j) - stats.block_low(b, j);
      block_sq_sum += t * t;
    }
    const double full_trim = stats.full_high_rb(j) - stats.full_low_rb(j);
    const double orig_trim = stats.full_high_r(j) - stats.full_low_r(j);

    bool degenerate = false;
    const double num_ab = 4.0 * p * B * sigma2;
    if (lambda > 0.0 && block_sq_sum > 0.0) {
      out.v_upper_a(j) = num_ab / (kd * lambda * block_sq_sum);
    } else {
      out.v_upper_a(j) = kInf;
      degenerate = true;
    }
    if (lambda > 0.0 && full_trim * full_trim > 0.0) {
      out.v_upper_e(j) = num_ab / (kd * lambda * full_trim * full_trim);
    } else {
      out.v_upper_e(j) = kInf;
      degenerate = true;
    }
    if (lambda > 0.0 && orig_trim * orig_trim > 0.0) {
      out.v_o(j) = 4.0 * p * sigma2 / (kd * lambda * orig_trim * orig_trim);
    } else {
      out.v_o(j) = kInf;
      degenerate = true;
    }
    if (degenerate) out.degenerate.push_back(j);
  }
  return out;
}

SandwichReport verify_variance_sandwich(const Matrix& fit_cov,
                                        const VarianceBounds& bounds) {
  constexpr double kSlack = 1e-9;
  const int p = static_cast<int>(bounds.v_lower.size());
  if (fit_cov.rows() != p + 1 || fit_cov.cols() != p + 1) {
    throw OtherError("covariance dimension does not match the bounds");
  }
  SandwichReport report;
  report.intercept_cov = fit_cov(0, 0);
  report.intercept_lower = bounds.intercept_lower;
  report.intercept_pass = fit_cov(0, 0) >= bounds.intercept_lower - kSlack;
  report.all_pass = report.intercept_pass;
  report.slopes.resize(static_cast<std::size_t>(p));
  for (int j = 0; j < p; ++j) {
    auto& slope = report.slopes[static_cast<std::size_t>(j)];
    slope.cov_jj = fit_cov(j + 1, j + 1);
    slope.lower = bounds.v_lower(j);
    slope.upper = std::min(bounds.v_upper_a(j), bounds.v_upper_e(j));
    slope.pass = slope.cov_jj >= slope.lower - kSlack &&
                 (std::isinf(slope.upper) || slope.cov_jj <= slope.upper + kSlack);
    report.all_pass = report.all_pass && slope.pass;
  }
  return report;
}

DiagnosticsReport build_report(const Matrix& subdata_z, const RangeStats& stats,
                               double sigma2, const Matrix* fit_cov) {
  DiagnosticsReport rep;
  rep.k_nominal = stats.k;
  rep.k_actual = subdata_z.rows();
  rep.p = stats.p;
  rep.B = stats.B;
  if (subdata_z.cols() != stats.p) {
    throw FormatError("subdata covariate count does not match the stats");
  }

  const CorrelationSummary corr = correlation_summary(subdata_z);
  rep.lambda_min = corr.lambda_min;

  // log det of the (p+1)-dimensional information matrix of [1, Z*].
  const Matrix x = with_intercept(subdata_z);
  const Matrix gram = x.transpose() * x;
  Eigen::LDLT<Matrix> ldlt(gram);
  rep.log_det_subdata = -kInf;
  if (ldlt.info() == Eigen::Success) {
    const Vector d = ldlt.vectorD();
    double log_det = 0.0;
    bool positive = true;
    for (std::int64_t i = 0; i < d.size(); ++i) {
      if (!(d(i) > 0.0)) {
        positive = false;
        break;
      }
      log_det += std::log(d(i));
    }
    if (positive) rep.log_det_subdata = log_det;
  }
  rep.det_subdata = std::exp(rep.log_det_subdata);

  const Vector ranges = stats.full_max - stats.full_min;
  rep.log_zeta_n = log_zeta_upper_bound(stats.k, stats.p, ranges);
  rep.zeta_n = std::exp(rep.log_zeta_n);
  rep.log_det_ratio = rep.log_det_subdata - rep.log_zeta_n;
  rep.det_ratio = std::exp(rep.log_det_ratio);

  const DetRatioBounds t1 = det_ratio_bounds(stats, corr.lambda_min, stats.B,
                                            stats.p);
  rep.c_r = t1.c_r;
  rep.c_e = t1.c_e;
  rep.log_c_r = t1.log_c_r;
  rep.log_c_e = t1.log_c_e;
  rep.lower_bound_used = std::max(t1.c_r, t1.c_e);
  rep.det_ratio_pass = ge_with_slack(
      rep.log_det_ratio, std::max(t1.log_c_r, t1.log_c_e), 1e-9);

  rep.variance = slope_variance_bounds(stats, corr.lambda_min, rep.k_actual,
                                          stats.p, stats.B, sigma2);

  // Determinant floor: det >= k (k-1)^p lambda^p prod_j var(z*_j).
  {
    double log_bound = -kInf;
    if (corr.lambda_min > 0.0 && rep.k_actual >= 2) {
      log_bound = std::log(static_cast<double>(rep.k_actual)) +
                  stats.p * std::log(static_cast<double>(rep.k_actual - 1)) +
                  stats.p * std::log(corr.lambda_min);
      for (int j = 0; j < stats.p; ++j) log_bound += std::log(corr.variance(j));
    }
    rep.det_bound_pass = ge_with_slack(rep.log_det_subdata, log_bound, 1e-9);
  }

  // Per-covariate variance chain feeding the determinant and variance bound proofs:
  // (k-1) var(z*_j) >= (r_B / 2) sum_b trimmed_b^2 and likewise for the
  // full-data trimmed range. Valid when every block holds two disjoint
  // tails of r_B rows; overlapping tails void the pairing argument.
  {
    rep.variance_chain_applicable = true;
    for (std::int64_t rows : stats.block_rows) {
      if (rows < 2 * stats.r_B) rep.variance_chain_applicable = false;
    }
    if (stats.n_total < 2 * stats.r_B) rep.variance_chain_applicable = false;
    bool pass = rep.variance_chain_applicable;
    if (rep.variance_chain_applicable) {
      const double half_quota = 0.5 * static_cast<double>(stats.r_B);
      for (int j = 0; j < stats.p && pass; ++j) {
        const double lhs =
            static_cast<double>(rep.k_actual - 1) * corr.variance(j);
        double block_sq_sum = 0.0;
        for (int b = 0; b < stats.B; ++b) {
          const double t = stats.block_high(b, j) - stats.block_low(b, j);
          block_sq_sum += t * t;
        }
        const double full_trim = stats.full_high_rb(j) - stats.full_low_rb(j);
        const double rhs_blocks = half_quota * block_sq_sum;
        const double rhs_full = half_quota * full_trim * full_trim;
        const double slack = 1e-9 * std::max(1.0, std::abs(lhs));
        pass = lhs >= rhs_blocks - slack && lhs >= rhs_full - slack;
      }
    }
    rep.variance_chain_pass = pass;
  }

  if (fit_cov != nullptr) {
    rep.has_sandwich = true;
    rep.sandwich = verify_variance_sandwich(*fit_cov, rep.variance);
  }
  return rep;
}

std::string DiagnosticsReport::to_key_value() const {
  std::string out;
  out.reserve(1024);
  append_format(out, "k_nominal", static_cast<double>(k_nominal));
  append_format(out, "k_actual", static_cast<double>(k_actual));
  append_format(out, "p", p);
  append_format(out, "B", B);
  append_format(out, "lambda_min", lambda_min);
  append_format(out, "zeta_n", zeta_n);
  append_format(out, "log_zeta_n", log_zeta_n);
  append_format(out, "det_subdata", det_subdata);
  append_format(out, "log_det_subdata", log_det_subdata);
  append_format(out, "det_ratio", det_ratio);
  append_format(out, "log_det_ratio", log_det_ratio);
  append_format(out, "c_r", c_r);
  append_format(out, "c_e", c_e);
  append_format(out, "log_c_r", log_c_r);
  append_format(out, "log_c_e", log_c_e);
  append_format(out, "lower_bound_used", lower_bound_used);
  append_format(out, "det_ratio_pass", det_ratio_pass ? 1.0 : 0.0);
  append_format(out, "det_bound_pass", det_bound_pass ? 1.0 : 0.0);
  append_format(out, "variance_chain_applicable",
                variance_chain_applicable ? 1.0 : 0.0);
  append_format(out, "variance_chain_pass", variance_chain_pass ? 1.0 : 0.0);
  append_format(out, "intercept_lower", variance.intercept_lower);
  append_vector(out, "v_lower", variance.v_lower);
  append_vector(out, "v_upper_a", variance.v_upper_a);
  append_vector(out, "v_upper_e", variance.v_upper_e);
  append_vector(out, "v_o", variance.v_o);
  if (has_sandwich) {
    append_format(out, "sandwich_all_pass", sandwich.all_pass ? 1.0 : 0.0);
    append_format(out, "sandwich_intercept_cov", sandwich.intercept_cov);
  }
  return out;
}

namespace {

std::string join_doubles(const double* v, std::int64_t n) {
  char buf[64];
  std::string s;
  for (std::int64_t i = 0; i < n; ++i) {
    if (i) s += ',';
    std::snprintf(buf, sizeof buf, "%.17g", v[i]);
    s += buf;
  }
  return s;
}

std::vector<double> split_doubles(const std::string& key,
                                  const std::string& value) {
  std::vector<double> out;
  std::size_t at = 0;
  while (at <= value.size()) {
    std::size_t comma = value.find(',', at);
    if (comma == std::string::npos) comma = value.size();
    const std::string field = value.substr(at, comma - at);
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    if (field.empty() || end != field.c_str() + field.size()) {
      throw FormatError("range stats key " + key + ": bad number '" + field +
                        "'");
    }
    out.push_back(v);
    at = comma + 1;
  }
  return out;
}

std::int64_t parse_stat_int(const std::string& key, const std::string& value) {
  std::int64_t out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw FormatError("range stats key " + key + ": bad integer '" + value +
                      "'");
  }
  return out;
}

}  // namespace

void write_range_stats(std::ostream& out, const RangeStats& stats,
                       const std::string& prefix) {
  out << prefix << "n_total=" << stats.n_total << '\n';
  out << prefix << "p=" << stats.p << '\n';
  out << prefix << "B=" << stats.B << '\n';
  out << prefix << "k=" << stats.k << '\n';
  out << prefix << "r=" << stats.r << '\n';
  out << prefix << "r_b=" << stats.r_B << '\n';
  {
    std::string s;
    for (std::size_t i = 0; i < stats.block_rows.size(); ++i) {
      if (i) s += ',';
      s += std::to_string(stats.block_rows[i]);
    }
    out << prefix << "block_rows=" << s << '\n';
  }
  const auto vec = [&](const char* name, const Vector& v) {
    out << prefix << name << '=' << join_doubles(v.data(), v.size()) << '\n';
  };
  vec("full_min", stats.full_min);
  vec("full_max", stats.full_max);
  vec("full_low_rb", stats.full_low_rb);
  vec("full_high_rb", stats.full_high_rb);
  vec("full_low_r", stats.full_low_r);
  vec("full_high_r", stats.full_high_r);
  for (int b = 0; b < stats.B; ++b) {
    Vector lo = stats.block_low.row(b);
    Vector hi = stats.block_high.row(b);
    out << prefix << "block_low_" << b << '='
        << join_doubles(lo.data(), lo.size()) << '\n';
    out << prefix << "block_high_" << b << '='
        << join_doubles(hi.data(), hi.size()) << '\n';
  }
}

RangeStats read_range_stats(std::istream& in, const std::string& prefix) {
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    if (key.rfind(prefix, 0) != 0) continue;
    kv[key.substr(prefix.size())] = line.substr(eq + 1);
  }
  const auto need = [&](const std::string& k) -> const std::string& {
    const auto it = kv.find(k);
    if (it == kv.end()) {
      throw FormatError("range stats missing key " + prefix + k);
    }
    return it->second;
  };
  RangeStats s;
  s.n_total = parse_stat_int("n_total", need("n_total"));
  s.p = static_cast<int>(parse_stat_int("p", need("p")));
  s.B = static_cast<int>(parse_stat_int("B", need("B")));
  s.k = parse_stat_int("k", need("k"));
  s.r = parse_stat_int("r", need("r"));
  s.r_B = parse_stat_int("r_b", need("r_b"));
  if (s.p < 1 || s.B < 1) throw FormatError("range stats: bad dimensions");
  {
    const std::vector<double> rows = split_doubles("block_rows", need("block_rows"));
    if (static_cast<int>(rows.size()) != s.B) {
      throw FormatError("range stats: block_rows length != B");
    }
    for (double v : rows) s.block_rows.push_back(static_cast<std::int64_t>(v));
  }
  const auto vec = [&](const std::string& name) {
    const std::vector<double> v = split_doubles(name, need(name));
    if (static_cast<int>(v.size()) != s.p) {
      throw FormatError("range stats: " + name + " length != p");
    }
    return Eigen::Map<const Vector>(v.data(), s.p).eval();
  };
  s.full_min = vec("full_min");
  s.full_max = vec("full_max");
  s.full_low_rb = vec("full_low_rb");
  s.full_high_rb = vec("full_high_rb");
  s.full_low_r = vec("full_low_r");
  s.full_high_r = vec("full_high_r");
  s.block_low.resize(s.B, s.p);
  s.block_high.resize(s.B, s.p);
  for (int b = 0; b < s.B; ++b) {
    const Vector lo = vec("block_low_" + std::to_string(b));
    const Vector hi = vec("block_high_" + std::to_string(b));
    s.block_low.row(b) = lo;
    s.block_high.row(b) = hi;
  }
  return s;
}

}  // namespace iboss
