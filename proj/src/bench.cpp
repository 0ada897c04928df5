#include "iboss/bench.hpp"

#include <algorithm>
#include <chrono>

#include "iboss/baselines.hpp"
#include "iboss/errors.hpp"
#include "iboss/estimation.hpp"
#include "iboss/io.hpp"
#include "iboss/rng.hpp"

namespace iboss {
namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 == 1 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

struct BlockSet {
  std::vector<std::filesystem::path> files;
  DatasetMeta meta;
  std::vector<std::int64_t> offsets;  // global row id of each block's start
};

DataBlock load(const BlockSet& set, int b) {
  DataBlock block =
      read_block(set.files[static_cast<std::size_t>(b)], set.meta);
  block.block_index = b;
  block.row_offset = set.offsets[static_cast<std::size_t>(b)];
  return block;
}

std::int64_t time_one(Method m, const BlockSet& set, const BenchOptions& opt,
                      double* seconds) {
  const auto start = std::chrono::steady_clock::now();
  const int B = static_cast<int>(set.files.size());
  std::int64_t rows_used = 0;
  if (m == Method::FullDnc) {
    std::vector<Matrix> grams(static_cast<std::size_t>(B));
    std::vector<Vector> betas(static_cast<std::size_t>(B));
    std::vector<double> sigma2s(static_cast<std::size_t>(B));
    std::vector<OlsFit> fits(static_cast<std::size_t>(B));
    for (int b = 0; b < B; ++b) {
      const DataBlock block = load(set, b);
      const std::size_t ub = static_cast<std::size_t>(b);
      const Matrix x = with_intercept(block.covariates);
      fits[ub] = ols_fit(x, block.responses, opt.sigma2);
      grams[ub] = x.transpose() * x;
      betas[ub] = fits[ub].beta;
      sigma2s[ub] = opt.sigma2.value_or(fits[ub].sigma2_hat);
      rows_used += block.rows();
    }
    const AggregatedFit agg =
        aggregate_inverse_covariance(grams, betas, sigma2s, std::move(fits));
    (void)agg;
  } else {
    const std::int64_t k_b = dnc_block_k(opt.k, B);
    if (m == Method::IbossDnc) {
      dnc_quota(opt.k, set.meta.n_covariates, B);
    }
    std::vector<std::pair<Matrix, Vector>> parts;
    parts.reserve(static_cast<std::size_t>(B));
    std::vector<std::int64_t> local;
    for (int b = 0; b < B; ++b) {
      const DataBlock block = load(set, b);
      const std::int64_t want = std::min(k_b, block.rows());
      const SelectionResult sel = m == Method::IbossDnc
                                      ? iboss_select(block, want)
                                      : poisson_subsample(block, want, opt.seed);
      local.clear();
      for (std::int64_t g : sel.indices) local.push_back(g - block.row_offset);
      parts.push_back(extract_rows(block, local));
      rows_used += static_cast<std::int64_t>(local.size());
    }
    const int p = set.meta.n_covariates;
    Matrix x(rows_used, p + 1);
    Vector y(rows_used);
    std::int64_t at = 0;
    for (const auto& [z_part, y_part] : parts) {
      const std::int64_t r = z_part.rows();
      x.block(at, 0, r, 1).setOnes();
      x.block(at, 1, r, p) = z_part;
      y.segment(at, r) = y_part;
      at += r;
    }
    const OlsFit fit = ols_fit(x, y, opt.sigma2);
    (void)fit;
  }
  const auto stop = std::chrono::steady_clock::now();
  *seconds = std::chrono::duration<double>(stop - start).count();
  return rows_used;
}

}  // namespace

Method bench_method_from_name(const std::string& name) {
  if (name == "full") return Method::FullDnc;
  if (name == "iboss") return Method::IbossDnc;
  if (name == "uni") return Method::Poisson;
  throw OtherError("unknown bench method '" + name +
                   "' (expected full, iboss or uni)");
}

std::string bench_method_name(Method m) {
  switch (m) {
    case Method::FullDnc: return "full";
    case Method::IbossDnc: return "iboss";
    case Method::Poisson: return "uni";
  }
  throw OtherError("unhandled method");
}

std::vector<BenchRow> run_bench(const std::filesystem::path& blocks_dir,
                                const BenchOptions& opt) {
  if (opt.methods.empty()) throw OtherError("no bench methods requested");
  if (opt.repeats < 1) throw OtherError("bench needs at least one repeat");
  BlockSet set;
  set.files = list_block_files(blocks_dir);
  if (set.files.empty()) {
    throw IoFailure("no block files in " + blocks_dir.string());
  }
  set.meta = set.files[0].extension() == ".csv"
                 ? infer_csv_meta(set.files[0], true)
                 : read_binary_meta(set.files[0]);
  if (!set.meta.has_response) {
    throw FormatError("bench blocks carry no response column");
  }

  // Warmup: one pass over every block so the page cache treats all timed
  // runs alike; the load cost still lands inside each measurement.
  std::int64_t offset = 0;
  for (std::size_t i = 0; i < set.files.size(); ++i) {
    set.offsets.push_back(offset);
    const DataBlock block = read_block(set.files[i], set.meta);
    offset += block.rows();
  }

  std::vector<BenchRow> rows;
  for (Method m : opt.methods) {
    BenchRow row;
    row.method = m;
    row.blocks = static_cast<int>(set.files.size());
    for (int rep = 0; rep < opt.repeats; ++rep) {
      double seconds = 0.0;
      row.rows_used = time_one(m, set, opt, &seconds);
      row.run_seconds.push_back(seconds);
    }
    row.median_seconds = median(row.run_seconds);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace iboss
