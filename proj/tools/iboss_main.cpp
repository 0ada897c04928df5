#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "iboss/baselines.hpp"
#include "iboss/bench.hpp"
#include "iboss/diagnostics.hpp"
#include "iboss/errors.hpp"
#include "iboss/estimation.hpp"
#include "iboss/harness.hpp"
#include "iboss/io.hpp"
#include "iboss/pipeline.hpp"
#include "iboss/select.hpp"
#include "iboss/simgen.hpp"

namespace fs = std::filesystem;
using namespace iboss;

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

FileFormat pick_format(const std::string& flag, const fs::path& path) {
  if (flag == "binary") return FileFormat::Binary;
  if (flag == "csv") return FileFormat::Csv;
  return path.extension() == ".csv" ? FileFormat::Csv : FileFormat::Binary;
}

std::string join64(const std::vector<std::int64_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

std::ostream& open_out(std::ofstream& file, const std::string& path) {
  if (path.empty()) return std::cout;
  file.open(path);
  if (!file) throw IoFailure("cannot open " + path + " for writing");
  return file;
}

// Key-value lines of a selection manifest, ignoring unknown keys.
std::map<std::string, std::string> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open manifest " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

std::vector<std::int64_t> parse_int_list(const std::string& key,
                                         const std::string& value) {
  std::vector<std::int64_t> out;
  std::size_t at = 0;
  while (at <= value.size()) {
    std::size_t comma = value.find(',', at);
    if (comma == std::string::npos) comma = value.size();
    const std::string field = value.substr(at, comma - at);
    try {
      out.push_back(std::stoll(field));
    } catch (const std::exception&) {
      throw FormatError("manifest key " + key + ": bad integer '" + field + "'");
    }
    at = comma + 1;
  }
  return out;
}

int run_generate(const std::string& case_name, std::int64_t n, int p,
                 std::uint64_t seed, double beta0, double beta_slope,
                 double noise_sd, bool no_response, const std::string& out,
                 const std::string& format_flag) {
  const CovariateCase c = covariate_case_from_name(case_name);
  const Matrix z = generate_covariates(c, n, p, seed);
  Vector y;
  const Vector* y_ptr = nullptr;
  if (!no_response) {
    y = generate_responses(z, beta0, Vector::Constant(p, beta_slope), seed,
                           noise_sd);
    y_ptr = &y;
  }
  const FileFormat fmt = pick_format(format_flag, out);
  write_dataset(out, fmt, z, y_ptr);
  std::cout << "file=" << out << "\nrows=" << n << "\ncovariates=" << p
            << "\nresponse=" << (no_response ? 0 : 1) << '\n';
  return 0;
}

int run_split(const std::string& input, std::int64_t rows_per_block,
              std::string out_dir, const std::string& format_flag) {
  const fs::path source(input);
  if (out_dir.empty()) {
    out_dir = source.has_parent_path() ? source.parent_path().string() : ".";
  }
  const FileFormat fmt = pick_format(format_flag, source);
  const auto files = split(source, rows_per_block, out_dir, fmt);
  std::cout << "blocks=" << files.size() << '\n';
  for (const auto& f : files) std::cout << f.string() << '\n';
  return 0;
}

int run_select(const std::string& blocks_dir, std::int64_t k, int b_flag,
               const std::string& mode, std::uint64_t seed,
               const std::string& out, std::string manifest_path,
               const std::string& format_flag, bool no_response) {
  const auto files = list_block_files(blocks_dir);
  if (files.empty()) throw IoFailure("no block files in " + blocks_dir);
  const int B = static_cast<int>(files.size());
  if (b_flag > 0 && b_flag != B) {
    throw OtherError("--B " + std::to_string(b_flag) + " does not match the " +
                     std::to_string(B) + " block files found");
  }
  DatasetMeta meta = files[0].extension() == ".csv"
                         ? infer_csv_meta(files[0], !no_response)
                         : read_binary_meta(files[0]);
  const int p = meta.n_covariates;
  const bool iboss_mode = mode == "iboss";
  std::int64_t k_b = k;
  RangeStatsBuilder builder(p, B, k);
  if (iboss_mode) {
    dnc_quota(k, p, B);  // QuotaUnderflow, exit 3
    k_b = dnc_block_k(k, B);
  } else {
    k_b = dnc_block_k(k, B);
  }

  double t_load = 0.0, t_select = 0.0, t_write = 0.0;
  std::vector<std::int64_t> block_sizes, selected_per_block, indices;
  std::vector<std::pair<std::int64_t, std::int64_t>> tail_counts(
      static_cast<std::size_t>(p), {0, 0});
  std::vector<std::pair<Matrix, Vector>> parts;
  std::int64_t offset = 0, total = 0;

  for (int b = 0; b < B; ++b) {
    auto t0 = std::chrono::steady_clock::now();
    DataBlock block = read_block(files[static_cast<std::size_t>(b)], meta);
    block.block_index = b;
    block.row_offset = offset;
    t_load += seconds_since(t0);
    if (block.rows() < k_b) {
      throw BlockTooSmall(b, block.rows(), k_b);
    }
    t0 = std::chrono::steady_clock::now();
    const SelectionResult sel = iboss_mode
                                    ? iboss_select(block, k_b)
                                    : poisson_subsample(block, k_b, seed);
    if (iboss_mode) {
      builder.add_block(block);
      for (int j = 0; j < p; ++j) {
        tail_counts[static_cast<std::size_t>(j)].first +=
            sel.per_covariate_counts[static_cast<std::size_t>(j)].first;
        tail_counts[static_cast<std::size_t>(j)].second +=
            sel.per_covariate_counts[static_cast<std::size_t>(j)].second;
      }
    }
    t_select += seconds_since(t0);
    std::vector<std::int64_t> local;
    local.reserve(sel.indices.size());
    for (std::int64_t g : sel.indices) local.push_back(g - offset);
    parts.push_back(extract_rows(block, local));
    indices.insert(indices.end(), sel.indices.begin(), sel.indices.end());
    block_sizes.push_back(block.rows());
    selected_per_block.push_back(sel.size());
    total += sel.size();
    offset += block.rows();
  }

  Matrix z(total, p);
  Vector y;
  if (meta.has_response) y.resize(total);
  std::int64_t at = 0;
  for (const auto& [z_part, y_part] : parts) {
    const std::int64_t r = z_part.rows();
    z.block(at, 0, r, p) = z_part;
    if (meta.has_response) y.segment(at, r) = y_part;
    at += r;
  }
  const auto t0 = std::chrono::steady_clock::now();
  const FileFormat out_fmt =
      format_flag == "auto" ? meta.format : pick_format(format_flag, out);
  write_dataset(out, out_fmt, z, meta.has_response ? &y : nullptr);
  t_write = seconds_since(t0);

  if (manifest_path.empty()) manifest_path = out + ".manifest";
  std::ofstream mf(manifest_path);
  if (!mf) throw IoFailure("cannot open " + manifest_path + " for writing");
  mf << "mode=" << mode << '\n';
  mf << "requested_k=" << k << '\n';
  mf << "actual_size=" << total << '\n';
  mf << "blocks=" << B << '\n';
  mf << "block_k=" << k_b << '\n';
  mf << "seed=" << seed << '\n';
  mf << "block_sizes=" << join64(block_sizes) << '\n';
  mf << "selected_per_block=" << join64(selected_per_block) << '\n';
  mf << "indices=" << join64(indices) << '\n';
  if (iboss_mode) {
    std::string lo, hi;
    for (int j = 0; j < p; ++j) {
      if (j) {
        lo += ',';
        hi += ',';
      }
      lo += std::to_string(tail_counts[static_cast<std::size_t>(j)].first);
      hi += std::to_string(tail_counts[static_cast<std::size_t>(j)].second);
    }
    mf << "tail_lower=" << lo << '\n';
    mf << "tail_upper=" << hi << '\n';
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", t_load);
  mf << "phase_load_seconds=" << buf << '\n';
  std::snprintf(buf, sizeof buf, "%.17g", t_select);
  mf << "phase_select_seconds=" << buf << '\n';
  std::snprintf(buf, sizeof buf, "%.17g", t_write);
  mf << "phase_write_seconds=" << buf << '\n';
  if (iboss_mode) {
    write_range_stats(mf, builder.finish());
  }
  std::cout << "subdata=" << out << "\nmanifest=" << manifest_path
            << "\nselected=" << total << '\n';
  return 0;
}

int run_fit(const std::string& subdata, bool has_sigma2, double sigma2,
            const std::string& aggregate, const std::string& range_stats,
            const std::string& out_path) {
  const fs::path path(subdata);
  const DatasetMeta meta = path.extension() == ".csv"
                               ? infer_csv_meta(path, true)
                               : read_binary_meta(path);
  if (!meta.has_response) throw FormatError("fit needs a response column");
  const DataBlock block = read_block(path, meta);
  const std::optional<double> sigma =
      has_sigma2 ? std::optional<double>(sigma2) : std::nullopt;

  Vector beta;
  Matrix cov;
  double sigma2_used = 0.0;
  std::int64_t n_used = block.rows();
  if (aggregate == "pooled") {
    const OlsFit fit = ols_fit(with_intercept(block.covariates),
                               block.responses, sigma);
    beta = fit.beta;
    cov = fit.cov;
    sigma2_used = fit.sigma2_hat;
  } else {
    if (range_stats.empty()) {
      throw OtherError("--aggregate weighted needs --range-stats (the "
                       "selection manifest carries the block sizes)");
    }
    const auto manifest = read_manifest(range_stats);
    const auto it = manifest.find("selected_per_block");
    if (it == manifest.end()) {
      throw FormatError("manifest is missing selected_per_block");
    }
    const auto per_block = parse_int_list("selected_per_block", it->second);
    std::int64_t sum = 0;
    for (std::int64_t v : per_block) sum += v;
    if (sum != block.rows()) {
      throw FormatError("manifest block sizes sum to " + std::to_string(sum) +
                        " but the subdata has " + std::to_string(block.rows()) +
                        " rows");
    }
    const int B = static_cast<int>(per_block.size());
    std::vector<Matrix> grams(static_cast<std::size_t>(B));
    std::vector<Vector> betas(static_cast<std::size_t>(B));
    std::vector<double> sigma2s(static_cast<std::size_t>(B));
    std::vector<OlsFit> fits(static_cast<std::size_t>(B));
    std::int64_t at = 0;
    for (int b = 0; b < B; ++b) {
      const std::size_t ub = static_cast<std::size_t>(b);
      const std::int64_t rows = per_block[ub];
      const Matrix x =
          with_intercept(block.covariates.middleRows(at, rows));
      const Vector yb = block.responses.segment(at, rows);
      try {
        fits[ub] = ols_fit(x, yb, sigma);
      } catch (const Error& e) {
        throw SingularBlockFit(b, e.what());
      }
      grams[ub] = x.transpose() * x;
      betas[ub] = fits[ub].beta;
      sigma2s[ub] = sigma.value_or(fits[ub].sigma2_hat);
      at += rows;
    }
    const AggregatedFit agg =
        aggregate_inverse_covariance(grams, betas, sigma2s, std::move(fits));
    beta = agg.beta;
    cov = agg.cov;
    double pooled = 0.0;
    for (double s : sigma2s) pooled += s;
    sigma2_used = sigma.value_or(pooled / B);
  }

  std::ofstream file;
  std::ostream& os = open_out(file, out_path);
  char buf[64];
  for (std::int64_t j = 0; j < beta.size(); ++j) {
    std::snprintf(buf, sizeof buf, "%.17g", beta(j));
    os << "beta_" << j << '=' << buf << '\n';
  }
  std::snprintf(buf, sizeof buf, "%.17g",
                has_sigma2 ? sigma2 : sigma2_used);
  os << "sigma2=" << buf << '\n';
  os << "sigma2_known=" << (has_sigma2 ? 1 : 0) << '\n';
  os << "n_used=" << n_used << '\n';
  for (std::int64_t i = 0; i < cov.rows(); ++i) {
    for (std::int64_t j = 0; j < cov.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", cov(i, j));
      os << "cov_" << i << '_' << j << '=' << buf << '\n';
    }
  }
  if (!range_stats.empty()) {
    std::ifstream rs(range_stats);
    if (!rs) throw IoFailure("cannot open " + range_stats);
    const RangeStats stats = read_range_stats(rs);
    const double s2 = has_sigma2 ? sigma2 : sigma2_used;
    const DiagnosticsReport report =
        build_report(block.covariates, stats, s2, &cov);
    os << report.to_key_value();
  }
  return 0;
}

int run_simulate(const std::string& config, const std::string& out_path) {
  const ExperimentConfig cfg = parse_config_file(config);
  const auto rows = run_experiment(cfg);
  std::ofstream file;
  std::ostream& os = open_out(file, out_path);
  write_results_csv(os, rows);
  return 0;
}

int run_bench_cmd(const std::string& blocks_dir, std::int64_t k,
                  const std::string& methods_csv, int repeats,
                  std::uint64_t seed, bool has_sigma2, double sigma2) {
  BenchOptions opt;
  opt.k = k;
  opt.repeats = repeats;
  opt.seed = seed;
  if (has_sigma2) opt.sigma2 = sigma2;
  std::size_t at = 0;
  while (at <= methods_csv.size()) {
    std::size_t comma = methods_csv.find(',', at);
    if (comma == std::string::npos) comma = methods_csv.size();
    const std::string name = methods_csv.substr(at, comma - at);
    if (!name.empty()) opt.methods.push_back(bench_method_from_name(name));
    at = comma + 1;
  }
  const auto rows = run_bench(blocks_dir, opt);
  std::cout << "method,blocks,rows_used,median_seconds,run_seconds\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6f", r.median_seconds);
    std::cout << bench_method_name(r.method) << ',' << r.blocks << ','
              << r.rows_used << ',' << buf << ',';
    for (std::size_t i = 0; i < r.run_seconds.size(); ++i) {
      if (i) std::cout << ';';
      std::snprintf(buf, sizeof buf, "%.6f", r.run_seconds[i]);
      std::cout << buf;
    }
    std::cout << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IBOSS subdata selection and divide-and-conquer fitting for "
               "linear regression on out-of-core data"};
  app.require_subcommand(1);
  app.fallthrough();
  int threads = 0;
  app.add_option("--threads", threads, "cap the OpenMP thread count");

  auto* gen = app.add_subcommand("generate", "write a synthetic dataset");
  std::string g_case = "normal";
  std::int64_t g_n = 0;
  int g_p = 0;
  std::uint64_t g_seed = 1;
  double g_beta0 = 1.0, g_slope = 1.0, g_noise = 1.0;
  bool g_noresp = false;
  std::string g_out, g_format = "auto";
  gen->add_option("--case", g_case,
                  "normal | lognormal | t2 | mix_ordered | mix_shuffled");
  gen->add_option("--n", g_n, "rows")->required();
  gen->add_option("--p", g_p, "covariates")->required();
  gen->add_option("--seed", g_seed, "generator seed");
  gen->add_option("--beta0", g_beta0, "true intercept");
  gen->add_option("--beta-slope", g_slope, "true slope (all covariates)");
  gen->add_option("--noise-sd", g_noise, "response noise standard deviation");
  gen->add_flag("--no-response", g_noresp, "covariates only");
  gen->add_option("--out", g_out, "output file")->required();
  gen->add_option("--format", g_format, "binary | csv | auto (by extension)");

  auto* spl = app.add_subcommand("split", "split a dataset into block files");
  std::string s_input, s_outdir, s_format = "auto";
  std::int64_t s_rpb = 0;
  spl->add_option("--input", s_input, "dataset file")->required();
  spl->add_option("--rows-per-block", s_rpb, "rows per block")->required();
  spl->add_option("--out-dir", s_outdir, "output directory (default: input's)");
  spl->add_option("--format", s_format, "binary | csv | auto (by extension)");

  auto* sel = app.add_subcommand("select", "select subdata from block files");
  std::string c_dir, c_mode = "iboss", c_out, c_manifest, c_format = "auto";
  std::int64_t c_k = 0;
  int c_b = 0;
  std::uint64_t c_seed = 1;
  bool c_noresp = false;
  sel->add_option("--blocks-dir", c_dir, "directory of block files")->required();
  sel->add_option("--k", c_k, "combined subdata size")->required();
  sel->add_option("--B", c_b, "expected number of blocks (checked)");
  sel->add_option("--mode", c_mode, "iboss | poisson")
      ->check(CLI::IsMember({"iboss", "poisson"}));
  sel->add_option("--seed", c_seed, "poisson sampling seed");
  sel->add_option("--out", c_out, "subdata output file")->required();
  sel->add_option("--manifest", c_manifest,
                  "manifest path (default: <out>.manifest)");
  sel->add_option("--format", c_format, "subdata format: binary | csv | auto");
  sel->add_flag("--no-response", c_noresp, "CSV blocks carry no response");

  auto* fit = app.add_subcommand("fit", "least-squares fit of a subdata file");
  std::string f_subdata, f_aggregate = "pooled", f_stats, f_out;
  double f_sigma2 = 0.0;
  fit->add_option("--subdata", f_subdata, "subdata file with responses")
      ->required();
  auto* f_sigma_opt =
      fit->add_option("--sigma2", f_sigma2, "known error variance");
  fit->add_option("--aggregate", f_aggregate, "pooled | weighted")
      ->check(CLI::IsMember({"pooled", "weighted"}));
  fit->add_option("--range-stats", f_stats,
                  "selection manifest; enables the diagnostics report");
  fit->add_option("--out", f_out, "report path (default: stdout)");

  auto* sim = app.add_subcommand("simulate", "replication sweep from a config");
  std::string m_config, m_out;
  sim->add_option("--config", m_config, "experiment config file")->required();
  sim->add_option("--out", m_out, "results CSV path (default: stdout)");

  auto* ben = app.add_subcommand("bench", "time methods over on-disk blocks");
  std::string b_dir, b_methods = "full,iboss,uni";
  std::int64_t b_k = 0;
  int b_repeats = 3;
  std::uint64_t b_seed = 1;
  double b_sigma2 = 0.0;
  ben->add_option("--blocks-dir", b_dir, "directory of block files")->required();
  ben->add_option("--k", b_k, "subdata size for iboss/uni")->required();
  ben->add_option("--methods", b_methods, "comma list of full,iboss,uni");
  ben->add_option("--repeats", b_repeats, "timing repeats (median reported)");
  ben->add_option("--seed", b_seed, "uni sampling seed");
  auto* b_sigma_opt =
      ben->add_option("--sigma2", b_sigma2, "known error variance for fits");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#endif

  try {
    if (gen->parsed()) {
      return run_generate(g_case, g_n, g_p, g_seed, g_beta0, g_slope, g_noise,
                          g_noresp, g_out, g_format);
    }
    if (spl->parsed()) return run_split(s_input, s_rpb, s_outdir, s_format);
    if (sel->parsed()) {
      return run_select(c_dir, c_k, c_b, c_mode, c_seed, c_out, c_manifest,
                        c_format, c_noresp);
    }
    if (fit->parsed()) {
      return run_fit(f_subdata, f_sigma_opt->count() > 0, f_sigma2, f_aggregate,
                     f_stats, f_out);
    }
    if (sim->parsed()) return run_simulate(m_config, m_out);
    if (ben->parsed()) {
      return run_bench_cmd(b_dir, b_k, b_methods, b_repeats, b_seed,
                           b_sigma_opt->count() > 0, b_sigma2);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
