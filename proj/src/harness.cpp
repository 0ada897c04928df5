#include "iboss/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <utility>

#include "iboss/baselines.hpp"
#include "iboss/errors.hpp"
#include "iboss/estimation.hpp"
#include "iboss/io.hpp"
#include "iboss/rng.hpp"

namespace iboss {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void config_fail(int line, const std::string& what) {
  throw OtherError("config: line " + std::to_string(line) + ": " + what);
}

std::int64_t parse_int(const std::string& key, const std::string& val,
                       int line) {
  std::int64_t out = 0;
  const char* begin = val.data();
  const char* end = begin + val.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  if (ec != std::errc{} || ptr != end) {
    config_fail(line, "key '" + key + "' needs an integer, got '" + val + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& val, int line) {
  char* end = nullptr;
  const double out = std::strtod(val.c_str(), &end);
  if (end != val.c_str() + val.size() || val.empty() || !std::isfinite(out)) {
    config_fail(line, "key '" + key + "' needs a number, got '" + val + "'");
  }
  return out;
}

struct RepOutcome {
  double slope_sq_err = 0.0;
  double intercept_sq_err = 0.0;
  double subdata_rows = 0.0;
};

RepOutcome score(const Vector& beta_hat, const ExperimentConfig& cfg,
                 double rows) {
  RepOutcome out;
  out.intercept_sq_err = (beta_hat(0) - cfg.beta0) * (beta_hat(0) - cfg.beta0);
  out.slope_sq_err =
      (beta_hat.tail(cfg.p) - Vector::Constant(cfg.p, cfg.beta_slope))
          .squaredNorm();
  out.subdata_rows = rows;
  return out;
}

// Runs one method over one partitioned replication. load(b) must stay valid
// until the next call; blocks carry responses.
RepOutcome run_method(Method m, const ExperimentConfig& cfg, std::int64_t k,
                      int B, const std::function<const DataBlock*(int)>& load,
                      std::uint64_t data_seed) {
  if (m == Method::FullDnc) {
    std::vector<DataBlock> blocks;
    blocks.reserve(static_cast<std::size_t>(B));
    std::int64_t total = 0;
    for (int b = 0; b < B; ++b) {
      blocks.push_back(*load(b));
      total += blocks.back().rows();
    }
    const double sigma2 = cfg.noise_sd > 0.0 ? cfg.noise_sd * cfg.noise_sd : 1.0;
    const AggregatedFit agg = full_data_dnc_fit(blocks, sigma2);
    return score(agg.beta, cfg, static_cast<double>(total));
  }

  const std::int64_t k_b = dnc_block_k(k, B);
  if (m == Method::IbossDnc) dnc_quota(k, cfg.p, B);
  const std::uint64_t sel_seed = rng::derive_key(data_seed, rng::label::kPoisson);

  std::vector<std::pair<Matrix, Vector>> parts;
  parts.reserve(static_cast<std::size_t>(B));
  std::int64_t total = 0;
  std::vector<std::int64_t> local;
  for (int b = 0; b < B; ++b) {
    const DataBlock& block = *load(b);
    const SelectionResult sel =
        m == Method::IbossDnc ? iboss_select(block, std::min(k_b, block.rows()))
                              : poisson_subsample(block, std::min(k_b, block.rows()),
                                                  sel_seed);
    local.clear();
    local.reserve(sel.indices.size());
    for (std::int64_t g : sel.indices) local.push_back(g - block.row_offset);
    parts.push_back(extract_rows(block, local));
    total += static_cast<std::int64_t>(local.size());
  }

  Matrix x(total, cfg.p + 1);
  Vector y(total);
  std::int64_t at = 0;
  for (const auto& [z_part, y_part] : parts) {
    const std::int64_t r = z_part.rows();
    x.block(at, 0, r, 1).setOnes();
    x.block(at, 1, r, cfg.p) = z_part;
    y.segment(at, r) = y_part;
    at += r;
  }
  const OlsFit fit = ols_fit(x, y);
  return score(fit.beta, cfg, static_cast<double>(total));
}

}  // namespace

Method method_from_name(const std::string& name) {
  if (name == "iboss") return Method::IbossDnc;
  if (name == "poisson") return Method::Poisson;
  if (name == "full") return Method::FullDnc;
  throw OtherError("unknown method '" + name +
                   "' (expected iboss, poisson or full)");
}

std::string method_name(Method m) {
  switch (m) {
    case Method::IbossDnc: return "iboss";
    case Method::Poisson: return "poisson";
    case Method::FullDnc: return "full";
  }
  throw OtherError("unhandled method");
}

void ExperimentConfig::validate() const {
  const auto fail = [](const std::string& key, const std::string& what) {
    throw OtherError("config: key '" + key + "': " + what);
  };
  if (p < 1) fail("p", "needs a positive covariate count");
  if (replications < 1) fail("t", "needs at least one replication");
  if (n_grid.empty()) fail("n", "grid is empty");
  if (k_grid.empty()) fail("k", "grid is empty");
  if (b_grid.empty()) fail("b", "grid is empty");
  if (methods.empty()) fail("method", "grid is empty");
  if (!(noise_sd >= 0.0)) fail("noise_sd", "must be nonnegative");
  const bool mix = cov_case == CovariateCase::MixOrdered ||
                   cov_case == CovariateCase::MixShuffled;
  for (std::int64_t n : n_grid) {
    if (n < 1) fail("n", "entries must be positive");
    if (mix && n % 5 != 0) fail("n", "mix cases need n divisible by 5");
    for (std::int64_t k : k_grid) {
      if (k < 1) fail("k", "entries must be positive");
      if (k > n) {
        fail("k", "entry " + std::to_string(k) + " exceeds n = " +
                      std::to_string(n));
      }
    }
    for (int b : b_grid) {
      if (b < 1) fail("b", "entries must be positive");
      if (b > n) {
        fail("b", "entry " + std::to_string(b) + " exceeds n = " +
                      std::to_string(n));
      }
    }
  }
  if (on_disk && work_dir.empty()) {
    fail("work_dir", "required when storage = disk");
  }
}

ExperimentConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open config " + path.string());
  ExperimentConfig cfg;
  bool have_case = false, have_p = false, have_t = false;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      config_fail(line_no, "expected 'key = value', got '" + stripped + "'");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string val = trim(stripped.substr(eq + 1));
    if (key.empty() || val.empty()) {
      config_fail(line_no, "expected 'key = value', got '" + stripped + "'");
    }
    if (key == "case") {
      try {
        cfg.cov_case = covariate_case_from_name(val);
      } catch (const Error& e) {
        config_fail(line_no, std::string("key 'case': ") + e.what());
      }
      have_case = true;
    } else if (key == "p") {
      cfg.p = static_cast<int>(parse_int(key, val, line_no));
      have_p = true;
    } else if (key == "n") {
      cfg.n_grid.push_back(parse_int(key, val, line_no));
    } else if (key == "k") {
      cfg.k_grid.push_back(parse_int(key, val, line_no));
    } else if (key == "b") {
      cfg.b_grid.push_back(static_cast<int>(parse_int(key, val, line_no)));
    } else if (key == "method") {
      try {
        cfg.methods.push_back(method_from_name(val));
      } catch (const Error& e) {
        config_fail(line_no, std::string("key 'method': ") + e.what());
      }
    } else if (key == "t") {
      cfg.replications = static_cast<int>(parse_int(key, val, line_no));
      have_t = true;
    } else if (key == "seed") {
      cfg.seed = static_cast<std::uint64_t>(parse_int(key, val, line_no));
    } else if (key == "beta0") {
      cfg.beta0 = parse_real(key, val, line_no);
    } else if (key == "beta_slope") {
      cfg.beta_slope = parse_real(key, val, line_no);
    } else if (key == "noise_sd") {
      cfg.noise_sd = parse_real(key, val, line_no);
    } else if (key == "partition") {
      if (val == "sequential") {
        cfg.partitioning = Partitioning::Sequential;
      } else if (val == "shuffle") {
        cfg.partitioning = Partitioning::RandomShuffle;
      } else {
        config_fail(line_no, "key 'partition' takes sequential or shuffle");
      }
    } else if (key == "storage") {
      if (val == "memory") {
        cfg.on_disk = false;
      } else if (val == "disk") {
        cfg.on_disk = true;
      } else {
        config_fail(line_no, "key 'storage' takes memory or disk");
      }
    } else if (key == "work_dir") {
      cfg.work_dir = val;
    } else {
      config_fail(line_no, "unknown key '" + key + "'");
    }
  }
  if (!have_case) throw OtherError("config: missing required key 'case'");
  if (!have_p) throw OtherError("config: missing required key 'p'");
  if (!have_t) throw OtherError("config: missing required key 't'");
  if (cfg.n_grid.empty()) throw OtherError("config: missing required key 'n'");
  if (cfg.k_grid.empty()) throw OtherError("config: missing required key 'k'");
  if (cfg.b_grid.empty()) throw OtherError("config: missing required key 'b'");
  if (cfg.methods.empty()) {
    throw OtherError("config: missing required key 'method'");
  }
  cfg.validate();
  return cfg;
}

std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg,
                                      const Vector* forced_estimate) {
  cfg.validate();
  if (forced_estimate != nullptr && forced_estimate->size() != cfg.p + 1) {
    throw OtherError("forced estimate needs p + 1 coefficients");
  }
  const int T = cfg.replications;
  const std::size_t combos =
      cfg.k_grid.size() * cfg.b_grid.size() * cfg.methods.size();
  const Vector beta1 = Vector::Constant(cfg.p, cfg.beta_slope);
  if (cfg.on_disk) std::filesystem::create_directories(cfg.work_dir);

  std::vector<ResultRow> rows;
  for (std::int64_t n : cfg.n_grid) {
    // outcome[combo * T + rep], combo in (k, b, method) grid order
    std::vector<RepOutcome> outcomes(combos * static_cast<std::size_t>(T));
    std::exception_ptr first_error = nullptr;
    std::atomic<bool> failed{false};

#pragma omp parallel for schedule(dynamic)
    for (int rep = 0; rep < T; ++rep) {
      if (failed.load(std::memory_order_relaxed)) continue;
      try {
        const std::uint64_t data_seed = rng::derive_key(
            rng::derive_key(cfg.seed, rng::label::kExperiment,
                            static_cast<std::uint64_t>(n)),
            rng::label::kReplication, static_cast<std::uint64_t>(rep));

        if (forced_estimate != nullptr) {
          std::size_t combo = 0;
          for (std::size_t ki = 0; ki < cfg.k_grid.size(); ++ki) {
            for (std::size_t bi = 0; bi < cfg.b_grid.size(); ++bi) {
              for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi, ++combo) {
                auto& slot = outcomes[combo * T + rep];
                slot = score(*forced_estimate, cfg,
                             static_cast<double>(cfg.k_grid[ki]));
              }
            }
          }
          continue;
        }

        const Matrix z = generate_covariates(cfg.cov_case, n, cfg.p, data_seed);
        const Vector y = generate_responses(z, cfg.beta0, beta1, data_seed,
                                            cfg.noise_sd);

        std::filesystem::path rep_dir;
        std::filesystem::path source;
        if (cfg.on_disk) {
          rep_dir = cfg.work_dir /
                    ("n" + std::to_string(n) + "_rep" + std::to_string(rep));
          std::filesystem::create_directories(rep_dir);
          source = rep_dir / "source.bin";
          write_dataset(source, FileFormat::Binary, z, &y);
        }

        for (std::size_t bi = 0; bi < cfg.b_grid.size(); ++bi) {
          const int B = cfg.b_grid[bi];
          const std::uint64_t part_seed = rng::derive_key(
              data_seed, rng::label::kShuffle, static_cast<std::uint64_t>(B));
          const std::int64_t rows_per_block = ceil_div(n, B);

          PartitionedData mem;
          std::vector<std::filesystem::path> files;
          DatasetMeta meta;
          DataBlock scratch;
          if (cfg.on_disk) {
            const auto block_dir = rep_dir / ("b" + std::to_string(B));
            std::filesystem::create_directories(block_dir);
            files = cfg.partitioning == Partitioning::RandomShuffle
                        ? shuffle_split_binary(source, B, part_seed, block_dir)
                        : split(source, rows_per_block, block_dir,
                                FileFormat::Binary);
            meta = read_binary_meta(source);
          } else {
            mem = partition_rows(z, &y, B, cfg.partitioning, part_seed);
          }
          const std::function<const DataBlock*(int)> load =
              [&](int b) -> const DataBlock* {
            if (!cfg.on_disk) return &mem.blocks[static_cast<std::size_t>(b)];
            scratch = read_block(files[static_cast<std::size_t>(b)], meta);
            scratch.block_index = b;
            scratch.row_offset = static_cast<std::int64_t>(b) * rows_per_block;
            return &scratch;
          };

          for (std::size_t ki = 0; ki < cfg.k_grid.size(); ++ki) {
            for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
              const std::size_t combo =
                  (ki * cfg.b_grid.size() + bi) * cfg.methods.size() + mi;
              outcomes[combo * T + rep] =
                  run_method(cfg.methods[mi], cfg, cfg.k_grid[ki], B, load,
                             data_seed);
            }
          }
        }
        if (cfg.on_disk) std::filesystem::remove_all(rep_dir);
      } catch (...) {
#pragma omp critical(harness_error)
        {
          if (!failed.exchange(true)) first_error = std::current_exception();
        }
      }
    }
    if (first_error) std::rethrow_exception(first_error);

    std::size_t combo = 0;
    for (std::size_t ki = 0; ki < cfg.k_grid.size(); ++ki) {
      for (std::size_t bi = 0; bi < cfg.b_grid.size(); ++bi) {
        for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi, ++combo) {
          ResultRow row;
          row.cov_case = covariate_case_name(cfg.cov_case);
          row.method = method_name(cfg.methods[mi]);
          row.n = n;
          row.p = cfg.p;
          row.k = cfg.k_grid[ki];
          row.b = cfg.b_grid[bi];
          row.t = T;
          double sum = 0.0, sum_i = 0.0, sum_rows = 0.0;
          for (int rep = 0; rep < T; ++rep) {
            const auto& o = outcomes[combo * T + rep];
            sum += o.slope_sq_err;
            sum_i += o.intercept_sq_err;
            sum_rows += o.subdata_rows;
          }
          row.mse_slopes = sum / T;
          row.mse_intercept = sum_i / T;
          row.mean_subdata_size = sum_rows / T;
          if (T > 1) {
            double ss = 0.0;
            for (int rep = 0; rep < T; ++rep) {
              const double d =
                  outcomes[combo * T + rep].slope_sq_err - row.mse_slopes;
              ss += d * d;
            }
            row.mse_slopes_se = std::sqrt(ss / (static_cast<double>(T) * (T - 1)));
          }
          rows.push_back(std::move(row));
        }
      }
    }
  }

  // Canonical row order is n x k x b x method; the accumulation above walks
  // k x b x method per n already, so only the per-n groups need no reshuffle.
  return rows;
}

void write_results_csv(std::ostream& out, std::span<const ResultRow> rows) {
  out << "case,method,n,p,k,b,t,mse_slopes,mse_slopes_se,mse_intercept,"
         "mean_subdata_size\n";
  char buf[64];
  const auto num = [&buf](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    out << r.cov_case << ',' << r.method << ',' << r.n << ',' << r.p << ','
        << r.k << ',' << r.b << ',' << r.t << ',' << num(r.mse_slopes) << ','
        << num(r.mse_slopes_se) << ',' << num(r.mse_intercept) << ','
        << num(r.mean_subdata_size) << '\n';
  }
}

}  // namespace iboss
