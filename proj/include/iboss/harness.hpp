#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "iboss/pipeline.hpp"
#include "iboss/simgen.hpp"
#include "iboss/types.hpp"

namespace iboss {

enum class Method { IbossDnc, Poisson, FullDnc };

Method method_from_name(const std::string& name);
std::string method_name(Method m);

// Replication sweep over a grid of (n, k, B, method). Data are regenerated
// fresh for every replication; the draw is keyed by (seed, n, replication)
// only, so every method and every B sees identical data within a
// replication. storage = disk routes each replication through binary block
// files under work_dir, exercising the out-of-core path.
struct ExperimentConfig {
  CovariateCase cov_case = CovariateCase::Normal;
  int p = 0;
  std::vector<std::int64_t> n_grid;
  std::vector<std::int64_t> k_grid;
  std::vector<int> b_grid;
  std::vector<Method> methods;
  int replications = 0;
  std::uint64_t seed = 1;
  double beta0 = 1.0;
  double beta_slope = 1.0;
  double noise_sd = 1.0;
  Partitioning partitioning = Partitioning::Sequential;
  bool on_disk = false;
  std::filesystem::path work_dir;

  void validate() const;  // throws OtherError naming the offending key
};

// Flat key = value file; '#' starts a comment. Grid keys (n, k, b, method)
// repeat. Errors name the offending key and line.
ExperimentConfig parse_config_file(const std::filesystem::path& path);

// One row per (n, k, B, method): empirical MSE of the slope vector,
// T^{-1} sum_t |beta1_hat - beta1|^2, its Monte-Carlo standard error, the
// intercept's squared-error mean kept separate, and the mean number of
// subdata rows entering the fit.
struct ResultRow {
  std::string cov_case;
  std::string method;
  std::int64_t n = 0;
  int p = 0;
  std::int64_t k = 0;
  int b = 0;
  int t = 0;
  double mse_slopes = 0.0;
  double mse_slopes_se = 0.0;
  double mse_intercept = 0.0;
  double mean_subdata_size = 0.0;
};

// forced_estimate short-circuits every fit with a fixed coefficient vector
// (intercept first); it exists so the MSE arithmetic is testable in
// isolation.
std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg,
                                      const Vector* forced_estimate = nullptr);

// Fixed column order:
// case,method,n,p,k,b,t,mse_slopes,mse_slopes_se,mse_intercept,mean_subdata_size
void write_results_csv(std::ostream& out, std::span<const ResultRow> rows);

}  // namespace iboss
