#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "iboss/io.hpp"
#include "iboss/rng.hpp"
#include "iboss/select.hpp"

using namespace iboss;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("iboss_cli_test_" + std::to_string(rng::mix(
                                    std::hash<const void*>{}(this))));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

RunResult run_cli(const TempDir& tmp, const std::string& args) {
  const fs::path out = tmp.path / "stdout.txt";
  const fs::path err = tmp.path / "stderr.txt";
  const std::string cmd = std::string("\"") + IBOSS_CLI_PATH + "\" " + args +
                          " > " + q(out) + " 2> " + q(err);
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::map<std::string, std::string> parse_kv(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) fields.push_back(f);
  return fields;
}

// generate + split a small binary dataset, returning the blocks dir
fs::path prepare_blocks(const TempDir& tmp, int n, int p, int blocks,
                        const std::string& extra_generate = "") {
  const fs::path data = tmp.path / "data.bin";
  const fs::path dir = tmp.path / "blocks";
  RunResult g = run_cli(tmp, "generate --case normal --n " + std::to_string(n) +
                                 " --p " + std::to_string(p) +
                                 " --seed 11 --out " + q(data) + extra_generate);
  REQUIRE(g.code == 0);
  RunResult s = run_cli(tmp, "split --input " + q(data) + " --rows-per-block " +
                                 std::to_string(n / blocks) + " --out-dir " +
                                 q(dir));
  REQUIRE(s.code == 0);
  REQUIRE(s.out.find("blocks=" + std::to_string(blocks)) != std::string::npos);
  return dir;
}

}  // namespace

TEST_CASE("no subcommand is an error") {
  TempDir tmp;
  CHECK(run_cli(tmp, "").code != 0);
  CHECK(run_cli(tmp, "frobnicate").code != 0);
}

TEST_CASE("generate reports what it wrote") {
  TempDir tmp;
  const fs::path data = tmp.path / "data.bin";
  const RunResult r = run_cli(
      tmp, "generate --case lognormal --n 120 --p 4 --seed 3 --out " + q(data));
  CHECK(r.code == 0);
  CHECK(r.out.find("rows=120") != std::string::npos);
  CHECK(r.out.find("covariates=4") != std::string::npos);
  const DatasetMeta meta = read_binary_meta(data);
  CHECK(meta.n_rows == 120);
  CHECK(meta.n_covariates == 4);
  CHECK(meta.has_response);

  const RunResult bare = run_cli(
      tmp, "generate --case normal --n 10 --p 2 --no-response --out " +
               q(tmp.path / "x.bin"));
  CHECK(bare.code == 0);
  CHECK_FALSE(read_binary_meta(tmp.path / "x.bin").has_response);
}

TEST_CASE("missing inputs fail without a stack trace") {
  TempDir tmp;
  const RunResult r = run_cli(tmp, "split --input " + q(tmp.path / "nope.bin") +
                                       " --rows-per-block 10");
  CHECK(r.code != 0);
  CHECK(r.err.find("error:") != std::string::npos);
}

TEST_CASE("selection manifest matches the library on one block") {
  TempDir tmp;
  const fs::path dir = prepare_blocks(tmp, 200, 3, 1);
  const fs::path sub = tmp.path / "subdata.bin";
  const RunResult r = run_cli(tmp, "select --blocks-dir " + q(dir) +
                                       " --k 30 --out " + q(sub));
  REQUIRE(r.code == 0);

  const auto files = list_block_files(dir);
  REQUIRE(files.size() == 1);
  const DataBlock block = read_block(files[0], read_binary_meta(files[0]));
  const SelectionResult expected = iboss_select(block, 30);
  std::string joined;
  for (std::size_t i = 0; i < expected.indices.size(); ++i) {
    if (i > 0) joined += ',';
    joined += std::to_string(expected.indices[i]);
  }

  const auto manifest = parse_kv(slurp(fs::path(sub.string() + ".manifest")));
  CHECK(manifest.at("mode") == "iboss");
  CHECK(manifest.at("requested_k") == "30");
  CHECK(manifest.at("actual_size") == "30");
  CHECK(manifest.at("blocks") == "1");
  CHECK(manifest.at("indices") == joined);

  const DatasetMeta sub_meta = read_binary_meta(sub);
  CHECK(sub_meta.n_rows == 30);
  CHECK(sub_meta.has_response);
}

TEST_CASE("an underflowing tail quota aborts with the published message") {
  TempDir tmp;
  const fs::path dir = prepare_blocks(tmp, 200, 3, 4);
  const RunResult r = run_cli(tmp, "select --blocks-dir " + q(dir) +
                                       " --k 4 --out " + q(tmp.path / "s.bin"));
  CHECK(r.code == 3);
  CHECK(r.err.find("The number of data points from each covariate tail is "
                   "smaller than one.") != std::string::npos);
}

TEST_CASE("declared block count must match the directory") {
  TempDir tmp;
  const fs::path dir = prepare_blocks(tmp, 200, 2, 4);
  CHECK(run_cli(tmp, "select --blocks-dir " + q(dir) + " --B 4 --k 40 --out " +
                         q(tmp.path / "s.bin"))
            .code == 0);
  const RunResult r = run_cli(tmp, "select --blocks-dir " + q(dir) +
                                       " --B 5 --k 40 --out " +
                                       q(tmp.path / "s2.bin"));
  CHECK(r.code != 0);
}

TEST_CASE("a binary payload behind a csv name is a format error") {
  TempDir tmp;
  const fs::path data = tmp.path / "data.bin";
  REQUIRE(run_cli(tmp, "generate --case normal --n 50 --p 2 --seed 4 --out " +
                           q(data))
              .code == 0);
  const fs::path dir = tmp.path / "blocks";
  fs::create_directories(dir);
  fs::copy_file(data, dir / "data_block_00000.csv");
  const RunResult r = run_cli(tmp, "select --blocks-dir " + q(dir) +
                                       " --k 10 --out " + q(tmp.path / "s.bin"));
  CHECK(r.code == 2);
}

TEST_CASE("uniform sampling is reproducible under its seed") {
  TempDir tmp;
  const fs::path dir = prepare_blocks(tmp, 300, 2, 3);
  const auto select_once = [&](const std::string& name) {
    const fs::path sub = tmp.path / name;
    const RunResult r = run_cli(tmp, "select --mode poisson --seed 17 "
                                     "--blocks-dir " +
                                         q(dir) + " --k 30 --out " + q(sub));
    REQUIRE(r.code == 0);
    return parse_kv(slurp(fs::path(sub.string() + ".manifest")));
  };
  const auto a = select_once("a.bin");
  const auto b = select_once("b.bin");
  CHECK(a.at("mode") == "poisson");
  CHECK(a.at("indices") == b.at("indices"));
  CHECK(a.at("actual_size") == b.at("actual_size"));
  // tail counts only exist for the two-tail selector
  CHECK(a.find("tail_lower") == a.end());
}

TEST_CASE("noiseless fits recover the generator's coefficients") {
  TempDir tmp;
  const fs::path dir = prepare_blocks(tmp, 400, 3, 2, " --noise-sd 0");
  const fs::path sub = tmp.path / "subdata.bin";
  REQUIRE(run_cli(tmp, "select --blocks-dir " + q(dir) + " --k 40 --out " +
                           q(sub))
              .code == 0);
  const fs::path fit_out = tmp.path / "fit.txt";
  const RunResult r = run_cli(tmp, "fit --subdata " + q(sub) + " --out " +
                                       q(fit_out));
  REQUIRE(r.code == 0);
  const auto kv = parse_kv(slurp(fit_out));
  CHECK(kv.at("sigma2_known") == "0");
  CHECK(kv.at("n_used") == "40");
  for (int j = 0; j <= 3; ++j) {
    const double beta = std::strtod(kv.at("beta_" + std::to_string(j)).c_str(),
                                    nullptr);
    CAPTURE(j);
    CHECK(std::abs(beta - 1.0) <= 1e-10);
  }
  CHECK(std::strtod(kv.at("sigma2").c_str(), nullptr) <= 1e-16);
}

TEST_CASE("pooled and weighted fits agree under a known variance") {
  TempDir tmp;
  const fs::path dir = prepare_blocks(tmp, 600, 2, 3);
  const fs::path sub = tmp.path / "subdata.bin";
  const fs::path manifest = tmp.path / "subdata.bin.manifest";
  REQUIRE(run_cli(tmp, "select --blocks-dir " + q(dir) + " --k 60 --out " +
                           q(sub))
              .code == 0);

  const fs::path pooled_out = tmp.path / "pooled.txt";
  REQUIRE(run_cli(tmp, "fit --subdata " + q(sub) + " --sigma2 1 --out " +
                           q(pooled_out))
              .code == 0);
  const fs::path weighted_out = tmp.path / "weighted.txt";
  const RunResult w = run_cli(tmp, "fit --subdata " + q(sub) +
                                       " --sigma2 1 --aggregate weighted "
                                       "--range-stats " +
                                       q(manifest) + " --out " + q(weighted_out));
  REQUIRE(w.code == 0);

  const auto pooled = parse_kv(slurp(pooled_out));
  const auto weighted = parse_kv(slurp(weighted_out));
  CHECK(pooled.at("sigma2_known") == "1");
  for (int j = 0; j <= 2; ++j) {
    const std::string key = "beta_" + std::to_string(j);
    const double a = std::strtod(pooled.at(key).c_str(), nullptr);
    const double b = std::strtod(weighted.at(key).c_str(), nullptr);
    CAPTURE(j);
    CHECK(std::abs(a - b) <= 1e-8 * std::max(1.0, std::abs(a)));
  }
  // the diagnostics block rides along when range stats are available
  CHECK(weighted.count("det_ratio_pass") == 1);
  CHECK(weighted.at("det_ratio_pass") == "1");
  CHECK(weighted.at("det_bound_pass") == "1");
  CHECK(weighted.at("sandwich_all_pass") == "1");
}

TEST_CASE("simulation runs emit the results table") {
  TempDir tmp;
  const fs::path cfg = tmp.path / "sim.cfg";
  std::ofstream(cfg) << "case = normal\n"
                        "p = 2\n"
                        "n = 200\n"
                        "k = 20\n"
                        "b = 2\n"
                        "method = iboss\n"
                        "method = poisson\n"
                        "t = 2\n"
                        "noise_sd = 0\n"
                        "seed = 9\n";
  const fs::path out = tmp.path / "results.csv";
  const RunResult r = run_cli(tmp, "simulate --config " + q(cfg) + " --out " +
                                       q(out));
  REQUIRE(r.code == 0);
  std::istringstream in(slurp(out));
  std::string header;
  REQUIRE(std::getline(in, header));
  CHECK(header == "case,method,n,p,k,b,t,mse_slopes,mse_slopes_se,"
                  "mse_intercept,mean_subdata_size");
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    REQUIRE(fields.size() == 11);
    CHECK(fields[0] == "normal");
    CHECK((fields[1] == "iboss" || fields[1] == "poisson"));
    // zero noise: every method nails the coefficients
    CHECK(std::strtod(fields[7].c_str(), nullptr) <= 1e-16);
    ++rows;
  }
  CHECK(rows == 2);

  const RunResult bad = run_cli(tmp, "simulate --config " +
                                         q(tmp.path / "absent.cfg"));
  CHECK(bad.code != 0);
}

TEST_CASE("timing harness emits one row per method") {
  TempDir tmp;
  const fs::path dir = prepare_blocks(tmp, 300, 2, 3);
  const RunResult r = run_cli(tmp, "bench --blocks-dir " + q(dir) +
                                       " --k 30 --repeats 1 --seed 2");
  REQUIRE(r.code == 0);
  std::istringstream in(r.out);
  std::string header;
  REQUIRE(std::getline(in, header));
  CHECK(header == "method,blocks,rows_used,median_seconds,run_seconds");
  std::vector<std::string> methods;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    REQUIRE(fields.size() >= 5);
    methods.push_back(fields[0]);
    CHECK(fields[1] == "3");
    CHECK(std::strtod(fields[3].c_str(), nullptr) >= 0.0);
  }
  REQUIRE(methods.size() == 3);
  CHECK(methods[0] == "full");
  CHECK(methods[1] == "iboss");
  CHECK(methods[2] == "uni");
}
