#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "iboss/harness.hpp"

namespace iboss {

// Bench vocabulary: the uniform subsampling baseline is spelled "uni".
Method bench_method_from_name(const std::string& name);
std::string bench_method_name(Method m);

struct BenchOptions {
  std::int64_t k = 0;
  std::vector<Method> methods;
  int repeats = 3;
  std::uint64_t seed = 1;
  std::optional<double> sigma2;  // forwarded to the full-data fit
};

struct BenchRow {
  Method method = Method::IbossDnc;
  int blocks = 0;
  std::int64_t rows_used = 0;       // rows entering the final fit
  std::vector<double> run_seconds;  // one entry per repeat
  double median_seconds = 0.0;
};

// Times each method end to end over the block files in blocks_dir: every
// repeat re-reads each block from disk (load time is part of the
// measurement), selects or keeps rows, and fits. One untimed warmup read
// levels the page cache across methods. Blocks must carry responses.
std::vector<BenchRow> run_bench(const std::filesystem::path& blocks_dir,
                                const BenchOptions& opt);

}  // namespace iboss
