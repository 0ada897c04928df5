#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "iboss/pipeline.hpp"
#include "iboss/quick_select.hpp"
#include "iboss/rng.hpp"
#include "iboss/simgen.hpp"

using namespace iboss;

namespace {

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

template <typename F>
double best_of(int reps, F&& f) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    const double t0 = now_s();
    f();
    best = std::min(best, now_s() - t0);
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  std::int64_t n = argc > 1 ? std::atoll(argv[1]) : 400000;
  int p = argc > 2 ? std::atoi(argv[2]) : 20;
  int B = argc > 3 ? std::atoi(argv[3]) : 8;
  std::int64_t k = argc > 4 ? std::atoll(argv[4]) : 4000;

  std::printf("selection benchmark: n=%lld p=%d B=%d k=%lld\n",
              static_cast<long long>(n), p, B, static_cast<long long>(k));
  const Matrix z = generate_covariates(CovariateCase::Normal, n, p, 7);
  const PartitionedData part = partition_rows(z, nullptr, B);
  DncParams params;
  params.k = k;
  params.B = B;

  SelectionResult serial;
  const double t_serial = best_of(3, [&] {
    serial = run_dnc_select_serial(part.blocks, params);
  });
  std::printf("serial reference:   %8.4f s  (%lld rows selected)\n", t_serial,
              static_cast<long long>(serial.size()));

#ifdef _OPENMP
  const int hw = omp_get_max_threads();
  for (int t = 1; t <= hw; t *= 2) {
    params.max_threads = t;
    SelectionResult parallel;
    const double sec = best_of(3, [&] {
      parallel = run_dnc_select(part.blocks, params);
    });
    const bool same = parallel.indices == serial.indices;
    std::printf("parallel %2d thread: %8.4f s  speedup %.2fx  identical=%s\n",
                t, sec, t_serial / sec, same ? "yes" : "NO");
    if (!same) return 1;
  }
#else
  std::printf("built without OpenMP; parallel path not measured\n");
#endif

  const std::int64_t m = 10000000;
  std::vector<double> base(static_cast<std::size_t>(m));
  rng::Stream s(rng::derive_key(11, 0));
  for (auto& v : base) v = s.next_unit();
  std::vector<double> work;
  const std::int64_t q = m / 100;

  work = base;
  const double t_qs = best_of(3, [&] {
    work = base;
    kth_smallest_inplace(work, q);
  });
  work = base;
  const double t_nth = best_of(3, [&] {
    work = base;
    std::nth_element(work.begin(), work.begin() + (q - 1), work.end());
  });
  work = base;
  const double t_sort = best_of(1, [&] {
    work = base;
    std::sort(work.begin(), work.end());
  });
  std::printf("order statistic on %lld doubles: quickselect %.4f s, "
              "std::nth_element %.4f s, full sort %.4f s\n",
              static_cast<long long>(m), t_qs, t_nth, t_sort);
  return 0;
}
