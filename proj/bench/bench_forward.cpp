// Forward-operator assembly: the OpenMP kernel (one shared feature map per
// geodesic, rows split across threads) against the serial reference, which
// integrates every matrix entry on its own. Args: basis degree, geodesic count.
// Most of the gap is the shared quadrature; threads add on top of it.
#include <benchmark/benchmark.h>
#include <omp.h>

#include "asymscat/tomography.hpp"

using namespace asymscat;

namespace {

const SphereSpec S2{3, 1.0, 40};

struct Setup {
  TensorBasis basis;
  std::vector<GreatCircle> geos;
  std::vector<RowMeta> rows;
  std::vector<Poly> moments;
  Setup(int degree, int count)
      : basis(tensor_basis(S2, degree)), geos(geodesic_family(S2, count, 7)), moments(moment_polys(S2, 2)) {
    rows = expand_plan(RowPlan{{3}, moments}, count);
  }
};

void BM_forward_omp(benchmark::State& st) {
  const Setup s(static_cast<int>(st.range(0)), static_cast<int>(st.range(1)));
  for (auto _ : st) benchmark::DoNotOptimize(build_forward(s.basis, s.geos, s.rows, s.moments).A.data());
  st.counters["rows"] = static_cast<double>(s.rows.size());
  st.counters["cols"] = static_cast<double>(s.basis.size());
  st.counters["threads"] = omp_get_max_threads();
}

void BM_forward_serial(benchmark::State& st) {
  const Setup s(static_cast<int>(st.range(0)), static_cast<int>(st.range(1)));
  for (auto _ : st) benchmark::DoNotOptimize(build_forward_serial(s.basis, s.geos, s.rows, s.moments).A.data());
  st.counters["rows"] = static_cast<double>(s.rows.size());
  st.counters["cols"] = static_cast<double>(s.basis.size());
}

}  // namespace

BENCHMARK(BM_forward_omp)->Args({2, 60})->Args({4, 150})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_forward_serial)->Args({2, 60})->Args({4, 150})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
