#include <benchmark/benchmark.h>

#include <vector>

#include "ess/enclave_runtime.hpp"
#include "ess/measurement.hpp"
#include "ess/workload_harness.hpp"

namespace {

using namespace ess;

void BM_Translate(benchmark::State& state) {
  Machine m;
  Kernel k(m);
  Pid p = k.create_container("/a", 0.0).pid;
  const std::uint64_t pages = static_cast<std::uint64_t>(state.range(0));
  m.ecreate(EnclaveConfig{EnclaveId{1}, Vpn{0x100}, pages});
  for (std::uint64_t i = 0; i < pages; ++i) k.add_enclave_page(p, EnclaveId{1}, Vpn{0x100} + i, {}, PageType::kRegular);
  m.einit(EnclaveId{1});
  const AddressSpace& space = k.container(p).address_space;
  std::uint64_t i = 0;
  for (auto _ : state) {
    Translation t = m.translate(space, Vpn{0x100} + (i++ % pages), Access::kRead, CpuMode::enclave_mode(EnclaveId{1}));
    benchmark::DoNotOptimize(t);
  }
}
BENCHMARK(BM_Translate)->Arg(16)->Arg(4096);

void BM_MeasurementExtend(benchmark::State& state) {
  std::vector<std::byte> page(kPageSize, std::byte{0x5a});
  Measurement meas;
  std::uint64_t va = 0;
  for (auto _ : state) meas.extend(Vpn{va++}, PageType::kRegular, page);
  benchmark::DoNotOptimize(meas.digest());
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) * static_cast<std::int64_t>(kPageSize));
}
BENCHMARK(BM_MeasurementExtend);

void BM_CowWrite(benchmark::State& state) {
  const std::uint64_t pages = 1024;
  for (auto _ : state) {
    state.PauseTiming();
    Machine m;
    Kernel k(m);
    Pid p = k.create_container("/db", 0.0).pid;
    RuntimeLayout l;
    l.tcs_count = 2;
    l.runtime_pages = 1;
    l.instance_slots = 0;
    l.data_pool_pages = 2 * pages;
    m.ecreate(runtime_enclave_config(EnclaveId{1}, l));
    Runtime rt(k, EnclaveId{1}, p, l);
    rt.runtime_init();
    rt.enter(p);
    rt.create_data_extent(p, pages);
    ForkPair pair = rt.fork_cow(p, 0.0);
    const std::byte b{1};
    state.ResumeTiming();
    for (std::uint64_t i = 0; i < pages; ++i) rt.cow_write(pair, p, i, 0, {&b, 1});
    benchmark::DoNotOptimize(rt.snapshot(pair, pair.child_pid));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * pages));
}
BENCHMARK(BM_CowWrite);

void BM_ServerlessBurst(benchmark::State& state) {
  const CostParams p = default_params();
  ExecutionModel model;
  model.variant = state.range(1) == 0 ? ModelKind::kCcCold : ModelKind::kTeeMate;
  RequestTrace trace = gen_burst(static_cast<std::size_t>(state.range(0)), "crypto-aes");
  for (auto _ : state) benchmark::DoNotOptimize(run_serverless(model, trace, p).throughput_rps);
}
BENCHMARK(BM_ServerlessBurst)->Args({8, 0})->Args({8, 1})->Args({64, 0})->Args({64, 1});

}  // namespace
BENCHMARK_MAIN();
