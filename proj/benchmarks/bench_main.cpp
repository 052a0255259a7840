#include <benchmark/benchmark.h>

#include "sthmm/samplers.hpp"
#include "sthmm/synthdata.hpp"

using namespace sthmm;

namespace {

LatentField start_field(const ScenarioSpec& spec, const NeighborhoodSystem& g, Rng& rng) {
  return sample_latent_field(spec.theta, g, spec.n_times, 1, rng);
}

void BM_LogPotential(benchmark::State& state) {
  const auto spec = scenario_preset("C");
  const auto g = scenario_graph(spec, 0);
  Rng rng(1);
  const auto u = start_field(spec, g, rng);
  for (auto _ : state) benchmark::DoNotOptimize(log_potential(u, spec.theta, g));
  state.SetItemsProcessed(state.iterations() * spec.n_sites * spec.n_times);
}
BENCHMARK(BM_LogPotential);

void BM_GibbsSweep(benchmark::State& state) {
  const auto spec = scenario_preset(state.range(0) == 0 ? "A" : "C");
  const auto g = scenario_graph(spec, 0);
  Rng rng(2);
  auto u = start_field(spec, g, rng);
  for (auto _ : state) {
    gibbs_sweep(u, spec.theta, g, rng);
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * spec.n_sites * spec.n_times);
}
BENCHMARK(BM_GibbsSweep)->Arg(0)->Arg(1);

void BM_ThetaStep(benchmark::State& state) {
  const auto algorithm = static_cast<Algorithm>(state.range(0));
  const auto spec = scenario_preset("A");
  const auto data = sample_dataset(spec, 0);
  SamplerConfig cfg;
  cfg.algorithm = algorithm;
  auto chain = init_chain(data, default_priors(2), 2, cfg);
  std::size_t which = 0;
  for (auto _ : state) {
    switch (algorithm) {
      case Algorithm::pseudo:
        benchmark::DoNotOptimize(pseudo_theta_step(chain, which, data.graph, cfg));
        break;
      case Algorithm::exchange:
        benchmark::DoNotOptimize(exchange_theta_step(chain, which, data.graph, cfg));
        break;
      case Algorithm::noisy_exchange:
        benchmark::DoNotOptimize(noisy_exchange_theta_step(chain, which, data.graph, cfg));
        break;
    }
    which = (which + 1) % chain.params.size();
  }
  state.SetLabel(to_string(algorithm));
}
BENCHMARK(BM_ThetaStep)->Arg(0)->Arg(1)->Arg(2);

void BM_ChainIteration(benchmark::State& state) {
  const auto spec = scenario_preset("C");
  const auto data = sample_dataset(spec, 0);
  SamplerConfig cfg;
  cfg.iterations = 101;
  cfg.burn_in = 100;
  cfg.algorithm = static_cast<Algorithm>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(run_chain(data, default_priors(2), 2, cfg));
  state.SetItemsProcessed(state.iterations() * cfg.iterations);
  state.SetLabel(to_string(cfg.algorithm));
}
BENCHMARK(BM_ChainIteration)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
