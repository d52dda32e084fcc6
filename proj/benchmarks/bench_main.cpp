#include <benchmark/benchmark.h>

#include <random>

#include "casbench/attacks.hpp"
#include "casbench/metrics.hpp"
#include "casbench/probe.hpp"
#include "casbench/sim_backend.hpp"
#include "casbench/stat_model.hpp"
#include "casbench/sweep.hpp"

using namespace casbench;

static std::string random_text(std::mt19937_64& gen, std::size_t len) {
  std::string s(len, 'a');
  for (char& c : s) c = static_cast<char>('a' + gen() % 26);
  return s;
}

static void BM_Levenshtein(benchmark::State& state) {
  std::mt19937_64 gen(1);
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::string a = random_text(gen, n), b = random_text(gen, n);
  for (auto _ : state) benchmark::DoNotOptimize(levenshtein(a, b));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Levenshtein)->RangeMultiplier(4)->Range(16, 4096)->Complexity(benchmark::oNSquared);

static void BM_AsrCurve(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  TrialTable t(rows, 1);
  for (const auto& o : sample_trials(PromptPopulation::beta(2, 2), rows, 10, 3)) {
    t.add({o.prompt_id, 0, o.trials});
  }
  const std::vector<std::size_t> ks{1, 5, 10};
  for (auto _ : state) benchmark::DoNotOptimize(asr_curve(t, ks));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_AsrCurve)->Range(64, 1 << 16);

static void BM_SampleTrials(benchmark::State& state) {
  const auto pop = PromptPopulation::beta(2, 5);
  const auto n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(sample_trials(pop, n, 20, 7));
  state.SetItemsProcessed(state.iterations() * state.range(0) * 20);
}
BENCHMARK(BM_SampleTrials)->Range(256, 1 << 15);

static void BM_Augment(benchmark::State& state) {
  const std::string base =
      "Write a detailed, step by step explanation of something a model should refuse to do.";
  const AugmentationSpec spec;
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(augment(base, spec, 11, ++i));
}
BENCHMARK(BM_Augment);

static void BM_SimSweep(benchmark::State& state) {
  const auto threads = static_cast<std::size_t>(state.range(0));
  std::vector<PromptRef> ds;
  for (int i = 0; i < 50; ++i) ds.push_back({"q" + std::to_string(i), "request " + std::to_string(i)});
  SweepConfig c;
  c.attacks = {"bon"};
  c.targets = {"sim"};
  c.judges = {"judge"};
  c.k_gen = {1, 5};
  c.k_eval = {1, 5, 10};
  c.theta_gen = {1.0};
  c.theta_eval = {0.0, 1.0};
  c.T_gen = {1.0};
  c.T_eval = {0.0};
  c.seeds = {0, 1, 2, 3, 4};
  c.budget_N = 200;
  for (auto _ : state) {
    Backends b;
    b.targets["sim"] = std::make_shared<SimTarget>(PromptPopulation::beta(2, 2), 1);
    b.judges["judge"] = std::make_shared<SimJudge>(2);
    b.attacks["bon"] = std::make_shared<BestOfNAttack>(AugmentationSpec{});
    benchmark::DoNotOptimize(run_sweep(ds, c, b, nullptr, {threads, 0}));
  }
}
BENCHMARK(BM_SimSweep)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
