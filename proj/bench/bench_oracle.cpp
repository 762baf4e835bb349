#include <benchmark/benchmark.h>

#include <string_view>
#include <vector>

#include "ifcalc/estimands.hpp"
#include "ifcalc/oracle.hpp"

using namespace ifcalc;

namespace {

const estimands::EstimandScenario& scenario(const char* name) {
  static const auto aipw = estimands::make_scenario("ate-aipw");
  static const auto iv = estimands::make_scenario("iv-unconditional");
  return std::string_view(name) == "ate-aipw" ? aipw : iv;
}

void verify(benchmark::State& state, const char* name, bool parallel) {
  const auto& s = scenario(name);
  const auto table = s.influence(s.law);
  for (auto _ : state) {
    auto v = parallel ? oracle::verify_if(s.functional, s.law, s.model_truth, table)
                      : oracle::verify_if_serial(s.functional, s.law, s.model_truth, table);
    benchmark::DoNotOptimize(v.max_rel_error);
  }
}

void mc(benchmark::State& state, bool parallel) {
  const std::vector<oracle::McScenario> scenarios{oracle::mc_scenario(scenario("ate-aipw"))};
  oracle::McConfig cfg;
  cfg.replications = 200;
  cfg.sample_size = static_cast<Index>(state.range(0));
  cfg.master_seed = 1;
  cfg.parallel = parallel;
  for (auto _ : state) {
    auto rows = oracle::mc_compare(scenarios, cfg);
    benchmark::DoNotOptimize(rows.front().z_score);
  }
}

}  // namespace

BENCHMARK_CAPTURE(verify, aipw_serial, "ate-aipw", false)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(verify, aipw_parallel, "ate-aipw", true)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(verify, iv_serial, "iv-unconditional", false)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(verify, iv_parallel, "iv-unconditional", true)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(mc, serial, false)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(mc, parallel, true)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
