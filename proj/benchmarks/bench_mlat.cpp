#include "alp/geo.hpp"
#include "alp/mlat.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace
{

alp::TdoaProblem make(int n, double sigma_s)
{
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> lat(46.0, 48.0), lon(7.0, 9.0), h(0.0, 500.0);
  std::normal_distribution<double> noise(0.0, sigma_s);
  const auto aircraft = alp::geodetic_to_ecef({47.0, 8.0, 9000.0});
  alp::TdoaProblem p;
  for (int i = 0; i < n; ++i)
  {
    const auto s = alp::geodetic_to_ecef({lat(rng), lon(rng), h(rng)});
    p.sensor_ids.push_back(static_cast<alp::SensorId>(i + 1));
    p.sensors.push_back(s);
    p.toas.push_back(100.0 + alp::distance(s, aircraft) / alp::speed_of_light + noise(rng));
  }
  return p;
}

void BM_SolveLs(benchmark::State &state)
{
  const auto p = make(static_cast<int>(state.range(0)), 20e-9);
  const auto guess = alp::initial_guess(p, std::nullopt, 60.0);
  for (auto _ : state)
    benchmark::DoNotOptimize(alp::solve_position_ls(p, guess));
}
BENCHMARK(BM_SolveLs)->Arg(5)->Arg(10)->Arg(40);

void BM_SolveL1(benchmark::State &state)
{
  const auto p = make(static_cast<int>(state.range(0)), 20e-9);
  const auto guess = alp::initial_guess(p, std::nullopt, 60.0);
  for (auto _ : state)
    benchmark::DoNotOptimize(alp::solve_position_l1(p, guess));
}
BENCHMARK(BM_SolveL1)->Arg(5)->Arg(10)->Arg(40);

} // namespace
