#include "alp/spline.hpp"
#include "alp/trajectory.hpp"

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

namespace
{

std::vector<alp::TrackPoint> track(std::size_t n, double outlier_fraction)
{
  std::mt19937_64 rng(3);
  std::bernoulli_distribution jump(outlier_fraction);
  std::vector<alp::TrackPoint> pts;
  for (std::size_t i = 0; i < n; ++i)
  {
    alp::TrackPoint p;
    p.record_id = i + 1;
    p.aircraft_time = static_cast<double>(i);
    p.position = {47.0 + 0.002 * static_cast<double>(i), 8.0, 10000.0};
    if (jump(rng))
      p.position.longitude += 0.5;
    pts.push_back(p);
  }
  return pts;
}

void BM_VelocityFilter(benchmark::State &state)
{
  const auto pts = track(static_cast<std::size_t>(state.range(0)), 0.05);
  for (auto _ : state)
    benchmark::DoNotOptimize(alp::velocity_graph_filter(pts));
}
BENCHMARK(BM_VelocityFilter)->Arg(100)->Arg(1000);

void BM_RobustSpline(benchmark::State &state)
{
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> t(n), y(n);
  for (std::size_t i = 0; i < n; ++i)
  {
    t[i] = static_cast<double>(i);
    y[i] = 100.0 * std::sin(t[i] / 50.0);
  }
  alp::SplineFitOptions opt;
  opt.degree = 5;
  opt.knot_spacing = 10.0;
  for (auto _ : state)
    benchmark::DoNotOptimize(alp::fit_spline_robust(t, y, 0.0, static_cast<double>(n - 1), opt, 10.0));
}
BENCHMARK(BM_RobustSpline)->Arg(300)->Arg(900);

} // namespace
