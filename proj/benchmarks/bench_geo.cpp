#include "alp/geo.hpp"

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

namespace
{

std::vector<alp::GeodeticPosition> sample_points(std::size_t n)
{
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> lat(-89.0, 89.0), lon(-180.0, 180.0), h(-400.0, 15000.0);
  std::vector<alp::GeodeticPosition> out(n);
  for (auto &p : out)
    p = {lat(rng), lon(rng), h(rng)};
  return out;
}

void BM_GeodeticToEcef(benchmark::State &state)
{
  const auto pts = sample_points(1024);
  std::size_t i = 0;
  for (auto _ : state)
    benchmark::DoNotOptimize(alp::geodetic_to_ecef(pts[i++ & 1023]));
}
BENCHMARK(BM_GeodeticToEcef);

void BM_EcefToGeodetic(benchmark::State &state)
{
  std::vector<alp::EcefPosition> pts;
  for (const auto &p : sample_points(1024))
    pts.push_back(alp::geodetic_to_ecef(p));
  std::size_t i = 0;
  for (auto _ : state)
    benchmark::DoNotOptimize(alp::ecef_to_geodetic(pts[i++ & 1023]));
}
BENCHMARK(BM_EcefToGeodetic);

} // namespace
