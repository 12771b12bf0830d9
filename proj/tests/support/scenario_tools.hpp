#pragma once

#include "alp/synth.hpp"

#include <cmath>
#include <random>

namespace alp::test
{

// Compact scenario: few sensors in a 2x2 degree box, short flights.
inline ScenarioConfig small_config(std::uint64_t seed = 1)
{
  ScenarioConfig cfg;
  cfg.region = {46.0, 48.0, 7.0, 9.0};
  cfg.n_sensors = 10;
  cfg.gps_fraction = 1.0;
  cfg.n_flights = 4;
  cfg.duration_s = 600.0;
  cfg.flight_duration_min_s = 400.0;
  cfg.flight_duration_max_s = 600.0;
  cfg.seed = seed;
  return cfg;
}

// Regenerates one sensor's timestamps under a new clock (plus Gaussian noise)
// and marks it as not GPS-synchronized.
inline void reclock(Scenario &sc, SensorId id, const ClockTruth &clock, double sigma_s, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (auto &rec : sc.set.records)
    for (auto &r : rec.receptions)
      if (r.sensor_id == id)
      {
        const double tau = true_arrival_time(sc, rec, id);
        r.toa_ns = std::llround((tau + clock.bias(tau) + sigma_s * noise(rng)) * 1e9);
      }
  sc.clocks[id] = clock;
  SensorTable table;
  for (auto s : sc.set.sensors)
  {
    if (s.id == id)
    {
      s.synchronized = false;
      s.type = "dump1090";
    }
    table.add(s);
  }
  sc.set.sensors = table;
}

// Random walk with 1 s steps whose standard deviation reaches `amplitude`
// after `duration` seconds.
inline ClockTruth drifting_clock(double b0, double f0, double amplitude, double start, double duration,
                                 std::uint64_t seed)
{
  ClockTruth c;
  c.b0 = b0;
  c.f0 = f0;
  c.rw_start = start;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> step(0.0, amplitude / std::sqrt(duration));
  double acc = 0.0;
  for (int i = 0; i <= static_cast<int>(duration) + 1; ++i)
  {
    c.rw_samples.push_back(acc);
    acc += step(rng);
  }
  return c;
}

} // namespace alp::test
