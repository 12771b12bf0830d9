#pragma once

#include "alp/atmosphere.hpp"
#include "alp/clocksync.hpp"
#include "alp/dataio.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

namespace alp
{

struct Region
{
  double lat_min = 45.0;
  double lat_max = 50.0;
  double lon_min = 5.0;
  double lon_max = 12.0;

  double area_km2() const;
};

struct ScenarioConfig
{
  Region region;
  std::size_t n_sensors = 50;
  double gps_fraction = 0.15;
  double sensor_altitude_max_m = 500.0;

  // Unsynchronized clocks draw b0 and f0 uniformly from [-max, max]; the random
  // walk is integrated Gaussian 1 s steps whose standard deviation reaches
  // rw_amplitude_s at the end of the scenario.
  double b0_max_s = 5e-3;
  double f0_max = 1e-7;
  double rw_amplitude_s = 100e-9;
  double gps_offset_max_s = 0.0; // constant offsets of GPS-synchronized clocks

  double sigma_ns = 20.0; // Gaussian timing noise; 0 disables noise

  std::size_t n_flights = 20;
  double duration_s = 1800.0;
  double flight_duration_min_s = 300.0;
  double flight_duration_max_s = 900.0;
  double speed_min_mps = 150.0;
  double speed_max_mps = 280.0;
  double altitude_min_m = 1000.0;
  double altitude_max_m = 12000.0;
  double max_turn_rate_deg_s = 1.5;
  double leg_min_s = 60.0;
  double leg_max_s = 300.0;
  double broadcast_interval_s = 1.0;

  double reception_range_m = 400e3;
  std::size_t min_receptions = 2;

  AtmosphereModel atmosphere{3.15e-4, 1.36e-4};

  double baro_offset_max_m = 100.0;
  double baro_noise_m = 5.0;

  double toa_epoch_s = 36000.0;      // sensor timebase at scenario start
  double server_epoch_s = 1.5e9;     // Unix time at scenario start
  std::uint64_t seed = 1;

  // Throws ArgumentError on inconsistent values, including a region too small
  // for the number of sensors (less than 1 km^2 each).
  void validate() const;
};

// Ground-truth clock of one sensor. bias(tau) = b0 + f0*tau + rw(tau) with rw
// linearly interpolated between 1 s samples starting at rw_start.
struct ClockTruth
{
  double b0 = 0.0;
  double f0 = 0.0;
  double rw_start = 0.0;
  std::vector<double> rw_samples;

  double random_walk(double tau) const;
  double bias(double tau) const;
};

struct Scenario
{
  MeasurementSet set; // with full truth
  std::map<SensorId, ClockTruth> clocks;
  std::map<RecordId, double> emission_times; // seconds, sensor timebase
  AtmosphereModel atmosphere;
  ScenarioConfig config;
};

Scenario generate_scenario(const ScenarioConfig &config);

// Sensor-timebase time of a reception before clock error and noise.
double true_arrival_time(const Scenario &scenario, const MeasurementRecord &record, SensorId sensor);

std::string truth_clocks_to_json(const Scenario &scenario);

// sensors.csv, measurements.csv and truth_clocks.json in an existing directory.
// Nothing is written when the directory is missing.
void write_scenario(const Scenario &scenario, const std::filesystem::path &dir);

} // namespace alp
