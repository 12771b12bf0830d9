#include "alp/synth.hpp"

#include "alp/error.hpp"
#include "alp/geo.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace alp
{

double Region::area_km2() const
{
  const double lat_km = (lat_max - lat_min) * 111.32;
  const double lon_km = (lon_max - lon_min) * 111.32 * std::cos(deg_to_rad(0.5 * (lat_min + lat_max)));
  return lat_km * lon_km;
}

void ScenarioConfig::validate() const
{
  auto require = [](bool ok, const char *what) {
    if (!ok)
      throw ArgumentError(std::string("scenario config: ") + what);
  };
  require(region.lat_min >= -90.0 && region.lat_max <= 90.0 && region.lat_min < region.lat_max, "latitude range");
  require(region.lon_min >= -180.0 && region.lon_max < 180.0 && region.lon_min < region.lon_max, "longitude range");
  require(n_sensors >= 1, "n_sensors must be positive");
  require(gps_fraction >= 0.0 && gps_fraction <= 1.0, "gps_fraction must lie in [0, 1]");
  require(sensor_altitude_max_m >= 0.0 && sensor_altitude_max_m < 9000.0, "sensor altitude range");
  require(b0_max_s >= 0.0 && b0_max_s < 1.0, "b0 range");
  require(f0_max >= 0.0 && f0_max < 1e-3, "f0 range");
  require(rw_amplitude_s >= 0.0 && gps_offset_max_s >= 0.0, "clock amplitudes must be non-negative");
  require(sigma_ns >= 0.0 && std::isfinite(sigma_ns), "sigma_ns must be non-negative");
  require(n_flights >= 1, "n_flights must be positive");
  require(duration_s > 0.0, "duration must be positive");
  require(flight_duration_min_s > 0.0 && flight_duration_min_s <= flight_duration_max_s, "flight duration range");
  require(speed_min_mps > 0.0 && speed_min_mps <= speed_max_mps && speed_max_mps <= 300.0,
          "speed range must lie in (0, 300] m/s");
  require(altitude_min_m >= 0.0 && altitude_min_m <= altitude_max_m && altitude_max_m <= 20000.0, "altitude range");
  require(max_turn_rate_deg_s > 0.0, "turn rate must be positive");
  require(leg_min_s > 0.0 && leg_min_s <= leg_max_s, "leg duration range");
  require(broadcast_interval_s > 0.0, "broadcast interval must be positive");
  require(reception_range_m > 0.0, "reception range must be positive");
  require(min_receptions >= 1, "min_receptions must be positive");
  require(baro_offset_max_m >= 0.0 && baro_noise_m >= 0.0, "baro parameters must be non-negative");
  alp::validate(atmosphere);
  if (region.area_km2() / static_cast<double>(n_sensors) < 1.0)
    throw ArgumentError("scenario config: region of " + std::to_string(region.area_km2()) + " km^2 is too small for " +
                        std::to_string(n_sensors) + " sensors");
}

double ClockTruth::random_walk(double tau) const
{
  if (rw_samples.empty())
    return 0.0;
  const double u = std::clamp(tau - rw_start, 0.0, static_cast<double>(rw_samples.size() - 1));
  const auto k = std::min(static_cast<std::size_t>(u), rw_samples.size() - 1);
  if (k + 1 >= rw_samples.size())
    return rw_samples.back();
  const double frac = u - static_cast<double>(k);
  return rw_samples[k] + frac * (rw_samples[k + 1] - rw_samples[k]);
}

double ClockTruth::bias(double tau) const { return b0 + f0 * tau + random_walk(tau); }

namespace
{

struct AircraftState
{
  double lat = 0.0, lon = 0.0, alt = 0.0; // degrees, meters
  double heading = 0.0;                    // degrees from north
  double speed = 0.0;                      // m/s
  double climb = 0.0;                      // m/s
};

class FlightSimulator
{
public:
  FlightSimulator(const ScenarioConfig &cfg, std::mt19937_64 &rng) : cfg_(cfg), rng_(rng)
  {
    s_.lat = uniform(cfg.region.lat_min, cfg.region.lat_max);
    s_.lon = uniform(cfg.region.lon_min, cfg.region.lon_max);
    s_.alt = uniform(cfg.altitude_min_m, cfg.altitude_max_m);
    s_.heading = uniform(0.0, 360.0);
    s_.speed = uniform(cfg.speed_min_mps, cfg.speed_max_mps);
    new_leg();
  }

  const AircraftState &state() const { return s_; }

  void advance(double dt)
  {
    while (dt > 0.0)
    {
      const double h = std::min(dt, 1.0);
      step(h);
      dt -= h;
    }
  }

private:
  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng_); }

  void new_leg()
  {
    leg_left_ = uniform(cfg_.leg_min_s, cfg_.leg_max_s);
    const double center_lat = 0.5 * (cfg_.region.lat_min + cfg_.region.lat_max);
    const double center_lon = 0.5 * (cfg_.region.lon_min + cfg_.region.lon_max);
    const bool outside = s_.lat < cfg_.region.lat_min || s_.lat > cfg_.region.lat_max ||
                         s_.lon < cfg_.region.lon_min || s_.lon > cfg_.region.lon_max;
    double change = uniform(-90.0, 90.0);
    if (outside)
    {
      const double east = (center_lon - s_.lon) * std::cos(deg_to_rad(s_.lat));
      const double north = center_lat - s_.lat;
      const double to_center = rad_to_deg(std::atan2(east, north));
      change = std::remainder(to_center - s_.heading, 360.0) + uniform(-30.0, 30.0);
    }
    turn_rate_ = std::copysign(uniform(0.3, 1.0) * cfg_.max_turn_rate_deg_s, change);
    turn_left_ = std::abs(change / turn_rate_);
    s_.speed = uniform(cfg_.speed_min_mps, cfg_.speed_max_mps);
    const double target_alt = uniform(cfg_.altitude_min_m, cfg_.altitude_max_m);
    s_.climb = std::clamp((target_alt - s_.alt) / leg_left_, -10.0, 10.0);
  }

  void step(double h)
  {
    if (turn_left_ > 0.0)
    {
      const double t = std::min(h, turn_left_);
      s_.heading = std::fmod(s_.heading + turn_rate_ * t + 360.0, 360.0);
      turn_left_ -= t;
    }
    const double phi = deg_to_rad(s_.lat);
    const double hdg = deg_to_rad(s_.heading);
    s_.lat += rad_to_deg(s_.speed * std::cos(hdg) * h / (meridional_radius(s_.lat) + s_.alt));
    s_.lon += rad_to_deg(s_.speed * std::sin(hdg) * h / ((prime_vertical_radius(s_.lat) + s_.alt) * std::cos(phi)));
    s_.alt = std::clamp(s_.alt + s_.climb * h, cfg_.altitude_min_m, cfg_.altitude_max_m);
    leg_left_ -= h;
    if (leg_left_ <= 0.0)
      new_leg();
  }

  const ScenarioConfig &cfg_;
  std::mt19937_64 &rng_;
  AircraftState s_;
  double leg_left_ = 0.0;
  double turn_left_ = 0.0;
  double turn_rate_ = 0.0;
};

struct PendingRecord
{
  MeasurementRecord record;
  double emission = 0.0;
};

} // namespace

Scenario generate_scenario(const ScenarioConfig &config)
{
  config.validate();
  // Independent streams: geometry (sensor sites, flights), clocks and noise,
  // so scenarios differing only in clock or noise settings share a geometry.
  auto stream = [&](std::uint64_t k) {
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                      static_cast<std::uint32_t>(k)};
    return std::mt19937_64(seq);
  };
  std::mt19937_64 geo_rng = stream(1), clock_rng = stream(2), noise_rng = stream(3);
  auto uniform = [](std::mt19937_64 &rng, double a, double b) {
    return a == b ? a : std::uniform_real_distribution<double>(a, b)(rng);
  };

  Scenario sc;
  sc.config = config;
  sc.atmosphere = config.atmosphere;

  // Sensors and their clocks.
  const std::size_t n = config.n_sensors;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), clock_rng);
  const auto n_gps = static_cast<std::size_t>(std::llround(config.gps_fraction * static_cast<double>(n)));
  std::vector<bool> gps(n, false);
  for (std::size_t k = 0; k < n_gps; ++k)
    gps[order[k]] = true;

  const double rw_pad = 60.0;
  const auto rw_len = static_cast<std::size_t>(std::ceil(config.duration_s + 2.0 * rw_pad)) + 1;
  const double rw_step = config.rw_amplitude_s / std::sqrt(config.duration_s);
  std::normal_distribution<double> unit_normal(0.0, 1.0);

  std::vector<Eigen::Vector3d> sensor_ecef;
  std::vector<double> sensor_alt;
  for (std::size_t i = 0; i < n; ++i)
  {
    Sensor s;
    s.id = static_cast<SensorId>(i + 1);
    s.position = {uniform(geo_rng, config.region.lat_min, config.region.lat_max),
                  uniform(geo_rng, config.region.lon_min, config.region.lon_max),
                  uniform(geo_rng, 0.0, config.sensor_altitude_max_m)};
    s.synchronized = gps[i];
    s.type = gps[i] ? "Radarcape" : "dump1090";
    sensor_ecef.push_back(geodetic_to_ecef(s.position).vec());
    sensor_alt.push_back(s.position.altitude);

    ClockTruth clock;
    if (gps[i])
    {
      clock.b0 = uniform(clock_rng, -config.gps_offset_max_s, config.gps_offset_max_s);
    }
    else
    {
      clock.b0 = uniform(clock_rng, -config.b0_max_s, config.b0_max_s);
      clock.f0 = uniform(clock_rng, -config.f0_max, config.f0_max);
      if (config.rw_amplitude_s > 0.0)
      {
        clock.rw_start = config.toa_epoch_s - rw_pad;
        clock.rw_samples.resize(rw_len);
        double acc = 0.0;
        for (auto &v : clock.rw_samples)
        {
          v = acc;
          acc += rw_step * unit_normal(clock_rng);
        }
      }
    }
    sc.clocks.emplace(s.id, std::move(clock));
    sc.set.sensors.add(std::move(s));
  }

  // Flights and receptions.
  const double sigma_s = config.sigma_ns * 1e-9;
  std::vector<PendingRecord> pending;
  for (std::size_t f = 0; f < config.n_flights; ++f)
  {
    const AircraftId aircraft = static_cast<AircraftId>(1001 + f);
    const double max_len = std::min(config.flight_duration_max_s, config.duration_s);
    const double len = uniform(geo_rng, std::min(config.flight_duration_min_s, max_len), max_len);
    const double start = uniform(geo_rng, 0.0, config.duration_s - len);
    const double phase = uniform(geo_rng, 0.0, config.broadcast_interval_s);
    const double baro_offset = uniform(geo_rng, -config.baro_offset_max_m, config.baro_offset_max_m);
    FlightSimulator sim(config, geo_rng);

    double t = start + phase;
    sim.advance(phase);
    for (; t <= start + len; t += config.broadcast_interval_s)
    {
      const auto &st = sim.state();
      const GeodeticPosition truth{st.lat, std::remainder(st.lon, 360.0), st.alt};
      const Eigen::Vector3d a = geodetic_to_ecef_unchecked(truth).vec();
      const double emission = config.toa_epoch_s + t;

      PendingRecord pr;
      pr.emission = emission;
      auto &rec = pr.record;
      rec.aircraft_id = aircraft;
      rec.truth = truth;
      rec.baro_altitude = truth.altitude - baro_offset + config.baro_noise_m * unit_normal(noise_rng);
      rec.server_time = config.server_epoch_s + t + uniform(noise_rng, 0.05, 0.5);
      for (std::size_t i = 0; i < n; ++i)
      {
        const double dist = (a - sensor_ecef[i]).norm();
        if (dist > config.reception_range_m)
          continue;
        const double tau = emission + path_delay(config.atmosphere, dist, sensor_alt[i], truth.altitude).seconds;
        const SensorId id = static_cast<SensorId>(i + 1);
        double measured = tau + sc.clocks.at(id).bias(tau);
        if (sigma_s > 0.0)
          measured += sigma_s * unit_normal(noise_rng);
        const double rssi = -40.0 - 20.0 * std::log10(std::max(dist, 1.0) / 1000.0);
        rec.receptions.push_back({id, static_cast<std::int64_t>(std::llround(measured * 1e9)), std::round(rssi * 10.0) / 10.0});
      }
      if (rec.receptions.size() >= config.min_receptions)
        pending.push_back(std::move(pr));
      sim.advance(config.broadcast_interval_s);
    }
  }

  std::stable_sort(pending.begin(), pending.end(), [](const auto &a, const auto &b) {
    return a.record.server_time < b.record.server_time;
  });
  RecordId next = 1;
  for (auto &pr : pending)
  {
    pr.record.id = next++;
    sc.emission_times.emplace(pr.record.id, pr.emission);
    sc.set.records.push_back(std::move(pr.record));
  }
  return sc;
}

double true_arrival_time(const Scenario &scenario, const MeasurementRecord &record, SensorId sensor)
{
  if (!record.truth)
    throw ArgumentError("record " + std::to_string(record.id) + " carries no truth");
  const auto &s = scenario.set.sensors.at(sensor);
  const double dist = distance(geodetic_to_ecef(s.position), geodetic_to_ecef(*record.truth));
  return scenario.emission_times.at(record.id) +
         path_delay(scenario.atmosphere, dist, s.position.altitude, record.truth->altitude).seconds;
}

std::string truth_clocks_to_json(const Scenario &scenario)
{
  nlohmann::json sensors = nlohmann::json::object();
  for (const auto &[id, c] : scenario.clocks)
  {
    sensors[std::to_string(id)] = {{"b0", c.b0},
                                   {"f0", c.f0},
                                   {"rw_start", c.rw_start},
                                   {"rw_step_s", 1.0},
                                   {"rw", c.rw_samples},
                                   {"gps", scenario.set.sensors.at(id).synchronized}};
  }
  nlohmann::json doc = {{"atmosphere", {{"a0", scenario.atmosphere.a0}, {"b", scenario.atmosphere.b}}},
                        {"sigma_ns", scenario.config.sigma_ns},
                        {"seed", scenario.config.seed},
                        {"sensors", sensors}};
  return doc.dump(1);
}

void write_scenario(const Scenario &scenario, const std::filesystem::path &dir)
{
  if (!std::filesystem::is_directory(dir))
    throw ArgumentError("output directory '" + dir.string() + "' does not exist");
  write_sensors(scenario.set.sensors, dir / "sensors.csv");
  write_measurements(scenario.set, dir / "measurements.csv");
  write_file_atomic(dir / "truth_clocks.json", truth_clocks_to_json(scenario));
}

} // namespace alp
