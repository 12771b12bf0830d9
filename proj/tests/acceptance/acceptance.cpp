#include "alp/atmosphere.hpp"
#include "alp/clocksync.hpp"
#include "alp/dataio.hpp"
#include "alp/geo.hpp"
#include "alp/mlat.hpp"
#include "alp/pipeline.hpp"
#include "alp/scoring.hpp"
#include "alp/synth.hpp"
#include "alp/trajectory.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>

using namespace alp;

namespace
{

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, bool pass, const std::string &what)
{
  std::printf("criterion %d: %s  %s\n", id, pass ? "PASS" : "FAIL", what.c_str());
  std::fflush(stdout);
  if (!pass)
    ++failures;
}

std::string fmt(const char *f, double a)
{
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---------------------------------------------------------------------------
// independent oracles

constexpr long double kA = 6378137.0L;
constexpr long double kF = 1.0L / 298.257223563L;
constexpr long double kE2 = kF * (2.0L - kF);
constexpr long double kPi = 3.141592653589793238462643383279502884L;

struct Xyz
{
  long double x, y, z;
};

Xyz oracle_ecef(long double lat_deg, long double lon_deg, long double h)
{
  const long double lat = lat_deg * kPi / 180.0L, lon = lon_deg * kPi / 180.0L;
  const long double n = kA / std::sqrt(1.0L - kE2 * std::sin(lat) * std::sin(lat));
  return {(n + h) * std::cos(lat) * std::cos(lon), (n + h) * std::cos(lat) * std::sin(lon),
          (n * (1.0L - kE2) + h) * std::sin(lat)};
}

long double oracle_distance(const Xyz &a, const Xyz &b)
{
  return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.z - b.z) * (a.z - b.z));
}

// Composite Simpson rule for the path-averaged excess refractivity.
long double oracle_mean_excess(long double a0, long double b, long double h1, long double h2)
{
  if (h1 == h2)
    return a0 * std::exp(-b * h1);
  const int n = 4000;
  const long double step = (h2 - h1) / n;
  long double sum = 0.0L;
  for (int i = 0; i <= n; ++i)
  {
    const long double w = (i == 0 || i == n) ? 1.0L : (i % 2 ? 4.0L : 2.0L);
    sum += w * a0 * std::exp(-b * (h1 + step * i));
  }
  return sum * step / 3.0L / (h2 - h1);
}

// ---------------------------------------------------------------------------
// 1

void geodesy_round_trip()
{
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> lat(-90.0, 90.0), lon(-180.0, 180.0), alt(-500.0, 20000.0);
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i)
  {
    const GeodeticPosition p{lat(rng), lon(rng), alt(rng)};
    const auto q = ecef_to_geodetic(geodetic_to_ecef(p));
    const double err = static_cast<double>(oracle_distance(oracle_ecef(p.latitude, p.longitude, p.altitude),
                                                           oracle_ecef(q.latitude, q.longitude, q.altitude)));
    worst = std::max(worst, err);
  }
  const double dt = seconds_since(t0);
  report(1, worst < 1e-6 && dt < 1.0,
         "geodesy round trip: max error " + fmt("%.3g", worst) + " m over 10^4 points in " + fmt("%.3f", dt) + " s");
}

// ---------------------------------------------------------------------------
// 2

void atmosphere_consistency()
{
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> h(0.0, 15000.0), a0(1e-5, 5e-4), b(1e-5, 5e-4);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i)
  {
    const AtmosphereModel m{a0(rng), b(rng)};
    const double h1 = h(rng), h2 = h(rng);
    const double closed = mean_excess_index(m, h1, h2);
    const long double ref = oracle_mean_excess(m.a0, m.b, h1, h2);
    worst = std::max(worst, static_cast<double>(std::abs((closed - ref) / ref)));
  }

  // Pick a0 so that the effective velocity between 0 and 10 km is 0.9997 c.
  const double b_ref = 1.36e-4;
  const double unit = mean_excess_index({1.0, b_ref}, 0.0, 10000.0);
  const AtmosphereModel m{(1.0 / 0.9997 - 1.0) / unit, b_ref};
  const double ratio = effective_velocity(m, 0.0, 10000.0) / speed_of_light;
  const double excess10 = (path_delay(m, 10e3, 0.0, 10000.0).seconds - 10e3 / speed_of_light) * 1e9;
  const double excess100 = (path_delay(m, 100e3, 0.0, 10000.0).seconds - 100e3 / speed_of_light) * 1e9;

  const bool pass = worst < 1e-9 && std::abs(ratio - 0.9997) < 1e-12 && std::abs(excess10 - 10.0) <= 1.0 &&
                    std::abs(excess100 - 100.0) <= 10.0;
  report(2, pass,
         "atmosphere: closed form vs quadrature max rel error " + fmt("%.3g", worst) + "; at v/c = 0.9997 excess " +
             fmt("%.2f", excess10) + " ns over 10 km, " + fmt("%.2f", excess100) + " ns over 100 km");
}

// ---------------------------------------------------------------------------
// end-to-end scenarios

ScenarioConfig base_config()
{
  ScenarioConfig cfg;
  cfg.n_sensors = 50;
  cfg.n_flights = 20;
  cfg.seed = 2024;
  return cfg;
}

struct Masked
{
  Scenario scenario;
  MaskResult mask;
};

Masked prepare(const ScenarioConfig &cfg)
{
  Masked m{generate_scenario(cfg), {}};
  m.mask = mask_flights(m.scenario.set, 0.3, 7);
  return m;
}

struct PipelineRun
{
  SyncState state;
  ScoreReport score;
  double sync_s = 0.0, localize_s = 0.0;
};

SyncState sync_stage(const MeasurementSet &set)
{
  SyncOptions so;
  so.core.max_records = 800;
  return synchronize(set, so);
}

ScoreReport localize_and_score(const Masked &m, const MeasurementSet &input, const SyncState &state, SolverKind solver,
                               double *elapsed = nullptr)
{
  LocalizeOptions lo;
  lo.solver = solver;
  lo.coverage_target = 0.7;
  const auto t0 = Clock::now();
  const auto result = localize(input, state, lo);
  if (elapsed)
    *elapsed = seconds_since(t0);
  return evaluate(result.predictions, m.mask.truth, m.mask.masked);
}

PipelineRun run_pipeline(const Masked &m, SolverKind solver = SolverKind::l1)
{
  PipelineRun run;
  const auto t0 = Clock::now();
  run.state = sync_stage(m.mask.masked);
  run.sync_s = seconds_since(t0);
  run.score = localize_and_score(m, m.mask.masked, run.state, solver, &run.localize_s);
  return run;
}

std::string score_text(const ScoreReport &r)
{
  return "TRMSE " + fmt("%.2f", r.trmse_m) + " m at coverage " + fmt("%.3f", r.coverage);
}

// 3

void zero_noise_end_to_end()
{
  auto cfg = base_config();
  cfg.gps_fraction = 1.0;
  cfg.sigma_ns = 0.0;
  cfg.atmosphere = AtmosphereModel::vacuum();
  const auto t0 = Clock::now();
  try
  {
    const auto m = prepare(cfg);
    const auto run = run_pipeline(m);
    const double dt = seconds_since(t0);
    report(3, run.score.trmse_m < 5.0 && run.score.coverage >= 0.7 - 1e-12 && dt < 120.0,
           "synchronized zero-noise pipeline: " + score_text(run.score) + ", " + fmt("%.1f", dt) + " s");
  }
  catch (const std::exception &e)
  {
    report(3, false, std::string("synchronized zero-noise pipeline threw: ") + e.what());
  }
}

// 4, 5 and 6 share the noisy synchronized geometry.

void noisy_and_unsynchronized()
{
  auto sync_cfg = base_config();
  sync_cfg.gps_fraction = 1.0;
  sync_cfg.sigma_ns = 20.0;

  double sync_trmse = std::nan("");
  std::optional<Masked> synced;
  std::optional<PipelineRun> synced_run;
  try
  {
    const auto t0 = Clock::now();
    synced = prepare(sync_cfg);
    synced_run = run_pipeline(*synced);
    sync_trmse = synced_run->score.trmse_m;
    report(4, sync_trmse < 150.0 && synced_run->score.coverage >= 0.7 - 1e-12,
           "synchronized noisy pipeline (20 ns): " + score_text(synced_run->score) + ", " +
               fmt("%.1f", seconds_since(t0)) + " s");
  }
  catch (const std::exception &e)
  {
    report(4, false, std::string("synchronized noisy pipeline threw: ") + e.what());
  }

  // 5
  try
  {
    auto cfg = sync_cfg;
    cfg.gps_fraction = 0.15;
    cfg.b0_max_s = 5e-3;
    cfg.f0_max = 1e-7;
    cfg.rw_amplitude_s = 100e-9;
    const auto t0 = Clock::now();
    const auto m = prepare(cfg);
    const auto run = run_pipeline(m);

    std::size_t non_core = 0, synced_count = 0;
    for (const auto &[id, s] : run.state.sensors)
      if (s.status != SyncStatus::core)
      {
        ++non_core;
        synced_count += s.status == SyncStatus::drift;
      }
    std::vector<double> residuals;
    for (const auto &rec : m.scenario.set.records)
    {
      const auto corrected = correct_timestamps(rec, run.state);
      for (const auto &c : corrected.toas)
        if (run.state.sensors.at(c.sensor_id).status == SyncStatus::drift)
          residuals.push_back(std::abs(c.seconds - true_arrival_time(m.scenario, rec, c.sensor_id)));
    }
    std::nth_element(residuals.begin(), residuals.begin() + static_cast<std::ptrdiff_t>(residuals.size() / 2),
                     residuals.end());
    const double median = residuals.empty() ? std::nan("") : residuals[residuals.size() / 2];
    const double share = non_core ? static_cast<double>(synced_count) / static_cast<double>(non_core) : 0.0;
    const double ratio = run.score.trmse_m / sync_trmse;
    const bool pass = share >= 0.9 && median < 3 * 20e-9 && ratio <= 2.0;
    report(5, pass,
           "unsynchronized recovery: " + std::to_string(synced_count) + " of " + std::to_string(non_core) +
               " non-core sensors synchronized, corrected residual median " + fmt("%.1f", median * 1e9) + " ns, " +
               score_text(run.score) + " (" + fmt("%.2f", ratio) + "x the synchronized run), " +
               fmt("%.1f", seconds_since(t0)) + " s");
  }
  catch (const std::exception &e)
  {
    report(5, false, std::string("unsynchronized recovery threw: ") + e.what());
  }

  // 6
  if (!synced)
  {
    report(6, false, "robustness: no baseline scenario");
    return;
  }
  try
  {
    const auto &m = *synced;
    MeasurementSet corrupted = m.mask.masked;
    std::mt19937_64 rng(606);
    std::bernoulli_distribution pick(0.1);
    std::size_t total = 0, hit = 0;
    for (auto &rec : corrupted.records)
    {
      if (rec.truth)
        continue;
      for (auto &r : rec.receptions)
      {
        ++total;
        if (pick(rng))
        {
          r.toa_ns += 10000;
          ++hit;
        }
      }
    }
    const auto &state = synced_run->state;
    const double l1_clean = synced_run->score.trmse_m;
    const double l1_bad = localize_and_score(m, corrupted, state, SolverKind::l1).trmse_m;
    const double ls_clean = localize_and_score(m, m.mask.masked, state, SolverKind::ls).trmse_m;
    const double ls_bad = localize_and_score(m, corrupted, state, SolverKind::ls).trmse_m;
    const double l1_deg = l1_bad / l1_clean - 1.0;
    const double ls_deg = ls_bad / ls_clean - 1.0;
    report(6, l1_deg < 0.25 && ls_deg > 1.0,
           "robustness (+10 us on " + fmt("%.1f", 100.0 * static_cast<double>(hit) / static_cast<double>(total)) +
               "% of receptions): l1 " + fmt("%.2f", l1_clean) + " -> " + fmt("%.2f", l1_bad) + " m (" +
               fmt("%+.1f", 100 * l1_deg) + "%), ls " + fmt("%.2f", ls_clean) + " -> " + fmt("%.2f", ls_bad) +
               " m (" + fmt("%+.1f", 100 * ls_deg) + "%)");
  }
  catch (const std::exception &e)
  {
    report(6, false, std::string("robustness study threw: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// 7

void scoring_correctness()
{
  bool ok = true;
  std::vector<double> e(10);
  std::iota(e.begin(), e.end(), 1.0);
  const double hand = std::sqrt(285.0 / 9.0);
  ok &= std::abs(truncated_rmse(e, 0.9) - hand) < 1e-12;
  ok &= std::abs(hand - 5.627) < 5e-4;
  ok &= truncated_rmse(std::vector<double>(7, 0.0), 0.9) == 0.0;
  ok &= truncated_rmse(std::vector<double>{42.0}, 0.5) == 42.0;

  std::mt19937_64 rng(707);
  std::uniform_real_distribution<double> u(0.0, 1000.0);
  std::vector<double> sample(257);
  for (auto &x : sample)
    x = u(rng);
  const double base = truncated_rmse(sample, 0.9);
  for (int k = 0; k < 1000; ++k)
  {
    std::shuffle(sample.begin(), sample.end(), rng);
    ok &= truncated_rmse(sample, 0.9) == base;
  }
  long double ss = 0.0L;
  for (double x : sample)
    ss += static_cast<long double>(x) * x;
  const double plain = static_cast<double>(std::sqrt(ss / sample.size()));
  ok &= std::abs(truncated_rmse(sample, 1.0) - plain) <= 1e-12 * plain;

  MeasurementSet masked;
  PredictionSet truth, preds;
  for (RecordId id = 1; id <= 100; ++id)
  {
    MeasurementRecord r;
    r.id = id;
    r.aircraft_id = 1 + id % 10;
    r.receptions = {{1, 0, 0.0}};
    masked.records.push_back(r);
    truth.entries[id] = {47.0, 8.0, 10000.0};
    if (id <= 70)
      preds.entries[id] = truth.entries[id];
  }
  const auto rep = evaluate(preds, truth, masked);
  ok &= coverage(preds, masked) == 0.7 && rep.coverage == 0.7 && rep.pass_coverage && rep.n_scored == 70;
  preds.entries.erase(70);
  ok &= coverage(preds, masked) == 0.69 && !evaluate(preds, truth, masked).pass_coverage;
  ok &= coverage(PredictionSet{}, masked) == 0.0 && coverage(truth, masked) == 1.0;

  report(7, ok,
         "scoring: 1..10 at 0.9 -> " + fmt("%.4f", truncated_rmse(e, 0.9)) +
             " m, 10^3 shuffles invariant, truncation 1 equals plain RMSE, coverage 70/100 = 0.7");
}

// ---------------------------------------------------------------------------
// 8

struct RandomTrack
{
  std::vector<TrackPoint> points;
  std::set<RecordId> outliers;
};

RandomTrack random_track(std::mt19937_64 &rng, bool inject)
{
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const long double lat0 = 45.0 + 5.0 * u(rng), lon0 = 5.0 + 7.0 * u(rng);
  const long double m_per_deg_lat = kA * (1.0L - kE2) * kPi / 180.0L;
  const long double m_per_deg_lon = kA * std::cos(lat0 * kPi / 180.0L) * kPi / 180.0L;

  RandomTrack track;
  const int n = 100 + static_cast<int>(300 * u(rng));
  double heading = 2 * 3.14159265358979 * u(rng), speed = 100.0 + 180.0 * u(rng);
  double north = 0.0, east = 0.0, t = 0.0;
  for (int i = 0; i < n; ++i)
  {
    const double dt = u(rng) < 0.1 ? 1.0 + std::floor(5.0 * u(rng)) : 1.0;
    heading += (u(rng) - 0.5) * 0.05 * dt;
    // Flat-earth steps shrink slightly on the ellipsoid, so 0.99 keeps the
    // true ground speed under 290 m/s.
    north += 0.99 * speed * dt * std::cos(heading);
    east += 0.99 * speed * dt * std::sin(heading);
    t += dt;
    const GeodeticPosition p{static_cast<double>(lat0 + north / m_per_deg_lat),
                             static_cast<double>(lon0 + east / m_per_deg_lon), 10000.0};
    track.points.push_back({i + 1, t, p, PointSource::solved, {}});
  }
  if (inject)
  {
    const int k = 1 + static_cast<int>(0.05 * n * u(rng));
    for (int j = 0; j < k; ++j)
    {
      const auto idx = static_cast<std::size_t>(u(rng) * n);
      if (track.outliers.count(static_cast<RecordId>(idx)) || track.outliers.count(static_cast<RecordId>(idx + 2)))
        continue; // keep outliers isolated
      auto &p = track.points[idx];
      const double d = 20e3 + 180e3 * u(rng), dir = 2 * 3.14159265358979 * u(rng);
      p.position.latitude += static_cast<double>(d * std::cos(dir) / m_per_deg_lat);
      p.position.longitude += static_cast<double>(d * std::sin(dir) / m_per_deg_lon);
      track.outliers.insert(p.record_id);
    }
  }
  return track;
}

void velocity_filter()
{
  std::mt19937_64 rng(808);
  std::size_t injected = 0, caught = 0, false_removals = 0, clean_removals = 0, violations = 0;
  for (int k = 0; k < 1000; ++k)
  {
    for (bool inject : {true, false})
    {
      const auto track = random_track(rng, inject);
      const auto r = velocity_graph_filter(track.points);
      injected += track.outliers.size();
      for (const auto &p : r.removed)
      {
        if (track.outliers.count(p.record_id))
          ++caught;
        else
          ++false_removals;
        if (!inject)
          ++clean_removals;
      }
      for (std::size_t i = 1; i < r.retained.size(); ++i)
      {
        const auto &a = r.retained[i - 1], &b = r.retained[i];
        const long double d = oracle_distance(oracle_ecef(a.position.latitude, a.position.longitude, 0.0L),
                                              oracle_ecef(b.position.latitude, b.position.longitude, 0.0L));
        if (d > 300.0L * (b.aircraft_time - a.aircraft_time))
          ++violations;
      }
    }
  }
  report(8, caught == injected && false_removals == 0 && clean_removals == 0 && violations == 0,
         "velocity filter: " + std::to_string(caught) + " of " + std::to_string(injected) +
             " injected outliers removed, " + std::to_string(false_removals) + " false removals, " +
             std::to_string(violations) + " speed violations over 2000 tracks");
}

// ---------------------------------------------------------------------------
// 9

void gradient_checks()
{
  std::mt19937_64 rng(909);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  double worst = 0.0;
  int checked = 0;
  for (int k = 0; k < 100; ++k)
  {
    TdoaProblem p;
    p.atmosphere = {5e-4 * u(rng), 5e-5 + 2e-4 * u(rng)};
    const GeodeticPosition truth{46.0 + 3.0 * u(rng), 6.0 + 5.0 * u(rng), 1000.0 + 11000.0 * u(rng)};
    const auto a = geodetic_to_ecef(truth);
    const int n = 4 + static_cast<int>(8 * u(rng));
    for (int i = 0; i < n; ++i)
    {
      const GeodeticPosition s{45.0 + 5.0 * u(rng), 5.0 + 7.0 * u(rng), 500.0 * u(rng)};
      p.sensor_ids.push_back(i + 1);
      p.sensors.push_back(geodetic_to_ecef(s));
      p.toas.push_back(36000.0 + path_delay(p.atmosphere, distance(a, p.sensors.back()), s.altitude, truth.altitude).seconds +
                       100e-9 * noise(rng));
    }
    p.use_weights = u(rng) < 0.5;
    const Eigen::Vector4d x{a.x + 2000.0 * noise(rng), a.y + 2000.0 * noise(rng), a.z + 2000.0 * noise(rng),
                            -distance(a, p.sensors[p.reference()]) + 3000.0 * noise(rng)};

    for (int which = 0; which < 2; ++which)
    {
      const double eps_m = speed_of_light * (u(rng) < 0.5 ? 1e-7 : 1e-8);
      auto f = [&](const Eigen::Vector4d &v, Eigen::Vector4d *g) {
        return which == 0 ? ls_objective(p, v, g) : l1_objective(p, v, eps_m, g);
      };
      Eigen::Vector4d g;
      f(x, &g);
      Eigen::Vector4d fd;
      for (int j = 0; j < 4; ++j)
      {
        const double h = 1e-3;
        Eigen::Vector4d up = x, dn = x;
        up(j) += h;
        dn(j) -= h;
        fd(j) = (f(up, nullptr) - f(dn, nullptr)) / (2 * h);
      }
      worst = std::max(worst, (g - fd).norm() / fd.norm());
      ++checked;
    }
  }
  report(9, worst < 1e-5,
         "gradient checks: max relative error " + fmt("%.3g", worst) + " over " + std::to_string(checked) +
             " objective evaluations (100 configurations, ls and l1)");
}

// ---------------------------------------------------------------------------
// 10 (optional)

void real_data()
{
  const char *dir = std::getenv("ALP_R2_DIR");
  if (!dir)
  {
    std::printf("criterion 10: SKIP  optional real-data check (set ALP_R2_DIR to a directory with sensors.csv, "
                "measurements.csv and truth.csv)\n");
    return;
  }
  try
  {
    const std::filesystem::path root(dir);
    const auto sensors = load_sensors(root / "sensors.csv");
    const auto load = load_measurements(root / "measurements.csv", sensors);
    const auto truth = read_submission(root / "truth.csv");
    const auto state = sync_stage(load.set);
    LocalizeOptions lo;
    lo.coverage_target = 0.7;
    const auto result = localize(load.set, state, lo);
    const auto score = evaluate(result.predictions, truth, load.set);
    std::printf("criterion 10: %s  optional real data: %s (not gating)\n", score.trmse_m < 1000.0 ? "PASS" : "FAIL",
                score_text(score).c_str());
  }
  catch (const std::exception &e)
  {
    std::printf("criterion 10: FAIL  optional real data threw: %s (not gating)\n", e.what());
  }
}

} // namespace

int main()
{
  geodesy_round_trip();
  atmosphere_consistency();
  zero_noise_end_to_end();
  noisy_and_unsynchronized();
  scoring_correctness();
  velocity_filter();
  gradient_checks();
  real_data();
  std::printf("%d gating criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
