#include "alp/clocksync.hpp"

#include "alp/error.hpp"
#include "alp/optim.hpp"
#include "alp/parallel.hpp"
#include "stats.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>
#include <unordered_map>

namespace alp
{

// ---------------------------------------------------------------------------
// models

double SensorNoiseModel::sigma_seconds(SensorId id) const
{
  const auto it = per_sensor_sigma_ns.find(id);
  return (it == per_sensor_sigma_ns.end() ? sigma_ns : it->second) * 1e-9;
}

void SensorNoiseModel::validate() const
{
  if (!(sigma_ns > 0.0) || !std::isfinite(sigma_ns))
    throw ArgumentError("noise sigma must be positive");
  for (const auto &[id, s] : per_sensor_sigma_ns)
    if (!(s > 0.0) || !std::isfinite(s))
      throw ArgumentError("noise sigma for sensor " + std::to_string(id) + " must be positive");
}

double ClockModel::random_walk(double tau) const
{
  if (rw.empty())
    return 0.0;
  for (const auto &seg : rw)
    if (seg.contains(tau))
      return seg(tau);
  throw SplineDomainError("random-walk evaluated at " + std::to_string(tau) + " s outside its knot span");
}

double ClockModel::bias(double tau) const { return b0 + f0 * tau + 0.5 * d * tau * tau + random_walk(tau); }

double ClockModel::correct(double t_meas) const
{
  double tau = (t_meas - b0) / (f0 + 1.0);
  double quad = 0.0;
  if (d != 0.0)
  {
    quad = 0.5 * d * tau * tau;
    tau = (t_meas - b0 - quad) / (f0 + 1.0);
    quad = 0.5 * d * tau * tau;
  }
  if (rw.empty() && quad == 0.0)
    return tau;
  return (t_meas - b0 - quad - random_walk(tau)) / (f0 + 1.0);
}

void ClockModel::validate() const
{
  if (!std::isfinite(b0) || !std::isfinite(f0) || !std::isfinite(d))
    throw ArgumentError("clock model parameters must be finite");
  if (!(std::abs(f0) < 1e-3))
    throw ArgumentError("clock frequency offset must satisfy |f0| < 1e-3");
  for (std::size_t i = 1; i < rw.size(); ++i)
    if (!(rw[i].begin() > rw[i - 1].end()))
      throw ArgumentError("random-walk segments must be disjoint and increasing");
}

const char *to_string(SyncStatus status)
{
  switch (status)
  {
  case SyncStatus::core:
    return "core-synchronized";
  case SyncStatus::drift:
    return "drift-synchronized";
  case SyncStatus::excluded:
    return "excluded";
  case SyncStatus::pending:
    return "pending";
  }
  return "pending";
}

SyncStatus sync_status_from_string(const std::string &s)
{
  if (s == "core-synchronized")
    return SyncStatus::core;
  if (s == "drift-synchronized")
    return SyncStatus::drift;
  if (s == "excluded")
    return SyncStatus::excluded;
  if (s == "pending")
    return SyncStatus::pending;
  throw ParseError("unknown sync status '" + s + "'");
}

const SensorSync *SyncState::find(SensorId id) const
{
  const auto it = sensors.find(id);
  return it == sensors.end() ? nullptr : &it->second;
}

bool SyncState::is_synchronized(SensorId id) const
{
  const auto *s = find(id);
  return s && (s->status == SyncStatus::core || s->status == SyncStatus::drift);
}

std::size_t SyncState::count(SyncStatus status) const
{
  return static_cast<std::size_t>(
      std::count_if(sensors.begin(), sensors.end(), [&](const auto &kv) { return kv.second.status == status; }));
}

// ---------------------------------------------------------------------------
// geometry helpers

namespace
{

struct Site
{
  Eigen::Vector3d ecef;
  double altitude = 0.0;
};

Site site_of(const GeodeticPosition &p) { return {geodetic_to_ecef(p).vec(), p.altitude}; }

Site site_of(const EcefPosition &p)
{
  const auto g = ecef_to_geodetic_unchecked(p);
  return {p.vec(), g.altitude};
}

double delay(const AtmosphereModel &atm, const Site &sensor, const Site &aircraft)
{
  return path_delay(atm, (sensor.ecef - aircraft.ecef).norm(), sensor.altitude, aircraft.altitude).seconds;
}

} // namespace

// ---------------------------------------------------------------------------
// pairwise synchronization

std::vector<OffsetSample> pairwise_offset_series(const MeasurementSet &set, SensorId i, SensorId j,
                                                 const AtmosphereModel &atmosphere)
{
  if (i == j)
    throw ArgumentError("pairwise_offset_series requires two distinct sensors");
  const Site si = site_of(set.sensors.at(i).position);
  const Site sj = site_of(set.sensors.at(j).position);

  std::vector<OffsetSample> series;
  for (const auto &rec : set.records)
  {
    if (!rec.truth)
      continue;
    const auto *ri = rec.find(i);
    const auto *rj = rec.find(j);
    if (!ri || !rj)
      continue;
    const Site aircraft = site_of(*rec.truth);
    const double measured = static_cast<double>(ri->toa_ns - rj->toa_ns) * 1e-9;
    const double geometric = delay(atmosphere, si, aircraft) - delay(atmosphere, sj, aircraft);
    series.push_back({static_cast<double>(ri->toa_ns) * 1e-9, measured - geometric, rec.id});
  }
  std::stable_sort(series.begin(), series.end(), [](const auto &a, const auto &b) { return a.t < b.t; });
  return series;
}

ClockModel AlphaBetaResult::final_model() const
{
  ClockModel m;
  for (auto it = estimates.rbegin(); it != estimates.rend(); ++it)
  {
    if (!it->accepted)
      continue;
    m.f0 = it->drift;
    m.b0 = it->offset - it->drift * it->t;
    break;
  }
  return m;
}

AlphaBetaResult alpha_beta_track(const std::vector<OffsetSample> &series, const AlphaBetaOptions &options)
{
  if (series.empty())
    throw ArgumentError("alpha_beta_track: empty series");
  if (!(options.alpha > 0.0 && options.alpha < 1.0 && options.beta > 0.0 && options.beta < 1.0))
    throw ArgumentError("alpha_beta_track: gains must lie in (0, 1)");
  if (!(options.outlier_k > 0.0))
    throw ArgumentError("alpha_beta_track: outlier_k must be positive");

  constexpr double scale_memory = 0.05;
  AlphaBetaResult result;
  result.estimates.reserve(series.size());

  double x = 0.0, v = 0.0, last_t = 0.0, scale = options.scale_floor_s;
  int primed = 0; // samples absorbed since the last (re)start
  int consecutive = 0;

  auto restart = [&](const OffsetSample &s) {
    x = s.bias;
    v = 0.0;
    last_t = s.t;
    primed = 1;
    consecutive = 0;
    scale = options.scale_floor_s;
  };

  for (std::size_t k = 0; k < series.size(); ++k)
  {
    const auto &s = series[k];
    if (primed == 0)
    {
      restart(s);
      result.estimates.push_back({s.t, x, v, true});
      continue;
    }
    const double dt = s.t - last_t;
    if (dt > options.restart_gap_s)
    {
      restart(s);
      ++result.restarts;
      result.estimates.push_back({s.t, x, v, true});
      continue;
    }
    if (primed == 1 && dt > 0.0)
    {
      // two-point initialization of the drift
      v = (s.bias - x) / dt;
      x = s.bias;
      last_t = s.t;
      primed = 2;
      result.estimates.push_back({s.t, x, v, true});
      continue;
    }

    const double predicted = x + v * dt;
    const double innovation = s.bias - predicted;
    if (std::abs(innovation) > options.outlier_k * std::max(scale, options.scale_floor_s))
    {
      result.dropped.push_back(k);
      result.estimates.push_back({s.t, predicted, v, false});
      if (++consecutive >= options.max_consecutive_outliers)
      {
        restart(s);
        ++result.restarts;
      }
      continue;
    }
    consecutive = 0;
    x = predicted + options.alpha * innovation;
    if (dt > 0.0)
      v += options.beta * innovation / dt;
    last_t = s.t;
    ++primed;
    scale = (1.0 - scale_memory) * scale + scale_memory * std::abs(innovation);
    result.estimates.push_back({s.t, x, v, true});
  }
  return result;
}

// ---------------------------------------------------------------------------
// core network

std::vector<SensorId> select_core_sensors(const MeasurementSet &set, std::size_t size)
{
  std::unordered_map<SensorId, std::size_t> score;
  for (const auto &s : set.sensors)
    if (s.synchronized)
      score[s.id] = 0;

  std::vector<SensorId> present;
  for (const auto &rec : set.records)
  {
    if (!rec.truth)
      continue;
    present.clear();
    for (const auto &r : rec.receptions)
      if (score.count(r.sensor_id))
        present.push_back(r.sensor_id);
    if (present.size() < 4)
      continue;
    for (SensorId id : present)
      ++score[id];
  }

  std::vector<std::pair<SensorId, std::size_t>> ranked(score.begin(), score.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto &a, const auto &b) {
    return a.second > b.second || (a.second == b.second && a.first < b.first);
  });
  std::vector<SensorId> out;
  for (const auto &[id, n] : ranked)
  {
    if (out.size() >= size || n == 0)
      break;
    out.push_back(id);
  }
  return out;
}

namespace
{

struct CoreObservation
{
  int sensor;       // index into core list
  double t_rel = 0; // toa minus reference toa, seconds
};

struct CoreRecord
{
  Site aircraft;
  int reference = 0; // core index of the record's reference sensor
  std::vector<CoreObservation> others;
};

// Bounded displacement: d = R * tanh(|u|/R) * u/|u|.
struct Displacement
{
  Eigen::Vector3d d;
  Eigen::Matrix3d jacobian;
};

Displacement bounded_displacement(const Eigen::Vector3d &u, double radius)
{
  const double r = u.norm();
  if (r < 1e-9)
    return {u, Eigen::Matrix3d::Identity()};
  const double th = std::tanh(r / radius);
  const double s = radius * th;
  const double ds = 1.0 - th * th;
  const Eigen::Vector3d unit = u / r;
  return {s * unit, (s / r) * Eigen::Matrix3d::Identity() + (ds - s / r) * unit * unit.transpose()};
}

class CoreObjective
{
public:
  CoreObjective(std::vector<Site> reported, std::vector<CoreRecord> records, const CoreFitOptions &options)
      : reported_(std::move(reported)), records_(std::move(records)), options_(options), prior_(reported_.size(), 0.0)
  {
    for (const auto &rec : records_)
      for (const auto &obs : rec.others)
      {
        prior_[static_cast<std::size_t>(obs.sensor)] += 1.0;
        prior_[static_cast<std::size_t>(rec.reference)] += 1.0;
      }
    for (double &w : prior_)
      w = options_.position_prior * std::sqrt(w);
  }

  std::size_t n() const { return reported_.size(); }
  Eigen::Index size() const { return static_cast<Eigen::Index>(4 * n() + 1); }
  Eigen::Index offset_index(std::size_t k) const { return static_cast<Eigen::Index>(3 * n() + k - 1); }
  Eigen::Index a0_index() const { return static_cast<Eigen::Index>(4 * n() - 1); }
  Eigen::Index b_index() const { return static_cast<Eigen::Index>(4 * n()); }

  AtmosphereModel atmosphere(const Eigen::VectorXd &x) const
  {
    if (!options_.fit_atmosphere)
      return options_.initial_atmosphere;
    return {1e-4 * x(a0_index()), 1e-4 * std::exp(x(b_index()))};
  }

  Eigen::VectorXd initial(const std::vector<double> &offsets_m) const
  {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(size());
    for (std::size_t k = 1; k < n(); ++k)
      x(offset_index(k)) = offsets_m[k];
    x(a0_index()) = options_.initial_atmosphere.a0 / 1e-4;
    x(b_index()) = std::log(options_.initial_atmosphere.b / 1e-4);
    return x;
  }

  struct SensorState
  {
    Site site;
    Eigen::Vector3d up;
    Eigen::Matrix3d jac;
  };

  std::vector<SensorState> sensors(const Eigen::VectorXd &x) const
  {
    std::vector<SensorState> out(n());
    for (std::size_t k = 0; k < n(); ++k)
    {
      Displacement disp{Eigen::Vector3d::Zero(), Eigen::Matrix3d::Identity()};
      if (options_.fit_positions)
        disp = bounded_displacement(x.segment<3>(static_cast<Eigen::Index>(3 * k)), options_.max_displacement_m);
      const Eigen::Vector3d p = reported_[k].ecef + disp.d;
      const auto g = ecef_to_geodetic_unchecked(EcefPosition::from(p));
      out[k] = {{p, g.altitude}, up_vector(g.latitude, g.longitude), disp.jacobian};
    }
    return out;
  }

  double offset_m(const Eigen::VectorXd &x, int k) const { return k == 0 ? 0.0 : x(offset_index(static_cast<std::size_t>(k))); }

  double operator()(const Eigen::VectorXd &x, Eigen::VectorXd *grad, double eps, std::vector<double> *residuals = nullptr) const
  {
    const auto atm = atmosphere(x);
    const auto st = sensors(x);
    constexpr double c = speed_of_light;

    std::vector<Eigen::Vector3d> g_pos(n(), Eigen::Vector3d::Zero());
    double g_a0 = 0.0, g_b = 0.0;
    if (grad)
      grad->setZero(size());

    double total = 0.0;
    for (const auto &rec : records_)
    {
      auto model = [&](int k, Eigen::Vector3d &d_pos, double &d_a0, double &d_b) {
        const auto &s = st[static_cast<std::size_t>(k)];
        const Eigen::Vector3d diff = s.site.ecef - rec.aircraft.ecef;
        const double len = diff.norm();
        const auto pd = path_delay(atm, len, s.site.altitude, rec.aircraft.altitude);
        const auto ep = mean_excess_index_partials(atm, s.site.altitude, rec.aircraft.altitude);
        d_pos = c * (pd.d_length * diff / len + pd.d_h1 * s.up);
        d_a0 = len * ep.d_a0;
        d_b = len * ep.d_b;
        return c * pd.seconds;
      };

      Eigen::Vector3d ref_dpos;
      double ref_da0, ref_db;
      const double ref_range = model(rec.reference, ref_dpos, ref_da0, ref_db);
      const double ref_off = offset_m(x, rec.reference);

      for (const auto &obs : rec.others)
      {
        Eigen::Vector3d dpos;
        double da0, db;
        const double range = model(obs.sensor, dpos, da0, db);
        const double e = c * obs.t_rel - (range - ref_range) - (offset_m(x, obs.sensor) - ref_off);
        total += optim::pseudo_huber(e, eps);
        if (residuals)
          residuals->push_back(e / c);
        if (!grad)
          continue;
        const double w = optim::pseudo_huber_deriv(e, eps);
        g_pos[static_cast<std::size_t>(obs.sensor)] -= w * dpos;
        g_pos[static_cast<std::size_t>(rec.reference)] += w * ref_dpos;
        if (obs.sensor != 0)
          (*grad)(offset_index(static_cast<std::size_t>(obs.sensor))) -= w;
        if (rec.reference != 0)
          (*grad)(offset_index(static_cast<std::size_t>(rec.reference))) += w;
        g_a0 -= w * (da0 - ref_da0);
        g_b -= w * (db - ref_db);
      }
    }

    if (options_.fit_positions && options_.position_prior > 0.0)
      for (std::size_t k = 0; k < n(); ++k)
      {
        const Eigen::Vector3d d = st[k].site.ecef - reported_[k].ecef;
        const double len = d.norm();
        total += prior_[k] * optim::pseudo_huber(len, 1.0);
        if (grad && len > 0.0)
          g_pos[k] += prior_[k] * optim::pseudo_huber_deriv(len, 1.0) / len * d;
      }

    if (grad)
    {
      if (options_.fit_positions)
        for (std::size_t k = 0; k < n(); ++k)
          grad->segment<3>(static_cast<Eigen::Index>(3 * k)) = st[k].jac.transpose() * g_pos[k];
      if (options_.fit_atmosphere)
      {
        (*grad)(a0_index()) = 1e-4 * g_a0;
        (*grad)(b_index()) = atm.b * g_b;
      }
    }
    return total;
  }

  Eigen::Vector3d displacement(const Eigen::VectorXd &x, std::size_t k) const
  {
    if (!options_.fit_positions)
      return Eigen::Vector3d::Zero();
    return bounded_displacement(x.segment<3>(static_cast<Eigen::Index>(3 * k)), options_.max_displacement_m).d;
  }

  const Site &reported(std::size_t k) const { return reported_[k]; }
  const std::vector<CoreRecord> &records() const { return records_; }

private:
  std::vector<Site> reported_;
  std::vector<CoreRecord> records_;
  CoreFitOptions options_;
  std::vector<double> prior_; // displacement cost per meter, per sensor
};

std::string residual_summary(const std::vector<double> &residuals)
{
  std::vector<double> abs_res;
  abs_res.reserve(residuals.size());
  for (double r : residuals)
    abs_res.push_back(std::abs(r));
  std::ostringstream os;
  os.precision(4);
  os << "residuals n=" << abs_res.size() << " median=" << stats::quantile(abs_res, 0.5) * 1e9
     << " ns p90=" << stats::quantile(abs_res, 0.9) * 1e9 << " ns";
  return os.str();
}

} // namespace

CoreFit fit_core_network(const MeasurementSet &set, const std::vector<SensorId> &core_ids,
                         const SensorNoiseModel &noise, const CoreFitOptions &options)
{
  noise.validate();
  if (core_ids.size() < 4)
    throw ArgumentError("fit_core_network requires at least 4 core sensors, got " + std::to_string(core_ids.size()));
  std::unordered_map<SensorId, int> index;
  std::vector<Site> reported;
  for (SensorId id : core_ids)
  {
    if (!index.emplace(id, static_cast<int>(reported.size())).second)
      throw ArgumentError("duplicate core sensor " + std::to_string(id));
    reported.push_back(site_of(set.sensors.at(id).position));
  }

  // Truth-labeled records with at least two core receptions, thinned evenly.
  std::vector<const MeasurementRecord *> usable;
  for (const auto &rec : set.records)
  {
    if (!rec.truth)
      continue;
    int count = 0;
    for (const auto &r : rec.receptions)
      count += index.count(r.sensor_id) ? 1 : 0;
    if (count >= 2)
      usable.push_back(&rec);
  }
  if (usable.empty())
    throw ArgumentError("fit_core_network: no truth-labeled records shared by core sensors");
  std::vector<const MeasurementRecord *> chosen;
  if (usable.size() <= options.max_records)
    chosen = usable;
  else
    for (std::size_t k = 0; k < options.max_records; ++k)
      chosen.push_back(usable[k * usable.size() / options.max_records]);

  std::vector<CoreRecord> records;
  records.reserve(chosen.size());
  for (const auto *rec : chosen)
  {
    std::vector<std::pair<SensorId, const Reception *>> core_recs;
    for (const auto &r : rec->receptions)
      if (index.count(r.sensor_id))
        core_recs.emplace_back(r.sensor_id, &r);
    std::sort(core_recs.begin(), core_recs.end(), [](const auto &a, const auto &b) { return a.first < b.first; });
    CoreRecord cr;
    cr.aircraft = site_of(*rec->truth);
    cr.reference = index.at(core_recs.front().first);
    const std::int64_t ref_toa = core_recs.front().second->toa_ns;
    for (std::size_t k = 1; k < core_recs.size(); ++k)
      cr.others.push_back({index.at(core_recs[k].first), static_cast<double>(core_recs[k].second->toa_ns - ref_toa) * 1e-9});
    records.push_back(std::move(cr));
  }

  // Initial offsets: medians of pairwise observed biases, chained outward
  // from the reference sensor through the co-observation graph.
  const std::size_t n = core_ids.size();
  std::map<std::pair<int, int>, std::vector<double>> pair_bias;
  for (const auto &rec : records)
  {
    std::vector<std::pair<int, double>> resid; // sensor, t_rel - geometric delay rel. reference
    const double ref_delay = delay(options.initial_atmosphere, reported[static_cast<std::size_t>(rec.reference)], rec.aircraft);
    resid.emplace_back(rec.reference, 0.0);
    for (const auto &obs : rec.others)
      resid.emplace_back(obs.sensor,
                         obs.t_rel - (delay(options.initial_atmosphere, reported[static_cast<std::size_t>(obs.sensor)], rec.aircraft) - ref_delay));
    for (std::size_t a = 0; a < resid.size(); ++a)
      for (std::size_t b = 0; b < resid.size(); ++b)
        if (a != b)
          pair_bias[{resid[a].first, resid[b].first}].push_back(resid[a].second - resid[b].second);
  }
  std::vector<double> offsets_m(n, 0.0);
  std::vector<bool> reached(n, false);
  reached[0] = true;
  std::queue<int> frontier;
  frontier.push(0);
  while (!frontier.empty())
  {
    const int i = frontier.front();
    frontier.pop();
    for (int j = 0; j < static_cast<int>(n); ++j)
    {
      if (reached[static_cast<std::size_t>(j)])
        continue;
      auto it = pair_bias.find({j, i});
      if (it == pair_bias.end())
        continue;
      offsets_m[static_cast<std::size_t>(j)] =
          offsets_m[static_cast<std::size_t>(i)] + speed_of_light * stats::median(it->second);
      reached[static_cast<std::size_t>(j)] = true;
      frontier.push(j);
    }
  }

  std::size_t residual_count = 0;
  for (const auto &r : records)
    residual_count += r.others.size();

  CoreFitOptions held_options = options;
  held_options.fit_atmosphere = false;
  const CoreObjective held(reported, records, held_options);
  const CoreObjective objective(reported, std::move(records), options);
  Eigen::VectorXd x = objective.initial(offsets_m);

  // Continuation on the smoothing width: a least-squares-like start followed
  // by progressively sharper absolute-value objectives. Positions and offsets
  // settle first with the atmosphere held at its initial values.
  std::vector<std::pair<double, const CoreObjective *>> stages;
  if (options.fit_atmosphere)
    stages.emplace_back(1e-6, &held);
  for (double eps = 1e-6; eps > options.epsilon_s * 1.0001; eps /= 10.0)
    stages.emplace_back(eps, &objective);
  stages.emplace_back(options.epsilon_s, &objective);

  int iterations = 0;
  optim::BfgsResult last;
  for (const auto &[eps, stage] : stages)
  {
    const double eps_m = eps * speed_of_light;
    optim::BfgsOptions bo;
    bo.max_iterations = options.max_iterations;
    bo.gradient_tolerance = 1e-7 * static_cast<double>(residual_count) * options.epsilon_s / eps;
    bo.step_tolerance = 1e-7;
    bo.function_tolerance = 1e-13;
    bo.initial_step = 10.0;
    last = optim::minimize_bfgs([&](const Eigen::VectorXd &v, Eigen::VectorXd *g) { return (*stage)(v, g, eps_m); }, x,
                                bo);
    x = last.x;
    iterations += last.iterations;
  }

  std::vector<double> residuals;
  residuals.reserve(residual_count);
  objective(x, nullptr, options.epsilon_s * speed_of_light, &residuals);
  if (last.reason == "iteration limit")
    throw NonConvergenceError("core network fit did not converge after " + std::to_string(iterations) +
                              " iterations; " + residual_summary(residuals));

  CoreFit fit;
  fit.core_ids = core_ids;
  fit.atmosphere = objective.atmosphere(x);
  fit.atmosphere.a0 = std::clamp(fit.atmosphere.a0, 0.0, 1e-2);
  fit.atmosphere.b = std::clamp(fit.atmosphere.b, 1e-9, 1e-2);
  for (std::size_t k = 0; k < n; ++k)
  {
    fit.positions[core_ids[k]] = EcefPosition::from(reported[k].ecef + objective.displacement(x, k));
    fit.offsets_s[core_ids[k]] = objective.offset_m(x, static_cast<int>(k)) / speed_of_light;
  }
  fit.records_used = objective.records().size();
  fit.residuals = residuals.size();
  std::vector<double> abs_res;
  for (double r : residuals)
    abs_res.push_back(std::abs(r));
  fit.residual_median_s = stats::quantile(abs_res, 0.5);
  fit.residual_p90_s = stats::quantile(abs_res, 0.9);
  fit.iterations = iterations;
  return fit;
}

// ---------------------------------------------------------------------------
// propagation

SyncState make_initial_state(const MeasurementSet &set, const CoreFit &core, const SensorNoiseModel &noise)
{
  SyncState state;
  state.atmosphere = core.atmosphere;
  state.noise = noise;
  for (const auto &s : set.sensors)
  {
    SensorSync entry;
    const auto pos = core.positions.find(s.id);
    if (pos != core.positions.end())
    {
      entry.status = SyncStatus::core;
      entry.position = pos->second;
      entry.clock.b0 = core.offsets_s.at(s.id);
    }
    else
    {
      entry.position = geodetic_to_ecef(s.position);
    }
    state.sensors.emplace(s.id, std::move(entry));
  }
  return state;
}

namespace
{

struct BiasSample
{
  double tau;  // true arrival time, seconds
  double bias; // t_meas - tau
};

struct LinearFit
{
  double b0 = 0.0;
  double f0 = 0.0;
};

// Robust straight-line fit bias ~ b0 + f0*tau by iteratively reweighted least
// squares on the pseudo-Huber loss.
LinearFit fit_linear_robust(const std::vector<BiasSample> &samples, const std::vector<double> &target, double eps)
{
  double center = 0.0;
  for (const auto &s : samples)
    center += s.tau;
  center /= static_cast<double>(samples.size());

  std::vector<double> w(samples.size(), 1.0);
  double a = 0.0, slope = 0.0;
  for (int it = 0; it < 60; ++it)
  {
    Eigen::Matrix2d normal = Eigen::Matrix2d::Zero();
    Eigen::Vector2d rhs = Eigen::Vector2d::Zero();
    for (std::size_t i = 0; i < samples.size(); ++i)
    {
      const double u = samples[i].tau - center;
      normal(0, 0) += w[i];
      normal(0, 1) += w[i] * u;
      normal(1, 1) += w[i] * u * u;
      rhs(0) += w[i] * target[i];
      rhs(1) += w[i] * u * target[i];
    }
    normal(1, 0) = normal(0, 1);
    if (normal(1, 1) <= 1e-12 * normal(0, 0))
      normal(1, 1) += 1.0; // single epoch: slope unidentifiable, keep it at zero
    const Eigen::Vector2d sol = normal.ldlt().solve(rhs);
    const double change = std::abs(sol(0) - a) + std::abs(sol(1) - slope) * 100.0;
    a = sol(0);
    slope = sol(1);
    for (std::size_t i = 0; i < samples.size(); ++i)
      w[i] = optim::pseudo_huber_weight(target[i] - a - slope * (samples[i].tau - center), eps);
    if (it > 0 && change < 1e-3 * eps)
      break;
  }
  return {a - slope * center, slope};
}

struct SensorFit
{
  SyncStatus status = SyncStatus::pending;
  ClockModel clock;
  std::string reason;
  double residual_median_s = 0.0;
  std::size_t samples = 0;
};

class Propagator
{
public:
  Propagator(const MeasurementSet &set, const PropagationOptions &options) : set_(set), options_(options)
  {
    for (std::size_t r = 0; r < set.records.size(); ++r)
    {
      const auto &rec = set.records[r];
      for (std::size_t k = 0; k < rec.receptions.size(); ++k)
        receptions_[rec.receptions[k].sensor_id].push_back({r, k});
    }
    truth_.resize(set.records.size());
    for (std::size_t r = 0; r < set.records.size(); ++r)
      if (set.records[r].truth)
        truth_[r] = site_of(*set.records[r].truth);
  }

  SensorFit fit(SensorId id, const SyncState &snapshot, const std::unordered_map<SensorId, Site> &sites) const
  {
    SensorFit out;
    const auto it = receptions_.find(id);
    if (it == receptions_.end())
    {
      out.reason = "no receptions";
      return out;
    }
    const Site &own = sites.at(id);
    const double sigma = snapshot.noise.sigma_seconds(id);

    std::vector<BiasSample> samples;
    std::vector<double> refs;
    for (const auto &[r, k] : it->second)
    {
      const auto &rec = set_.records[r];
      if (!rec.truth)
        continue;
      refs.clear();
      for (const auto &other : rec.receptions)
      {
        if (other.sensor_id == id || !snapshot.is_synchronized(other.sensor_id))
          continue;
        const auto &sync = snapshot.sensors.at(other.sensor_id);
        try
        {
          const double tau = sync.clock.correct(static_cast<double>(other.toa_ns) * 1e-9);
          refs.push_back(tau - delay(snapshot.atmosphere, sites.at(other.sensor_id), truth_[r]));
        }
        catch (const SplineDomainError &)
        {
        }
      }
      if (refs.empty())
        continue;
      const double emission = stats::median(refs);
      const double tau = emission + delay(snapshot.atmosphere, own, truth_[r]);
      const double t_meas = static_cast<double>(rec.receptions[k].toa_ns) * 1e-9;
      samples.push_back({tau, t_meas - tau});
    }
    out.samples = samples.size();
    if (samples.size() < options_.min_samples)
    {
      out.reason = "insufficient shared receptions (" + std::to_string(samples.size()) + " samples)";
      return out;
    }
    std::sort(samples.begin(), samples.end(), [](const auto &a, const auto &b) { return a.tau < b.tau; });

    std::vector<double> bias(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i)
      bias[i] = samples[i].bias;
    LinearFit lin = fit_linear_robust(samples, bias, options_.epsilon_s);
    ClockModel clock;
    clock.b0 = lin.b0;
    clock.f0 = lin.f0;

    if (options_.fit_random_walk)
    {
      for (int pass = 0; pass < 2; ++pass)
      {
        clock.rw = fit_random_walk(id, clock, samples);
        std::vector<double> detrended(samples.size());
        for (std::size_t i = 0; i < samples.size(); ++i)
          detrended[i] = samples[i].bias - clock.random_walk(samples[i].tau);
        lin = fit_linear_robust(samples, detrended, options_.epsilon_s);
        clock.b0 = lin.b0;
        clock.f0 = lin.f0;
      }
      clock.rw = fit_random_walk(id, clock, samples);
    }

    std::vector<double> abs_res(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i)
      abs_res[i] = std::abs(samples[i].bias - clock.bias(samples[i].tau));
    out.residual_median_s = stats::median(abs_res);
    out.clock = std::move(clock);
    if (out.residual_median_s > options_.exclusion_sigmas * sigma || !(std::abs(out.clock.f0) < 1e-3))
    {
      std::ostringstream os;
      os.precision(4);
      os << "large fitting errors (median residual " << out.residual_median_s * 1e9 << " ns)";
      out.status = SyncStatus::excluded;
      out.reason = os.str();
      return out;
    }
    out.status = SyncStatus::drift;
    return out;
  }

private:
  // Cubic random-walk spline segments over the sensor's whole activity,
  // fitted robustly to the residuals of the linear clock model.
  std::vector<BSpline> fit_random_walk(SensorId id, const ClockModel &linear, const std::vector<BiasSample> &samples) const
  {
    ClockModel base = linear;
    base.rw.clear();
    std::vector<double> activity;
    for (const auto &[r, k] : receptions_.at(id))
      activity.push_back((static_cast<double>(set_.records[r].receptions[k].toa_ns) * 1e-9 - base.b0) / (1.0 + base.f0));
    for (const auto &s : samples)
      activity.push_back(s.tau);
    std::sort(activity.begin(), activity.end());

    constexpr double margin = 1.0;
    std::vector<std::pair<double, double>> spans;
    double start = activity.front(), last = activity.front();
    for (double t : activity)
    {
      if (t - last > options_.segment_gap_s)
      {
        spans.emplace_back(start - margin, last + margin);
        start = t;
      }
      last = t;
    }
    spans.emplace_back(start - margin, last + margin);

    std::vector<BSpline> segments;
    for (const auto &[begin, end] : spans)
    {
      SplineFitOptions so;
      so.degree = 3;
      so.knot_spacing = options_.knot_spacing_s;
      so.min_intervals = std::max(1, options_.min_knots - 1);
      so.smoothing = options_.rw_smoothing;
      so.penalty_order = 2;

      std::vector<double> t, y;
      for (const auto &s : samples)
        if (s.tau >= begin && s.tau <= end)
        {
          t.push_back(s.tau);
          y.push_back(s.bias - base.bias(s.tau));
        }
      const auto knots = clamped_knots(begin, end, so);
      const std::size_t n_coef = knots.size() - 4;
      if (t.size() < n_coef + 3)
      {
        segments.emplace_back(3, knots, std::vector<double>(n_coef, 0.0));
        continue;
      }
      segments.push_back(fit_spline_robust(t, y, begin, end, so, options_.epsilon_s, 15));
    }
    return segments;
  }

  const MeasurementSet &set_;
  const PropagationOptions &options_;
  std::unordered_map<SensorId, std::vector<std::pair<std::size_t, std::size_t>>> receptions_;
  std::vector<Site> truth_;
};

} // namespace

SyncState propagate_network_sync(const MeasurementSet &set, const SyncState &state, const PropagationOptions &options)
{
  state.noise.validate();
  validate(state.atmosphere);
  const std::size_t synced = state.count(SyncStatus::core) + state.count(SyncStatus::drift);
  if (synced < 4)
    throw ArgumentError("propagate_network_sync requires at least 4 synchronized sensors, got " + std::to_string(synced));

  Propagator propagator(set, options);
  std::unordered_map<SensorId, Site> sites;
  for (const auto &[id, s] : state.sensors)
    sites.emplace(id, site_of(s.position));

  SyncState current = state;
  int round = 0;
  for (round = 1; round <= options.max_rounds; ++round)
  {
    std::vector<SensorId> pending;
    for (const auto &[id, s] : current.sensors)
      if (s.status == SyncStatus::pending)
        pending.push_back(id);
    if (pending.empty())
      break;

    const SyncState snapshot = current;
    std::vector<SensorFit> fits(pending.size());
    parallel_for(pending.size(), options.threads,
                 [&](std::size_t i) { fits[i] = propagator.fit(pending[i], snapshot, sites); });

    bool progress = false;
    for (std::size_t i = 0; i < pending.size(); ++i)
    {
      auto &entry = current.sensors.at(pending[i]);
      entry.reason = fits[i].reason;
      entry.samples = fits[i].samples;
      if (fits[i].status == SyncStatus::pending)
        continue;
      progress = true;
      entry.status = fits[i].status;
      entry.clock = std::move(fits[i].clock);
      entry.residual_median_s = fits[i].residual_median_s;
    }
    if (!progress)
    {
      if (round == 1)
      {
        std::ostringstream os;
        os << "network synchronization made no progress; unreachable sensors:";
        for (SensorId id : pending)
          os << ' ' << id;
        throw NonConvergenceError(os.str());
      }
      break;
    }
  }
  current.rounds = std::min(round, options.max_rounds);
  return current;
}

CorrectedReceptions correct_timestamps(const MeasurementRecord &record, const SyncState &state)
{
  CorrectedReceptions out;
  for (const auto &r : record.receptions)
  {
    const auto *sync = state.find(r.sensor_id);
    if (!sync || (sync->status != SyncStatus::core && sync->status != SyncStatus::drift))
    {
      ++out.omitted_unsynchronized;
      continue;
    }
    try
    {
      out.toas.push_back({r.sensor_id, sync->clock.correct(static_cast<double>(r.toa_ns) * 1e-9)});
    }
    catch (const SplineDomainError &)
    {
      ++out.omitted_out_of_span;
    }
  }
  return out;
}

SyncState synchronize(const MeasurementSet &set, const SyncOptions &options)
{
  const auto core_ids = select_core_sensors(set, options.core_size);
  if (core_ids.size() < 4)
    throw ArgumentError("fewer than 4 GPS-synchronized sensors share truth-labeled traffic (" +
                        std::to_string(core_ids.size()) + ")");
  const CoreFit core = fit_core_network(set, core_ids, options.noise, options.core);
  const SyncState initial = make_initial_state(set, core, options.noise);
  return propagate_network_sync(set, initial, options.propagation);
}

} // namespace alp
