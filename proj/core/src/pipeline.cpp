#include "alp/pipeline.hpp"

#include "alp/error.hpp"
#include "alp/parallel.hpp"
#include "stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace alp
{

const char *to_string(SolverKind solver) { return solver == SolverKind::ls ? "ls" : "l1"; }

SolverKind solver_from_string(const std::string &s)
{
  if (s == "ls")
    return SolverKind::ls;
  if (s == "l1")
    return SolverKind::l1;
  throw ArgumentError("unknown solver '" + s + "' (expected ls or l1)");
}

PredictionSet select_for_coverage(const std::map<RecordId, GeodeticPosition> &candidates,
                                  const std::map<RecordId, double> &est_error, std::size_t maskable, double target)
{
  if (!(target > 0.0 && target <= 1.0))
    throw ArgumentError("coverage target must lie in (0, 1]");
  std::vector<std::pair<double, RecordId>> ranked;
  ranked.reserve(candidates.size());
  for (const auto &[id, p] : candidates)
  {
    const auto it = est_error.find(id);
    ranked.emplace_back(it == est_error.end() ? std::numeric_limits<double>::infinity() : it->second, id);
  }
  std::sort(ranked.begin(), ranked.end());
  const auto wanted = static_cast<std::size_t>(std::ceil(target * static_cast<double>(maskable) - 1e-9));
  PredictionSet out;
  for (std::size_t k = 0; k < ranked.size() && k < wanted; ++k)
    out.entries.emplace(ranked[k].second, candidates.at(ranked[k].second));
  return out;
}

namespace
{

struct FlightOutput
{
  std::map<RecordId, GeodeticPosition> candidates;
  std::map<RecordId, double> est_error;
  std::map<RecordId, RawFix> raw;
  Track track;
  std::size_t attempted = 0, failed = 0, underdetermined = 0;
};

struct Unresolved
{
  const MeasurementRecord *record;
  CorrectedReceptions corrected;
};

std::vector<std::size_t> inliers(const PositionSolution &sol, double k, double floor_s)
{
  std::vector<double> mag;
  for (double r : sol.residuals)
    mag.push_back(std::abs(r));
  const double limit = std::max(k * 1.4826 * stats::median(mag), floor_s);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < mag.size(); ++i)
    if (mag[i] <= limit)
      keep.push_back(i);
  return keep;
}

TdoaProblem subset(const TdoaProblem &problem, const std::vector<std::size_t> &keep)
{
  TdoaProblem out = problem;
  out.sensors.clear();
  out.toas.clear();
  out.sensor_ids.clear();
  for (std::size_t i : keep)
  {
    out.sensors.push_back(problem.sensors[i]);
    out.toas.push_back(problem.toas[i]);
    if (!problem.sensor_ids.empty())
      out.sensor_ids.push_back(problem.sensor_ids[i]);
  }
  return out;
}

// Screens receptions against a fix with the altitude held at `altitude`, then
// trims the unconstrained fix until its residuals are consistent.
void prune_outliers(TdoaProblem &problem, PositionSolution &sol, std::size_t needed, std::optional<double> altitude,
                    const LocalizeOptions &options)
{
  if (altitude && !problem.constrained() && problem.size() > needed + 1)
  {
    TdoaProblem fixed = problem;
    fixed.baro_altitude = altitude;
    fixed.altitude_constraint = true;
    try
    {
      const PositionSolution screen = solve_position_l1(fixed, sol.position, options.solver_options);
      const auto keep = inliers(screen, options.outlier_k, options.max_residual_rms_s);
      if (keep.size() < problem.size() && keep.size() > needed)
      {
        problem = subset(problem, keep);
        sol = solve_position_l1(problem, screen.position, options.solver_options);
      }
    }
    catch (const NumericalError &)
    {
    }
  }
  for (int round = 0; round < 4; ++round)
  {
    const auto keep = inliers(sol, options.outlier_k, options.outlier_floor_s);
    if (keep.size() == problem.size() || keep.size() <= needed)
      return;
    problem = subset(problem, keep);
    sol = solve_position_l1(problem, sol.position, options.solver_options);
  }
}

FlightOutput localize_flight(const MeasurementSet &set, const std::vector<const MeasurementRecord *> &records,
                             const SyncState &state, const LocalizeOptions &options)
{
  FlightOutput out;
  const AircraftId aircraft = records.front()->aircraft_id;
  const double alt_offset = fit_altitude_offset(set, aircraft);
  const std::size_t needed_constrained = 3;

  std::optional<PositionSolution> previous;
  std::vector<TrackPoint> points;
  std::vector<Unresolved> unresolved;
  std::map<RecordId, double> baro_alt;

  for (const auto *rec : records)
  {
    CorrectedReceptions corrected = correct_timestamps(*rec, state);
    TdoaProblem problem = make_problem(corrected, state, rec->baro_altitude);
    problem.altitude_constraint = options.altitude_constraint && problem.size() == needed_constrained;
    const std::size_t needed = problem.constrained() ? 3 : 4;
    if (rec->baro_altitude)
      baro_alt[rec->id] = *rec->baro_altitude + alt_offset;
    if (problem.size() < needed)
    {
      ++out.underdetermined;
      unresolved.push_back({rec, std::move(corrected)});
      continue;
    }
    ++out.attempted;
    try
    {
      const EcefPosition guess = initial_guess(problem, previous, options.guess_max_age_s);
      PositionSolution sol = options.solver == SolverKind::ls
                                 ? solve_position_ls(problem, guess, options.solver_options)
                                 : solve_position_l1(problem, guess, options.solver_options);
      if (options.solver == SolverKind::l1)
        prune_outliers(problem, sol, needed,
                       rec->baro_altitude ? std::optional<double>(*rec->baro_altitude + alt_offset) : std::nullopt,
                       options);
      const double rms = sol.residual_norm / std::sqrt(static_cast<double>(problem.size()));
      const auto geo = ecef_to_geodetic_unchecked(sol.position);
      if (!(rms <= options.max_residual_rms_s) || geo.altitude < min_altitude_m || geo.altitude > 20000.0)
        throw NoSolutionError("implausible fix");
      previous = sol;
      out.raw[rec->id] = {aircraft, sol, problem.size()};
      TrackPoint p;
      p.record_id = rec->id;
      p.aircraft_time = sol.aircraft_time;
      p.position = geo;
      if (rec->baro_altitude)
        p.position.altitude = baro_alt[rec->id];
      p.source = PointSource::solved;
      const std::size_t dof = problem.size() - needed;
      p.est_error = speed_of_light * (dof == 0 ? options.max_residual_rms_s
                                               : sol.residual_norm / std::sqrt(static_cast<double>(dof)));
      points.push_back(p);
    }
    catch (const NumericalError &)
    {
      ++out.failed;
      unresolved.push_back({rec, std::move(corrected)});
    }
  }

  if (!options.post_process)
  {
    for (const auto &p : points)
    {
      out.candidates[p.record_id] = p.position;
      out.est_error[p.record_id] = *p.est_error;
    }
    out.track = assemble_track(aircraft, std::move(points));
    return out;
  }

  Track track = assemble_track(aircraft, points);
  const auto filtered = velocity_graph_filter(track.points);
  track.points = filtered.retained;

  // Aircraft times for records without a fix: back-propagate the corrected
  // arrivals from the nearest fix in server time, else map the server time.
  std::vector<std::pair<double, const TrackPoint *>> by_server;
  std::map<RecordId, double> server_of;
  for (const auto *rec : records)
    server_of[rec->id] = rec->server_time;
  for (const auto &p : track.points)
    by_server.emplace_back(server_of.at(p.record_id), &p);
  std::vector<double> lag;
  for (const auto &[s, p] : by_server)
    lag.push_back(p->aircraft_time - s);
  const double server_lag = lag.empty() ? 0.0 : stats::median(lag);

  std::vector<TrackTarget> targets;
  auto add_target = [&](const MeasurementRecord &rec, const CorrectedReceptions *corrected) {
    TrackTarget t;
    t.record_id = rec.id;
    t.altitude = baro_alt.count(rec.id) ? baro_alt.at(rec.id) : 0.0;
    t.aircraft_time = rec.server_time + server_lag;
    if (corrected && !corrected->toas.empty() && !by_server.empty())
    {
      const auto it = std::min_element(by_server.begin(), by_server.end(), [&](const auto &a, const auto &b) {
        return std::abs(a.first - rec.server_time) < std::abs(b.first - rec.server_time);
      });
      const Eigen::Vector3d near = geodetic_to_ecef_unchecked(it->second->position).vec();
      std::vector<double> emissions;
      for (const auto &toa : corrected->toas)
      {
        const auto &s = state.sensors.at(toa.sensor_id).position;
        const double h_s = ecef_to_geodetic_unchecked(s).altitude;
        emissions.push_back(toa.seconds - path_delay(state.atmosphere, (s.vec() - near).norm(), h_s,
                                                     it->second->position.altitude)
                                              .seconds);
      }
      t.aircraft_time = stats::median(emissions);
    }
    targets.push_back(t);
  };
  for (const auto &u : unresolved)
    add_target(*u.record, &u.corrected);
  for (const auto &p : filtered.removed)
    targets.push_back({p.record_id, p.aircraft_time, p.position.altitude});
  std::sort(targets.begin(), targets.end(), [](const auto &a, const auto &b) { return a.aircraft_time < b.aircraft_time; });

  track = local_quadratic_reconstruct(track, targets, options.reconstruct);
  ScreenOptions screen = options.screen;
  screen.max_gap_s = options.max_gap_s;
  auto screened = spline_error_screen(track, options.keep_fraction, screen);
  track = std::move(screened.track);
  std::vector<TrackTarget> fill_targets = targets;
  for (const auto &p : screened.removed)
    fill_targets.push_back({p.record_id, p.aircraft_time, p.position.altitude});
  track = fill_gaps(track, fill_targets, options.max_gap_s, screen);

  for (const auto &p : track.points)
  {
    out.candidates[p.record_id] = p.position;
    out.est_error[p.record_id] = p.est_error.value_or(std::numeric_limits<double>::infinity());
  }
  out.track = std::move(track);
  return out;
}

} // namespace

LocalizeResult localize(const MeasurementSet &set, const SyncState &state, const LocalizeOptions &options)
{
  if (!(options.coverage_target > 0.0 && options.coverage_target <= 1.0))
    throw ArgumentError("coverage target must lie in (0, 1]");
  if (!(options.keep_fraction > 0.0 && options.keep_fraction <= 1.0))
    throw ArgumentError("keep_fraction must lie in (0, 1]");

  std::map<AircraftId, std::vector<const MeasurementRecord *>> flights;
  LocalizeResult result;
  for (const auto &rec : set.records)
    if (!rec.truth)
    {
      flights[rec.aircraft_id].push_back(&rec);
      ++result.maskable;
    }

  std::vector<const std::vector<const MeasurementRecord *> *> work;
  for (auto &[id, recs] : flights)
  {
    std::stable_sort(recs.begin(), recs.end(), [](const auto *a, const auto *b) { return a->server_time < b->server_time; });
    work.push_back(&recs);
  }
  std::vector<FlightOutput> outputs(work.size());
  parallel_for(work.size(), options.threads, [&](std::size_t i) { outputs[i] = localize_flight(set, *work[i], state, options); });

  std::map<RecordId, GeodeticPosition> candidates;
  for (auto &o : outputs)
  {
    candidates.insert(o.candidates.begin(), o.candidates.end());
    result.est_error.insert(o.est_error.begin(), o.est_error.end());
    result.raw.insert(o.raw.begin(), o.raw.end());
    result.attempted += o.attempted;
    result.failed += o.failed;
    result.underdetermined += o.underdetermined;
    result.tracks.push_back(std::move(o.track));
  }
  result.predictions = select_for_coverage(candidates, result.est_error, result.maskable, options.coverage_target);
  return result;
}

} // namespace alp
