#pragma once

#include "alp/clocksync.hpp"
#include "alp/dataio.hpp"
#include "alp/mlat.hpp"
#include "alp/trajectory.hpp"

#include <map>
#include <vector>

namespace alp
{

enum class SolverKind
{
  ls,
  l1,
};

const char *to_string(SolverKind solver);
SolverKind solver_from_string(const std::string &s);

struct LocalizeOptions
{
  SolverKind solver = SolverKind::l1;
  SolverOptions solver_options;
  // Solve 3-reception records with the altitude fixed to the barometric value.
  bool altitude_constraint = false;
  // A fix is discarded when its RMS arrival-time residual exceeds this.
  double max_residual_rms_s = 1e-6;
  // Reuse the previous fix of the flight as the initial guess while it is
  // younger than this and was accepted.
  double guess_max_age_s = 60.0;
  // l1 only: receptions with a residual above max(outlier_k * robust scale,
  // outlier_floor_s) are dropped and the fix refined, as long as one
  // redundant reception remains.
  double outlier_k = 6.0;
  double outlier_floor_s = 1e-7;

  bool post_process = true;
  ReconstructOptions reconstruct;
  ScreenOptions screen;
  double keep_fraction = 0.97;
  double max_gap_s = 60.0;

  double coverage_target = 0.7; // in (0, 1]
  unsigned threads = 1;
};

struct RawFix
{
  AircraftId aircraft_id = 0;
  PositionSolution solution;
  std::size_t receptions = 0;
};

struct LocalizeResult
{
  PredictionSet predictions;           // after coverage selection
  std::map<RecordId, double> est_error; // for every candidate prediction
  std::map<RecordId, RawFix> raw;       // accepted solver output
  std::vector<Track> tracks;
  std::size_t maskable = 0;
  std::size_t attempted = 0;
  std::size_t failed = 0;
  std::size_t underdetermined = 0;
};

// Solves every masked record (no truth) of `set` and post-processes each
// flight's track. Flights are processed in parallel; the result does not
// depend on the thread count.
LocalizeResult localize(const MeasurementSet &set, const SyncState &state, const LocalizeOptions &options = {});

// Keeps the ceil(target * maskable) candidates with the lowest est_error.
PredictionSet select_for_coverage(const std::map<RecordId, GeodeticPosition> &candidates,
                                  const std::map<RecordId, double> &est_error, std::size_t maskable, double target);

} // namespace alp
