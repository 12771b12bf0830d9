#pragma once

#include "alp/atmosphere.hpp"
#include "alp/dataio.hpp"
#include "alp/geo.hpp"
#include "alp/spline.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace alp
{

// Timing noise of the receivers. Only per-sensor variances are modeled.
struct SensorNoiseModel
{
  double sigma_ns = 20.0;
  std::map<SensorId, double> per_sensor_sigma_ns;

  double sigma_seconds(SensorId id) const;
  void validate() const;
  bool operator==(const SensorNoiseModel &) const = default;
};

// Receiver clock error as a function of true arrival time tau (seconds):
//   b(tau) = b0 + f0*tau + 0.5*d*tau^2 + rw(tau)
// so that a measured timestamp is t_meas = tau + b(tau).
struct ClockModel
{
  double b0 = 0.0;
  double f0 = 0.0;
  double d = 0.0;
  std::vector<BSpline> rw; // disjoint segments in increasing time order

  bool has_random_walk() const { return !rw.empty(); }
  // Throws SplineDomainError when a random walk exists and tau is outside it.
  double random_walk(double tau) const;
  double bias(double tau) const;
  // Maps a measured timestamp to the common timebase:
  //   (t_meas - b0 - rw((t_meas - b0)/(f0 + 1))) / (f0 + 1)
  // with the quadratic term folded into the same first-order correction.
  double correct(double t_meas) const;
  void validate() const;
  bool operator==(const ClockModel &) const = default;
};

enum class SyncStatus
{
  core,     // fitted jointly with the core network, constant offset only
  drift,    // synchronized through propagation with drift and random walk
  excluded, // fit failed; carries a reason
  pending,  // not (yet) reachable
};

const char *to_string(SyncStatus status);
SyncStatus sync_status_from_string(const std::string &s);

struct SensorSync
{
  SyncStatus status = SyncStatus::pending;
  ClockModel clock;
  EcefPosition position;
  std::string reason;
  double residual_median_s = 0.0; // median absolute post-fit residual
  std::size_t samples = 0;

  bool operator==(const SensorSync &) const = default;
};

struct SyncState
{
  std::map<SensorId, SensorSync> sensors;
  AtmosphereModel atmosphere;
  SensorNoiseModel noise;
  int rounds = 0;

  const SensorSync *find(SensorId id) const;
  bool is_synchronized(SensorId id) const;
  std::size_t count(SyncStatus status) const;
  bool operator==(const SyncState &) const = default;
};

// ---------------------------------------------------------------------------
// pairwise synchronization

struct OffsetSample
{
  double t = 0.0;    // measured time at sensor i, seconds
  double bias = 0.0; // (toa_i - toa_j) - (delay_i - delay_j), seconds
  RecordId record = 0;
};

// Observed clock-bias difference b_i - b_j on every truth-labeled record both
// sensors received. Throws ArgumentError when i == j or a sensor is unknown.
std::vector<OffsetSample> pairwise_offset_series(const MeasurementSet &set, SensorId i, SensorId j,
                                                 const AtmosphereModel &atmosphere);

struct AlphaBetaOptions
{
  double alpha = 0.1;
  double beta = 0.01;
  double outlier_k = 6.0;
  double restart_gap_s = 60.0;
  // Lower bound on the innovation scale, seconds.
  double scale_floor_s = 20e-9;
  // Consecutive rejections after which the filter restarts on the new level.
  int max_consecutive_outliers = 5;
};

struct ClockEstimate
{
  double t = 0.0;
  double offset = 0.0;
  double drift = 0.0;
  bool accepted = true;
};

struct AlphaBetaResult
{
  std::vector<ClockEstimate> estimates; // one per input sample
  std::vector<std::size_t> dropped;     // indices of rejected samples
  int restarts = 0;

  ClockModel final_model() const;
};

AlphaBetaResult alpha_beta_track(const std::vector<OffsetSample> &series, const AlphaBetaOptions &options = {});

// ---------------------------------------------------------------------------
// core network

struct CoreFitOptions
{
  std::size_t max_records = 1200;
  double max_displacement_m = 500.0;
  // Cost per meter of moving a sensor off its reported position, in units of
  // the square root of its residual count. 0 disables the prior.
  double position_prior = 0.3;
  double epsilon_s = 1e-9; // smoothing width of the absolute residual
  int max_iterations = 2000;
  bool fit_positions = true;
  bool fit_atmosphere = true;
  AtmosphereModel initial_atmosphere{1e-3, 1e-3};
};

struct CoreFit
{
  std::vector<SensorId> core_ids;
  std::map<SensorId, EcefPosition> positions;
  std::map<SensorId, double> offsets_s; // core_ids[0] is the zero reference
  AtmosphereModel atmosphere;
  std::size_t records_used = 0;
  std::size_t residuals = 0;
  double residual_median_s = 0.0;
  double residual_p90_s = 0.0;
  int iterations = 0;
};

// GPS-synchronized sensors ranked by the number of truth-labeled records they
// share with at least three other candidates; ties broken by id.
std::vector<SensorId> select_core_sensors(const MeasurementSet &set, std::size_t size = 36);

CoreFit fit_core_network(const MeasurementSet &set, const std::vector<SensorId> &core_ids,
                         const SensorNoiseModel &noise, const CoreFitOptions &options = {});

// ---------------------------------------------------------------------------
// network propagation

struct PropagationOptions
{
  int max_rounds = 10;
  std::size_t min_samples = 20;
  double knot_spacing_s = 30.0;
  int min_knots = 4;
  double segment_gap_s = 120.0;
  double exclusion_sigmas = 5.0;
  double epsilon_s = 1e-9;
  double rw_smoothing = 1e-2;
  bool fit_random_walk = true;
  double parameter_tolerance_s = 1e-9;
  double frequency_tolerance = 1e-10;
  unsigned threads = 1;
};

// Core sensors from the joint fit, all other sensors pending.
SyncState make_initial_state(const MeasurementSet &set, const CoreFit &core, const SensorNoiseModel &noise);

// Synchronizes pending sensors against the synchronized ones, round by round,
// until a fixed point or max_rounds. Throws NonConvergenceError when pending
// sensors exist but none can be fitted in the first round.
SyncState propagate_network_sync(const MeasurementSet &set, const SyncState &state,
                                 const PropagationOptions &options = {});

struct CorrectedToa
{
  SensorId sensor_id = 0;
  double seconds = 0.0;
};

struct CorrectedReceptions
{
  std::vector<CorrectedToa> toas;
  std::size_t omitted_unsynchronized = 0;
  std::size_t omitted_out_of_span = 0;

  std::size_t omitted() const { return omitted_unsynchronized + omitted_out_of_span; }
};

CorrectedReceptions correct_timestamps(const MeasurementRecord &record, const SyncState &state);

// Full synchronization stage: core selection, joint core fit, propagation.
struct SyncOptions
{
  std::size_t core_size = 36;
  SensorNoiseModel noise;
  CoreFitOptions core;
  PropagationOptions propagation;
};
SyncState synchronize(const MeasurementSet &set, const SyncOptions &options = {});

// JSON document: atmosphere, noise, and per-sensor status, clock model
// (including random-walk spline segments) and refined position.
std::string sync_state_to_json(const SyncState &state);
SyncState sync_state_from_json(const std::string &text);

} // namespace alp
