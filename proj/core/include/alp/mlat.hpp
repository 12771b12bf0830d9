#pragma once

#include "alp/atmosphere.hpp"
#include "alp/clocksync.hpp"
#include "alp/dataio.hpp"
#include "alp/geo.hpp"

#include <Eigen/Core>

#include <optional>
#include <vector>

namespace alp
{

// One aircraft fix: receiving sensors and their arrival times on the common
// timebase. The reference sensor is the one with the lowest id (or index 0
// when ids are not given).
struct TdoaProblem
{
  std::vector<SensorId> sensor_ids; // optional, same length as sensors when set
  std::vector<EcefPosition> sensors;
  std::vector<double> toas; // seconds
  AtmosphereModel atmosphere = AtmosphereModel::vacuum();
  SensorNoiseModel noise;
  std::optional<double> baro_altitude; // meters
  // Fix the altitude to baro_altitude and solve for the horizontal position only.
  bool altitude_constraint = false;
  // Weight residuals by 1/sigma (1-norm) or 1/sigma^2 (least squares).
  bool use_weights = false;

  std::size_t size() const { return sensors.size(); }
  std::size_t reference() const;
  bool constrained() const { return altitude_constraint && baro_altitude.has_value(); }
  // Throws ArgumentError on inconsistent lengths, non-finite values or
  // coincident sensor positions.
  void validate() const;
};

// Build a problem from corrected receptions and the synchronization state.
TdoaProblem make_problem(const CorrectedReceptions &receptions, const SyncState &state,
                         std::optional<double> baro_altitude = std::nullopt);

struct TdoaValue
{
  std::size_t index = 0; // sensor index paired with the reference
  double tdoa = 0.0;     // seconds, toa[index] - toa[reference]
};

// n-1 differences against the reference sensor. Throws ArgumentError for
// fewer than two receptions.
std::vector<TdoaValue> tdoa_from_toas(const TdoaProblem &problem);

enum class Conditioning
{
  well_conditioned,
  ill_conditioned,
};

struct PositionSolution
{
  EcefPosition position;
  double residual_norm = 0.0; // seconds, 2-norm of the arrival-time residuals
  std::vector<double> residuals; // seconds, one per reception in problem order
  int iterations = 0;
  Conditioning condition = Conditioning::well_conditioned;
  double condition_number = 1.0;
  double aircraft_time = 0.0; // estimated emission time, seconds
};

struct SolverOptions
{
  int max_iterations = 50;
  double step_tolerance_m = 0.1;
  double condition_threshold = 1e8;
  double epsilon_s = 1e-9;      // 1-norm smoothing width
  int l1_max_iterations = 200;  // per continuation stage
};

// Arrival-time model. The unknowns are the aircraft ECEF position and the
// emission time expressed in meters relative to the reference arrival:
//   p = (x, y, z, c*(t0 - toa_ref)).
// Residuals are r_i = c*(toa_i - toa_ref) - p3 - c*delay_i(x, y, z), meters.
// Eliminating p3 gives exactly the all-pairs TDoA least-squares problem.
double ls_objective(const TdoaProblem &problem, const Eigen::Vector4d &p, Eigen::Vector4d *grad = nullptr);
double l1_objective(const TdoaProblem &problem, const Eigen::Vector4d &p, double epsilon_m,
                    Eigen::Vector4d *grad = nullptr);

// Gauss-Newton on squared residuals. Throws ArgumentError when underdetermined,
// NoSolutionError when the iterate leaves the Earth's vicinity and
// IllConditionedError when the geometry yields no finite step.
PositionSolution solve_position_ls(const TdoaProblem &problem, const EcefPosition &guess,
                                   const SolverOptions &options = {});

// Quasi-Newton minimization of the smoothed sum of absolute residuals.
PositionSolution solve_position_l1(const TdoaProblem &problem, const EcefPosition &guess,
                                   const SolverOptions &options = {});

constexpr double default_guess_altitude_m = 10000.0;

// Previous solution when it is less than max_age_s older than the earliest
// arrival, otherwise the sensor barycenter lifted to the barometric altitude
// (or to default_guess_altitude_m when none is known).
EcefPosition initial_guess(const TdoaProblem &problem, const std::optional<PositionSolution> &previous,
                           double max_age_s = 60.0);

} // namespace alp
