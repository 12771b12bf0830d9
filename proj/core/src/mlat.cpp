#include "alp/mlat.hpp"

#include "alp/error.hpp"
#include "alp/optim.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace alp
{

std::size_t TdoaProblem::reference() const
{
  if (sensor_ids.empty())
    return 0;
  return static_cast<std::size_t>(std::min_element(sensor_ids.begin(), sensor_ids.end()) - sensor_ids.begin());
}

void TdoaProblem::validate() const
{
  if (toas.size() != sensors.size())
    throw ArgumentError("tdoa problem: " + std::to_string(sensors.size()) + " sensors but " +
                        std::to_string(toas.size()) + " arrival times");
  if (!sensor_ids.empty() && sensor_ids.size() != sensors.size())
    throw ArgumentError("tdoa problem: sensor id list length mismatch");
  for (std::size_t i = 0; i < sensors.size(); ++i)
  {
    if (!std::isfinite(toas[i]) || !sensors[i].vec().allFinite())
      throw ArgumentError("tdoa problem: non-finite input");
    for (std::size_t j = 0; j < i; ++j)
      if ((sensors[i].vec() - sensors[j].vec()).norm() < 1e-3)
        throw ArgumentError("tdoa problem: coincident sensor positions");
  }
  if (baro_altitude && !std::isfinite(*baro_altitude))
    throw ArgumentError("tdoa problem: non-finite barometric altitude");
  alp::validate(atmosphere);
}

TdoaProblem make_problem(const CorrectedReceptions &receptions, const SyncState &state,
                         std::optional<double> baro_altitude)
{
  TdoaProblem p;
  p.atmosphere = state.atmosphere;
  p.noise = state.noise;
  p.baro_altitude = baro_altitude;
  for (const auto &toa : receptions.toas)
  {
    p.sensor_ids.push_back(toa.sensor_id);
    p.sensors.push_back(state.sensors.at(toa.sensor_id).position);
    p.toas.push_back(toa.seconds);
  }
  return p;
}

std::vector<TdoaValue> tdoa_from_toas(const TdoaProblem &problem)
{
  if (problem.size() < 2 || problem.toas.size() != problem.size())
    throw ArgumentError("tdoa_from_toas requires at least two receptions");
  const std::size_t ref = problem.reference();
  std::vector<TdoaValue> out;
  out.reserve(problem.size() - 1);
  for (std::size_t i = 0; i < problem.size(); ++i)
    if (i != ref)
      out.push_back({i, problem.toas[i] - problem.toas[ref]});
  return out;
}

namespace
{

constexpr double c = speed_of_light;

// Sensor-side quantities that do not depend on the unknowns.
struct Geometry
{
  std::vector<Eigen::Vector3d> sensors;
  std::vector<double> altitudes;
  std::vector<double> observed; // c * (toa_i - toa_ref), meters
  std::vector<double> weights;  // per-residual weights for the squared loss
  double toa_ref = 0.0;
  AtmosphereModel atmosphere;

  explicit Geometry(const TdoaProblem &p) : atmosphere(p.atmosphere)
  {
    const std::size_t ref = p.reference();
    toa_ref = p.toas.empty() ? 0.0 : p.toas[ref];
    for (std::size_t i = 0; i < p.size(); ++i)
    {
      sensors.push_back(p.sensors[i].vec());
      altitudes.push_back(ecef_to_geodetic_unchecked(p.sensors[i]).altitude);
      observed.push_back(c * (p.toas[i] - toa_ref));
      double w = 1.0;
      if (p.use_weights)
      {
        const double sigma_m = c * p.noise.sigma_seconds(p.sensor_ids.empty() ? 0 : p.sensor_ids[i]);
        w = 1.0 / (sigma_m * sigma_m);
      }
      weights.push_back(w);
    }
  }

  std::size_t size() const { return sensors.size(); }

  // Residuals r_i and their gradient with respect to the aircraft position.
  // The emission-time unknown enters every residual with coefficient -1.
  void residuals(const Eigen::Vector3d &x, double s, Eigen::VectorXd &r, Eigen::MatrixX3d *dx) const
  {
    const auto g = ecef_to_geodetic_unchecked(EcefPosition::from(x));
    const double h = std::clamp(g.altitude, min_altitude_m, max_altitude_m);
    const bool h_free = h == g.altitude;
    const Eigen::Vector3d up = up_vector(g.latitude, g.longitude);
    r.resize(static_cast<Eigen::Index>(size()));
    if (dx)
      dx->resize(static_cast<Eigen::Index>(size()), 3);
    for (std::size_t i = 0; i < size(); ++i)
    {
      const Eigen::Vector3d diff = x - sensors[i];
      const double len = diff.norm();
      const auto pd = path_delay(atmosphere, len, altitudes[i], h);
      const auto k = static_cast<Eigen::Index>(i);
      r(k) = observed[i] - s - c * pd.seconds;
      if (dx)
      {
        Eigen::Vector3d d = pd.d_length * (len > 0.0 ? Eigen::Vector3d(diff / len) : Eigen::Vector3d::Zero());
        if (h_free)
          d += pd.d_h2 * up;
        dx->row(k) = -c * d.transpose();
      }
    }
  }

  // Emission time minimizing the weighted squared residuals at x.
  double best_offset(const Eigen::Vector3d &x) const
  {
    Eigen::VectorXd r;
    residuals(x, 0.0, r, nullptr);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < size(); ++i)
    {
      num += weights[i] * r(static_cast<Eigen::Index>(i));
      den += weights[i];
    }
    return num / den;
  }
};

// Maps the solver parameters to ECEF position and emission offset. In
// constrained mode the parameters are north/east displacements (meters)
// from an anchor at the fixed altitude.
class Parameterization
{
public:
  Parameterization(const TdoaProblem &problem, const EcefPosition &guess)
  {
    constrained_ = problem.constrained();
    if (constrained_)
    {
      const auto g = ecef_to_geodetic_unchecked(guess);
      lat0_ = g.latitude;
      lon0_ = g.longitude;
      h_ = *problem.baro_altitude;
    }
  }

  Eigen::Index dim() const { return constrained_ ? 3 : 4; }
  Eigen::Index position_dim() const { return dim() - 1; }
  bool constrained() const { return constrained_; }

  Eigen::VectorXd from(const Eigen::Vector3d &x, double s) const
  {
    Eigen::VectorXd p(dim());
    if (constrained_)
      p << 0.0, 0.0, s;
    else
      p << x, s;
    return p;
  }

  GeodeticPosition geodetic(const Eigen::VectorXd &p) const
  {
    const double phi = deg_to_rad(lat0_);
    const double lat = lat0_ + rad_to_deg(p(0) / meridional_radius(lat0_));
    const double lon = lon0_ + rad_to_deg(p(1) / (prime_vertical_radius(lat0_) * std::cos(phi)));
    return {lat, lon, h_};
  }

  Eigen::Vector3d position(const Eigen::VectorXd &p) const
  {
    if (!constrained_)
      return p.head<3>();
    return geodetic_to_ecef_unchecked(geodetic(p)).vec();
  }

  double offset(const Eigen::VectorXd &p) const { return p(dim() - 1); }

  // d position / d parameters (3 x position_dim).
  Eigen::MatrixXd position_jacobian(const Eigen::VectorXd &p) const
  {
    if (!constrained_)
      return Eigen::Matrix3d::Identity();
    const auto g = geodetic(p);
    const double phi = deg_to_rad(g.latitude);
    const double m0 = meridional_radius(lat0_);
    const double n0 = prime_vertical_radius(lat0_);
    Eigen::MatrixXd j(3, 2);
    j.col(0) = north_vector(g.latitude, g.longitude) * (meridional_radius(g.latitude) + h_) / m0;
    j.col(1) = east_vector(g.longitude) * (prime_vertical_radius(g.latitude) + h_) * std::cos(phi) /
               (n0 * std::cos(deg_to_rad(lat0_)));
    return j;
  }

private:
  bool constrained_ = false;
  double lat0_ = 0.0, lon0_ = 0.0, h_ = 0.0;
};

void check_degrees_of_freedom(const TdoaProblem &problem)
{
  problem.validate();
  const std::size_t needed = problem.constrained() ? 3 : 4;
  if (problem.size() < needed)
  {
    std::ostringstream os;
    os << "underdetermined fix: " << problem.size() << " receptions, " << needed << " required"
       << (problem.constrained() ? "" : " without an altitude constraint");
    throw ArgumentError(os.str());
  }
}

// Residuals and Jacobian in solver parameters.
void evaluate(const Geometry &geo, const Parameterization &param, const Eigen::VectorXd &p, Eigen::VectorXd &r,
              Eigen::MatrixXd *jac)
{
  Eigen::MatrixX3d dx;
  geo.residuals(param.position(p), param.offset(p), r, jac ? &dx : nullptr);
  if (!jac)
    return;
  jac->resize(r.size(), param.dim());
  jac->leftCols(param.position_dim()) = dx * param.position_jacobian(p);
  jac->col(param.dim() - 1).setConstant(-1.0);
}

double weighted_cost(const Geometry &geo, const Eigen::VectorXd &r)
{
  double s = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i)
    s += geo.weights[static_cast<std::size_t>(i)] * r(i) * r(i);
  return s;
}

PositionSolution finish(const Geometry &geo, const Parameterization &param, const Eigen::VectorXd &p, int iterations,
                        double condition_number, const SolverOptions &options)
{
  const Eigen::Vector3d x = param.position(p);
  if (!x.allFinite() || !std::isfinite(param.offset(p)))
    throw IllConditionedError("position solve produced a non-finite result");
  const double norm = x.norm();
  if (norm < min_ecef_norm_m || norm > max_ecef_norm_m)
  {
    std::ostringstream os;
    os << "position solve diverged: |x| = " << norm << " m";
    throw NoSolutionError(os.str());
  }
  Eigen::VectorXd r;
  geo.residuals(x, param.offset(p), r, nullptr);
  PositionSolution sol;
  sol.position = EcefPosition::from(x);
  sol.residual_norm = r.norm() / c;
  for (Eigen::Index i = 0; i < r.size(); ++i)
    sol.residuals.push_back(r[i] / c);
  sol.iterations = iterations;
  sol.condition_number = condition_number;
  sol.condition = condition_number > options.condition_threshold || !std::isfinite(condition_number)
                      ? Conditioning::ill_conditioned
                      : Conditioning::well_conditioned;
  sol.aircraft_time = geo.toa_ref + param.offset(p) / c;
  return sol;
}

double condition_of(const Eigen::MatrixXd &a)
{
  const Eigen::MatrixXd normal = a.transpose() * a;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(normal, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(hi > 0.0))
    return std::numeric_limits<double>::infinity();
  return lo <= 0.0 ? std::numeric_limits<double>::infinity() : hi / lo;
}

Eigen::VectorXd sqrt_weights(const Geometry &geo)
{
  Eigen::VectorXd w(static_cast<Eigen::Index>(geo.size()));
  for (std::size_t i = 0; i < geo.size(); ++i)
    w(static_cast<Eigen::Index>(i)) = std::sqrt(geo.weights[i]);
  return w;
}

} // namespace

double ls_objective(const TdoaProblem &problem, const Eigen::Vector4d &p, Eigen::Vector4d *grad)
{
  const Geometry geo(problem);
  Eigen::VectorXd r;
  Eigen::MatrixX3d dx;
  geo.residuals(p.head<3>(), p(3), r, grad ? &dx : nullptr);
  double f = 0.0;
  Eigen::VectorXd wr(r.size());
  for (Eigen::Index i = 0; i < r.size(); ++i)
  {
    wr(i) = geo.weights[static_cast<std::size_t>(i)] * r(i);
    f += 0.5 * wr(i) * r(i);
  }
  if (grad)
  {
    grad->head<3>() = dx.transpose() * wr;
    (*grad)(3) = -wr.sum();
  }
  return f;
}

double l1_objective(const TdoaProblem &problem, const Eigen::Vector4d &p, double epsilon_m, Eigen::Vector4d *grad)
{
  const Geometry geo(problem);
  Eigen::VectorXd r;
  Eigen::MatrixX3d dx;
  geo.residuals(p.head<3>(), p(3), r, grad ? &dx : nullptr);
  double f = 0.0;
  Eigen::VectorXd d(r.size());
  for (Eigen::Index i = 0; i < r.size(); ++i)
  {
    const double w = std::sqrt(geo.weights[static_cast<std::size_t>(i)]);
    f += w * optim::pseudo_huber(r(i), epsilon_m);
    d(i) = w * optim::pseudo_huber_deriv(r(i), epsilon_m);
  }
  if (grad)
  {
    grad->head<3>() = dx.transpose() * d;
    (*grad)(3) = -d.sum();
  }
  return f;
}

namespace
{

PositionSolution solve_ls_once(const TdoaProblem &problem, const EcefPosition &guess, const SolverOptions &options)
{
  check_degrees_of_freedom(problem);
  const Geometry geo(problem);
  const Parameterization param(problem, guess);
  const Eigen::VectorXd sw = sqrt_weights(geo);

  Eigen::VectorXd p = param.from(guess.vec(), 0.0);
  p(param.dim() - 1) = geo.best_offset(param.position(p));

  Eigen::VectorXd r, r_trial;
  Eigen::MatrixXd jac;
  double cond = 1.0;
  int it = 0;
  for (it = 1; it <= options.max_iterations; ++it)
  {
    evaluate(geo, param, p, r, &jac);
    const Eigen::MatrixXd a = sw.asDiagonal() * jac;
    const Eigen::VectorXd b = sw.asDiagonal() * r;
    cond = condition_of(a);
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
    const Eigen::VectorXd step = -cod.solve(b);
    if (!step.allFinite())
      throw IllConditionedError("singular geometry: Gauss-Newton step is not finite");

    // Backtrack when the full step increases the cost.
    const double cost = b.squaredNorm();
    double alpha = 1.0;
    Eigen::VectorXd trial = p + step;
    for (int k = 0; k < 10; ++k)
    {
      evaluate(geo, param, trial, r_trial, nullptr);
      if (r_trial.allFinite() && weighted_cost(geo, r_trial) <= cost * (1.0 + 1e-12))
        break;
      alpha *= 0.5;
      trial = p + alpha * step;
    }
    p = trial;
    const double moved = alpha * step.head(param.position_dim()).norm();
    if (p.head(param.position_dim()).norm() > 1e9)
      break;
    if (moved < options.step_tolerance_m)
      break;
  }
  return finish(geo, param, p, std::min(it, options.max_iterations), cond, options);
}

PositionSolution solve_l1_once(const TdoaProblem &problem, const EcefPosition &guess, const SolverOptions &options)
{
  check_degrees_of_freedom(problem);
  const Geometry geo(problem);
  const Parameterization param(problem, guess);
  const Eigen::VectorXd sw = sqrt_weights(geo);

  Eigen::VectorXd p = param.from(guess.vec(), 0.0);
  p(param.dim() - 1) = geo.best_offset(param.position(p));

  int iterations = 0;
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  for (double eps = 1e-6;; eps /= 10.0)
  {
    const double eps_s = std::max(eps, options.epsilon_s);
    const double eps_m = c * eps_s;
    auto objective = [&](const Eigen::VectorXd &v, Eigen::VectorXd *g) {
      evaluate(geo, param, v, r, g ? &jac : nullptr);
      double f = 0.0;
      Eigen::VectorXd d(r.size());
      for (Eigen::Index i = 0; i < r.size(); ++i)
      {
        f += sw(i) * optim::pseudo_huber(r(i), eps_m);
        d(i) = sw(i) * optim::pseudo_huber_deriv(r(i), eps_m);
      }
      if (g)
        *g = jac.transpose() * d;
      return f;
    };
    optim::BfgsOptions bo;
    bo.max_iterations = options.l1_max_iterations;
    bo.gradient_tolerance = 1e-6 * static_cast<double>(geo.size());
    bo.step_tolerance = 1e-4;
    bo.function_tolerance = 1e-14;
    bo.initial_step = 1000.0;
    const auto res = optim::minimize_bfgs(objective, p, bo);
    p = res.x;
    iterations += res.iterations;
    if (eps_s <= options.epsilon_s)
      break;
  }

  evaluate(geo, param, p, r, &jac);
  const double cond = condition_of(sw.asDiagonal() * jac);
  return finish(geo, param, p, iterations, cond, options);
}

// Nearly coplanar sensors admit a mirror solution below them. A fix that ends
// underground is retried from the reflected point and the better one is kept.
template <typename Solve>
PositionSolution solve_with_mirror(const TdoaProblem &problem, const EcefPosition &guess, Solve solve)
{
  constexpr double underground_m = -500.0;
  PositionSolution best = solve(guess);
  if (problem.constrained())
    return best;
  const auto g = ecef_to_geodetic_unchecked(best.position);
  if (!(g.altitude < underground_m))
    return best;
  try
  {
    const auto mirrored = geodetic_to_ecef_unchecked({g.latitude, g.longitude, std::max(-g.altitude, 1000.0)});
    PositionSolution retry = solve(mirrored);
    if (retry.residual_norm <= best.residual_norm)
      best = retry;
  }
  catch (const NumericalError &)
  {
  }
  return best;
}

} // namespace

PositionSolution solve_position_ls(const TdoaProblem &problem, const EcefPosition &guess, const SolverOptions &options)
{
  return solve_with_mirror(problem, guess, [&](const EcefPosition &x) { return solve_ls_once(problem, x, options); });
}

PositionSolution solve_position_l1(const TdoaProblem &problem, const EcefPosition &guess, const SolverOptions &options)
{
  return solve_with_mirror(problem, guess, [&](const EcefPosition &x) { return solve_l1_once(problem, x, options); });
}

EcefPosition initial_guess(const TdoaProblem &problem, const std::optional<PositionSolution> &previous, double max_age_s)
{
  if (problem.sensors.empty())
    throw ArgumentError("initial_guess: no sensors");
  if (previous && !problem.toas.empty())
  {
    const double earliest = *std::min_element(problem.toas.begin(), problem.toas.end());
    if (std::abs(earliest - previous->aircraft_time) < max_age_s)
      return previous->position;
  }
  const std::vector<double> weights(problem.sensors.size(), 1.0);
  const EcefPosition center = weighted_barycenter(problem.sensors, weights);
  auto g = ecef_to_geodetic_unchecked(center);
  if (problem.baro_altitude)
  {
    g.altitude = *problem.baro_altitude;
  }
  else
  {
    g.altitude = default_guess_altitude_m;
  }
  return geodetic_to_ecef_unchecked(g);
}

} // namespace alp
