#include "alp/error.hpp"
#include "alp/mlat.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace alp;

namespace
{

const std::vector<GeodeticPosition> kSites{
    {47.0, 7.0, 300.0}, {47.6, 8.4, 450.0}, {46.4, 8.1, 200.0}, {47.2, 9.0, 600.0}, {46.8, 7.6, 350.0},
    {47.9, 7.4, 250.0}};

TdoaProblem vacuum_problem(const GeodeticPosition &aircraft, std::size_t n, double emission = 36000.0)
{
  TdoaProblem p;
  const auto a = geodetic_to_ecef(aircraft);
  for (std::size_t i = 0; i < n; ++i)
  {
    const auto s = geodetic_to_ecef(kSites[i]);
    p.sensor_ids.push_back(static_cast<SensorId>(i + 1));
    p.sensors.push_back(s);
    // Straight-line delay written out independently of the library.
    const double dx = a.x - s.x, dy = a.y - s.y, dz = a.z - s.z;
    p.toas.push_back(emission + std::sqrt(dx * dx + dy * dy + dz * dz) / speed_of_light);
  }
  return p;
}

Eigen::Vector4d params_at(const TdoaProblem &p, const GeodeticPosition &pos, double offset_m)
{
  const auto e = geodetic_to_ecef(pos);
  return {e.x, e.y, e.z, offset_m};
}

} // namespace

TEST_CASE("tdoa values are taken against the lowest id")
{
  auto p = vacuum_problem({47.1, 8.0, 9000.0}, 4);
  p.sensor_ids = {7, 3, 9, 5};
  REQUIRE(p.reference() == 1);
  const auto t = tdoa_from_toas(p);
  REQUIRE(t.size() == 3);
  for (const auto &v : t)
  {
    CHECK(v.index != 1);
    CHECK(v.tdoa == p.toas[v.index] - p.toas[1]);
  }
  TdoaProblem one;
  one.sensors = {p.sensors[0]};
  one.toas = {1.0};
  CHECK_THROWS_AS(tdoa_from_toas(one), ArgumentError);
}

TEST_CASE("problem validation")
{
  auto p = vacuum_problem({47.1, 8.0, 9000.0}, 4);
  CHECK_NOTHROW(p.validate());
  auto q = p;
  q.toas.pop_back();
  CHECK_THROWS_AS(q.validate(), ArgumentError);
  q = p;
  q.sensors[2] = q.sensors[1];
  CHECK_THROWS_AS(q.validate(), ArgumentError);
  q = p;
  q.toas[0] = std::nan("");
  CHECK_THROWS_AS(q.validate(), ArgumentError);
}

TEST_CASE("objective gradients match finite differences")
{
  auto p = vacuum_problem({47.1, 8.0, 9000.0}, 6);
  p.atmosphere = {3e-4, 1.3e-4};
  const Eigen::Vector4d x = params_at(p, {47.12, 8.03, 9300.0}, 420.0);
  for (int which = 0; which < 2; ++which)
  {
    auto f = [&](const Eigen::Vector4d &v, Eigen::Vector4d *g) {
      return which == 0 ? ls_objective(p, v, g) : l1_objective(p, v, 30.0, g);
    };
    Eigen::Vector4d g;
    f(x, &g);
    for (int k = 0; k < 4; ++k)
    {
      const double h = 1e-2;
      Eigen::Vector4d up = x, dn = x;
      up(k) += h;
      dn(k) -= h;
      const double fd = (f(up, nullptr) - f(dn, nullptr)) / (2 * h);
      CHECK(g(k) == doctest::Approx(fd).epsilon(1e-5).scale(1e-3));
    }
  }
}

TEST_CASE("objectives vanish at the true position")
{
  auto p = vacuum_problem({47.1, 8.0, 9000.0}, 5);
  const auto a = geodetic_to_ecef({47.1, 8.0, 9000.0});
  const auto ref = geodetic_to_ecef(kSites[0]);
  const double offset = -distance(a, ref);
  const Eigen::Vector4d x{a.x, a.y, a.z, offset};
  CHECK(ls_objective(p, x) < 1e-4);
  CHECK(l1_objective(p, x, 1e-3) < 1e-2);
}

TEST_CASE("solvers recover the aircraft from exact arrival times")
{
  const GeodeticPosition truth{47.1, 8.0, 9000.0};
  const auto p = vacuum_problem(truth, 6);
  const auto t = geodetic_to_ecef(truth);
  const auto guess = initial_guess(p, std::nullopt);

  const auto ls = solve_position_ls(p, guess);
  CHECK(distance(ls.position, t) < 0.01);
  CHECK(ls.residual_norm < 1e-12);
  CHECK(ls.condition == Conditioning::well_conditioned);
  CHECK(std::abs(ls.aircraft_time - 36000.0) < 1e-9);

  const auto l1 = solve_position_l1(p, guess);
  CHECK(distance(l1.position, t) < 0.1);
  CHECK(std::abs(l1.aircraft_time - 36000.0) < 1e-9);

  SUBCASE("a guess at sensor height still finds the aircraft above the sensors")
  {
    auto low = ecef_to_geodetic(guess);
    low.altitude = 300.0;
    CHECK(distance(solve_position_ls(p, geodetic_to_ecef(low)).position, t) < 0.01);
    CHECK(distance(solve_position_l1(p, geodetic_to_ecef(low)).position, t) < 0.1);
  }
  SUBCASE("starting from the truth takes at most two iterations")
  {
    CHECK(solve_position_ls(p, t).iterations <= 2);
  }
}

TEST_CASE("a common shift of all arrival times moves only the emission time")
{
  const GeodeticPosition truth{46.9, 8.3, 7000.0};
  const auto p = vacuum_problem(truth, 5);
  auto q = p;
  for (auto &x : q.toas)
    x += 0.125;
  const auto guess = initial_guess(p, std::nullopt);
  const auto a = solve_position_ls(p, guess);
  const auto b = solve_position_ls(q, guess);
  CHECK(distance(a.position, b.position) < 1e-3);
  CHECK(b.aircraft_time - a.aircraft_time == doctest::Approx(0.125).epsilon(1e-9));
}

TEST_CASE("atmospheric delay is modeled")
{
  const GeodeticPosition truth{47.2, 8.1, 11000.0};
  const AtmosphereModel atm{3.15e-4, 1.36e-4};
  auto p = vacuum_problem(truth, 6);
  const auto a = geodetic_to_ecef(truth);
  for (std::size_t i = 0; i < p.size(); ++i)
    p.toas[i] = 36000.0 + path_delay(atm, distance(a, p.sensors[i]), kSites[i].altitude, truth.altitude).seconds;
  p.atmosphere = atm;
  const auto guess = initial_guess(p, std::nullopt);
  CHECK(distance(solve_position_ls(p, guess).position, a) < 0.05);

  p.atmosphere = AtmosphereModel::vacuum();
  CHECK(distance(solve_position_ls(p, guess).position, a) > 1.0);
}

TEST_CASE("noisy arrival times stay within a plausible error")
{
  const GeodeticPosition truth{47.1, 8.0, 9000.0};
  auto p = vacuum_problem(truth, 6);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 20e-9);
  for (auto &x : p.toas)
    x += n(rng);
  const auto guess = initial_guess(p, std::nullopt);
  const auto t = geodetic_to_ecef(truth);
  CHECK(distance(solve_position_ls(p, guess).position, t) < 500.0);
  CHECK(distance(solve_position_l1(p, guess).position, t) < 500.0);
}

TEST_CASE("underdetermined and constrained problems")
{
  const GeodeticPosition truth{47.1, 8.0, 9000.0};
  auto p = vacuum_problem(truth, 3);
  const auto guess = initial_guess(p, std::nullopt);
  CHECK_THROWS_AS(solve_position_ls(p, guess), ArgumentError);
  CHECK_THROWS_AS(solve_position_l1(p, guess), ArgumentError);

  p.baro_altitude = 9000.0;
  p.altitude_constraint = true;
  const auto sol = solve_position_ls(p, initial_guess(p, std::nullopt));
  const auto g = ecef_to_geodetic(sol.position);
  CHECK(std::abs(g.altitude - 9000.0) < 1e-6);
  CHECK(ground_distance(g, truth) < 1.0);

  auto two = vacuum_problem(truth, 2);
  two.baro_altitude = 9000.0;
  two.altitude_constraint = true;
  CHECK_THROWS_AS(solve_position_ls(two, initial_guess(two, std::nullopt)), ArgumentError);
}

TEST_CASE("collinear sensors are flagged as ill-conditioned")
{
  TdoaProblem p;
  const auto base = geodetic_to_ecef({47.0, 8.0, 0.0});
  const Eigen::Vector3d dir = east_vector(8.0);
  const auto aircraft = geodetic_to_ecef({47.3, 8.2, 10000.0});
  for (int k = 0; k < 5; ++k)
  {
    const auto s = EcefPosition::from(base.vec() + 20000.0 * k * dir);
    p.sensors.push_back(s);
    p.toas.push_back(36000.0 + distance(aircraft, s) / speed_of_light);
  }
  const auto sol = solve_position_ls(p, geodetic_to_ecef({47.2, 8.1, 9000.0}));
  CHECK(sol.condition == Conditioning::ill_conditioned);
  CHECK(sol.condition_number > 1e8);
}

TEST_CASE("a wildly inconsistent fix is reported as no solution")
{
  auto p = vacuum_problem({47.1, 8.0, 9000.0}, 5);
  p.toas[2] += 0.01;
  p.toas[4] -= 0.02;
  const auto guess = initial_guess(p, std::nullopt);
  bool failed = false;
  try
  {
    const auto sol = solve_position_ls(p, guess);
    failed = sol.residual_norm > 1e-3;
  }
  catch (const NumericalError &)
  {
    failed = true;
  }
  CHECK(failed);
}

TEST_CASE("initial guess")
{
  auto p = vacuum_problem({47.1, 8.0, 9000.0}, 4);
  const auto bary = ecef_to_geodetic(initial_guess(p, std::nullopt));
  CHECK(bary.altitude == doctest::Approx(default_guess_altitude_m).epsilon(1e-9));

  p.baro_altitude = 8000.0;
  CHECK(ecef_to_geodetic(initial_guess(p, std::nullopt)).altitude == doctest::Approx(8000.0).epsilon(1e-9));

  PositionSolution prev;
  prev.position = geodetic_to_ecef({47.0, 8.0, 7000.0});
  prev.aircraft_time = 36000.0 - 30.0;
  CHECK(initial_guess(p, prev) == prev.position);
  prev.aircraft_time = 36000.0 - 90.0;
  CHECK(!(initial_guess(p, prev) == prev.position));
}
