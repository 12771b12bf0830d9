#include "alp/atmosphere.hpp"
#include "alp/error.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace alp;

namespace
{

// Composite Simpson integral of a0*exp(-b h) over [h1, h2], divided by the span.
double simpson_excess(const AtmosphereModel &m, double h1, double h2)
{
  const int n = 2000;
  const double step = (h2 - h1) / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i)
  {
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    s += w * m.a0 * std::exp(-m.b * (h1 + i * step));
  }
  return s * step / 3.0 / (h2 - h1);
}

} // namespace

TEST_CASE("refractive index")
{
  CHECK(refractive_index(AtmosphereModel::vacuum(), 0.0) == 1.0);
  CHECK(refractive_index({3e-4, 1.4e-4}, 0.0) == doctest::Approx(1.0003).epsilon(1e-15));
  CHECK(refractive_index({3e-4, 1.4e-4}, 1e7) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("effective velocity limits")
{
  const AtmosphereModel m{3e-4, 1.4e-4};
  CHECK(effective_velocity(m, 5000.0, 5000.0) == doctest::Approx(speed_of_light / (1.0 + 3e-4 * std::exp(-0.7))).epsilon(1e-15));
  CHECK(effective_velocity(AtmosphereModel::vacuum(), 0.0, 12000.0) == speed_of_light);
  // Continuity across the equal-altitude branch.
  CHECK(effective_velocity(m, 5000.0, 5000.0 + 1e-9) == doctest::Approx(effective_velocity(m, 5000.0, 5000.0)).epsilon(1e-15));
  // Symmetry.
  CHECK(effective_velocity(m, 100.0, 9000.0) == effective_velocity(m, 9000.0, 100.0));
}

TEST_CASE("mean excess index agrees with quadrature")
{
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> h(0.0, 12000.0), a0(1e-5, 1e-3), lb(std::log(1e-5), std::log(1e-3));
  for (int i = 0; i < 200; ++i)
  {
    const AtmosphereModel m{a0(rng), std::exp(lb(rng))};
    const double h1 = h(rng), h2 = h(rng);
    if (std::abs(h2 - h1) < 1.0)
      continue;
    CHECK(mean_excess_index(m, h1, h2) == doctest::Approx(simpson_excess(m, h1, h2)).epsilon(1e-9));
  }
}

TEST_CASE("velocity ratio 0.9997 gives the quoted excess delays")
{
  // Choose a0 so that v/c = 0.9997 between the surface and 10 km with b = 1e-4.
  AtmosphereModel m{1.0, 1e-4};
  m.a0 = (1.0 / 0.9997 - 1.0) / mean_excess_index(m, 0.0, 10000.0);
  CHECK(effective_velocity(m, 0.0, 10000.0) / speed_of_light == doctest::Approx(0.9997).epsilon(1e-12));
  const double vertical = path_delay(m, 10000.0, 0.0, 10000.0).seconds - 10000.0 / speed_of_light;
  const double slant = path_delay(m, 100000.0, 0.0, 10000.0).seconds - 100000.0 / speed_of_light;
  CHECK(std::abs(vertical - 10e-9) < 1e-9);
  CHECK(std::abs(slant - 100e-9) < 10e-9);
}

TEST_CASE("path delay partials match finite differences")
{
  const AtmosphereModel m{3.2e-4, 1.3e-4};
  const double L = 85000.0, h1 = 300.0, h2 = 9000.0, e = 1e-3;
  const auto d = path_delay(m, L, h1, h2);
  CHECK(d.d_length == doctest::Approx((path_delay(m, L + e, h1, h2).seconds - path_delay(m, L - e, h1, h2).seconds) / (2 * e)).epsilon(1e-7));
  CHECK(d.d_h1 == doctest::Approx((path_delay(m, L, h1 + e, h2).seconds - path_delay(m, L, h1 - e, h2).seconds) / (2 * e)).epsilon(1e-5));
  CHECK(d.d_h2 == doctest::Approx((path_delay(m, L, h1, h2 + e).seconds - path_delay(m, L, h1, h2 - e).seconds) / (2 * e)).epsilon(1e-5));

  const auto p = mean_excess_index_partials(m, h1, h2);
  const double da = 1e-9, db = 1e-9;
  CHECK(p.d_a0 == doctest::Approx((mean_excess_index({m.a0 + da, m.b}, h1, h2) - mean_excess_index({m.a0 - da, m.b}, h1, h2)) / (2 * da)).epsilon(1e-6));
  CHECK(p.d_b == doctest::Approx((mean_excess_index({m.a0, m.b + db}, h1, h2) - mean_excess_index({m.a0, m.b - db}, h1, h2)) / (2 * db)).epsilon(1e-5));
}

TEST_CASE("atmosphere validation")
{
  CHECK_NOTHROW(validate(AtmosphereModel::vacuum()));
  CHECK_THROWS_AS(validate({-1e-4, 1e-4}), ArgumentError);
  CHECK_THROWS_AS(validate({1e-4, 0.0}), ArgumentError);
  CHECK_THROWS_AS(validate({0.1, 1e-4}), ArgumentError);
}
