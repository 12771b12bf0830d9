#include "alp/atmosphere.hpp"

#include "alp/error.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace alp
{

namespace
{

// phi(x) = (1 - exp(-x)) / x and its derivative, stable near x = 0.
struct Phi
{
  double value;
  double deriv;
};

Phi phi(double x)
{
  if (std::abs(x) < 1e-3)
  {
    const double x2 = x * x;
    return {1.0 - x / 2.0 + x2 / 6.0 - x2 * x / 24.0 + x2 * x2 / 120.0,
            -0.5 + x / 3.0 - x2 / 8.0 + x2 * x / 30.0};
  }
  const double v = -std::expm1(-x) / x;
  return {v, (std::exp(-x) - v) / x};
}

struct ExcessTerms
{
  double g;    // mean of exp(-b h) over [h1, h2]
  double d_h1; // partials of g
  double d_h2;
  double d_b;
};

// Requires h2 >= h1 so that exp(-b*(h2-h1)) cannot overflow.
ExcessTerms excess_ordered(double b, double h1, double h2)
{
  const double delta = h2 - h1;
  const double base = std::exp(-b * h1);
  const Phi p = phi(b * delta);
  ExcessTerms t;
  t.g = base * p.value;
  t.d_h2 = base * b * p.deriv;
  t.d_h1 = -b * base * (p.value + p.deriv);
  t.d_b = base * (delta * p.deriv - h1 * p.value);
  return t;
}

ExcessTerms excess(double b, double h1, double h2)
{
  if (h2 >= h1)
    return excess_ordered(b, h1, h2);
  ExcessTerms t = excess_ordered(b, h2, h1);
  std::swap(t.d_h1, t.d_h2);
  return t;
}

} // namespace

void validate(const AtmosphereModel &model)
{
  if (!std::isfinite(model.a0) || model.a0 < 0.0 || model.a0 > 1e-2)
    throw ArgumentError("atmosphere a0 must lie in [0, 1e-2], got " + std::to_string(model.a0));
  if (!std::isfinite(model.b) || model.b <= 0.0 || model.b > 1e-2)
    throw ArgumentError("atmosphere b must lie in (0, 1e-2], got " + std::to_string(model.b));
}

double refractive_index(const AtmosphereModel &model, double h) { return 1.0 + model.a0 * std::exp(-model.b * h); }

double mean_excess_index(const AtmosphereModel &model, double h1, double h2)
{
  return model.a0 * excess(model.b, h1, h2).g;
}

ExcessIndexPartials mean_excess_index_partials(const AtmosphereModel &model, double h1, double h2)
{
  const auto t = excess(model.b, h1, h2);
  return {model.a0 * t.g, t.g, model.a0 * t.d_b};
}

double effective_velocity(const AtmosphereModel &model, double h1, double h2)
{
  return speed_of_light / (1.0 + mean_excess_index(model, h1, h2));
}

PathDelay path_delay(const AtmosphereModel &model, double length, double h1, double h2)
{
  const auto t = excess(model.b, h1, h2);
  const double n = 1.0 + model.a0 * t.g;
  PathDelay d;
  d.seconds = length * n / speed_of_light;
  d.d_length = n / speed_of_light;
  d.d_h1 = length * model.a0 * t.d_h1 / speed_of_light;
  d.d_h2 = length * model.a0 * t.d_h2 / speed_of_light;
  return d;
}

} // namespace alp
