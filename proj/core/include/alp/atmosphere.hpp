#pragma once

namespace alp
{

constexpr double speed_of_light = 299792458.0; // m/s

// Exponential refractivity profile n(h) = 1 + a0 * exp(-b * h).
// a0 == 0 is admitted as the vacuum limit.
struct AtmosphereModel
{
  double a0 = 1e-3; // dimensionless refractivity amplitude
  double b = 1e-3;  // decay constant, 1/m

  static AtmosphereModel vacuum() { return {0.0, 1e-3}; }
  bool operator==(const AtmosphereModel &) const = default;
};

// Throws ArgumentError when a0 is outside [0, 1e-2] or b outside (0, 1e-2].
void validate(const AtmosphereModel &model);

double refractive_index(const AtmosphereModel &model, double h);

// Path-averaged excess refractivity between altitudes h1 and h2:
// (1/(h2-h1)) * integral of a0*exp(-b*h) dh, with the analytic limit
// a0*exp(-b*h) when h1 == h2. Symmetric in its altitude arguments.
double mean_excess_index(const AtmosphereModel &model, double h1, double h2);

// Average signal velocity along a straight path between altitudes h1 and h2.
double effective_velocity(const AtmosphereModel &model, double h1, double h2);

// One-way propagation time over a path of length `length` (m) between the two
// altitudes, with partial derivatives with respect to the path length and to
// each endpoint altitude.
struct PathDelay
{
  double seconds = 0.0;
  double d_length = 0.0;
  double d_h1 = 0.0;
  double d_h2 = 0.0;
};
PathDelay path_delay(const AtmosphereModel &model, double length, double h1, double h2);

// Partials of mean_excess_index with respect to a0 and b.
struct ExcessIndexPartials
{
  double value = 0.0;
  double d_a0 = 0.0;
  double d_b = 0.0;
};
ExcessIndexPartials mean_excess_index_partials(const AtmosphereModel &model, double h1, double h2);

} // namespace alp
