#pragma once

#include "alp/error.hpp"

#include <span>
#include <vector>

namespace alp
{

class SplineDomainError : public ArgumentError
{
public:
  explicit SplineDomainError(const std::string &what) : ArgumentError(what) {}
};

// Clamped B-spline of arbitrary degree on [knots.front(), knots.back()].
class BSpline
{
public:
  BSpline() = default;
  // knots: full clamped knot vector (degree+1 repeated ends);
  // coefficients.size() == knots.size() - degree - 1.
  BSpline(int degree, std::vector<double> knots, std::vector<double> coefficients);

  int degree() const { return degree_; }
  const std::vector<double> &knots() const { return knots_; }
  const std::vector<double> &coefficients() const { return coefficients_; }
  double begin() const { return knots_.empty() ? 0.0 : knots_.front(); }
  double end() const { return knots_.empty() ? 0.0 : knots_.back(); }
  bool contains(double t) const { return !knots_.empty() && t >= begin() && t <= end(); }

  // Throws SplineDomainError outside [begin(), end()].
  double operator()(double t) const;

  // Index of the first non-zero basis function at t and the degree+1 values.
  std::size_t basis(double t, std::span<double> values) const;

  bool operator==(const BSpline &) const = default;

private:
  int degree_ = 0;
  std::vector<double> knots_;
  std::vector<double> coefficients_;
};

struct SplineFitOptions
{
  int degree = 3;
  double knot_spacing = 30.0; // interior knot spacing, same unit as t
  int min_intervals = 1;
  // Penalty on coefficient differences of penalty_order (knot-aware near the
  // clamped ends), scaled by the mean diagonal of the data normal matrix so
  // the value is dimensionless. Polynomials of degree below penalty_order are
  // not penalized.
  double smoothing = 1e-6;
  int penalty_order = 2;
};

// Uniform clamped knot vector covering [begin, end].
std::vector<double> clamped_knots(double begin, double end, const SplineFitOptions &options);

// Weighted penalized least-squares fit on [begin, end]; samples outside the
// interval are ignored. weights may be empty (uniform).
BSpline fit_spline(std::span<const double> t, std::span<const double> y, std::span<const double> weights,
                   double begin, double end, const SplineFitOptions &options);

// Iteratively reweighted fit minimizing the pseudo-Huber loss of width eps.
BSpline fit_spline_robust(std::span<const double> t, std::span<const double> y, double begin, double end,
                          const SplineFitOptions &options, double eps, int iterations = 20);

} // namespace alp
