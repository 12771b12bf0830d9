#include "alp/spline.hpp"

#include "alp/optim.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace alp
{

BSpline::BSpline(int degree, std::vector<double> knots, std::vector<double> coefficients)
    : degree_(degree), knots_(std::move(knots)), coefficients_(std::move(coefficients))
{
  if (degree_ < 0)
    throw ArgumentError("spline degree must be non-negative");
  if (knots_.size() < static_cast<std::size_t>(2 * degree_ + 2))
    throw ArgumentError("spline knot vector too short for its degree");
  if (coefficients_.size() != knots_.size() - static_cast<std::size_t>(degree_) - 1)
    throw ArgumentError("spline coefficient count does not match knot vector");
  for (std::size_t i = 1; i < knots_.size(); ++i)
    if (knots_[i] < knots_[i - 1])
      throw ArgumentError("spline knots must be non-decreasing");
  if (!(knots_.back() > knots_.front()))
    throw ArgumentError("spline knot span must be non-empty");
}

std::size_t BSpline::basis(double t, std::span<double> values) const
{
  const int p = degree_;
  const std::size_t n_coef = coefficients_.size();
  // knot span index k with knots[k] <= t < knots[k+1], clamped to the last interval
  std::size_t k;
  if (t >= knots_[n_coef])
    k = n_coef - 1;
  else
  {
    const auto it = std::upper_bound(knots_.begin() + p, knots_.begin() + static_cast<std::ptrdiff_t>(n_coef) + 1, t);
    k = static_cast<std::size_t>(it - knots_.begin()) - 1;
  }

  double left[16];
  double right[16];
  values[0] = 1.0;
  for (int j = 1; j <= p; ++j)
  {
    left[j] = t - knots_[k + 1 - static_cast<std::size_t>(j)];
    right[j] = knots_[k + static_cast<std::size_t>(j)] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r)
    {
      const double tmp = values[static_cast<std::size_t>(r)] / (right[r + 1] + left[j - r]);
      values[static_cast<std::size_t>(r)] = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    values[static_cast<std::size_t>(j)] = saved;
  }
  return k - static_cast<std::size_t>(p);
}

double BSpline::operator()(double t) const
{
  if (!contains(t))
    throw SplineDomainError("spline evaluated at " + std::to_string(t) + " outside [" + std::to_string(begin()) +
                            ", " + std::to_string(end()) + "]");
  double values[16];
  const std::size_t first = basis(t, std::span<double>(values, static_cast<std::size_t>(degree_) + 1));
  double sum = 0.0;
  for (int j = 0; j <= degree_; ++j)
    sum += values[j] * coefficients_[first + static_cast<std::size_t>(j)];
  return sum;
}

std::vector<double> clamped_knots(double begin, double end, const SplineFitOptions &options)
{
  if (!(end > begin))
    throw ArgumentError("spline interval must be non-empty");
  if (options.degree < 1 || options.degree > 14)
    throw ArgumentError("spline degree must lie in [1, 14]");
  const int intervals =
      std::max(options.min_intervals, static_cast<int>(std::ceil((end - begin) / options.knot_spacing - 1e-9)));
  std::vector<double> knots;
  knots.reserve(static_cast<std::size_t>(intervals + 2 * options.degree + 1));
  for (int i = 0; i < options.degree; ++i)
    knots.push_back(begin);
  for (int i = 0; i <= intervals; ++i)
    knots.push_back(i == intervals ? end : begin + (end - begin) * i / intervals);
  for (int i = 0; i < options.degree; ++i)
    knots.push_back(end);
  return knots;
}

namespace
{

// Coefficient differences of the given order. Each step follows the
// derivative recursion, rescaled by the interior knot spacing so that it is a
// plain difference on uniform knots and still annihilates polynomials near the
// clamped ends. Orders above the degree difference the piecewise-constant top
// derivative.
Eigen::MatrixXd difference_operator(const std::vector<double> &knots, int degree, int order)
{
  const auto n = static_cast<Eigen::Index>(knots.size()) - degree - 1;
  const double h = (knots.back() - knots.front()) /
                   std::max<double>(1.0, static_cast<double>(static_cast<Eigen::Index>(knots.size()) - 2 * degree - 1));
  Eigen::MatrixXd d = Eigen::MatrixXd::Identity(n, n);
  int q = degree;
  std::size_t offset = 0; // first knot of the current (reduced) knot vector
  for (int o = 0; o < order && d.rows() > 1; ++o)
  {
    Eigen::MatrixXd next(d.rows() - 1, n);
    for (Eigen::Index r = 0; r + 1 < d.rows(); ++r)
    {
      double factor = 1.0;
      if (q >= 1)
      {
        const auto i = offset + static_cast<std::size_t>(r);
        const double span = knots[i + static_cast<std::size_t>(q) + 1] - knots[i + 1];
        factor = span > 0.0 ? q * h / span : 0.0;
      }
      next.row(r) = factor * (d.row(r + 1) - d.row(r));
    }
    d = std::move(next);
    if (q >= 1)
    {
      --q;
      ++offset;
    }
  }
  return d;
}

} // namespace

BSpline fit_spline(std::span<const double> t, std::span<const double> y, std::span<const double> weights,
                   double begin, double end, const SplineFitOptions &options)
{
  if (t.size() != y.size() || (!weights.empty() && weights.size() != t.size()))
    throw ArgumentError("fit_spline: sample arrays differ in length");

  auto knots = clamped_knots(begin, end, options);
  const std::size_t n_coef = knots.size() - static_cast<std::size_t>(options.degree) - 1;
  BSpline shape(options.degree, knots, std::vector<double>(n_coef, 0.0));

  const auto n = static_cast<Eigen::Index>(n_coef);
  Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  double values[16];
  const std::size_t width = static_cast<std::size_t>(options.degree) + 1;
  for (std::size_t i = 0; i < t.size(); ++i)
  {
    if (!(t[i] >= begin && t[i] <= end))
      continue;
    const double w = weights.empty() ? 1.0 : weights[i];
    const std::size_t first = shape.basis(t[i], std::span<double>(values, width));
    for (std::size_t a = 0; a < width; ++a)
    {
      const auto ia = static_cast<Eigen::Index>(first + a);
      rhs(ia) += w * values[a] * y[i];
      for (std::size_t b = 0; b < width; ++b)
        normal(ia, static_cast<Eigen::Index>(first + b)) += w * values[a] * values[b];
    }
  }

  const double scale = std::max(normal.diagonal().mean(), 1e-12);
  const Eigen::MatrixXd diff = difference_operator(knots, options.degree, options.penalty_order);
  normal += (options.smoothing * scale) * (diff.transpose() * diff);
  normal.diagonal().array() += 1e-13 * scale;

  const Eigen::VectorXd coef = normal.ldlt().solve(rhs);
  return BSpline(options.degree, std::move(knots), std::vector<double>(coef.data(), coef.data() + n));
}

BSpline fit_spline_robust(std::span<const double> t, std::span<const double> y, double begin, double end,
                          const SplineFitOptions &options, double eps, int iterations)
{
  std::vector<double> w(t.size(), 1.0);
  BSpline spline = fit_spline(t, y, w, begin, end, options);
  for (int it = 0; it < iterations; ++it)
  {
    double change = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i)
    {
      if (!(t[i] >= begin && t[i] <= end))
        continue;
      const double next = optim::pseudo_huber_weight(y[i] - spline(t[i]), eps);
      change = std::max(change, std::abs(next - w[i]));
      w[i] = next;
    }
    spline = fit_spline(t, y, w, begin, end, options);
    if (change < 1e-6)
      break;
  }
  return spline;
}

} // namespace alp
