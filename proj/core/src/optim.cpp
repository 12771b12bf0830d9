#include "alp/optim.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <limits>

namespace alp::optim
{

namespace
{

struct Probe
{
  double alpha;
  double f;
  double slope; // directional derivative
};

class LineSearch
{
public:
  LineSearch(const Objective &fn, const Eigen::VectorXd &x, const Eigen::VectorXd &dir, int &evals)
      : fn_(fn), x_(x), dir_(dir), evals_(evals), grad_(x.size())
  {
  }

  Probe eval(double alpha)
  {
    trial_ = x_ + alpha * dir_;
    ++evals_;
    const double f = fn_(trial_, &grad_);
    return {alpha, f, grad_.dot(dir_)};
  }

  // Nocedal & Wright algorithms 3.5/3.6 with cubic interpolation in zoom.
  bool search(const Probe &origin, double alpha_init, Probe &accepted)
  {
    constexpr double c1 = 1e-4;
    constexpr double c2 = 0.9;
    constexpr int max_trials = 40;

    Probe prev = origin;
    double alpha = alpha_init;
    for (int i = 0; i < max_trials; ++i)
    {
      Probe cur = eval(alpha);
      if (!std::isfinite(cur.f))
      {
        alpha = 0.5 * (prev.alpha + alpha);
        continue;
      }
      if (cur.f > origin.f + c1 * alpha * origin.slope || (i > 0 && cur.f >= prev.f))
        return zoom(origin, prev, cur, accepted);
      if (std::abs(cur.slope) <= -c2 * origin.slope)
      {
        accepted = cur;
        accepted_x_ = trial_;
        accepted_grad_ = grad_;
        return true;
      }
      if (cur.slope >= 0.0)
        return zoom(origin, cur, prev, accepted);
      prev = cur;
      alpha *= 2.0;
    }
    return false;
  }

  const Eigen::VectorXd &x() const { return accepted_x_; }
  const Eigen::VectorXd &grad() const { return accepted_grad_; }

private:
  static double cubic_min(const Probe &a, const Probe &b)
  {
    const double d1 = a.slope + b.slope - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
    const double disc = d1 * d1 - a.slope * b.slope;
    if (disc < 0.0)
      return 0.5 * (a.alpha + b.alpha);
    const double d2 = std::copysign(std::sqrt(disc), b.alpha - a.alpha);
    const double t = b.alpha - (b.alpha - a.alpha) * (b.slope + d2 - d1) / (b.slope - a.slope + 2.0 * d2);
    return t;
  }

  bool zoom(const Probe &origin, Probe lo, Probe hi, Probe &accepted)
  {
    constexpr double c1 = 1e-4;
    constexpr double c2 = 0.9;
    for (int i = 0; i < 40; ++i)
    {
      double alpha = cubic_min(lo, hi);
      const double left = std::min(lo.alpha, hi.alpha);
      const double right = std::max(lo.alpha, hi.alpha);
      const double margin = 0.1 * (right - left);
      if (!std::isfinite(alpha) || alpha < left + margin || alpha > right - margin)
        alpha = 0.5 * (left + right);
      Probe cur = eval(alpha);
      if (!std::isfinite(cur.f) || cur.f > origin.f + c1 * alpha * origin.slope || cur.f >= lo.f)
      {
        hi = cur;
      }
      else
      {
        if (std::abs(cur.slope) <= -c2 * origin.slope)
        {
          accepted = cur;
          accepted_x_ = trial_;
          accepted_grad_ = grad_;
          return true;
        }
        if (cur.slope * (hi.alpha - lo.alpha) >= 0.0)
          hi = lo;
        lo = cur;
      }
      if (std::abs(hi.alpha - lo.alpha) < 1e-16 * std::max(1.0, std::abs(lo.alpha)))
        break;
    }
    // Accept the best sufficient-decrease point found, if any.
    if (lo.alpha > 0.0 && lo.f < origin.f)
    {
      Probe cur = eval(lo.alpha);
      accepted = cur;
      accepted_x_ = trial_;
      accepted_grad_ = grad_;
      return true;
    }
    return false;
  }

  const Objective &fn_;
  const Eigen::VectorXd &x_;
  const Eigen::VectorXd &dir_;
  int &evals_;
  Eigen::VectorXd trial_;
  Eigen::VectorXd grad_;
  Eigen::VectorXd accepted_x_;
  Eigen::VectorXd accepted_grad_;
};

} // namespace

BfgsResult minimize_bfgs(const Objective &objective, Eigen::VectorXd x0, const BfgsOptions &options)
{
  const Eigen::Index n = x0.size();
  BfgsResult result;
  result.x = std::move(x0);

  Eigen::VectorXd grad(n);
  result.value = objective(result.x, &grad);
  result.evaluations = 1;
  if (!std::isfinite(result.value))
  {
    result.reason = "objective not finite at the starting point";
    return result;
  }

  Eigen::MatrixXd inv_hessian = Eigen::MatrixXd::Identity(n, n);
  bool scaled = false;
  int restarts = 0;

  for (int iter = 0; iter < options.max_iterations; ++iter)
  {
    result.iterations = iter;
    if (grad.lpNorm<Eigen::Infinity>() <= options.gradient_tolerance)
    {
      result.converged = true;
      result.reason = "gradient tolerance";
      return result;
    }

    Eigen::VectorXd dir = -inv_hessian * grad;
    double slope = grad.dot(dir);
    if (!(slope < 0.0))
    {
      inv_hessian.setIdentity();
      scaled = false;
      dir = -grad;
      slope = grad.dot(dir);
    }
    double alpha = 1.0;
    if (!scaled)
      alpha = std::min(1.0, options.initial_step / dir.norm());

    LineSearch ls(objective, result.x, dir, result.evaluations);
    Probe accepted{};
    if (!ls.search({0.0, result.value, slope}, alpha, accepted))
    {
      if (restarts++ < 2 && scaled)
      {
        inv_hessian.setIdentity();
        scaled = false;
        continue;
      }
      result.reason = "line search failed";
      result.converged = grad.lpNorm<Eigen::Infinity>() <= 1e3 * options.gradient_tolerance;
      return result;
    }

    const Eigen::VectorXd s = ls.x() - result.x;
    const Eigen::VectorXd y = ls.grad() - grad;
    const double previous = result.value;
    result.x = ls.x();
    grad = ls.grad();
    result.value = accepted.f;
    result.last_step = s.norm();

    const double sy = s.dot(y);
    if (sy > 1e-300)
    {
      if (!scaled)
      {
        inv_hessian *= sy / y.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd hy = inv_hessian * y;
      const double yhy = y.dot(hy);
      inv_hessian += ((1.0 + rho * yhy) * rho) * (s * s.transpose()) - rho * (hy * s.transpose() + s * hy.transpose());
    }

    if (result.last_step <= options.step_tolerance)
    {
      result.iterations = iter + 1;
      result.converged = true;
      result.reason = "step tolerance";
      return result;
    }
    if (previous - result.value <= options.function_tolerance * std::max(1.0, std::abs(previous)))
    {
      result.iterations = iter + 1;
      result.converged = true;
      result.reason = "function tolerance";
      return result;
    }
  }
  result.iterations = options.max_iterations;
  result.reason = "iteration limit";
  return result;
}

} // namespace alp::optim
