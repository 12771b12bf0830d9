#pragma once

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <string>

namespace alp::optim
{

// Smoothed absolute value: eps * (sqrt(1 + (r/eps)^2) - 1). Behaves like r^2/(2 eps)
// for |r| << eps and like |r| - eps for |r| >> eps.
inline double pseudo_huber(double r, double eps)
{
  const double q = r / eps;
  return eps * (std::sqrt(1.0 + q * q) - 1.0);
}

inline double pseudo_huber_deriv(double r, double eps)
{
  const double q = r / eps;
  return q / std::sqrt(1.0 + q * q);
}

// eps * rho'(r)/r, in (0, 1]; the weight used by iteratively reweighted least squares.
inline double pseudo_huber_weight(double r, double eps)
{
  const double q = r / eps;
  return 1.0 / std::sqrt(1.0 + q * q);
}

// Returns f(x) and, when grad is non-null, writes the gradient into it.
using Objective = std::function<double(const Eigen::VectorXd &x, Eigen::VectorXd *grad)>;

struct BfgsOptions
{
  int max_iterations = 200;
  double gradient_tolerance = 1e-9; // infinity norm
  double step_tolerance = 1e-6;     // norm of the accepted step
  double function_tolerance = 1e-15; // relative decrease
  double initial_step = 1.0;        // length of the first trial step
};

struct BfgsResult
{
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  double last_step = 0.0;
  std::string reason;
};

// Quasi-Newton minimization with a strong-Wolfe line search.
BfgsResult minimize_bfgs(const Objective &objective, Eigen::VectorXd x0, const BfgsOptions &options = {});

} // namespace alp::optim
