#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace alp::stats
{

// Linear-interpolated quantile, q in [0, 1]. Takes a copy so callers keep order.
inline double quantile(std::vector<double> v, double q)
{
  if (v.empty())
    return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double median(const std::vector<double> &v) { return quantile(v, 0.5); }

} // namespace alp::stats
