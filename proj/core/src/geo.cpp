#include "alp/geo.hpp"

#include "alp/error.hpp"

#include <cmath>
#include <sstream>

namespace alp
{

namespace
{

std::string describe(const GeodeticPosition &p)
{
  std::ostringstream os;
  os.precision(12);
  os << "(lat " << p.latitude << ", lon " << p.longitude << ", alt " << p.altitude << ")";
  return os.str();
}

double normalize_longitude(double lon)
{
  if (lon >= 180.0)
    lon -= 360.0;
  else if (lon < -180.0)
    lon += 360.0;
  return lon;
}

} // namespace

bool is_valid(const GeodeticPosition &p) noexcept
{
  return std::isfinite(p.latitude) && std::isfinite(p.longitude) && std::isfinite(p.altitude) &&
         p.latitude >= -90.0 && p.latitude <= 90.0 && p.longitude >= -180.0 && p.longitude < 180.0 &&
         p.altitude > min_altitude_m && p.altitude < max_altitude_m;
}

bool is_near_earth(const EcefPosition &p) noexcept
{
  const double n = std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
  return std::isfinite(n) && n >= min_ecef_norm_m && n <= max_ecef_norm_m;
}

EcefPosition geodetic_to_ecef_unchecked(const GeodeticPosition &p) noexcept
{
  const double lat = deg_to_rad(p.latitude);
  const double lon = deg_to_rad(p.longitude);
  const double sin_lat = std::sin(lat);
  const double cos_lat = std::cos(lat);
  const double n = wgs84::semi_major_axis / std::sqrt(1.0 - wgs84::eccentricity_sq * sin_lat * sin_lat);
  const double r = (n + p.altitude) * cos_lat;
  return {r * std::cos(lon), r * std::sin(lon), (n * (1.0 - wgs84::eccentricity_sq) + p.altitude) * sin_lat};
}

EcefPosition geodetic_to_ecef(const GeodeticPosition &p)
{
  if (!is_valid(p))
    throw InvalidCoordinateError("geodetic position out of range " + describe(p));
  return geodetic_to_ecef_unchecked(p);
}

GeodeticPosition ecef_to_geodetic_unchecked(const EcefPosition &p) noexcept
{
  constexpr double a = wgs84::semi_major_axis;
  constexpr double e2 = wgs84::eccentricity_sq;

  const double rho = std::hypot(p.x, p.y);
  GeodeticPosition out;
  out.longitude = rho > 0.0 ? normalize_longitude(rad_to_deg(std::atan2(p.y, p.x))) : 0.0;

  if (rho < 1e-9)
  {
    out.latitude = p.z >= 0.0 ? 90.0 : -90.0;
    out.altitude = std::abs(p.z) - wgs84::semi_minor_axis;
    return out;
  }

  double lat = std::atan2(p.z, rho * (1.0 - e2));
  double h = 0.0;
  for (int iter = 0; iter < 16; ++iter)
  {
    const double s = std::sin(lat);
    const double c = std::cos(lat);
    const double n = a / std::sqrt(1.0 - e2 * s * s);
    h = rho * c + p.z * s - a * std::sqrt(1.0 - e2 * s * s);
    const double next = std::atan2(p.z, rho * (1.0 - e2 * n / (n + h)));
    const double step = std::abs(next - lat);
    lat = next;
    if (step < 1e-13)
      break;
  }
  const double s = std::sin(lat);
  const double c = std::cos(lat);
  out.latitude = rad_to_deg(lat);
  out.altitude = rho * c + p.z * s - a * std::sqrt(1.0 - e2 * s * s);
  return out;
}

GeodeticPosition ecef_to_geodetic(const EcefPosition &p)
{
  if (!is_near_earth(p))
  {
    std::ostringstream os;
    os.precision(12);
    os << "ECEF point (" << p.x << ", " << p.y << ", " << p.z << ") is not near the Earth's surface";
    throw InvalidCoordinateError(os.str());
  }
  return ecef_to_geodetic_unchecked(p);
}

Eigen::Vector3d up_vector(double latitude, double longitude) noexcept
{
  const double lat = deg_to_rad(latitude);
  const double lon = deg_to_rad(longitude);
  return {std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon), std::sin(lat)};
}

Eigen::Vector3d east_vector(double longitude) noexcept
{
  const double lon = deg_to_rad(longitude);
  return {-std::sin(lon), std::cos(lon), 0.0};
}

Eigen::Vector3d north_vector(double latitude, double longitude) noexcept
{
  const double lat = deg_to_rad(latitude);
  const double lon = deg_to_rad(longitude);
  return {-std::sin(lat) * std::cos(lon), -std::sin(lat) * std::sin(lon), std::cos(lat)};
}

double meridional_radius(double latitude) noexcept
{
  const double s = std::sin(deg_to_rad(latitude));
  const double w = 1.0 - wgs84::eccentricity_sq * s * s;
  return wgs84::semi_major_axis * (1.0 - wgs84::eccentricity_sq) / (w * std::sqrt(w));
}

double prime_vertical_radius(double latitude) noexcept
{
  const double s = std::sin(deg_to_rad(latitude));
  return wgs84::semi_major_axis / std::sqrt(1.0 - wgs84::eccentricity_sq * s * s);
}

double distance(const EcefPosition &a, const EcefPosition &b) noexcept
{
  return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.z - b.z) * (a.z - b.z));
}

double ground_distance(const GeodeticPosition &a, const GeodeticPosition &b) noexcept
{
  const auto pa = geodetic_to_ecef_unchecked({a.latitude, a.longitude, 0.0});
  const auto pb = geodetic_to_ecef_unchecked({b.latitude, b.longitude, 0.0});
  return distance(pa, pb);
}

EcefPosition weighted_barycenter(std::span<const EcefPosition> points, std::span<const double> weights)
{
  if (points.empty())
    throw ArgumentError("weighted_barycenter: empty point list");
  if (points.size() != weights.size())
    throw ArgumentError("weighted_barycenter: points and weights differ in length");

  Eigen::Vector3d acc = Eigen::Vector3d::Zero();
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i)
  {
    if (!(weights[i] >= 0.0) || !std::isfinite(weights[i]))
      throw ArgumentError("weighted_barycenter: weights must be finite and non-negative");
    acc += weights[i] * points[i].vec();
    total += weights[i];
  }
  if (!(total > 0.0))
    throw ArgumentError("weighted_barycenter: weights sum to zero");
  return EcefPosition::from(acc / total);
}

} // namespace alp
