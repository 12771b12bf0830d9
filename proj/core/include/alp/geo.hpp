#pragma once

#include <Eigen/Core>

#include <span>

namespace alp
{

namespace wgs84
{
constexpr double semi_major_axis = 6378137.0;
constexpr double flattening = 1.0 / 298.257223563;
constexpr double semi_minor_axis = semi_major_axis * (1.0 - flattening);
constexpr double eccentricity_sq = flattening * (2.0 - flattening);
} // namespace wgs84

constexpr double deg_to_rad(double deg) { return deg * 0.017453292519943295; }
constexpr double rad_to_deg(double rad) { return rad * 57.29577951308232; }

// Latitude/longitude in degrees, altitude in meters above the WGS84 ellipsoid.
struct GeodeticPosition
{
  double latitude = 0.0;
  double longitude = 0.0;
  double altitude = 0.0;

  bool operator==(const GeodeticPosition &) const = default;
};

// Earth-centered Earth-fixed Cartesian coordinates in meters.
struct EcefPosition
{
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Eigen::Vector3d vec() const { return {x, y, z}; }
  static EcefPosition from(const Eigen::Vector3d &v) { return {v.x(), v.y(), v.z()}; }
  bool operator==(const EcefPosition &) const = default;
};

// Altitude bounds accepted by the geodetic type.
constexpr double min_altitude_m = -1000.0;
constexpr double max_altitude_m = 100000.0;
// Norm bounds for on/near-Earth ECEF points.
constexpr double min_ecef_norm_m = 6.2e6;
constexpr double max_ecef_norm_m = 6.6e6;

bool is_valid(const GeodeticPosition &p) noexcept;
bool is_near_earth(const EcefPosition &p) noexcept;

// Throws InvalidCoordinateError when the input violates the geodetic invariants.
EcefPosition geodetic_to_ecef(const GeodeticPosition &p);

// Iterative conversion, converged to below 1e-12 rad in latitude.
// Throws InvalidCoordinateError when the point is not near the Earth's surface.
GeodeticPosition ecef_to_geodetic(const EcefPosition &p);

// Same conversions without range validation, for use inside optimizer loops
// where iterates may wander. Longitude is normalized to [-180, 180).
EcefPosition geodetic_to_ecef_unchecked(const GeodeticPosition &p) noexcept;
GeodeticPosition ecef_to_geodetic_unchecked(const EcefPosition &p) noexcept;

// Local unit vectors at a geodetic latitude/longitude (degrees).
Eigen::Vector3d up_vector(double latitude, double longitude) noexcept;
Eigen::Vector3d east_vector(double longitude) noexcept;
Eigen::Vector3d north_vector(double latitude, double longitude) noexcept;

// Meridional (M) and prime-vertical (N) radii of curvature, meters.
double meridional_radius(double latitude) noexcept;
double prime_vertical_radius(double latitude) noexcept;

double distance(const EcefPosition &a, const EcefPosition &b) noexcept;

// Horizontal separation of two geodetic points, measured as the chord between
// their projections on the ellipsoid surface. Agrees with the ellipsoidal
// geodesic to well below a millimeter for separations under 10 km.
double ground_distance(const GeodeticPosition &a, const GeodeticPosition &b) noexcept;

// Component-wise weighted mean. Throws ArgumentError on empty input,
// mismatched lengths, negative weights, or a non-positive weight sum.
EcefPosition weighted_barycenter(std::span<const EcefPosition> points, std::span<const double> weights);

} // namespace alp
