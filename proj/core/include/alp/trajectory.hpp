#pragma once

#include "alp/dataio.hpp"
#include "alp/geo.hpp"
#include "alp/spline.hpp"

#include <optional>
#include <string>
#include <vector>

namespace alp
{

enum class PointSource
{
  solved,
  reconstructed,
  gap_filled,
};

const char *to_string(PointSource source);

struct TrackPoint
{
  RecordId record_id = 0;
  double aircraft_time = 0.0; // seconds
  GeodeticPosition position;
  PointSource source = PointSource::solved;
  std::optional<double> est_error; // meters

  bool operator==(const TrackPoint &) const = default;
};

struct Track
{
  AircraftId aircraft_id = 0;
  std::vector<TrackPoint> points; // strictly increasing aircraft_time
};

// A record of the flight without a usable fix, to be reconstructed.
struct TrackTarget
{
  RecordId record_id = 0;
  double aircraft_time = 0.0;
  double altitude = 0.0; // baro-derived, meters
};

constexpr double max_aircraft_speed_mps = 300.0;

// Sorts by aircraft time and keeps the first point of any equal-time run.
Track assemble_track(AircraftId aircraft, std::vector<TrackPoint> points);

struct FilterResult
{
  std::vector<TrackPoint> retained;
  std::vector<TrackPoint> removed;
};

// Longest time-ordered chain whose consecutive points are reachable at no more
// than max_speed (horizontal ground distance). Ties go to the earlier predecessor.
FilterResult velocity_graph_filter(const std::vector<TrackPoint> &points, double max_speed = max_aircraft_speed_mps);

struct ReconstructOptions
{
  double window_s = 30.0;
  std::size_t min_points = 5;
};

// Replaces every point whose centered window holds at least min_points input
// points by the value of second-order polynomials in aircraft time fitted to
// latitude and longitude in that window. Targets inside a qualifying window are
// inserted the same way; the altitude is kept (points) or taken from the target.
Track local_quadratic_reconstruct(const Track &track, const std::vector<TrackTarget> &targets = {},
                                  const ReconstructOptions &options = {});

struct ScreenOptions
{
  int degree = 5;
  double knot_spacing_s = 10.0;
  double max_gap_s = 60.0;
  std::size_t min_points = 8;
  double robust_width_m = 10.0;
  std::size_t min_keep = 0; // never retain fewer points than this
};

struct ScreenResult
{
  Track track;
  std::vector<TrackPoint> removed;
  std::vector<std::string> warnings;
};

// Annotates est_error with the ground distance to a robust spline fit and
// removes the worst (1 - keep_fraction) share of points.
ScreenResult spline_error_screen(const Track &track, double keep_fraction, const ScreenOptions &options = {});

// Inserts spline predictions for targets lying inside gaps of at most
// max_gap_s between consecutive track points.
Track fill_gaps(const Track &track, const std::vector<TrackTarget> &targets, double max_gap_s = 60.0,
                const ScreenOptions &options = {});

// Per-flight constant geo - baro offset from records carrying both values,
// zero when there are none.
double fit_altitude_offset(const MeasurementSet &set, AircraftId aircraft);

// GeoJSON FeatureCollection: a LineString of the track and a Point per point
// (including removed ones) tagged with its source.
std::string track_to_geojson(const Track &track, const std::vector<TrackPoint> &removed = {});

} // namespace alp
