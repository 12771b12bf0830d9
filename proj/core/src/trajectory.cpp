#include "alp/trajectory.hpp"

#include "alp/error.hpp"
#include "stats.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace alp
{

const char *to_string(PointSource source)
{
  switch (source)
  {
  case PointSource::solved:
    return "solved";
  case PointSource::reconstructed:
    return "reconstructed";
  case PointSource::gap_filled:
    return "gap-filled";
  }
  return "solved";
}

Track assemble_track(AircraftId aircraft, std::vector<TrackPoint> points)
{
  std::stable_sort(points.begin(), points.end(),
                   [](const auto &a, const auto &b) { return a.aircraft_time < b.aircraft_time; });
  Track track;
  track.aircraft_id = aircraft;
  for (auto &p : points)
    if (track.points.empty() || p.aircraft_time > track.points.back().aircraft_time)
      track.points.push_back(std::move(p));
  return track;
}

namespace
{

Eigen::Vector3d surface_point(const GeodeticPosition &p)
{
  return geodetic_to_ecef_unchecked({p.latitude, p.longitude, 0.0}).vec();
}

} // namespace

FilterResult velocity_graph_filter(const std::vector<TrackPoint> &points, double max_speed)
{
  FilterResult out;
  const std::size_t n = points.size();
  if (n == 0)
    return out;

  std::vector<Eigen::Vector3d> surface(n);
  for (std::size_t i = 0; i < n; ++i)
    surface[i] = surface_point(points[i].position);

  auto feasible = [&](std::size_t j, std::size_t i) {
    const double dt = points[i].aircraft_time - points[j].aircraft_time;
    const double dist = (surface[i] - surface[j]).norm();
    return dt > 0.0 ? dist <= max_speed * dt : dist == 0.0;
  };

  // length[i]: longest feasible chain ending at i; a chain ending at j has at
  // most j + 1 points, which bounds the backward scan.
  std::vector<std::size_t> length(n, 1);
  std::vector<std::ptrdiff_t> pred(n, -1);
  for (std::size_t i = 1; i < n; ++i)
  {
    std::size_t best = 0;
    for (std::size_t jj = i; jj-- > 0;)
    {
      if (jj + 1 < best)
        break;
      if (length[jj] >= best && feasible(jj, i))
      {
        best = length[jj];
        pred[i] = static_cast<std::ptrdiff_t>(jj);
      }
    }
    length[i] = best + 1;
  }

  std::size_t end = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (length[i] > length[end])
      end = i;
  std::vector<bool> keep(n, false);
  for (std::ptrdiff_t k = static_cast<std::ptrdiff_t>(end); k >= 0; k = pred[static_cast<std::size_t>(k)])
    keep[static_cast<std::size_t>(k)] = true;

  for (std::size_t i = 0; i < n; ++i)
    (keep[i] ? out.retained : out.removed).push_back(points[i]);
  return out;
}

namespace
{

// Least-squares quadratic through (t_k - t_c, v_k), returned at t_c.
double quadratic_at(const std::vector<double> &dt, const std::vector<double> &v)
{
  const auto m = static_cast<Eigen::Index>(dt.size());
  Eigen::MatrixXd a(m, 3);
  Eigen::VectorXd y(m);
  double mean = 0.0;
  for (double x : v)
    mean += x;
  mean /= static_cast<double>(v.size());
  for (Eigen::Index k = 0; k < m; ++k)
  {
    const double u = dt[static_cast<std::size_t>(k)];
    a(k, 0) = 1.0;
    a(k, 1) = u;
    a(k, 2) = u * u;
    y(k) = v[static_cast<std::size_t>(k)] - mean;
  }
  const Eigen::Vector3d coef = a.colPivHouseholderQr().solve(y);
  return mean + coef(0);
}

double unwrap_longitude(double lon, double reference) { return reference + std::remainder(lon - reference, 360.0); }

double wrap_longitude(double lon)
{
  double w = std::remainder(lon, 360.0);
  if (w >= 180.0)
    w -= 360.0;
  return w;
}

} // namespace

Track local_quadratic_reconstruct(const Track &track, const std::vector<TrackTarget> &targets,
                                  const ReconstructOptions &options)
{
  if (!(options.window_s > 0.0))
    throw ArgumentError("reconstruction window must be positive");
  const auto &pts = track.points;
  const double half = 0.5 * options.window_s;

  std::vector<double> times(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i)
    times[i] = pts[i].aircraft_time;

  std::vector<double> dt, lat, lon;
  auto fit_at = [&](double t, GeodeticPosition &out) {
    const auto lo = std::lower_bound(times.begin(), times.end(), t - half) - times.begin();
    const auto hi = std::upper_bound(times.begin(), times.end(), t + half) - times.begin();
    if (hi - lo < static_cast<std::ptrdiff_t>(std::max<std::size_t>(options.min_points, 3)))
      return false;
    dt.clear();
    lat.clear();
    lon.clear();
    const double lon_ref = pts[static_cast<std::size_t>(lo)].position.longitude;
    for (auto k = lo; k < hi; ++k)
    {
      const auto &p = pts[static_cast<std::size_t>(k)];
      dt.push_back(p.aircraft_time - t);
      lat.push_back(p.position.latitude);
      lon.push_back(unwrap_longitude(p.position.longitude, lon_ref));
    }
    out.latitude = std::clamp(quadratic_at(dt, lat), -90.0, 90.0);
    out.longitude = wrap_longitude(quadratic_at(dt, lon));
    return true;
  };

  std::vector<TrackPoint> result;
  result.reserve(pts.size() + targets.size());
  for (const auto &p : pts)
  {
    TrackPoint q = p;
    GeodeticPosition fitted = p.position;
    if (fit_at(p.aircraft_time, fitted))
    {
      q.position.latitude = fitted.latitude;
      q.position.longitude = fitted.longitude;
      q.source = PointSource::reconstructed;
    }
    result.push_back(q);
  }
  std::vector<RecordId> present;
  for (const auto &p : pts)
    present.push_back(p.record_id);
  std::sort(present.begin(), present.end());
  for (const auto &target : targets)
  {
    if (std::binary_search(present.begin(), present.end(), target.record_id))
      continue;
    GeodeticPosition fitted{0.0, 0.0, target.altitude};
    if (!fit_at(target.aircraft_time, fitted))
      continue;
    result.push_back({target.record_id, target.aircraft_time, fitted, PointSource::reconstructed, std::nullopt});
  }
  return assemble_track(track.aircraft_id, std::move(result));
}

namespace
{

struct SplineSegment
{
  double begin = 0.0, end = 0.0; // relative seconds
  BSpline lat, lon;
  double lat_ref = 0.0, lon_ref = 0.0; // fitted values are relative to these
  double rms_m = 0.0;
};

struct TrackSpline
{
  double t0 = 0.0;
  std::vector<SplineSegment> segments;
  std::vector<std::string> warnings;

  const SplineSegment *segment_for(double t) const
  {
    const double u = t - t0;
    for (const auto &s : segments)
      if (u >= s.begin && u <= s.end)
        return &s;
    return nullptr;
  }

  GeodeticPosition eval(const SplineSegment &s, double t, double altitude) const
  {
    const double u = t - t0;
    return {std::clamp(s.lat_ref + s.lat(u), -90.0, 90.0), wrap_longitude(s.lon_ref + s.lon(u)), altitude};
  }
};

// Robust spline fits of latitude and longitude over each run of points
// without a gap longer than max_gap_s.
TrackSpline fit_track_spline(const std::vector<TrackPoint> &pts, const ScreenOptions &options)
{
  TrackSpline ts;
  if (pts.empty())
    return ts;
  ts.t0 = pts.front().aircraft_time;

  std::size_t start = 0;
  for (std::size_t i = 1; i <= pts.size(); ++i)
  {
    if (i < pts.size() && pts[i].aircraft_time - pts[i - 1].aircraft_time <= options.max_gap_s)
      continue;
    const std::size_t count = i - start;
    if (count < options.min_points)
    {
      ts.warnings.push_back("spline screen skipped for " + std::to_string(count) + " points starting at record " +
                            std::to_string(pts[start].record_id) + " (fewer than " +
                            std::to_string(options.min_points) + ")");
      start = i;
      continue;
    }
    SplineSegment seg;
    seg.begin = pts[start].aircraft_time - ts.t0;
    seg.end = pts[i - 1].aircraft_time - ts.t0;
    seg.lat_ref = pts[start].position.latitude;
    seg.lon_ref = pts[start].position.longitude;
    std::vector<double> t, lat, lon;
    for (std::size_t k = start; k < i; ++k)
    {
      t.push_back(pts[k].aircraft_time - ts.t0);
      lat.push_back(pts[k].position.latitude - seg.lat_ref);
      lon.push_back(unwrap_longitude(pts[k].position.longitude, seg.lon_ref) - seg.lon_ref);
    }

    SplineFitOptions so;
    so.degree = options.degree;
    so.smoothing = 1e-8;
    so.penalty_order = options.degree + 1;
    const double span = std::max(seg.end - seg.begin, 1e-3);
    const auto max_intervals = std::max<std::ptrdiff_t>(1, static_cast<std::ptrdiff_t>(count / 2) - options.degree);
    const auto intervals =
        std::min<std::ptrdiff_t>(max_intervals, static_cast<std::ptrdiff_t>(std::ceil(span / options.knot_spacing_s)));
    so.knot_spacing = span / static_cast<double>(intervals) * (1.0 + 1e-9);
    so.min_intervals = 1;

    const double lat0 = pts[start].position.latitude;
    const double eps_lat = rad_to_deg(options.robust_width_m / meridional_radius(lat0));
    const double eps_lon = rad_to_deg(options.robust_width_m /
                                      (prime_vertical_radius(lat0) * std::max(std::cos(deg_to_rad(lat0)), 1e-3)));
    seg.lat = fit_spline_robust(t, lat, seg.begin, seg.end, so, eps_lat);
    seg.lon = fit_spline_robust(t, lon, seg.begin, seg.end, so, eps_lon);

    std::vector<double> res;
    for (std::size_t k = start; k < i; ++k)
      res.push_back(ground_distance(pts[k].position, ts.eval(seg, pts[k].aircraft_time, pts[k].position.altitude)));
    double ss = 0.0;
    const double cut = stats::quantile(res, 0.9);
    std::size_t used = 0;
    for (double r : res)
      if (r <= cut)
      {
        ss += r * r;
        ++used;
      }
    seg.rms_m = used ? std::sqrt(ss / static_cast<double>(used)) : 0.0;
    ts.segments.push_back(std::move(seg));
    start = i;
  }
  return ts;
}

} // namespace

ScreenResult spline_error_screen(const Track &track, double keep_fraction, const ScreenOptions &options)
{
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
    throw ArgumentError("keep_fraction must lie in (0, 1]");
  ScreenResult out;
  out.track = track;
  const TrackSpline ts = fit_track_spline(track.points, options);
  out.warnings = ts.warnings;

  std::vector<std::size_t> scored;
  for (std::size_t i = 0; i < out.track.points.size(); ++i)
  {
    auto &p = out.track.points[i];
    const auto *seg = ts.segment_for(p.aircraft_time);
    if (!seg)
      continue;
    p.est_error = ground_distance(p.position, ts.eval(*seg, p.aircraft_time, p.position.altitude));
    scored.push_back(i);
  }

  const std::size_t n = out.track.points.size();
  auto remove = static_cast<std::size_t>(std::floor((1.0 - keep_fraction) * static_cast<double>(n) + 1e-9));
  remove = std::min(remove, scored.size());
  if (n - remove < options.min_keep)
    remove = n > options.min_keep ? n - options.min_keep : 0;
  if (remove == 0)
    return out;

  std::stable_sort(scored.begin(), scored.end(), [&](std::size_t a, std::size_t b) {
    return *out.track.points[a].est_error > *out.track.points[b].est_error;
  });
  std::vector<bool> drop(n, false);
  for (std::size_t k = 0; k < remove; ++k)
    drop[scored[k]] = true;
  std::vector<TrackPoint> kept;
  for (std::size_t i = 0; i < n; ++i)
    (drop[i] ? out.removed : kept).push_back(out.track.points[i]);
  out.track.points = std::move(kept);
  return out;
}

Track fill_gaps(const Track &track, const std::vector<TrackTarget> &targets, double max_gap_s,
                const ScreenOptions &options)
{
  if (track.points.size() < 2 || targets.empty())
    return track;
  ScreenOptions so = options;
  so.max_gap_s = max_gap_s;
  const TrackSpline ts = fit_track_spline(track.points, so);

  std::vector<double> times;
  std::vector<RecordId> present;
  for (const auto &p : track.points)
  {
    times.push_back(p.aircraft_time);
    present.push_back(p.record_id);
  }
  std::sort(present.begin(), present.end());

  std::vector<TrackPoint> out = track.points;
  for (const auto &target : targets)
  {
    if (std::binary_search(present.begin(), present.end(), target.record_id))
      continue;
    const auto it = std::upper_bound(times.begin(), times.end(), target.aircraft_time);
    if (it == times.begin() || it == times.end())
      continue;
    const double before = *(it - 1);
    const double after = *it;
    if (target.aircraft_time == before || after - before > max_gap_s)
      continue;
    const auto *seg = ts.segment_for(target.aircraft_time);
    if (!seg)
      continue;
    const double nearest = std::min(target.aircraft_time - before, after - target.aircraft_time);
    TrackPoint p;
    p.record_id = target.record_id;
    p.aircraft_time = target.aircraft_time;
    p.position = ts.eval(*seg, target.aircraft_time, target.altitude);
    p.source = PointSource::gap_filled;
    p.est_error = seg->rms_m * (1.0 + nearest / options.knot_spacing_s);
    out.push_back(p);
  }
  return assemble_track(track.aircraft_id, std::move(out));
}

double fit_altitude_offset(const MeasurementSet &set, AircraftId aircraft)
{
  std::vector<double> diffs;
  for (const auto &rec : set.records)
    if (rec.aircraft_id == aircraft && rec.truth && !rec.geo_altitude_missing && rec.baro_altitude)
      diffs.push_back(rec.truth->altitude - *rec.baro_altitude);
  return diffs.empty() ? 0.0 : stats::median(diffs);
}

std::string track_to_geojson(const Track &track, const std::vector<TrackPoint> &removed)
{
  using nlohmann::json;
  json features = json::array();
  json line = json::array();
  for (const auto &p : track.points)
    line.push_back({p.position.longitude, p.position.latitude, p.position.altitude});
  features.push_back({{"type", "Feature"},
                      {"geometry", {{"type", "LineString"}, {"coordinates", line}}},
                      {"properties", {{"aircraft", track.aircraft_id}}}});
  auto add_point = [&](const TrackPoint &p, const char *source) {
    json props = {{"record", p.record_id}, {"time", p.aircraft_time}, {"source", source}};
    if (p.est_error)
      props["est_error_m"] = *p.est_error;
    features.push_back(
        {{"type", "Feature"},
         {"geometry", {{"type", "Point"}, {"coordinates", {p.position.longitude, p.position.latitude, p.position.altitude}}}},
         {"properties", props}});
  };
  for (const auto &p : track.points)
    add_point(p, to_string(p.source));
  for (const auto &p : removed)
    add_point(p, "removed");
  return json{{"type", "FeatureCollection"}, {"features", features}}.dump();
}

} // namespace alp
