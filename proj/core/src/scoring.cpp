#include "alp/scoring.hpp"

#include "alp/error.hpp"
#include "alp/geo.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

namespace alp
{

const char *to_string(Split split) { return split == Split::full ? "full" : "public"; }

Split split_from_string(const std::string &s)
{
  if (s == "full")
    return Split::full;
  if (s == "public")
    return Split::public_split;
  throw ArgumentError("unknown split '" + s + "' (expected public or full)");
}

const char *to_string(ErrorMetric metric) { return metric == ErrorMetric::ground_2d ? "2d" : "3d"; }

ErrorMetric error_metric_from_string(const std::string &s)
{
  if (s == "2d")
    return ErrorMetric::ground_2d;
  if (s == "3d")
    return ErrorMetric::euclidean_3d;
  throw ArgumentError("unknown error metric '" + s + "' (expected 2d or 3d)");
}

double truncated_rmse(std::span<const double> errors, double truncation)
{
  if (errors.empty())
    throw ArgumentError("truncated_rmse of an empty error list");
  if (!(truncation > 0.0 && truncation <= 1.0))
    throw ArgumentError("truncation must lie in (0, 1]");
  std::vector<double> sorted(errors.begin(), errors.end());
  std::sort(sorted.begin(), sorted.end());
  const auto keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(truncation * static_cast<double>(sorted.size()) + 1e-9)));
  double ss = 0.0;
  for (std::size_t i = 0; i < keep; ++i)
    ss += sorted[i] * sorted[i];
  return std::sqrt(ss / static_cast<double>(keep));
}

namespace
{

bool finite(const GeodeticPosition &p)
{
  return std::isfinite(p.latitude) && std::isfinite(p.longitude);
}

} // namespace

double coverage(const PredictionSet &preds, const MeasurementSet &masked)
{
  const auto ids = maskable_records(masked);
  if (ids.empty())
    return 0.0;
  std::size_t hit = 0;
  for (RecordId id : ids)
  {
    const auto it = preds.entries.find(id);
    hit += it != preds.entries.end() && finite(it->second) ? 1 : 0;
  }
  return static_cast<double>(hit) / static_cast<double>(ids.size());
}

std::vector<AircraftId> public_split_aircraft(const MeasurementSet &masked, double split_fraction, std::uint64_t seed)
{
  if (!(split_fraction > 0.0 && split_fraction <= 1.0))
    throw ArgumentError("split fraction must lie in (0, 1]");
  std::set<AircraftId> flights;
  for (const auto &rec : masked.records)
    if (!rec.truth)
      flights.insert(rec.aircraft_id);
  std::vector<AircraftId> ids(flights.begin(), flights.end());
  std::mt19937_64 rng(seed);
  for (std::size_t i = ids.size(); i > 1; --i)
  {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(ids[i - 1], ids[pick(rng)]);
  }
  const auto k = static_cast<std::size_t>(std::llround(split_fraction * static_cast<double>(ids.size())));
  ids.resize(std::min(k, ids.size()));
  std::sort(ids.begin(), ids.end());
  return ids;
}

ScoreReport evaluate(const PredictionSet &preds, const PredictionSet &truth, const MeasurementSet &masked,
                     const ScoreConfig &config)
{
  if (!(config.truncation > 0.0 && config.truncation <= 1.0))
    throw ArgumentError("truncation must lie in (0, 1]");
  if (!(config.min_coverage >= 0.0 && config.min_coverage <= 1.0))
    throw ArgumentError("min_coverage must lie in [0, 1]");

  std::map<RecordId, AircraftId> maskable;
  for (const auto &rec : masked.records)
    if (!rec.truth)
      maskable.emplace(rec.id, rec.aircraft_id);
  for (const auto &[id, p] : preds.entries)
    if (!maskable.count(id))
      throw IntegrityError("prediction for record " + std::to_string(id) + " which is not a masked record");

  std::set<AircraftId> selected;
  if (config.split == Split::public_split)
  {
    const auto ids = public_split_aircraft(masked, config.split_fraction, config.split_seed);
    selected.insert(ids.begin(), ids.end());
  }

  ScoreReport report;
  report.truncation = config.truncation;
  report.split = config.split;
  report.min_coverage = config.min_coverage;

  std::vector<double> errors;
  std::size_t predicted = 0;
  for (const auto &[id, aircraft] : maskable)
  {
    if (config.split == Split::public_split && !selected.count(aircraft))
      continue;
    ++report.n_maskable;
    const auto t = truth.entries.find(id);
    if (t == truth.entries.end())
      throw IntegrityError("no withheld truth for masked record " + std::to_string(id));
    const auto p = preds.entries.find(id);
    if (p == preds.entries.end() || !finite(p->second))
      continue;
    ++predicted;
    double e = 0.0;
    if (config.metric == ErrorMetric::ground_2d)
    {
      e = ground_distance(p->second, t->second);
    }
    else
    {
      GeodeticPosition pred = p->second;
      if (!std::isfinite(pred.altitude))
        pred.altitude = 0.0;
      e = distance(geodetic_to_ecef_unchecked(pred), geodetic_to_ecef_unchecked(t->second));
    }
    errors.push_back(e);
  }

  report.n_scored = errors.size();
  report.coverage = report.n_maskable ? static_cast<double>(predicted) / static_cast<double>(report.n_maskable) : 0.0;
  report.pass_coverage = report.n_maskable > 0 && report.coverage >= config.min_coverage - 1e-12;
  report.trmse_m = errors.empty() ? std::numeric_limits<double>::quiet_NaN() : truncated_rmse(errors, config.truncation);
  report.below_1000m = !errors.empty() && report.trmse_m < 1000.0;
  report.below_5000m = !errors.empty() && report.trmse_m < 5000.0;
  return report;
}

std::string to_json(const ScoreReport &report)
{
  nlohmann::json j;
  j["trmse_m"] = std::isfinite(report.trmse_m) ? nlohmann::json(report.trmse_m) : nlohmann::json(nullptr);
  j["coverage"] = report.coverage;
  j["n_scored"] = report.n_scored;
  j["truncation"] = report.truncation;
  j["split"] = to_string(report.split);
  j["pass_coverage"] = report.pass_coverage;
  return j.dump(2);
}

std::string to_text(const ScoreReport &report)
{
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << "split:         " << to_string(report.split) << '\n';
  os << "TRMSE (" << static_cast<int>(std::lround(report.truncation * 100)) << "%):  ";
  if (std::isfinite(report.trmse_m))
    os << report.trmse_m << " m\n";
  else
    os << "n/a\n";
  os << "coverage:      " << report.coverage * 100.0 << "% (" << report.n_scored << " of " << report.n_maskable
     << " records)\n";
  os << "min coverage:  " << report.min_coverage * 100.0 << "% -> " << (report.pass_coverage ? "pass" : "FAIL") << '\n';
  os << "below 1000 m:  " << (report.below_1000m ? "yes" : "no") << '\n';
  os << "below 5000 m:  " << (report.below_5000m ? "yes" : "no") << '\n';
  return os.str();
}

} // namespace alp
