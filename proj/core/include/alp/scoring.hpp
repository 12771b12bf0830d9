#pragma once

#include "alp/dataio.hpp"

#include <cstdint>
#include <span>
#include <string>

namespace alp
{

enum class ErrorMetric
{
  ground_2d, // horizontal ground distance
  euclidean_3d,
};

enum class Split
{
  public_split,
  full,
};

const char *to_string(Split split);
Split split_from_string(const std::string &s);
const char *to_string(ErrorMetric metric);
ErrorMetric error_metric_from_string(const std::string &s);

// RMSE of the floor(truncation * N) smallest errors (at least one).
// Throws ArgumentError on an empty list or truncation outside (0, 1].
double truncated_rmse(std::span<const double> errors, double truncation);

// Share of maskable records with a finite prediction; 0 when nothing is maskable.
double coverage(const PredictionSet &preds, const MeasurementSet &masked);

struct ScoreConfig
{
  double truncation = 0.9;
  double min_coverage = 0.7;
  double split_fraction = 0.3;
  std::uint64_t split_seed = 1;
  Split split = Split::full;
  ErrorMetric metric = ErrorMetric::ground_2d;
};

struct ScoreReport
{
  double trmse_m = 0.0; // NaN when nothing was scored
  double coverage = 0.0;
  std::size_t n_scored = 0;
  std::size_t n_maskable = 0;
  double truncation = 0.9;
  Split split = Split::full;
  bool pass_coverage = false;
  double min_coverage = 0.7;
  bool below_1000m = false;
  bool below_5000m = false;
};

// Aircraft of the public split: round(split_fraction * flights) flights drawn
// deterministically from the seed.
std::vector<AircraftId> public_split_aircraft(const MeasurementSet &masked, double split_fraction, std::uint64_t seed);

// Scores predictions for the masked records against the withheld truth.
// Throws IntegrityError for a prediction on an unmasked record or a masked
// record without truth.
ScoreReport evaluate(const PredictionSet &preds, const PredictionSet &truth, const MeasurementSet &masked,
                     const ScoreConfig &config = {});

std::string to_json(const ScoreReport &report);
std::string to_text(const ScoreReport &report);

} // namespace alp
