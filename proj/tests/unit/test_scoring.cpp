#include "alp/error.hpp"
#include "alp/scoring.hpp"

#include <doctest.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <random>

using namespace alp;

namespace
{

struct Fixture
{
  MeasurementSet masked;
  PredictionSet truth;
};

Fixture make_fixture(int flights, int per_flight)
{
  Fixture f;
  RecordId id = 1;
  for (int a = 0; a < flights; ++a)
    for (int k = 0; k < per_flight; ++k)
    {
      MeasurementRecord r;
      r.id = id++;
      r.aircraft_id = 100 + a;
      r.server_time = 1.5e9 + k;
      r.receptions = {{1, 0, 0.0}};
      f.masked.records.push_back(r);
      f.truth.entries[r.id] = {46.0 + 0.01 * a, 7.0 + 0.001 * k, 9000.0};
    }
  return f;
}

GeodeticPosition shifted(const GeodeticPosition &p, double north_m)
{
  GeodeticPosition q = p;
  q.latitude += rad_to_deg(north_m / meridional_radius(p.latitude));
  return q;
}

} // namespace

TEST_CASE("truncated rmse")
{
  CHECK(truncated_rmse(std::vector<double>(10, 0.0), 0.9) == 0.0);

  std::vector<double> e{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  CHECK(truncated_rmse(e, 0.9) == doctest::Approx(std::sqrt(285.0 / 9.0)).epsilon(1e-14));
  CHECK(truncated_rmse(e, 0.9) == doctest::Approx(5.627).epsilon(1e-4));
  CHECK(truncated_rmse(e, 1.0) == doctest::Approx(std::sqrt(385.0 / 10.0)).epsilon(1e-14));
  CHECK(truncated_rmse(std::vector<double>{7.5}, 0.1) == 7.5);
  CHECK(truncated_rmse(std::vector<double>{3.0, 4.0}, 0.4) == 3.0);

  std::mt19937_64 rng(1);
  for (int k = 0; k < 20; ++k)
  {
    auto p = e;
    std::shuffle(p.begin(), p.end(), rng);
    CHECK(truncated_rmse(p, 0.9) == truncated_rmse(e, 0.9));
  }

  auto bigger = e;
  bigger[3] = 4.5;
  CHECK(truncated_rmse(bigger, 0.9) >= truncated_rmse(e, 0.9));

  CHECK_THROWS_AS(truncated_rmse(std::vector<double>{}, 0.9), ArgumentError);
  CHECK_THROWS_AS(truncated_rmse(e, 0.0), ArgumentError);
  CHECK_THROWS_AS(truncated_rmse(e, 1.1), ArgumentError);
}

TEST_CASE("coverage arithmetic")
{
  auto f = make_fixture(10, 10);
  CHECK(coverage(f.truth, f.masked) == 1.0);
  CHECK(coverage({}, f.masked) == 0.0);

  PredictionSet seventy;
  for (RecordId id = 1; id <= 70; ++id)
    seventy.entries[id] = f.truth.entries[id];
  CHECK(coverage(seventy, f.masked) == 0.7);
  const auto r = evaluate(seventy, f.truth, f.masked);
  CHECK(r.coverage == 0.7);
  CHECK(r.pass_coverage);
  CHECK(r.n_scored == 70);
  CHECK(r.n_maskable == 100);

  seventy.entries.erase(70);
  CHECK_FALSE(evaluate(seventy, f.truth, f.masked).pass_coverage);

  seventy.entries[5].latitude = std::nan("");
  CHECK(coverage(seventy, f.masked) == doctest::Approx(0.68));
}

TEST_CASE("evaluate")
{
  auto f = make_fixture(10, 10);

  SUBCASE("perfect predictions")
  {
    const auto r = evaluate(f.truth, f.truth, f.masked);
    CHECK(r.trmse_m == 0.0);
    CHECK(r.coverage == 1.0);
    CHECK(r.pass_coverage);
    CHECK(r.below_1000m);
  }
  SUBCASE("errors are horizontal by default")
  {
    PredictionSet preds = f.truth;
    for (auto &[id, p] : preds.entries)
      p.altitude += 500.0;
    CHECK(evaluate(preds, f.truth, f.masked).trmse_m < 1e-6);
    ScoreConfig c;
    c.metric = ErrorMetric::euclidean_3d;
    CHECK(evaluate(preds, f.truth, f.masked, c).trmse_m == doctest::Approx(500.0).epsilon(1e-6));
  }
  SUBCASE("a known northward shift")
  {
    PredictionSet preds = f.truth;
    for (auto &[id, p] : preds.entries)
      p = shifted(p, id <= 90 ? 100.0 : 10000.0);
    const auto r = evaluate(preds, f.truth, f.masked);
    CHECK(r.trmse_m == doctest::Approx(100.0).epsilon(1e-3));
    CHECK_FALSE(evaluate(PredictionSet{}, f.truth, f.masked).below_5000m);
    CHECK(std::isnan(evaluate(PredictionSet{}, f.truth, f.masked).trmse_m));
  }
  SUBCASE("integrity checks")
  {
    PredictionSet preds = f.truth;
    preds.entries[5000] = {47.0, 8.0, 0.0};
    CHECK_THROWS_AS(evaluate(preds, f.truth, f.masked), IntegrityError);

    PredictionSet partial_truth = f.truth;
    partial_truth.entries.erase(1);
    CHECK_THROWS_AS(evaluate(f.truth, partial_truth, f.masked), IntegrityError);
  }
  SUBCASE("public split is a fixed subset of flights")
  {
    const auto a = public_split_aircraft(f.masked, 0.3, 1);
    CHECK(a.size() == 3);
    CHECK(a == public_split_aircraft(f.masked, 0.3, 1));
    CHECK(a != public_split_aircraft(f.masked, 0.3, 2));
    ScoreConfig c;
    c.split = Split::public_split;
    const auto r = evaluate(f.truth, f.truth, f.masked, c);
    CHECK(r.n_maskable == 30);
    CHECK(r.split == Split::public_split);
  }
}

TEST_CASE("public and full scores agree on homogeneous noise")
{
  auto f = make_fixture(100, 30);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 50.0);
  PredictionSet preds = f.truth;
  for (auto &[id, p] : preds.entries)
    p = shifted(p, n(rng));
  ScoreConfig pub;
  pub.split = Split::public_split;
  const double full = evaluate(preds, f.truth, f.masked).trmse_m;
  const double part = evaluate(preds, f.truth, f.masked, pub).trmse_m;
  CHECK(std::abs(part - full) / full <= 0.10);
}

TEST_CASE("report serialization")
{
  auto f = make_fixture(2, 5);
  const auto r = evaluate(f.truth, f.truth, f.masked);
  const auto j = nlohmann::json::parse(to_json(r));
  for (const char *key : {"trmse_m", "coverage", "n_scored", "truncation", "split", "pass_coverage"})
    CHECK(j.contains(key));
  CHECK(j["split"] == "full");
  CHECK(j["n_scored"] == 10);
  CHECK(nlohmann::json::parse(to_json(evaluate({}, f.truth, f.masked)))["trmse_m"].is_null());
  CHECK(to_text(r).find("coverage") != std::string::npos);

  CHECK(split_from_string("public") == Split::public_split);
  CHECK(error_metric_from_string("3d") == ErrorMetric::euclidean_3d);
  CHECK_THROWS_AS(split_from_string("hidden"), ArgumentError);
}
