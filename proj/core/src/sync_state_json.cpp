#include "alp/clocksync.hpp"
#include "alp/error.hpp"

#include <json.hpp>

#include <string>

namespace alp
{

using nlohmann::json;

namespace
{

json spline_to_json(const BSpline &s)
{
  return {{"degree", s.degree()}, {"knots", s.knots()}, {"coefficients", s.coefficients()}};
}

BSpline spline_from_json(const json &j)
{
  return BSpline(j.at("degree").get<int>(), j.at("knots").get<std::vector<double>>(),
                 j.at("coefficients").get<std::vector<double>>());
}

} // namespace

std::string sync_state_to_json(const SyncState &state)
{
  json doc;
  doc["atmosphere"] = {{"a0", state.atmosphere.a0}, {"b", state.atmosphere.b}};
  json per_sensor = json::object();
  for (const auto &[id, s] : state.noise.per_sensor_sigma_ns)
    per_sensor[std::to_string(id)] = s;
  doc["noise"] = {{"sigma_ns", state.noise.sigma_ns}, {"per_sensor_sigma_ns", per_sensor}};
  doc["rounds"] = state.rounds;

  json sensors = json::array();
  for (const auto &[id, s] : state.sensors)
  {
    json rw = json::array();
    for (const auto &seg : s.clock.rw)
      rw.push_back(spline_to_json(seg));
    sensors.push_back({
        {"id", id},
        {"status", to_string(s.status)},
        {"reason", s.reason},
        {"position", {s.position.x, s.position.y, s.position.z}},
        {"clock", {{"b0", s.clock.b0}, {"f0", s.clock.f0}, {"d", s.clock.d}, {"rw", rw}}},
        {"residual_median_s", s.residual_median_s},
        {"samples", s.samples},
    });
  }
  doc["sensors"] = std::move(sensors);
  return doc.dump(2);
}

SyncState sync_state_from_json(const std::string &text)
{
  try
  {
    const json doc = json::parse(text);
    SyncState state;
    state.atmosphere.a0 = doc.at("atmosphere").at("a0").get<double>();
    state.atmosphere.b = doc.at("atmosphere").at("b").get<double>();
    const auto &noise = doc.at("noise");
    state.noise.sigma_ns = noise.at("sigma_ns").get<double>();
    if (noise.contains("per_sensor_sigma_ns"))
      for (const auto &[key, value] : noise.at("per_sensor_sigma_ns").items())
        state.noise.per_sensor_sigma_ns[std::stoll(key)] = value.get<double>();
    state.rounds = doc.value("rounds", 0);

    for (const auto &js : doc.at("sensors"))
    {
      SensorSync s;
      const SensorId id = js.at("id").get<SensorId>();
      s.status = sync_status_from_string(js.at("status").get<std::string>());
      s.reason = js.value("reason", std::string{});
      const auto pos = js.at("position").get<std::vector<double>>();
      if (pos.size() != 3)
        throw ParseError("sensor " + std::to_string(id) + ": position must have 3 components");
      s.position = {pos[0], pos[1], pos[2]};
      const auto &clock = js.at("clock");
      s.clock.b0 = clock.at("b0").get<double>();
      s.clock.f0 = clock.at("f0").get<double>();
      s.clock.d = clock.value("d", 0.0);
      for (const auto &seg : clock.at("rw"))
        s.clock.rw.push_back(spline_from_json(seg));
      s.clock.validate();
      s.residual_median_s = js.value("residual_median_s", 0.0);
      s.samples = js.value("samples", std::size_t{0});
      if (!state.sensors.emplace(id, std::move(s)).second)
        throw ParseError("duplicate sensor " + std::to_string(id) + " in sync state");
    }
    validate(state.atmosphere);
    state.noise.validate();
    return state;
  }
  catch (const json::exception &e)
  {
    throw ParseError(std::string("malformed sync state: ") + e.what());
  }
}

} // namespace alp
