#include "alp/dataio.hpp"

#include "alp/error.hpp"
#include "csv.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace alp
{

namespace fs = std::filesystem;

bool is_gps_sensor_type(const std::string &type)
{
  std::string lower;
  std::transform(type.begin(), type.end(), std::back_inserter(lower),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return lower == "radarcape" || lower.find("gps") != std::string::npos;
}

SensorTable::SensorTable(std::vector<Sensor> sensors)
{
  for (auto &s : sensors)
    add(std::move(s));
}

void SensorTable::add(Sensor sensor)
{
  if (index_.count(sensor.id))
    throw IntegrityError("duplicate sensor id " + std::to_string(sensor.id));
  index_.emplace(sensor.id, sensors_.size());
  sensors_.push_back(std::move(sensor));
}

const Sensor *SensorTable::find(SensorId id) const
{
  const auto it = index_.find(id);
  return it == index_.end() ? nullptr : &sensors_[it->second];
}

const Sensor &SensorTable::at(SensorId id) const
{
  const auto *s = find(id);
  if (!s)
    throw IntegrityError("unknown sensor id " + std::to_string(id));
  return *s;
}

const Reception *MeasurementRecord::find(SensorId sensor) const
{
  for (const auto &r : receptions)
    if (r.sensor_id == sensor)
      return &r;
  return nullptr;
}

const MeasurementRecord *MeasurementSet::find(RecordId id) const
{
  for (const auto &r : records)
    if (r.id == id)
      return &r;
  return nullptr;
}

void MeasurementSet::sort_records()
{
  std::stable_sort(records.begin(), records.end(), [](const auto &a, const auto &b) {
    return a.server_time < b.server_time || (a.server_time == b.server_time && a.id < b.id);
  });
}

std::string format_double(double value)
{
  if (!std::isfinite(value))
    return {};
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  (void)ec;
  return std::string(buf, ptr);
}

void write_file_atomic(const fs::path &path, const std::string &content)
{
  const fs::path parent = path.has_parent_path() ? path.parent_path() : fs::path(".");
  if (!fs::is_directory(parent))
    throw ArgumentError("output directory '" + parent.string() + "' does not exist");
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw ArgumentError("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out)
      throw ArgumentError("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// sensors

SensorTable load_sensors(const fs::path &path)
{
  csv::Reader reader(csv::read_file(path.string()));
  csv::Row row;
  if (!reader.next(row))
    throw ParseError("empty sensor file '" + path.string() + "'");
  const csv::Header header(row, {"serial", "latitude", "longitude", "height", "type"});

  SensorTable table;
  while (reader.next(row))
  {
    if (row.fields.size() != header.width())
      throw ParseError("expected " + std::to_string(header.width()) + " fields, got " +
                           std::to_string(row.fields.size()),
                       row.line);
    Sensor s;
    s.id = csv::parse_int(row.fields[header["serial"]], row.line, "serial");
    s.position.latitude = csv::parse_double(row.fields[header["latitude"]], row.line, "latitude");
    s.position.longitude = csv::parse_double(row.fields[header["longitude"]], row.line, "longitude");
    s.position.altitude = csv::parse_double(row.fields[header["height"]], row.line, "height");
    s.type = row.fields[header["type"]];
    s.synchronized = is_gps_sensor_type(s.type);
    if (!is_valid(s.position))
      throw ParseError("sensor position out of range", row.line);
    table.add(std::move(s));
  }
  return table;
}

void write_sensors(const SensorTable &sensors, const fs::path &path)
{
  std::string out = "serial,latitude,longitude,height,type\n";
  for (const auto &s : sensors)
  {
    out += std::to_string(s.id);
    out += ',' + format_double(s.position.latitude);
    out += ',' + format_double(s.position.longitude);
    out += ',' + format_double(s.position.altitude);
    out += ',' + csv::quote(s.type);
    out += '\n';
  }
  write_file_atomic(path, out);
}

// ---------------------------------------------------------------------------
// measurements

namespace
{

std::int64_t json_to_ns(const nlohmann::json &v, std::size_t line)
{
  if (v.is_number_integer())
    return v.get<std::int64_t>();
  if (v.is_number_float())
  {
    const double d = v.get<double>();
    if (std::isfinite(d) && d == std::floor(d))
      return static_cast<std::int64_t>(d);
  }
  throw ParseError("timestamp must be an integer number of nanoseconds", line);
}

std::string format_receptions(const std::vector<Reception> &receptions)
{
  std::string out = "[";
  for (std::size_t i = 0; i < receptions.size(); ++i)
  {
    if (i)
      out += ',';
    out += '[' + std::to_string(receptions[i].sensor_id) + ',' + std::to_string(receptions[i].toa_ns) + ',' +
           format_double(receptions[i].rssi) + ']';
  }
  out += ']';
  return out;
}

std::string optional_field(const std::optional<double> &v) { return v ? format_double(*v) : std::string{}; }

} // namespace

MeasurementLoad load_measurements(const fs::path &path, const SensorTable &sensors)
{
  csv::Reader reader(csv::read_file(path.string()));
  csv::Row row;
  if (!reader.next(row))
    throw IntegrityError("measurement file '" + path.string() + "' is empty");
  const csv::Header header(row, {"id", "timeAtServer", "aircraft", "latitude", "longitude", "baroAltitude",
                                 "geoAltitude", "numMeasurements", "measurements"});

  MeasurementLoad load;
  std::set<RecordId> seen_ids;
  while (reader.next(row))
  {
    const std::size_t line = row.line;
    if (row.fields.size() != header.width())
      throw ParseError("expected " + std::to_string(header.width()) + " fields, got " +
                           std::to_string(row.fields.size()),
                       line);
    MeasurementRecord rec;
    rec.id = csv::parse_int(row.fields[header["id"]], line, "id");
    if (!seen_ids.insert(rec.id).second)
      throw IntegrityError("duplicate record id " + std::to_string(rec.id) + " at line " + std::to_string(line));
    rec.server_time = csv::parse_double(row.fields[header["timeAtServer"]], line, "timeAtServer");
    rec.aircraft_id = csv::parse_int(row.fields[header["aircraft"]], line, "aircraft");
    const auto lat = csv::parse_optional_double(row.fields[header["latitude"]], line, "latitude");
    const auto lon = csv::parse_optional_double(row.fields[header["longitude"]], line, "longitude");
    rec.baro_altitude = csv::parse_optional_double(row.fields[header["baroAltitude"]], line, "baroAltitude");
    const auto geo = csv::parse_optional_double(row.fields[header["geoAltitude"]], line, "geoAltitude");
    if (lat.has_value() != lon.has_value())
      throw ParseError("latitude and longitude must both be present or both be empty", line);
    if (lat)
    {
      GeodeticPosition truth{*lat, *lon, geo.value_or(rec.baro_altitude.value_or(0.0))};
      rec.geo_altitude_missing = !geo.has_value();
      if (!is_valid(truth))
        throw ParseError("truth position out of range", line);
      rec.truth = truth;
    }

    const auto declared = csv::parse_int(row.fields[header["numMeasurements"]], line, "numMeasurements");
    nlohmann::json arr;
    try
    {
      arr = nlohmann::json::parse(row.fields[header["measurements"]]);
    }
    catch (const nlohmann::json::exception &e)
    {
      throw ParseError(std::string("malformed measurements array: ") + e.what(), line);
    }
    if (!arr.is_array() || static_cast<std::int64_t>(arr.size()) != declared)
      throw ParseError("measurements array does not match numMeasurements", line);

    std::set<SensorId> in_record;
    for (const auto &item : arr)
    {
      if (!item.is_array() || item.size() != 3 || !item[0].is_number_integer() || !item[2].is_number())
        throw ParseError("measurement entries must be [sensorId, timestampNs, rssi]", line);
      Reception r;
      r.sensor_id = item[0].get<SensorId>();
      r.toa_ns = json_to_ns(item[1], line);
      r.rssi = item[2].get<double>();
      if (r.toa_ns < 0)
        throw ParseError("negative timestamp", line);
      if (!in_record.insert(r.sensor_id).second)
        throw ParseError("sensor " + std::to_string(r.sensor_id) + " appears twice in one record", line);
      if (!sensors.contains(r.sensor_id))
      {
        ++load.dropped_receptions;
        continue;
      }
      rec.receptions.push_back(r);
    }
    if (rec.receptions.empty())
    {
      ++load.dropped_records;
      continue;
    }
    load.set.records.push_back(std::move(rec));
  }
  load.set.sensors = sensors;
  load.set.sort_records();
  return load;
}

void write_measurements(const MeasurementSet &set, const fs::path &path)
{
  std::string out = "id,timeAtServer,aircraft,latitude,longitude,baroAltitude,geoAltitude,numMeasurements,measurements\n";
  for (const auto &rec : set.records)
  {
    out += std::to_string(rec.id);
    out += ',' + format_double(rec.server_time);
    out += ',' + std::to_string(rec.aircraft_id);
    if (rec.truth)
    {
      out += ',' + format_double(rec.truth->latitude);
      out += ',' + format_double(rec.truth->longitude);
    }
    else
    {
      out += ",,";
    }
    out += ',' + optional_field(rec.baro_altitude);
    out += ',';
    if (rec.truth && !rec.geo_altitude_missing)
      out += format_double(rec.truth->altitude);
    out += ',' + std::to_string(rec.receptions.size());
    out += ',' + csv::quote(format_receptions(rec.receptions));
    out += '\n';
  }
  write_file_atomic(path, out);
}

// ---------------------------------------------------------------------------
// masking and submissions

MaskResult mask_flights(const MeasurementSet &set, double fraction, std::uint64_t seed)
{
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ArgumentError("mask fraction must lie in (0, 1)");

  std::set<AircraftId> ids;
  for (const auto &r : set.records)
    ids.insert(r.aircraft_id);
  if (ids.empty())
    throw ArgumentError("mask_flights: no flights in measurement set");

  std::vector<AircraftId> flights(ids.begin(), ids.end());
  std::mt19937_64 rng(seed);
  // Fisher-Yates with explicit index draws so the choice depends only on the seed.
  for (std::size_t i = flights.size(); i > 1; --i)
  {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(flights[i - 1], flights[j]);
  }
  const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(flights.size())));
  std::set<AircraftId> chosen(flights.begin(), flights.begin() + static_cast<std::ptrdiff_t>(count));

  MaskResult result;
  result.masked.sensors = set.sensors;
  result.masked.records.reserve(set.records.size());
  for (const auto &r : set.records)
  {
    MeasurementRecord copy = r;
    if (chosen.count(r.aircraft_id) && copy.truth)
    {
      result.truth.entries.emplace(r.id, *copy.truth);
      copy.truth.reset();
    }
    result.masked.records.push_back(std::move(copy));
  }
  result.masked_aircraft.assign(chosen.begin(), chosen.end());
  return result;
}

std::vector<RecordId> maskable_records(const MeasurementSet &set)
{
  std::vector<RecordId> ids;
  for (const auto &r : set.records)
    if (!r.truth)
      ids.push_back(r.id);
  return ids;
}

void write_submission(const PredictionSet &preds, const MeasurementSet &masked, const fs::path &path)
{
  std::set<RecordId> targets;
  for (const auto &r : masked.records)
    if (!r.truth)
      targets.insert(r.id);
  for (const auto &[id, pos] : preds.entries)
    if (!targets.count(id))
      throw IntegrityError("prediction for record " + std::to_string(id) + " which is not a masked record");

  std::string out = "id,latitude,longitude,geoAltitude\n";
  for (RecordId id : targets)
  {
    out += std::to_string(id);
    const auto it = preds.entries.find(id);
    if (it != preds.entries.end() && std::isfinite(it->second.latitude) && std::isfinite(it->second.longitude))
    {
      out += ',' + format_double(it->second.latitude);
      out += ',' + format_double(it->second.longitude);
      out += ',' + format_double(it->second.altitude);
    }
    else
    {
      out += ",,,";
    }
    out += '\n';
  }
  write_file_atomic(path, out);
}

PredictionSet read_submission(const fs::path &path)
{
  csv::Reader reader(csv::read_file(path.string()));
  csv::Row row;
  if (!reader.next(row))
    throw ParseError("empty submission file '" + path.string() + "'");
  const csv::Header header(row, {"id", "latitude", "longitude", "geoAltitude"});

  PredictionSet preds;
  while (reader.next(row))
  {
    if (row.fields.size() != header.width())
      throw ParseError("expected " + std::to_string(header.width()) + " fields", row.line);
    const RecordId id = csv::parse_int(row.fields[header["id"]], row.line, "id");
    const auto lat = csv::parse_optional_double(row.fields[header["latitude"]], row.line, "latitude");
    const auto lon = csv::parse_optional_double(row.fields[header["longitude"]], row.line, "longitude");
    const auto alt = csv::parse_optional_double(row.fields[header["geoAltitude"]], row.line, "geoAltitude");
    if (lat.has_value() != lon.has_value())
      throw ParseError("latitude and longitude must both be present or both be empty", row.line);
    if (!lat)
      continue;
    if (!preds.entries.emplace(id, GeodeticPosition{*lat, *lon, alt.value_or(std::nan(""))}).second)
      throw IntegrityError("duplicate submission row for record " + std::to_string(id));
  }
  return preds;
}

} // namespace alp
