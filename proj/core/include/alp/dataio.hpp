#pragma once

#include "alp/geo.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace alp
{

using SensorId = std::int64_t;
using RecordId = std::int64_t;
using AircraftId = std::int64_t;

struct Sensor
{
  SensorId id = 0;
  GeodeticPosition position;
  bool synchronized = false; // GPS-disciplined clock
  std::string type;

  bool operator==(const Sensor &) const = default;
};

// Sensor types treated as GPS-synchronized when reading a sensor file.
bool is_gps_sensor_type(const std::string &type);

class SensorTable
{
public:
  SensorTable() = default;
  explicit SensorTable(std::vector<Sensor> sensors);

  // Throws IntegrityError on a duplicate id.
  void add(Sensor sensor);

  const Sensor *find(SensorId id) const;
  const Sensor &at(SensorId id) const;
  bool contains(SensorId id) const { return index_.count(id) != 0; }

  std::size_t size() const { return sensors_.size(); }
  bool empty() const { return sensors_.empty(); }
  const std::vector<Sensor> &sensors() const { return sensors_; }
  auto begin() const { return sensors_.begin(); }
  auto end() const { return sensors_.end(); }

  bool operator==(const SensorTable &other) const { return sensors_ == other.sensors_; }

private:
  std::vector<Sensor> sensors_;
  std::unordered_map<SensorId, std::size_t> index_;
};

struct Reception
{
  SensorId sensor_id = 0;
  std::int64_t toa_ns = 0;
  double rssi = 0.0;

  bool operator==(const Reception &) const = default;
};

struct MeasurementRecord
{
  RecordId id = 0;
  AircraftId aircraft_id = 0;
  double server_time = 0.0; // Unix seconds
  std::optional<GeodeticPosition> truth;
  // Set when the source row had latitude/longitude but no geometric altitude;
  // truth->altitude then holds the barometric fallback (or 0).
  bool geo_altitude_missing = false;
  std::optional<double> baro_altitude;
  std::vector<Reception> receptions;

  const Reception *find(SensorId sensor) const;
  bool operator==(const MeasurementRecord &) const = default;
};

struct MeasurementSet
{
  std::vector<MeasurementRecord> records; // sorted by (server_time, id)
  SensorTable sensors;

  const MeasurementRecord *find(RecordId id) const;
  void sort_records();
  bool operator==(const MeasurementSet &) const = default;
};

// Record id -> predicted position. Absence means no prediction.
struct PredictionSet
{
  std::map<RecordId, GeodeticPosition> entries;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
  bool operator==(const PredictionSet &) const = default;
};

struct MeasurementLoad
{
  MeasurementSet set;
  std::size_t dropped_receptions = 0; // receptions naming unknown sensors
  std::size_t dropped_records = 0;    // records left with no receptions
};

struct MaskResult
{
  MeasurementSet masked;
  PredictionSet truth;
  std::vector<AircraftId> masked_aircraft;
};

// Sensor file: serial, latitude, longitude, height, type.
SensorTable load_sensors(const std::filesystem::path &path);
void write_sensors(const SensorTable &sensors, const std::filesystem::path &path);

// Measurement file: id, timeAtServer, aircraft, latitude, longitude,
// baroAltitude, geoAltitude, numMeasurements, measurements.
MeasurementLoad load_measurements(const std::filesystem::path &path, const SensorTable &sensors);
void write_measurements(const MeasurementSet &set, const std::filesystem::path &path);

// Withholds truth for round(fraction * flights) whole flights chosen by seed.
MaskResult mask_flights(const MeasurementSet &set, double fraction, std::uint64_t seed);

// Records of `set` whose truth is absent, i.e. the ones a submission covers.
std::vector<RecordId> maskable_records(const MeasurementSet &set);

// Submission file: id, latitude, longitude, geoAltitude; one row per masked
// record, empty fields where no prediction exists.
void write_submission(const PredictionSet &preds, const MeasurementSet &masked, const std::filesystem::path &path);
PredictionSet read_submission(const std::filesystem::path &path);

// Writes through a temporary sibling and renames it into place. Throws
// ArgumentError when the parent directory does not exist.
void write_file_atomic(const std::filesystem::path &path, const std::string &content);

// Shortest representation that parses back to the same double.
std::string format_double(double value);

} // namespace alp
