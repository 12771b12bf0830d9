#include "cli.hpp"

#include "alp/clocksync.hpp"
#include "alp/dataio.hpp"
#include "alp/error.hpp"
#include "alp/parallel.hpp"
#include "alp/pipeline.hpp"
#include "alp/scoring.hpp"
#include "alp/synth.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;

namespace alp::cli
{

namespace
{

std::string read_text(const fs::path &path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ArgumentError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int exit_code_for(ErrorKind kind)
{
  switch (kind)
  {
  case ErrorKind::argument:
    return exit_usage;
  case ErrorKind::invalid_coordinate:
  case ErrorKind::parse:
  case ErrorKind::integrity:
    return exit_data;
  case ErrorKind::numerical:
    return exit_numerical;
  }
  return exit_usage;
}

MeasurementSet load_set(const fs::path &sensors, const fs::path &measurements, std::ostream &err)
{
  const SensorTable table = load_sensors(sensors);
  auto load = load_measurements(measurements, table);
  if (load.dropped_receptions || load.dropped_records)
    err << "dropped " << load.dropped_receptions << " receptions from unknown sensors and " << load.dropped_records
        << " empty records\n";
  return std::move(load.set);
}

struct GenerateArgs
{
  fs::path out_dir;
  ScenarioConfig config;
};

struct MaskArgs
{
  fs::path sensors, measurements, out_measurements, out_truth;
  double fraction = 0.3;
  std::uint64_t seed = 1;
};

struct SyncArgs
{
  fs::path sensors, measurements, out;
  SyncOptions options;
};

struct LocalizeArgs
{
  fs::path sensors, measurements, sync, out, geojson_dir;
  std::string solver = "l1";
  LocalizeOptions options;
};

struct ScoreArgs
{
  fs::path sensors, measurements, submission, truth, out;
  std::string split = "full";
  std::string metric = "2d";
  ScoreConfig config;
};

} // namespace

int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err)
{
  CLI::App app{"Aircraft localization from crowdsourced time-of-arrival data", "alp"};
  app.set_config("--config", "", "INI/TOML file with option defaults; flags override it");
  app.require_subcommand(1);
  app.fallthrough();
  unsigned threads = default_thread_count();
  app.add_option("--threads", threads, "worker threads")->check(CLI::Range(1u, 1024u));

  GenerateArgs gen;
  auto *generate = app.add_subcommand("generate", "write a synthetic scenario");
  generate->add_option("--out", gen.out_dir, "existing output directory")->required();
  generate->add_option("--seed", gen.config.seed);
  generate->add_option("--sensors", gen.config.n_sensors);
  generate->add_option("--flights", gen.config.n_flights);
  generate->add_option("--gps-fraction", gen.config.gps_fraction);
  generate->add_option("--sigma-ns", gen.config.sigma_ns);
  generate->add_option("--duration", gen.config.duration_s, "seconds");
  generate->add_option("--flight-min", gen.config.flight_duration_min_s, "seconds");
  generate->add_option("--flight-max", gen.config.flight_duration_max_s, "seconds");
  generate->add_option("--range", gen.config.reception_range_m, "reception range, meters");
  generate->add_option("--b0-max", gen.config.b0_max_s, "seconds");
  generate->add_option("--f0-max", gen.config.f0_max);
  generate->add_option("--rw-amplitude", gen.config.rw_amplitude_s, "seconds");
  generate->add_option("--gps-offset-max", gen.config.gps_offset_max_s, "seconds");
  generate->add_option("--a0", gen.config.atmosphere.a0);
  generate->add_option("--b", gen.config.atmosphere.b);
  generate->add_option("--lat-min", gen.config.region.lat_min);
  generate->add_option("--lat-max", gen.config.region.lat_max);
  generate->add_option("--lon-min", gen.config.region.lon_min);
  generate->add_option("--lon-max", gen.config.region.lon_max);

  MaskArgs mask;
  auto *mask_cmd = app.add_subcommand("mask", "withhold truth for a fraction of flights");
  mask_cmd->add_option("--sensors", mask.sensors)->required()->check(CLI::ExistingFile);
  mask_cmd->add_option("--measurements", mask.measurements)->required()->check(CLI::ExistingFile);
  mask_cmd->add_option("--fraction", mask.fraction);
  mask_cmd->add_option("--seed", mask.seed);
  mask_cmd->add_option("--out", mask.out_measurements, "masked measurement file")->required();
  mask_cmd->add_option("--truth-out", mask.out_truth, "withheld truth, submission layout")->required();

  SyncArgs sync;
  auto *sync_cmd = app.add_subcommand("sync", "synchronize sensor clocks");
  sync_cmd->add_option("--sensors", sync.sensors)->required()->check(CLI::ExistingFile);
  sync_cmd->add_option("--measurements", sync.measurements)->required()->check(CLI::ExistingFile);
  sync_cmd->add_option("--out", sync.out, "sync state JSON")->required();
  sync_cmd->add_option("--core-size", sync.options.core_size);
  sync_cmd->add_option("--sigma-ns", sync.options.noise.sigma_ns);
  sync_cmd->add_option("--max-rounds", sync.options.propagation.max_rounds);
  sync_cmd->add_option("--knot-spacing", sync.options.propagation.knot_spacing_s, "seconds");
  sync_cmd->add_option("--exclusion-sigmas", sync.options.propagation.exclusion_sigmas);
  sync_cmd->add_option("--core-records", sync.options.core.max_records);

  LocalizeArgs loc;
  auto *loc_cmd = app.add_subcommand("localize", "solve masked records and write a submission");
  loc_cmd->add_option("--sensors", loc.sensors)->required()->check(CLI::ExistingFile);
  loc_cmd->add_option("--measurements", loc.measurements)->required()->check(CLI::ExistingFile);
  loc_cmd->add_option("--sync", loc.sync, "sync state JSON")->required()->check(CLI::ExistingFile);
  loc_cmd->add_option("--out", loc.out, "submission CSV")->required();
  loc_cmd->add_option("--solver", loc.solver)->check(CLI::IsMember({"ls", "l1"}));
  loc_cmd->add_option("--coverage", loc.options.coverage_target)->check(CLI::Range(1e-9, 1.0));
  loc_cmd->add_option("--keep-fraction", loc.options.keep_fraction);
  loc_cmd->add_option("--max-gap", loc.options.max_gap_s, "seconds");
  loc_cmd->add_option("--window", loc.options.reconstruct.window_s, "seconds");
  loc_cmd->add_option("--min-points", loc.options.reconstruct.min_points);
  loc_cmd->add_flag("--altitude-constraint", loc.options.altitude_constraint);
  loc_cmd->add_flag("!--no-post-process", loc.options.post_process, "submit raw solver output");
  loc_cmd->add_option("--geojson", loc.geojson_dir, "directory for per-track GeoJSON")->check(CLI::ExistingDirectory);

  ScoreArgs score;
  auto *score_cmd = app.add_subcommand("score", "score a submission against withheld truth");
  score_cmd->add_option("--sensors", score.sensors)->required()->check(CLI::ExistingFile);
  score_cmd->add_option("--measurements", score.measurements, "masked measurement file")->required()->check(CLI::ExistingFile);
  score_cmd->add_option("--submission", score.submission)->required()->check(CLI::ExistingFile);
  score_cmd->add_option("--truth", score.truth)->required()->check(CLI::ExistingFile);
  score_cmd->add_option("--out", score.out, "report JSON");
  score_cmd->add_option("--truncation", score.config.truncation);
  score_cmd->add_option("--min-coverage", score.config.min_coverage);
  score_cmd->add_option("--split", score.split)->check(CLI::IsMember({"public", "full"}));
  score_cmd->add_option("--split-fraction", score.config.split_fraction);
  score_cmd->add_option("--split-seed", score.config.split_seed);
  score_cmd->add_option("--metric", score.metric)->check(CLI::IsMember({"2d", "3d"}));

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try
  {
    app.parse(reversed);
  }
  catch (const CLI::ParseError &e)
  {
    std::ostringstream o, ee;
    const int code = app.exit(e, o, ee);
    out << o.str();
    err << ee.str();
    return code == 0 ? exit_success : exit_usage;
  }

  std::string stage = app.get_subcommands().front()->get_name();
  try
  {
    if (*generate)
    {
      const Scenario sc = generate_scenario(gen.config);
      write_scenario(sc, gen.out_dir);
      err << "generate: " << sc.set.sensors.size() << " sensors, " << sc.set.records.size() << " records\n";
    }
    else if (*mask_cmd)
    {
      const MeasurementSet set = load_set(mask.sensors, mask.measurements, err);
      const MaskResult m = mask_flights(set, mask.fraction, mask.seed);
      write_measurements(m.masked, mask.out_measurements);
      write_submission(m.truth, m.masked, mask.out_truth);
      err << "mask: withheld " << m.masked_aircraft.size() << " flights, " << m.truth.size() << " records\n";
    }
    else if (*sync_cmd)
    {
      const MeasurementSet set = load_set(sync.sensors, sync.measurements, err);
      sync.options.propagation.threads = threads;
      const SyncState state = synchronize(set, sync.options);
      write_file_atomic(sync.out, sync_state_to_json(state));
      err << "sync: " << state.count(SyncStatus::core) << " core, " << state.count(SyncStatus::drift)
          << " drift-synchronized, " << state.count(SyncStatus::excluded) << " excluded, "
          << state.count(SyncStatus::pending) << " pending after " << state.rounds << " rounds\n";
      for (const auto &[id, s] : state.sensors)
        if (s.status == SyncStatus::excluded)
          err << "sync: sensor " << id << " excluded: " << s.reason << '\n';
    }
    else if (*loc_cmd)
    {
      const MeasurementSet set = load_set(loc.sensors, loc.measurements, err);
      const SyncState state = sync_state_from_json(read_text(loc.sync));
      loc.options.solver = solver_from_string(loc.solver);
      loc.options.threads = threads;
      const LocalizeResult res = localize(set, state, loc.options);
      write_submission(res.predictions, set, loc.out);
      if (!loc.geojson_dir.empty())
        for (const auto &t : res.tracks)
          write_file_atomic(loc.geojson_dir / ("track_" + std::to_string(t.aircraft_id) + ".geojson"),
                            track_to_geojson(t));
      err << "localize: " << res.attempted << " fixes attempted, " << res.failed << " failed, "
          << res.underdetermined << " underdetermined; " << res.predictions.size() << " of " << res.maskable
          << " records predicted\n";
    }
    else if (*score_cmd)
    {
      const MeasurementSet set = load_set(score.sensors, score.measurements, err);
      const PredictionSet preds = read_submission(score.submission);
      const PredictionSet truth = read_submission(score.truth);
      score.config.split = split_from_string(score.split);
      score.config.metric = error_metric_from_string(score.metric);
      const ScoreReport report = evaluate(preds, truth, set, score.config);
      if (!score.out.empty())
        write_file_atomic(score.out, to_json(report) + "\n");
      out << to_text(report);
    }
  }
  catch (const Error &e)
  {
    err << stage << ": " << e.what() << '\n';
    return exit_code_for(e.kind());
  }
  catch (const std::exception &e)
  {
    err << stage << ": " << e.what() << '\n';
    return exit_data;
  }
  return exit_success;
}

} // namespace alp::cli
