#pragma once

// Command-line front end: simulate, infer, benchmark, calibrate and replay.
// Every command writes manifest.json (atomically, before any result) holding
// the resolved configuration; `replay` re-runs a manifest.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "rtinfer/io.hpp"

namespace rtinfer::cli {

namespace fs = std::filesystem;
using io::json;

inline constexpr const char* kToolVersion = "rtinfer 0.1.0";

enum ExitCode : int { kOk = 0, kConfigError = 2, kRuntimeError = 3 };

/// Sub-seed labels so that commands sharing a seed use disjoint streams.
enum class SeedUse : std::uint64_t { kScenario = 11, kInfections = 12, kObservations = 13 };

inline std::uint64_t derive_seed(std::uint64_t seed, SeedUse use) {
  return make_stream(seed, static_cast<std::uint64_t>(use))();
}

// ---------------------------------------------------------------------------
// Configuration

inline const std::set<std::string> kSections{"seed",  "disease", "scenario",   "trajectory", "test", "observation",
                                             "prior", "svi",     "likelihood", "cori",       "benchmark"};

inline json section(const json& config, const std::string& key) {
  return config.contains(key) ? config.at(key) : json::object();
}

inline std::uint64_t config_seed(const json& config) {
  return io::optional<std::uint64_t>(config, "seed", "", 1);
}

inline DiseaseConfig disease_section(const json& config, bool required) {
  if (!config.contains("disease")) {
    if (required) throw ConfigError("required section is missing", "disease");
    return {};
  }
  return io::disease_from_json(config.at("disease"));
}

inline TestProfile test_section(const json& config) {
  return config.contains("test") ? io::profile_from_json(config.at("test")) : TestProfile::pcr();
}

inline json test_to_json(const json& config) {
  if (!config.contains("test")) return "pcr";
  const auto& t = config.at("test");
  return t.is_string() ? t : io::to_json(io::profile_from_json(t));
}

inline ObservationScheme observation_section(const json& config, const DiseaseConfig& disease) {
  if (!config.contains("observation")) throw ConfigError("required section is missing", "observation");
  return io::scheme_from_json(config.at("observation"), disease);
}

/// Ground truth for `simulate`: an explicit {"R": [...], "gamma": g} or a
/// generated scenario.
inline RtTrajectory truth_section(const json& config, const DiseaseConfig& disease, std::uint64_t seed,
                                  json& resolved) {
  if (config.contains("trajectory")) {
    if (config.contains("scenario")) throw ConfigError("give either trajectory or scenario, not both", "trajectory");
    const auto& j = config.at("trajectory");
    io::reject_unknown(j, {"R", "gamma"}, "trajectory");
    RtTrajectory rt{io::required<std::vector<double>>(j, "R", "trajectory"),
                    io::optional<double>(j, "gamma", "trajectory", 0.5)};
    if (static_cast<int>(rt.R.size()) != disease.horizon)
      throw ConfigError("has " + std::to_string(rt.R.size()) + " values, expected horizon " +
                            std::to_string(disease.horizon),
                        "trajectory.R");
    if (!(rt.gamma >= 0.0)) throw ConfigError("must be non-negative", "trajectory.gamma");
    resolved["trajectory"] = {{"R", rt.R}, {"gamma", rt.gamma}};
    return rt;
  }
  auto sc = io::scenario_from_json(section(config, "scenario"), disease.horizon);
  sc.rng_seed = derive_seed(seed, SeedUse::kScenario);
  resolved["scenario"] = io::to_json(sc);
  return generate_scenario(sc).truth;
}

inline GpKernelConfig prior_section(const json& config) { return io::kernel_from_json(section(config, "prior")); }
inline SviConfig svi_section(const json& config) { return io::svi_from_json(section(config, "svi")); }
inline LikelihoodOptions likelihood_section(const json& config) {
  return io::likelihood_from_json(section(config, "likelihood"));
}
inline CoriConfig cori_section(const json& config) { return io::cori_from_json(section(config, "cori")); }

/// Parses the shared sections a command does not use so that typos in them
/// are still reported.
inline void check_sections(const json& config) {
  io::reject_unknown(config, kSections, "");
  prior_section(config);
  svi_section(config);
  likelihood_section(config);
  cori_section(config);
}

/// The "benchmark" section: {"cells": [{"scenario", "test", "scheme",
/// "sample_fraction"}], "methods", "instances", "cadence",
/// "uniform_delay_pmf", "calibration_levels"}.
inline BenchmarkGrid grid_section(const json& config, std::uint64_t seed) {
  if (!config.contains("benchmark")) throw ConfigError("required section is missing", "benchmark");
  const auto& j = config.at("benchmark");
  const std::string where = "benchmark";
  io::reject_unknown(j, {"cells", "methods", "instances", "cadence", "uniform_delay_pmf", "calibration_levels"},
                     where);
  BenchmarkGrid g;
  g.seed = seed;
  g.disease = disease_section(config, false);
  g.scenario = io::scenario_from_json(section(config, "scenario"), g.disease.horizon);
  g.kernel = prior_section(config);
  g.svi = svi_section(config);
  g.cori = cori_section(config);
  g.likelihood = likelihood_section(config);
  g.methods = io::optional<std::vector<std::string>>(j, "methods", where, g.methods);
  g.instances = io::optional<int>(j, "instances", where, g.instances);
  g.cadence = io::optional<int>(j, "cadence", where, g.cadence);
  if (j.contains("uniform_delay_pmf"))
    g.uniform_delay = io::pmf_from_json(j["uniform_delay_pmf"], 1.0, "benchmark.uniform_delay_pmf");
  g.calibration_levels = io::optional<std::vector<double>>(j, "calibration_levels", where, g.calibration_levels);
  for (double level : g.calibration_levels)
    if (!(level > 0.0 && level < 1.0)) throw ConfigError("levels must lie in (0, 1)", "benchmark.calibration_levels");
  if (!j.contains("cells")) throw ConfigError("required field is missing", "benchmark.cells");
  if (!j["cells"].is_array()) throw ConfigError("must be an array", "benchmark.cells");
  for (std::size_t i = 0; i < j["cells"].size(); ++i) {
    const auto& c = j["cells"][i];
    const std::string w = "benchmark.cells[" + std::to_string(i) + "]";
    io::reject_unknown(c, {"scenario", "test", "scheme", "sample_fraction"}, w);
    BenchmarkCell cell;
    cell.scenario = scenario_kind_from_string(io::optional<std::string>(c, "scenario", w, "outbreak"));
    cell.test = io::optional<std::string>(c, "test", w, cell.test);
    builtin_profile(cell.test);
    cell.scheme = io::optional<std::string>(c, "scheme", w, cell.scheme);
    cell.sample_fraction = io::required<double>(c, "sample_fraction", w);
    try {
      make_scheme(cell.scheme, cell.sample_fraction, g.disease, g.cadence, g.uniform_delay).validate(g.disease);
    } catch (const ConfigError& e) {
      throw ConfigError(e.what(), w);
    }
    g.cells.push_back(cell);
  }
  g.validate();
  return g;
}

inline json grid_to_json(const BenchmarkGrid& g) {
  json cells = json::array();
  for (const auto& c : g.cells)
    cells.push_back({{"scenario", to_string(c.scenario)},
                     {"test", c.test},
                     {"scheme", c.scheme},
                     {"sample_fraction", c.sample_fraction}});
  return {{"cells", cells},
          {"methods", g.methods},
          {"instances", g.instances},
          {"cadence", g.cadence},
          {"uniform_delay_pmf", io::to_json(g.uniform_delay)},
          {"calibration_levels", g.calibration_levels}};
}

// ---------------------------------------------------------------------------
// Manifest

struct Manifest {
  std::string command;
  json config;  // resolved: every default filled in
  std::uint64_t seed = 1;
  std::map<std::string, std::string> inputs;
  std::vector<std::string> outputs;  // file names relative to the output directory

  json to_json() const {
    return {{"command", command},
            {"tool_version", kToolVersion},
            {"rng_seed", seed},
            {"config", config},
            {"inputs", inputs},
            {"outputs", outputs}};
  }

  static Manifest from_json(const json& j) {
    io::reject_unknown(j, {"command", "tool_version", "rng_seed", "config", "inputs", "outputs"}, "manifest");
    Manifest m;
    m.command = io::required<std::string>(j, "command", "manifest");
    m.config = j.contains("config") ? j.at("config") : json::object();
    m.seed = io::required<std::uint64_t>(j, "rng_seed", "manifest");
    m.inputs = io::optional<std::map<std::string, std::string>>(j, "inputs", "manifest", {});
    m.outputs = io::optional<std::vector<std::string>>(j, "outputs", "manifest", {});
    return m;
  }
};

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline void write_manifest(const fs::path& out, const Manifest& m) {
  io::write_atomic(out / "manifest.json", dump(m.to_json()));
}

inline std::string absolute_path(const std::string& p) { return fs::absolute(fs::path(p)).lexically_normal().string(); }

// ---------------------------------------------------------------------------
// Commands. Each takes the raw config, a seed and the output directory.

struct Context {
  fs::path out;
  int threads = 1;
  std::ostream* log = &std::cerr;
};

inline void cmd_simulate(const json& config, std::uint64_t seed, const Context& ctx) {
  check_sections(config);
  json resolved{{"seed", seed}};
  const auto disease = disease_section(config, true);
  resolved["disease"] = io::to_json(disease);
  const auto profile = test_section(config);
  resolved["test"] = test_to_json(config);
  const auto scheme = observation_section(config, disease);
  resolved["observation"] = io::to_json(scheme);
  const auto truth = truth_section(config, disease, seed, resolved);

  fs::create_directories(ctx.out);
  write_manifest(ctx.out, {"simulate", resolved, seed, {}, {"truth.csv", "infections.csv", "observations.csv"}});

  Rng sim_rng = make_stream(derive_seed(seed, SeedUse::kInfections));
  const auto n = simulate(truth, disease, sim_rng);
  Rng obs_rng = make_stream(derive_seed(seed, SeedUse::kObservations));
  const auto x = sample_observations(n, disease, scheme, profile, obs_rng);
  io::write_atomic(ctx.out / "truth.csv", io::series_csv(truth.R, "R"));
  io::write_atomic(ctx.out / "infections.csv", io::series_csv(n, "n"));
  io::write_atomic(ctx.out / "observations.csv", io::series_csv(x, "x"));
}

inline std::string elbo_csv(const PosteriorSummary& s) {
  std::ostringstream os;
  os << "iteration,elbo,elbo_smoothed\n";
  for (std::size_t i = 0; i < s.elbo_trace.size(); ++i)
    os << i + 1 << "," << io::format_double(s.elbo_trace[i]) << "," << io::format_double(s.elbo_smoothed[i]) << "\n";
  return os.str();
}

inline void cmd_infer(const json& config, std::uint64_t seed, const std::string& observations,
                      const std::string& resume, const Context& ctx) {
  check_sections(config);
  json resolved{{"seed", seed}};
  const auto disease = disease_section(config, true);
  resolved["disease"] = io::to_json(disease);
  const auto profile = test_section(config);
  resolved["test"] = test_to_json(config);
  const auto scheme = observation_section(config, disease);
  resolved["observation"] = io::to_json(scheme);
  const auto kernel = prior_section(config);
  resolved["prior"] = io::to_json(kernel);
  auto svi = svi_section(config);
  resolved["svi"] = io::to_json(svi);
  const auto likelihood = likelihood_section(config);
  resolved["likelihood"] = io::to_json(likelihood);
  svi.rng_seed = seed;

  const auto x = io::read_count_csv(observations);
  if (static_cast<int>(x.size()) != disease.horizon)
    throw ConfigError("observation series has " + std::to_string(x.size()) + " days, expected horizon " +
                          std::to_string(disease.horizon),
                      "observations");
  std::optional<FitCheckpoint> start;
  if (!resume.empty()) {
    start = io::checkpoint_from_json(io::read_json(resume));
    if (start->seed != seed) throw ConfigError("checkpoint was written with a different seed", "resume");
    if (start->iteration > svi.iterations)
      throw ConfigError("checkpoint is past the configured iteration count", "resume");
  }

  Manifest manifest{"infer", resolved, seed, {{"observations", absolute_path(observations)}},
                    {"posterior.csv", "importation.csv", "elbo_trace.csv", "checkpoint.json"}};
  if (!resume.empty()) manifest.inputs["resume"] = absolute_path(resume);
  fs::create_directories(ctx.out);
  write_manifest(ctx.out, manifest);

  const InferenceModel model(disease, profile, scheme, kernel, likelihood);
  const PriorWhitening whitening(model.prior);
  auto save = [&](const FitCheckpoint& cp) {
    io::write_atomic(ctx.out / "checkpoint.json", dump(io::to_json(cp, whitening.to_state(cp.params))));
  };
  FitResult result;
  try {
    result = fit(x, model, svi, ctx.threads, start ? &*start : nullptr, save);
  } catch (const FitDiverged& e) {
    save(e.last_checkpoint());
    throw;
  }
  const auto& s = result.summary;
  io::write_atomic(ctx.out / "posterior.csv", io::posterior_csv(posterior_from_summary(s)));
  io::write_atomic(ctx.out / "importation.csv", "mean_gamma,sd_gamma\n" + io::format_double(s.mean_gamma) + "," +
                                                    io::format_double(s.sd_gamma) + "\n");
  io::write_atomic(ctx.out / "elbo_trace.csv", elbo_csv(s));
  save(result.checkpoint);
}

inline std::string family_name(DayPosterior::Family f) {
  switch (f) {
    case DayPosterior::Family::kNormal: return "normal";
    case DayPosterior::Family::kGamma: return "gamma";
    default: return "none";
  }
}

inline std::string sanitize(std::string label) {
  for (auto& c : label)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '-') c = '_';
  return label;
}

inline std::string cell_file(std::size_t index, const BenchmarkCell& cell) {
  return "cell_" + std::to_string(index) + "_" + sanitize(cell.label()) + ".csv";
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c == '\n' ? ' ' : c);
  return out + "\"";
}

inline void cmd_benchmark(const json& config, std::uint64_t seed, const Context& ctx) {
  check_sections(config);
  const auto grid = grid_section(config, seed);
  json resolved{{"seed", seed},
                {"disease", io::to_json(grid.disease)},
                {"scenario", io::to_json(grid.scenario)},
                {"prior", io::to_json(grid.kernel)},
                {"svi", io::to_json(grid.svi)},
                {"cori", io::to_json(grid.cori)},
                {"likelihood", io::to_json(grid.likelihood)},
                {"benchmark", grid_to_json(grid)}};
  Manifest manifest{"benchmark", resolved, seed, {}, {"summary.csv", "posteriors.csv"}};
  for (std::size_t c = 0; c < grid.cells.size(); ++c) manifest.outputs.push_back(cell_file(c, grid.cells[c]));
  fs::create_directories(ctx.out);
  write_manifest(ctx.out, manifest);

  const auto result = run_benchmark(grid, ctx.threads, [&](const std::string& msg) { *ctx.log << msg << "\n"; });

  std::ostringstream summary, posteriors;
  summary << "cell,method,mae,mean_mae,sd_mae,evaluated,failures,flagged\n";
  posteriors << "cell,instance,method,day,truth,family,a,b\n";
  for (std::size_t c = 0; c < result.cells.size(); ++c) {
    const auto& cell = result.cells[c];
    const std::string label = cell.cell.label();
    std::ostringstream raw;
    raw << "instance,method,mae,failed,error\n";
    for (const auto& inst : cell.instances) {
      for (const auto& m : inst.methods) {
        raw << inst.instance << "," << m.method << "," << (m.mae ? io::format_double(*m.mae) : "NA") << ","
            << (m.failed ? 1 : 0) << "," << csv_field(m.error) << "\n";
        for (std::size_t t = 0; t < m.posterior.size(); ++t) {
          const auto& d = m.posterior[t];
          posteriors << label << "," << inst.instance << "," << m.method << "," << t + 1 << ","
                     << io::format_double(inst.truth[t]) << "," << family_name(d.family) << ","
                     << io::format_double(d.a) << "," << io::format_double(d.b) << "\n";
        }
      }
    }
    io::write_atomic(ctx.out / cell_file(c, cell.cell), raw.str());
    for (const auto& agg : cell.aggregates) {
      std::ostringstream cellfmt;
      cellfmt << std::fixed << std::setprecision(3) << agg.mean_mae << " ± " << agg.sd_mae;
      summary << label << "," << agg.method << "," << cellfmt.str() << "," << io::format_double(agg.mean_mae) << ","
              << io::format_double(agg.sd_mae) << "," << agg.evaluated << "," << agg.failures << ","
              << (agg.flagged ? 1 : 0) << "\n";
    }
  }
  io::write_atomic(ctx.out / "posteriors.csv", posteriors.str());
  io::write_atomic(ctx.out / "summary.csv", summary.str());
}

/// Parsed posteriors.csv: posteriors and truths keyed by (cell, method),
/// instances in file order.
struct StoredPosteriors {
  struct Series {
    std::vector<MethodPosterior> posteriors;
    std::vector<std::vector<double>> truths;
  };
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, Series> series;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') field += c, ++i;
      else if (c == '"') quoted = false;
      else field += c;
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(field);
      field.clear();
    } else {
      field += c;
    }
  }
  fields.push_back(field);
  return fields;
}

inline StoredPosteriors read_posteriors(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string(), "results");
  std::string line;
  std::getline(in, line);
  StoredPosteriors out;
  std::map<std::tuple<std::string, std::string, std::string>, std::size_t> instance_slot;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    auto fail = [&] { throw ConfigError("row " + std::to_string(row) + ": malformed", path.filename().string()); };
    if (f.size() != 8) fail();
    const auto key = std::make_pair(f[0], f[2]);
    auto [it, inserted] = out.series.try_emplace(key);
    if (inserted) out.order.push_back(key);
    auto [slot, fresh] = instance_slot.try_emplace({f[0], f[2], f[1]}, it->second.posteriors.size());
    if (fresh) {
      it->second.posteriors.emplace_back();
      it->second.truths.emplace_back();
    }
    DayPosterior d;
    try {
      if (f[5] == "normal") d = DayPosterior::normal(std::stod(f[6]), std::stod(f[7]));
      else if (f[5] == "gamma") d = DayPosterior::gamma(std::stod(f[6]), std::stod(f[7]));
      else if (f[5] != "none") fail();
      it->second.posteriors[slot->second].push_back(d);
      it->second.truths[slot->second].push_back(std::stod(f[4]));
    } catch (const std::logic_error&) {
      fail();
    }
  }
  return out;
}

inline void cmd_calibrate(const std::string& results, const std::vector<double>& levels, const Context& ctx) {
  for (double level : levels)
    if (!(level > 0.0 && level < 1.0)) throw ConfigError("levels must lie in (0, 1)", "levels");
  const auto stored = read_posteriors(fs::path(results) / "posteriors.csv");
  json resolved{{"levels", levels}};
  fs::create_directories(ctx.out);
  write_manifest(ctx.out, {"calibrate", resolved, 0, {{"results", absolute_path(results)}}, {"calibration.csv"}});
  std::ostringstream os;
  os << "cell,method,level,coverage\n";
  for (const auto& key : stored.order) {
    const auto& s = stored.series.at(key);
    const auto coverage = calibration_curve(s.posteriors, s.truths, levels);
    for (std::size_t i = 0; i < levels.size(); ++i)
      os << key.first << "," << key.second << "," << io::format_double(levels[i]) << ","
         << io::format_double(coverage[i]) << "\n";
  }
  io::write_atomic(ctx.out / "calibration.csv", os.str());
}

inline void replay(const std::string& manifest_path, const Context& ctx) {
  const auto m = Manifest::from_json(io::read_json(manifest_path));
  auto input = [&](const std::string& key) {
    auto it = m.inputs.find(key);
    return it == m.inputs.end() ? std::string() : it->second;
  };
  if (m.command == "simulate") cmd_simulate(m.config, m.seed, ctx);
  else if (m.command == "infer") cmd_infer(m.config, m.seed, input("observations"), input("resume"), ctx);
  else if (m.command == "benchmark") cmd_benchmark(m.config, m.seed, ctx);
  else if (m.command == "calibrate")
    cmd_calibrate(input("results"), io::required<std::vector<double>>(m.config, "levels", "manifest.config"), ctx);
  else throw ConfigError("unknown command '" + m.command + "'", "manifest.command");
}

// ---------------------------------------------------------------------------
// Entry point

inline int resolve_threads(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("RT_INFER_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) throw ConfigError("must be a positive integer", "RT_INFER_THREADS");
    return static_cast<int>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

inline int run(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Reproduction-number inference from surveillance test data"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  std::string config_path, out_dir, observations, resume, results, manifest_path;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::vector<double> levels{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95};

  auto common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", config_path, "JSON configuration file");
    if (needs_config) c->required();
    sub->add_option("--out", out_dir, "Output directory")->required();
    sub->add_option("--threads", threads, "Worker threads (default: RT_INFER_THREADS or all cores)")
        ->check(CLI::PositiveNumber);
  };
  auto* simulate_cmd = app.add_subcommand("simulate", "Simulate infections and observations");
  common(simulate_cmd, true);
  simulate_cmd->add_option("--seed", seed, "Overrides the config seed");
  auto* infer_cmd = app.add_subcommand("infer", "Fit the variational posterior to observations");
  common(infer_cmd, true);
  infer_cmd->add_option("--seed", seed, "Overrides the config seed");
  infer_cmd->add_option("--observations", observations, "CSV with columns day,x")->required();
  infer_cmd->add_option("--resume", resume, "Checkpoint to continue from");
  auto* bench_cmd = app.add_subcommand("benchmark", "Run the method comparison grid");
  common(bench_cmd, true);
  bench_cmd->add_option("--seed", seed, "Overrides the config seed");
  auto* cal_cmd = app.add_subcommand("calibrate", "Coverage of credible intervals from benchmark results");
  common(cal_cmd, false);
  cal_cmd->add_option("--results", results, "Benchmark output directory")->required();
  cal_cmd->add_option("--levels", levels, "Credible levels")->delimiter(',');
  auto* replay_cmd = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  replay_cmd->add_option("--manifest", manifest_path, "manifest.json to re-run")->required();
  replay_cmd->add_option("--out", out_dir, "Output directory")->required();
  replay_cmd->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kConfigError;
  }

  try {
    Context ctx{out_dir, resolve_threads(threads), &err};
    const json config = config_path.empty() ? json::object() : io::read_json(config_path);
    if (!config.is_object()) throw ConfigError("must be a JSON object", "config");
    const std::uint64_t s = seed ? *seed : config_seed(config);
    if (*simulate_cmd) cmd_simulate(config, s, ctx);
    else if (*infer_cmd) cmd_infer(config, s, observations, resume, ctx);
    else if (*bench_cmd) cmd_benchmark(config, s, ctx);
    else if (*cal_cmd) cmd_calibrate(results, levels, ctx);
    else replay(manifest_path, ctx);
    return kOk;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return run(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace rtinfer::cli
