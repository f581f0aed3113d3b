#pragma once

// JSON (de)serialization of configurations, states and checkpoints, and the
// CSV formats used for series and posterior summaries.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rtinfer/baseline_cori.hpp"
#include "rtinfer/disease_model.hpp"
#include "rtinfer/error.hpp"
#include "rtinfer/gp_prior.hpp"
#include "rtinfer/observation.hpp"
#include "rtinfer/scenarios_eval.hpp"
#include "rtinfer/svi_engine.hpp"
#include "rtinfer/test_profile.hpp"

namespace rtinfer::io {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Checked field access

/// Rejects keys of `object` outside `allowed`.
inline void reject_unknown(const json& object, const std::set<std::string>& allowed, const std::string& where) {
  if (!object.is_object()) throw ConfigError("must be a JSON object", where);
  for (const auto& [key, value] : object.items())
    if (!allowed.count(key)) throw ConfigError("unknown key", where.empty() ? key : where + "." + key);
}

inline std::string path_of(const std::string& where, const std::string& key) {
  return where.empty() ? key : where + "." + key;
}

template <class T>
T required(const json& object, const std::string& key, const std::string& where) {
  if (!object.contains(key)) throw ConfigError("required field is missing", path_of(where, key));
  try {
    return object.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("has the wrong type", path_of(where, key));
  }
}

template <class T>
T optional(const json& object, const std::string& key, const std::string& where, T fallback) {
  if (!object.contains(key)) return fallback;
  return required<T>(object, key, where);
}

// ---------------------------------------------------------------------------
// Disease model

inline DiseaseConfig disease_from_json(const json& j, const std::string& where = "disease") {
  reject_unknown(j, {"population_size", "horizon", "initial_infected", "infectiousness_weights",
                     "importation_prior_mean"},
                 where);
  DiseaseConfig c;
  c.population_size = required<int>(j, "population_size", where);
  c.horizon = required<int>(j, "horizon", where);
  c.initial_infected = optional<int>(j, "initial_infected", where, c.initial_infected);
  c.importation_prior_mean = optional<double>(j, "importation_prior_mean", where, c.importation_prior_mean);
  if (j.contains("infectiousness_weights")) {
    try {
      c.profile = InfectiousnessProfile(required<std::vector<double>>(j, "infectiousness_weights", where));
    } catch (const ConfigError& e) {
      throw ConfigError(e.what(), path_of(where, "infectiousness_weights"));
    }
  }
  c.validate();
  return c;
}

inline json to_json(const DiseaseConfig& c) {
  return {{"population_size", c.population_size},
          {"horizon", c.horizon},
          {"initial_infected", c.initial_infected},
          {"infectiousness_weights", c.profile.weights()},
          {"importation_prior_mean", c.importation_prior_mean}};
}

// ---------------------------------------------------------------------------
// Test profiles

inline DiscretePmf pmf_from_json(const json& j, double total, const std::string& where) {
  std::vector<std::pair<int, double>> entries;
  if (!j.is_array()) throw ConfigError("must be an array of [value, probability] pairs", where);
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number())
      throw ConfigError("entries must be [integer, probability] pairs", where);
    entries.emplace_back(e[0].get<int>(), e[1].get<double>());
  }
  return DiscretePmf(std::move(entries), total, where);
}

inline json to_json(const DiscretePmf& pmf) {
  json out = json::array();
  for (const auto& [v, p] : pmf.entries()) out.push_back({v, p});
  return out;
}

/// Either a builtin name ("pcr", "serological") or an explicit profile
/// {"convert_pmf": [[offset, p], ...], "never_convert_prob": p,
///  "duration_pmf": [[days, p], ...]}.
inline TestProfile profile_from_json(const json& j, const std::string& where = "test") {
  if (j.is_string()) return builtin_profile(j.get<std::string>());
  reject_unknown(j, {"convert_pmf", "never_convert_prob", "duration_pmf"}, where);
  const double never = optional<double>(j, "never_convert_prob", where, 0.0);
  if (!j.contains("convert_pmf")) throw ConfigError("required field is missing", path_of(where, "convert_pmf"));
  if (!j.contains("duration_pmf")) throw ConfigError("required field is missing", path_of(where, "duration_pmf"));
  return TestProfile(pmf_from_json(j["convert_pmf"], 1.0 - never, path_of(where, "convert_pmf")), never,
                     pmf_from_json(j["duration_pmf"], 1.0, path_of(where, "duration_pmf")));
}

inline json to_json(const TestProfile& p) {
  return {{"convert_pmf", to_json(p.convert_pmf())},
          {"never_convert_prob", p.never_convert_prob()},
          {"duration_pmf", to_json(p.duration_pmf())}};
}

// ---------------------------------------------------------------------------
// Observation schemes (tagged by "kind")

/// `sample_sizes` may be replaced by `sample_fraction` (of the population;
/// per day for cross-sectional, in total across cohorts for longitudinal).
inline ObservationScheme scheme_from_json(const json& j, const DiseaseConfig& disease,
                                          const std::string& where = "observation") {
  const auto kind = required<std::string>(j, "kind", where);
  ObservationScheme scheme;
  if (kind == "uniform") {
    reject_unknown(j, {"kind", "p_test", "delay_pmf"}, where);
    UniformUndersampling u;
    u.p_test = required<double>(j, "p_test", where);
    if (j.contains("delay_pmf")) u.delay = pmf_from_json(j["delay_pmf"], 1.0, path_of(where, "delay_pmf"));
    scheme.kind = u;
  } else if (kind == "cross_sectional") {
    reject_unknown(j, {"kind", "sample_sizes", "sample_fraction", "false_positive_rate"}, where);
    if (j.contains("sample_fraction")) {
      scheme = make_scheme(kind, required<double>(j, "sample_fraction", where), disease, 1, DiscretePmf::point(0));
    } else {
      scheme.kind = CrossSectional{required<std::vector<int>>(j, "sample_sizes", where)};
    }
    scheme.false_positive_rate = optional<double>(j, "false_positive_rate", where, 0.0);
  } else if (kind == "longitudinal") {
    reject_unknown(j, {"kind", "sample_sizes", "sample_fraction", "cadence"}, where);
    const int cadence = optional<int>(j, "cadence", where, 14);
    if (cadence < 1) throw ConfigError("must be at least 1", path_of(where, "cadence"));
    if (j.contains("sample_fraction")) {
      scheme = make_scheme(kind, required<double>(j, "sample_fraction", where), disease, cadence,
                           DiscretePmf::point(0));
    } else {
      scheme.kind = Longitudinal{required<std::vector<int>>(j, "sample_sizes", where), cadence};
    }
  } else {
    throw ConfigError("unknown kind '" + kind + "' (expected uniform, cross_sectional or longitudinal)",
                      path_of(where, "kind"));
  }
  scheme.validate(disease);
  return scheme;
}

inline json to_json(const ObservationScheme& scheme) {
  json out;
  if (const auto* u = std::get_if<UniformUndersampling>(&scheme.kind)) {
    out = {{"kind", "uniform"}, {"p_test", u->p_test}, {"delay_pmf", to_json(u->delay)}};
  } else if (const auto* c = std::get_if<CrossSectional>(&scheme.kind)) {
    out = {{"kind", "cross_sectional"},
           {"sample_sizes", c->sample_sizes},
           {"false_positive_rate", scheme.false_positive_rate}};
  } else {
    const auto& l = std::get<Longitudinal>(scheme.kind);
    out = {{"kind", "longitudinal"}, {"sample_sizes", l.cohort_sizes}, {"cadence", l.cadence}};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prior, SVI, Cori, likelihood, scenario

inline GpKernelConfig kernel_from_json(const json& j, const std::string& where = "prior") {
  reject_unknown(j, {"kernel", "lengthscale", "amplitude", "jitter"}, where);
  GpKernelConfig k;
  if (optional<std::string>(j, "kernel", where, "squared_exponential") != "squared_exponential")
    throw ConfigError("only squared_exponential is supported", path_of(where, "kernel"));
  k.lengthscale = optional<double>(j, "lengthscale", where, k.lengthscale);
  k.amplitude = optional<double>(j, "amplitude", where, k.amplitude);
  k.jitter = optional<double>(j, "jitter", where, k.jitter);
  k.validate();
  return k;
}

inline json to_json(const GpKernelConfig& k) {
  return {{"kernel", "squared_exponential"},
          {"lengthscale", k.lengthscale},
          {"amplitude", k.amplitude},
          {"jitter", k.jitter}};
}

inline SviConfig svi_from_json(const json& j, const std::string& where = "svi") {
  reject_unknown(j,
                 {"batch_size", "iterations", "learning_rate", "factor_learning_rate_scale", "adam_betas",
                  "adam_epsilon", "warmup_iterations", "elbo_eval_samples", "smoothing_window", "checkpoint_every"},
                 where);
  SviConfig c;
  c.batch_size = optional<int>(j, "batch_size", where, c.batch_size);
  c.iterations = optional<int>(j, "iterations", where, c.iterations);
  c.learning_rate = optional<double>(j, "learning_rate", where, c.learning_rate);
  c.factor_lr_scale = optional<double>(j, "factor_learning_rate_scale", where, c.factor_lr_scale);
  if (j.contains("adam_betas")) {
    const auto betas = required<std::vector<double>>(j, "adam_betas", where);
    if (betas.size() != 2) throw ConfigError("must hold two values", path_of(where, "adam_betas"));
    c.beta1 = betas[0];
    c.beta2 = betas[1];
  }
  c.adam_epsilon = optional<double>(j, "adam_epsilon", where, c.adam_epsilon);
  c.warmup_iterations = optional<int>(j, "warmup_iterations", where, c.warmup_iterations);
  c.elbo_eval_samples = optional<int>(j, "elbo_eval_samples", where, c.elbo_eval_samples);
  c.smoothing_window = optional<int>(j, "smoothing_window", where, c.smoothing_window);
  c.checkpoint_every = optional<int>(j, "checkpoint_every", where, c.checkpoint_every);
  c.validate();
  return c;
}

inline json to_json(const SviConfig& c) {
  return {{"batch_size", c.batch_size},
          {"iterations", c.iterations},
          {"learning_rate", c.learning_rate},
          {"factor_learning_rate_scale", c.factor_lr_scale},
          {"adam_betas", {c.beta1, c.beta2}},
          {"adam_epsilon", c.adam_epsilon},
          {"warmup_iterations", c.warmup_iterations},
          {"elbo_eval_samples", c.elbo_eval_samples},
          {"smoothing_window", c.smoothing_window},
          {"checkpoint_every", c.checkpoint_every}};
}

inline CoriConfig cori_from_json(const json& j, const std::string& where = "cori") {
  reject_unknown(j, {"window", "prior_shape", "prior_scale", "mean_delay_shift"}, where);
  CoriConfig c;
  c.window = optional<int>(j, "window", where, c.window);
  c.prior_shape = optional<double>(j, "prior_shape", where, c.prior_shape);
  c.prior_scale = optional<double>(j, "prior_scale", where, c.prior_scale);
  c.mean_delay_shift = optional<int>(j, "mean_delay_shift", where, c.mean_delay_shift);
  c.validate();
  return c;
}

inline json to_json(const CoriConfig& c) {
  return {{"window", c.window},
          {"prior_shape", c.prior_shape},
          {"prior_scale", c.prior_scale},
          {"mean_delay_shift", c.mean_delay_shift}};
}

/// {"floor": -50} or {"floor": null} to disable the per-day floor.
inline LikelihoodOptions likelihood_from_json(const json& j, const std::string& where = "likelihood") {
  reject_unknown(j, {"floor"}, where);
  LikelihoodOptions opts;
  if (j.contains("floor")) {
    if (j["floor"].is_null()) return LikelihoodOptions::unfloored();
    opts.floor = required<double>(j, "floor", where);
  }
  return opts;
}

inline json to_json(const LikelihoodOptions& o) {
  return {{"floor", std::isfinite(o.floor) ? json(o.floor) : json(nullptr)}};
}

inline ScenarioConfig scenario_from_json(const json& j, int horizon, const std::string& where = "scenario") {
  reject_unknown(j, {"kind", "importation_rate", "outbreak", "trend"}, where);
  ScenarioConfig c;
  c.horizon = horizon;
  c.kind = scenario_kind_from_string(optional<std::string>(j, "kind", where, "outbreak"));
  c.importation_rate = optional<double>(j, "importation_rate", where, c.importation_rate);
  if (j.contains("outbreak")) {
    const auto& o = j["outbreak"];
    const std::string w = path_of(where, "outbreak");
    reject_unknown(o, {"r_low", "r_high", "changepoint_fraction", "transition_width"}, w);
    auto range = [&](const char* key, double& lo, double& hi) {
      if (!o.contains(key)) return;
      const auto v = required<std::vector<double>>(o, key, w);
      if (v.size() != 2) throw ConfigError("must be [min, max]", path_of(w, key));
      lo = v[0];
      hi = v[1];
    };
    range("r_low", c.outbreak.r_low_min, c.outbreak.r_low_max);
    range("r_high", c.outbreak.r_high_min, c.outbreak.r_high_max);
    range("changepoint_fraction", c.outbreak.changepoint_min_fraction, c.outbreak.changepoint_max_fraction);
    c.outbreak.transition_width = optional<double>(o, "transition_width", w, c.outbreak.transition_width);
  }
  if (j.contains("trend")) {
    const auto& t = j["trend"];
    const std::string w = path_of(where, "trend");
    reject_unknown(t, {"min_changes", "max_changes", "max_slope", "start", "clamp"}, w);
    c.trend.min_changes = optional<int>(t, "min_changes", w, c.trend.min_changes);
    c.trend.max_changes = optional<int>(t, "max_changes", w, c.trend.max_changes);
    c.trend.max_slope = optional<double>(t, "max_slope", w, c.trend.max_slope);
    auto range = [&](const char* key, double& lo, double& hi) {
      if (!t.contains(key)) return;
      const auto v = required<std::vector<double>>(t, key, w);
      if (v.size() != 2) throw ConfigError("must be [min, max]", path_of(w, key));
      lo = v[0];
      hi = v[1];
    };
    range("start", c.trend.start_min, c.trend.start_max);
    range("clamp", c.trend.r_min, c.trend.r_max);
  }
  c.validate();
  return c;
}

inline json to_json(const ScenarioConfig& c) {
  return {{"kind", to_string(c.kind)},
          {"importation_rate", c.importation_rate},
          {"outbreak",
           {{"r_low", {c.outbreak.r_low_min, c.outbreak.r_low_max}},
            {"r_high", {c.outbreak.r_high_min, c.outbreak.r_high_max}},
            {"changepoint_fraction", {c.outbreak.changepoint_min_fraction, c.outbreak.changepoint_max_fraction}},
            {"transition_width", c.outbreak.transition_width}}},
          {"trend",
           {{"min_changes", c.trend.min_changes},
            {"max_changes", c.trend.max_changes},
            {"max_slope", c.trend.max_slope},
            {"start", {c.trend.start_min, c.trend.start_max}},
            {"clamp", {c.trend.r_min, c.trend.r_max}}}}};
}

// ---------------------------------------------------------------------------
// Variational state and checkpoints

inline json matrix_to_json(const Eigen::MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return data;
}

inline Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index dim, const std::string& where) {
  const auto data = j.get<std::vector<double>>();
  if (data.size() != static_cast<std::size_t>(dim * dim))
    throw ConfigError("expected " + std::to_string(dim * dim) + " entries", where);
  Eigen::MatrixXd m(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i)
    for (Eigen::Index k = 0; k < dim; ++k) m(i, k) = data[static_cast<std::size_t>(i * dim + k)];
  return m;
}

inline Eigen::VectorXd vector_from_json(const json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(data.data(), static_cast<Eigen::Index>(data.size()));
}

inline json to_json(const VariationalState& s) {
  return {{"mu", std::vector<double>(s.mu.data(), s.mu.data() + s.mu.size())}, {"L_raw", matrix_to_json(s.L_raw)}};
}

inline VariationalState state_from_json(const json& j, const std::string& where = "state") {
  try {
    reject_unknown(j, {"mu", "L_raw"}, where);
    VariationalState s;
    s.mu = vector_from_json(j.at("mu"));
    s.L_raw = matrix_from_json(j.at("L_raw"), s.mu.size(), path_of(where, "L_raw"));
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(e.what(), where);
  }
}

/// Checkpoint: the variational state, the whitened optimizer coordinates and
/// Adam moments, the iteration index (stream position) and the ELBO trace.
inline json to_json(const FitCheckpoint& cp, const VariationalState& state) {
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return {{"state", to_json(state)},
          {"whitened", {{"m", vec(cp.params.m)}, {"L_raw", matrix_to_json(cp.params.L_raw)}}},
          {"adam",
           {{"step", cp.adam.step},
            {"m_mu", vec(cp.adam.m_mu)},
            {"v_mu", vec(cp.adam.v_mu)},
            {"m_L", matrix_to_json(cp.adam.m_L)},
            {"v_L", matrix_to_json(cp.adam.v_L)}}},
          {"iteration", cp.iteration},
          {"rng", {{"seed", cp.seed}, {"stream_position", cp.iteration}}},
          {"elbo_trace", cp.elbo_trace}};
}

inline FitCheckpoint checkpoint_from_json(const json& j) {
  try {
    FitCheckpoint cp;
    const auto& w = j.at("whitened");
    cp.params.m = vector_from_json(w.at("m"));
    const auto D = cp.params.m.size();
    cp.params.L_raw = matrix_from_json(w.at("L_raw"), D, "whitened.L_raw");
    const auto& a = j.at("adam");
    cp.adam.step = a.at("step").get<long>();
    cp.adam.m_mu = vector_from_json(a.at("m_mu"));
    cp.adam.v_mu = vector_from_json(a.at("v_mu"));
    cp.adam.m_L = matrix_from_json(a.at("m_L"), D, "adam.m_L");
    cp.adam.v_L = matrix_from_json(a.at("v_L"), D, "adam.v_L");
    if (cp.adam.m_mu.size() != D || cp.adam.v_mu.size() != D) throw ConfigError("moment sizes differ", "adam");
    cp.iteration = j.at("iteration").get<int>();
    cp.seed = j.at("rng").at("seed").get<std::uint64_t>();
    cp.elbo_trace = j.at("elbo_trace").get<std::vector<double>>();
    if (cp.elbo_trace.size() != static_cast<std::size_t>(cp.iteration))
      throw ConfigError("trace length does not match iteration", "elbo_trace");
    return cp;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what(), "resume");
  }
}

// ---------------------------------------------------------------------------
// Files

inline json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string(), "config");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what(), "config");
  }
}

/// Writes via a temporary file and rename so readers never see partial files.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << content;
    if (!out) throw std::runtime_error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

/// "day,<name>" rows for days 1..T.
template <class T>
std::string series_csv(const std::vector<T>& values, const std::string& name) {
  std::ostringstream os;
  os << "day," << name << "\n";
  for (std::size_t t = 0; t < values.size(); ++t) {
    os << t + 1 << ",";
    if constexpr (std::is_floating_point_v<T>) os << format_double(values[t]);
    else os << values[t];
    os << "\n";
  }
  return os.str();
}

/// Reads a "day,<value>" CSV of non-negative integer counts with days 1..T in
/// order. Errors name the offending row (1-based, header is row 1).
inline std::vector<int> read_count_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string(), "observations");
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty file", "observations");
  std::vector<int> values;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    auto fail = [&] { throw ConfigError("row " + std::to_string(row) + ": malformed '" + line + "'", "observations"); };
    if (comma == std::string::npos) fail();
    try {
      std::size_t used_day = 0, used_value = 0;
      const std::string day_text = line.substr(0, comma), value_text = line.substr(comma + 1);
      const int day = std::stoi(day_text, &used_day);
      const long value = std::stol(value_text, &used_value);
      if (used_day != day_text.size() || used_value != value_text.size()) fail();
      if (day != static_cast<int>(values.size()) + 1 || value < 0 || value > std::numeric_limits<int>::max()) fail();
      values.push_back(static_cast<int>(value));
    } catch (const std::logic_error&) {
      fail();
    }
  }
  return values;
}

/// Posterior summary rows: day, mean_R, sd_R, q05, q25, q50, q75, q95.
inline std::string posterior_csv(const MethodPosterior& posterior) {
  std::ostringstream os;
  os << "day,mean_R,sd_R,q05,q25,q50,q75,q95\n";
  for (std::size_t t = 0; t < posterior.size(); ++t) {
    const auto& d = posterior[t];
    os << t + 1;
    if (!d.has_estimate()) {
      os << ",NA,NA,NA,NA,NA,NA,NA\n";
      continue;
    }
    const double sd = d.family == DayPosterior::Family::kGamma ? std::sqrt(d.a) * d.b : d.b;
    os << "," << format_double(d.mean()) << "," << format_double(sd);
    for (double p : {0.05, 0.25, 0.5, 0.75, 0.95}) os << "," << format_double(d.quantile(p));
    os << "\n";
  }
  return os.str();
}

}  // namespace rtinfer::io
