#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "bmdrom/errors.hpp"
#include "bmdrom/io.hpp"
#include "bmdrom/study.hpp"

namespace bmdrom {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

inline std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i)
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

inline std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw IoError("cannot read " + p.string());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

inline void write_file(const fs::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw IoError("cannot write " + p.string());
  os << s;
  if (!os) throw IoError("write failed for " + p.string());
}

// Git-style blob hash: sha256("blob <size>\0<content>").
inline std::string content_hash(const std::string& content) {
  std::string s = "blob " + std::to_string(content.size());
  s.push_back('\0');
  return sha256_hex(s + content);
}

struct GridSpec {
  double from = 20.0, to = 50.0, step = 2.0;
  std::vector<double> values() const { return grid_range(from, to, step); }
};

struct MpcStudy {
  bool enabled = true;
  std::vector<int> n_z = {10};
  std::vector<Algorithm> algorithms = {Algorithm::admdc, Algorithm::iorom, Algorithm::bmd};
  double weight_N = 13000.0, weight_M = 10.0, weight_M_delta = 0.1;
  double u_min = -3.0, u_max = 3.0;
  int horizon = 10;
  std::vector<int> controlled = {4};
  std::vector<int> tracked = {0};
  MpcScenarioSpec scenario;

  MpcConfig controller() const {
    MpcConfig c;
    const auto nc = static_cast<Eigen::Index>(controlled.size());
    const auto nt = static_cast<Eigen::Index>(tracked.size());
    c.horizon = horizon;
    c.controlled = controlled;
    c.tracked = tracked;
    c.N = weight_N * Matrix::Identity(nt, nt);
    c.M = weight_M * Matrix::Identity(nc, nc);
    c.M_delta = weight_M_delta * Matrix::Identity(nc, nc);
    c.u_min = Vector::Constant(nc, u_min);
    c.u_max = Vector::Constant(nc, u_max);
    return c;
  }
};

struct ExperimentConfig {
  PlantConfig plant;
  GridSpec plant_grid;
  std::string plant_file;  // overrides the generated benchmark when set
  GridSpec grid;
  int settle_steps = 50000;
  double trim_tol = 1e-12;
  SignalSpec training;
  int gramian_horizon = 0;  // 0: from the slowest pole
  ObservabilityMethod observability = ObservabilityMethod::adjoint_impulse;
  std::vector<Algorithm> algorithms = {Algorithm::admdc, Algorithm::iorom, Algorithm::bmd};
  std::vector<int> n_z;
  double hankel_threshold = 0.0;  // > 0 adds the Hankel-selected order
  int r_offset = 10;
  bool algebraic = true;
  std::vector<EvalScenario> scenarios = default_eval_scenarios();
  int eval_output = 0;
  int trace_n_z = 10;
  MpcStudy mpc;
  std::string output_dir = "out";
  std::uint64_t seed = 1;

  ExperimentConfig() {
    for (int n = 10; n <= 40; n += 2) n_z.push_back(n);
    training.kind = SignalKind::impulse_train;
  }
};

namespace detail {

template <class T>
void take(const ojson& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
  }
}

inline void check_keys(const ojson& j, std::initializer_list<const char*> allowed,
                       const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a table");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

inline GridSpec grid_from(const ojson& j, GridSpec g, const std::string& where) {
  check_keys(j, {"from", "to", "step"}, where);
  take(j, "from", g.from);
  take(j, "to", g.to);
  take(j, "step", g.step);
  if (!(g.step > 0.0) || !(g.to >= g.from)) throw ConfigError(where + ": bad range");
  return g;
}

inline ojson grid_to(const GridSpec& g) {
  return ojson{{"from", g.from}, {"to", g.to}, {"step", g.step}};
}

inline SignalSpec signal_from(const ojson& j, SignalSpec s, const std::string& where) {
  check_keys(j, {"kind", "amplitude", "channels", "freq_fractions", "chirp_from",
                 "chirp_to", "spacing", "offset", "chip_steps", "gust_length_s",
                 "gust_start_s", "mean_chord"},
             where);
  if (j.contains("kind")) s.kind = signal_kind_from(j.at("kind").get<std::string>());
  take(j, "amplitude", s.amplitude);
  take(j, "channels", s.channels);
  take(j, "freq_fractions", s.freq_fractions);
  take(j, "chirp_from", s.chirp_from);
  take(j, "chirp_to", s.chirp_to);
  take(j, "spacing", s.spacing);
  take(j, "offset", s.offset);
  take(j, "chip_steps", s.chip_steps);
  take(j, "gust_length_s", s.gust_length_s);
  take(j, "gust_start_s", s.gust_start_s);
  take(j, "mean_chord", s.mean_chord);
  return s;
}

inline ojson signal_to(const SignalSpec& s) {
  return ojson{{"kind", to_string(s.kind)},         {"amplitude", s.amplitude},
               {"channels", s.channels},            {"freq_fractions", s.freq_fractions},
               {"chirp_from", s.chirp_from},        {"chirp_to", s.chirp_to},
               {"spacing", s.spacing},              {"offset", s.offset},
               {"chip_steps", s.chip_steps},        {"gust_length_s", s.gust_length_s},
               {"gust_start_s", s.gust_start_s},    {"mean_chord", s.mean_chord}};
}

inline std::vector<Algorithm> algorithms_from(const ojson& j) {
  std::vector<Algorithm> out;
  for (const auto& a : j) out.push_back(algorithm_from(a.get<std::string>()));
  if (out.empty()) throw ConfigError("algorithm list is empty");
  return out;
}

inline ojson algorithms_to(const std::vector<Algorithm>& v) {
  ojson a = ojson::array();
  for (auto x : v) a.push_back(to_string(x));
  return a;
}

}  // namespace detail

inline void validate(const ExperimentConfig& c) {
  if (c.n_z.empty() && !(c.hankel_threshold > 0.0))
    throw ConfigError("fit.n_z is empty and no Hankel threshold is set");
  for (int n : c.n_z)
    if (n < 1 || (c.plant_file.empty() && n > c.plant.n_x))
      throw ConfigError("n_z values must lie in [1, n_x]");
  if (c.scenarios.empty()) throw ConfigError("eval.scenarios is empty");
  if (c.settle_steps < 1) throw ConfigError("trim.settle_steps must be >= 1");
  if (c.r_offset < 1) throw ConfigError("fit.r_offset must be >= 1");
  if (!c.plant_file.empty() && !fs::exists(c.plant_file))
    throw ConfigError("plant file does not exist: " + c.plant_file);
  for (auto a : c.algorithms)
    if (a == Algorithm::exact) throw ConfigError("'exact' is not a fit algorithm");
  if (c.mpc.enabled) {
    for (int n : c.mpc.n_z)
      if (std::find(c.n_z.begin(), c.n_z.end(), n) == c.n_z.end())
        throw ConfigError("mpc.n_z must be a subset of fit.n_z");
    for (auto a : c.mpc.algorithms)
      if (std::find(c.algorithms.begin(), c.algorithms.end(), a) == c.algorithms.end())
        throw ConfigError("mpc.algorithms must be a subset of fit.algorithms");
    validate(c.mpc.controller());
  }
}

inline ExperimentConfig config_from_json(const ojson& j) {
  using detail::take;
  ExperimentConfig c;
  detail::check_keys(j, {"seed", "output_dir", "plant", "grid", "trim", "training",
                         "gramians", "fit", "eval", "mpc"},
                     "config");
  take(j, "seed", c.seed);
  take(j, "output_dir", c.output_dir);
  if (j.contains("plant")) {
    const auto& p = j.at("plant");
    detail::check_keys(p, {"file", "n_x", "n_u", "n_y", "dt", "grid", "coupling",
                           "algebraic", "seed", "freq_range_hz", "first_mode_hz",
                           "first_mode_zeta", "freq_variation", "damping_variation",
                           "trim_amplitude", "control_channel", "mode_groups"},
                       "plant");
    take(p, "file", c.plant_file);
    take(p, "n_x", c.plant.n_x);
    take(p, "n_u", c.plant.n_u);
    take(p, "n_y", c.plant.n_y);
    take(p, "dt", c.plant.dt);
    if (p.contains("grid")) c.plant_grid = detail::grid_from(p.at("grid"), c.plant_grid, "plant.grid");
    take(p, "coupling", c.plant.nonnormal_coupling_strength);
    take(p, "algebraic", c.plant.algebraic);
    take(p, "seed", c.plant.seed);
    if (p.contains("freq_range_hz")) {
      const auto r = p.at("freq_range_hz").get<std::vector<double>>();
      if (r.size() != 2) throw ConfigError("plant.freq_range_hz needs two values");
      c.plant.freq_lo_hz = r[0];
      c.plant.freq_hi_hz = r[1];
    }
    take(p, "first_mode_hz", c.plant.first_mode_hz);
    take(p, "first_mode_zeta", c.plant.first_mode_zeta);
    take(p, "freq_variation", c.plant.freq_variation);
    take(p, "damping_variation", c.plant.damping_variation);
    take(p, "trim_amplitude", c.plant.trim_amplitude);
    take(p, "control_channel", c.plant.control_channel);
    if (p.contains("mode_groups")) {
      c.plant.groups.clear();
      for (const auto& g : p.at("mode_groups")) {
        detail::check_keys(g, {"count", "zeta", "weight"}, "plant.mode_groups");
        ModeGroup m;
        take(g, "count", m.count);
        take(g, "weight", m.weight);
        if (g.contains("zeta")) {
          const auto z = g.at("zeta").get<std::vector<double>>();
          if (z.size() != 2) throw ConfigError("mode group zeta needs two values");
          m.zeta_lo = z[0];
          m.zeta_hi = z[1];
        }
        c.plant.groups.push_back(m);
      }
    }
  }
  if (j.contains("grid")) c.grid = detail::grid_from(j.at("grid"), c.grid, "grid");
  if (j.contains("trim")) {
    const auto& t = j.at("trim");
    detail::check_keys(t, {"settle_steps", "tol"}, "trim");
    take(t, "settle_steps", c.settle_steps);
    take(t, "tol", c.trim_tol);
  }
  if (j.contains("training")) {
    auto t = j.at("training");
    int n_s = c.training.n_s;
    if (t.contains("n_s")) {
      n_s = t.at("n_s").get<int>();
      t.erase("n_s");
    }
    c.training = detail::signal_from(t, c.training, "training");
    c.training.n_s = n_s;
  }
  if (j.contains("gramians")) {
    const auto& g = j.at("gramians");
    detail::check_keys(g, {"horizon", "observability"}, "gramians");
    take(g, "horizon", c.gramian_horizon);
    if (g.contains("observability"))
      c.observability = observability_method_from(g.at("observability").get<std::string>());
  }
  if (j.contains("fit")) {
    const auto& f = j.at("fit");
    detail::check_keys(f, {"algorithms", "n_z", "r_offset", "hankel_threshold", "algebraic"},
                       "fit");
    if (f.contains("algorithms")) c.algorithms = detail::algorithms_from(f.at("algorithms"));
    take(f, "n_z", c.n_z);
    take(f, "r_offset", c.r_offset);
    take(f, "hankel_threshold", c.hankel_threshold);
    take(f, "algebraic", c.algebraic);
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    detail::check_keys(e, {"output", "trace_n_z", "scenarios"}, "eval");
    take(e, "output", c.eval_output);
    take(e, "trace_n_z", c.trace_n_z);
    if (e.contains("scenarios")) {
      c.scenarios.clear();
      for (const auto& s : e.at("scenarios")) {
        detail::check_keys(s, {"name", "signal", "speed", "n_s"}, "eval.scenarios");
        EvalScenario sc;
        take(s, "name", sc.name);
        if (sc.name.empty()) throw ConfigError("scenario needs a name");
        if (s.contains("signal"))
          sc.signal = detail::signal_from(s.at("signal"), sc.signal, "scenario signal");
        if (s.contains("speed")) {
          const auto& v = s.at("speed");
          detail::check_keys(v, {"from", "to"}, "scenario speed");
          take(v, "from", sc.speed_from);
          take(v, "to", sc.speed_to);
        }
        take(s, "n_s", sc.n_s);
        c.scenarios.push_back(sc);
      }
    }
  }
  if (j.contains("mpc")) {
    const auto& m = j.at("mpc");
    detail::check_keys(m, {"enabled", "n_z", "algorithms", "weights", "bounds", "horizon",
                           "controlled", "tracked", "scenario"},
                       "mpc");
    take(m, "enabled", c.mpc.enabled);
    take(m, "n_z", c.mpc.n_z);
    if (m.contains("algorithms")) c.mpc.algorithms = detail::algorithms_from(m.at("algorithms"));
    if (m.contains("weights")) {
      const auto& w = m.at("weights");
      detail::check_keys(w, {"N", "M", "M_delta"}, "mpc.weights");
      take(w, "N", c.mpc.weight_N);
      take(w, "M", c.mpc.weight_M);
      take(w, "M_delta", c.mpc.weight_M_delta);
    }
    if (m.contains("bounds")) {
      const auto b = m.at("bounds").get<std::vector<double>>();
      if (b.size() != 2) throw ConfigError("mpc.bounds needs two values");
      c.mpc.u_min = b[0];
      c.mpc.u_max = b[1];
    }
    take(m, "horizon", c.mpc.horizon);
    take(m, "controlled", c.mpc.controlled);
    take(m, "tracked", c.mpc.tracked);
    if (m.contains("scenario")) {
      const auto& s = m.at("scenario");
      auto& sp = c.mpc.scenario;
      detail::check_keys(s, {"n_steps", "speed_from", "speed_to", "ramp_steps",
                             "gust_length_s", "gust_amplitude", "gust_channel",
                             "gust_start_s", "turbulence_sigma", "turbulence_corner_hz",
                             "reference_fraction"},
                         "mpc.scenario");
      take(s, "n_steps", sp.n_steps);
      take(s, "speed_from", sp.speed_from);
      take(s, "speed_to", sp.speed_to);
      take(s, "ramp_steps", sp.ramp_steps);
      take(s, "gust_length_s", sp.gust_length_s);
      take(s, "gust_amplitude", sp.gust_amplitude);
      take(s, "gust_channel", sp.gust_channel);
      take(s, "gust_start_s", sp.gust_start_s);
      take(s, "turbulence_sigma", sp.turbulence_sigma);
      take(s, "turbulence_corner_hz", sp.turbulence_corner_hz);
      take(s, "reference_fraction", sp.reference_fraction);
    }
  }
  c.plant.grid_rhos = c.plant_grid.values();
  validate(c);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  ojson j;
  try {
    j = ojson::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(j);
}

// Canonical form with every default filled in; the output directory is
// left out so that relocated runs hash identically.
inline ojson config_to_json(const ExperimentConfig& c) {
  ojson groups = ojson::array();
  for (const auto& g : c.plant.groups)
    groups.push_back({{"count", g.count}, {"zeta", {g.zeta_lo, g.zeta_hi}}, {"weight", g.weight}});
  ojson scen = ojson::array();
  for (const auto& s : c.scenarios)
    scen.push_back({{"name", s.name},
                    {"signal", detail::signal_to(s.signal)},
                    {"speed", {{"from", s.speed_from}, {"to", s.speed_to}}},
                    {"n_s", s.n_s}});
  ojson training = detail::signal_to(c.training);
  training["n_s"] = c.training.n_s;
  const auto& sp = c.mpc.scenario;
  ojson j;
  j["seed"] = c.seed;
  j["plant"] = {{"file", c.plant_file.empty() ? "" : fs::path(c.plant_file).filename().string()},
                {"n_x", c.plant.n_x},
                {"n_u", c.plant.n_u},
                {"n_y", c.plant.n_y},
                {"dt", c.plant.dt},
                {"grid", detail::grid_to(c.plant_grid)},
                {"coupling", c.plant.nonnormal_coupling_strength},
                {"algebraic", c.plant.algebraic},
                {"seed", c.plant.seed},
                {"freq_range_hz", {c.plant.freq_lo_hz, c.plant.freq_hi_hz}},
                {"first_mode_hz", c.plant.first_mode_hz},
                {"first_mode_zeta", c.plant.first_mode_zeta},
                {"freq_variation", c.plant.freq_variation},
                {"damping_variation", c.plant.damping_variation},
                {"trim_amplitude", c.plant.trim_amplitude},
                {"control_channel", c.plant.control_channel},
                {"mode_groups", groups}};
  j["grid"] = detail::grid_to(c.grid);
  j["trim"] = {{"settle_steps", c.settle_steps}, {"tol", c.trim_tol}};
  j["training"] = training;
  j["gramians"] = {{"horizon", c.gramian_horizon},
                   {"observability", to_string(c.observability)}};
  j["fit"] = {{"algorithms", detail::algorithms_to(c.algorithms)},
              {"n_z", c.n_z},
              {"r_offset", c.r_offset},
              {"hankel_threshold", c.hankel_threshold},
              {"algebraic", c.algebraic}};
  j["eval"] = {{"output", c.eval_output}, {"trace_n_z", c.trace_n_z}, {"scenarios", scen}};
  j["mpc"] = {{"enabled", c.mpc.enabled},
              {"n_z", c.mpc.n_z},
              {"algorithms", detail::algorithms_to(c.mpc.algorithms)},
              {"weights", {{"N", c.mpc.weight_N}, {"M", c.mpc.weight_M},
                           {"M_delta", c.mpc.weight_M_delta}}},
              {"bounds", {c.mpc.u_min, c.mpc.u_max}},
              {"horizon", c.mpc.horizon},
              {"controlled", c.mpc.controlled},
              {"tracked", c.mpc.tracked},
              {"scenario", {{"n_steps", sp.n_steps},
                            {"speed_from", sp.speed_from},
                            {"speed_to", sp.speed_to},
                            {"ramp_steps", sp.ramp_steps},
                            {"gust_length_s", sp.gust_length_s},
                            {"gust_amplitude", sp.gust_amplitude},
                            {"gust_channel", sp.gust_channel},
                            {"gust_start_s", sp.gust_start_s},
                            {"turbulence_sigma", sp.turbulence_sigma},
                            {"turbulence_corner_hz", sp.turbulence_corner_hz},
                            {"reference_fraction", sp.reference_fraction}}}};
  return j;
}

inline std::string config_hash(const ExperimentConfig& c) {
  return sha256_hex(config_to_json(c).dump());
}

struct RunOptions {
  int jobs = 1;
  bool quiet = false;
};

// File layout inside the output directory.
struct Layout {
  fs::path root;
  fs::path plant() const { return root / "plant.csv"; }
  fs::path trims() const { return root / "trims.csv"; }
  fs::path generate_stamp() const { return root / "generate.json"; }
  fs::path trajectory(size_t j) const {
    return root / "trajectories" / ("traj_" + two(j) + ".csv");
  }
  fs::path gramians(size_t j) const {
    return root / "gramians" / ("gram_" + two(j) + ".csv");
  }
  fs::path rom(Algorithm a, int n_z) const {
    return root / "roms" / ("rom_" + to_string(a) + "_nz" + two(n_z) + ".csv");
  }
  fs::path fit_stamp() const { return root / "roms" / "fit.json"; }
  fs::path errors(const std::string& scenario) const {
    return root / "eval" / ("errors_" + scenario + ".csv");
  }
  fs::path traces(const std::string& scenario) const {
    return root / "eval" / ("traces_" + scenario + ".csv");
  }
  fs::path mpc() const { return root / "mpc" / "closed_loop_cost.csv"; }
  fs::path report() const { return root / "report.csv"; }

  static std::string two(size_t j) {
    std::string s = std::to_string(j);
    return s.size() < 2 ? "0" + s : s;
  }
};

// Gramian cache directory: ROM_CACHE_DIR when set, else <out>/cache.
inline fs::path cache_dir(const Layout& l) {
  if (const char* env = std::getenv("ROM_CACHE_DIR"); env && *env) return fs::path(env);
  return l.root / "cache";
}

inline void log_line(const RunOptions& o, const std::string& s) {
  if (!o.quiet) std::fprintf(stderr, "%s\n", s.c_str());
}

// CSV with a provenance header naming the config and hashing the inputs.
inline std::string provenance(const std::string& command, const ExperimentConfig& c,
                              const std::string& inputs_hash) {
  std::string s = "# command=" + command + "\n";
  s += "# config_sha256=" + config_hash(c) + "\n";
  s += "# inputs_sha256=" + inputs_hash + "\n";
  s += "# seed=" + std::to_string(c.seed) + "\n";
  return s;
}

inline std::string hash_files(const std::vector<fs::path>& files) {
  std::string acc;
  for (const auto& f : files) acc += content_hash(read_file(f)) + "\n";
  return sha256_hex(acc);
}

inline void require(const fs::path& p, const std::string& command) {
  if (!fs::exists(p))
    throw MissingPrerequisite("missing " + p.filename().string() + "; run `bmdrom_cli " +
                              command + "` first");
}

inline HighOrderPlant build_plant(const ExperimentConfig& c) {
  if (!c.plant_file.empty()) return load_plant(c.plant_file);
  return make_benchmark_plant(c.plant);
}

inline Archive trims_archive(const std::vector<double>& grid, const std::vector<Trim>& t) {
  Archive a;
  a.manifest["kind"] = "trims";
  a.manifest["grid_rhos"] = join(grid);
  for (size_t j = 0; j < t.size(); ++j) {
    a.put(idx("x", j), t[j].x);
    a.put(idx("u", j), t[j].u);
    a.put(idx("y", j), t[j].y);
  }
  return a;
}

inline PlantTrimTable load_trims(const fs::path& p) {
  const Archive a = load_archive(p.string());
  if (a.meta("kind") != "trims") throw IoError("not a trim table: " + p.string());
  PlantTrimTable t;
  t.grid = split_doubles(a.meta("grid_rhos"));
  for (size_t j = 0; j < t.grid.size(); ++j)
    t.trims.push_back(Trim{a.vec(idx("x", j)), a.vec(idx("u", j)), a.vec(idx("y", j))});
  return t;
}

inline int resolve_horizon(const ExperimentConfig& c, const HighOrderPlant& p) {
  if (c.gramian_horizon > 0) return c.gramian_horizon;
  return default_horizon(max_pole_radius(p));
}

inline std::string generate_key(const ExperimentConfig& c, const std::string& plant_hash) {
  ojson j = config_to_json(c);
  ojson k;
  k["plant_sha256"] = plant_hash;
  k["grid"] = j["grid"];
  k["trim"] = j["trim"];
  k["training"] = j["training"];
  k["gramians"] = j["gramians"];
  k["seed"] = c.seed;
  return sha256_hex(k.dump());
}

// Returns true when the outputs were already current.
inline bool cmd_generate(const ExperimentConfig& c, const RunOptions& o = {}) {
  const Layout l{c.output_dir};
  fs::create_directories(l.root / "trajectories");
  fs::create_directories(l.root / "gramians");
  const HighOrderPlant plant = build_plant(c);
  std::ostringstream ps;
  write_archive(ps, to_archive(plant));
  const std::string plant_text = ps.str();
  const std::string plant_hash = content_hash(plant_text);
  const std::string key = generate_key(c, plant_hash);
  const auto grid = c.grid.values();

  if (fs::exists(l.generate_stamp())) {
    const auto stamp = ojson::parse(read_file(l.generate_stamp()));
    bool ok = stamp.value("key", "") == key && fs::exists(l.plant()) && fs::exists(l.trims());
    for (size_t j = 0; ok && j < grid.size(); ++j)
      ok = fs::exists(l.trajectory(j)) && fs::exists(l.gramians(j));
    if (ok) {
      log_line(o, "generate: cache hit, nothing to do");
      return true;
    }
  }
  write_file(l.plant(), plant_text);
  log_line(o, "generate: plant " + plant_hash.substr(0, 12));

  TrimOptions topt;
  topt.tol = c.trim_tol;
  const auto trims = grid_trims(plant, grid, c.settle_steps, topt, o.jobs);
  save_archive(l.trims().string(), trims_archive(grid, trims));

  const auto runs = training_runs(plant, grid, trims, c.training, c.seed, o.jobs);
  for (size_t j = 0; j < runs.size(); ++j) save_trajectory_csv(l.trajectory(j).string(), runs[j]);
  log_line(o, "generate: " + std::to_string(runs.size()) + " trajectories");

  const int T = resolve_horizon(c, plant);
  const fs::path cdir = cache_dir(l);
  fs::create_directories(cdir);
  std::vector<size_t> todo;
  std::vector<fs::path> cached(grid.size());
  for (size_t j = 0; j < grid.size(); ++j) {
    const std::string gkey = sha256_hex(plant_hash + "|" + fmt(grid[j]) + "|" +
                                        std::to_string(T) + "|" + to_string(c.observability));
    cached[j] = cdir / ("gram_" + gkey + ".csv");
    if (!fs::exists(cached[j])) todo.push_back(j);
  }
  std::vector<GramianPair> fresh(todo.size());
  parallel_for(static_cast<int>(todo.size()), o.jobs, [&](int i) {
    fresh[i] = empirical_gramians(plant.at(grid[todo[i]]), T, c.observability, 1);
  });
  for (size_t i = 0; i < todo.size(); ++i) {
    Archive a = to_archive(fresh[i]);
    a.manifest["rho"] = fmt(grid[todo[i]]);
    save_archive(cached[todo[i]].string(), a);
  }
  for (size_t j = 0; j < grid.size(); ++j) fs::copy_file(cached[j], l.gramians(j),
                                                         fs::copy_options::overwrite_existing);
  log_line(o, "generate: Gramians horizon " + std::to_string(T) + ", " +
                  std::to_string(todo.size()) + " computed, " +
                  std::to_string(grid.size() - todo.size()) + " cached");

  ojson stamp;
  stamp["key"] = key;
  stamp["plant_sha256"] = plant_hash;
  stamp["config_sha256"] = config_hash(c);
  write_file(l.generate_stamp(), stamp.dump(1) + "\n");
  return false;
}

struct GeneratedData {
  HighOrderPlant plant;
  PlantTrimTable trims;
  std::vector<TrajectorySet> runs;
  std::vector<GramianPair> grams;
  std::vector<fs::path> files;
};

inline GeneratedData load_generated(const ExperimentConfig& c, bool with_gramians) {
  const Layout l{c.output_dir};
  require(l.generate_stamp(), "generate");
  require(l.plant(), "generate");
  require(l.trims(), "generate");
  GeneratedData d;
  d.plant = load_plant(l.plant().string());
  d.trims = load_trims(l.trims());
  d.files = {l.plant(), l.trims()};
  const auto grid = c.grid.values();
  if (d.trims.grid != grid)
    throw MissingPrerequisite("trim grid differs from the config; rerun `bmdrom_cli generate`");
  for (size_t j = 0; j < grid.size(); ++j) {
    require(l.trajectory(j), "generate");
    d.runs.push_back(load_trajectory_csv(l.trajectory(j).string()));
    d.files.push_back(l.trajectory(j));
    if (with_gramians) {
      require(l.gramians(j), "generate");
      d.grams.push_back(gramians_from_archive(load_archive(l.gramians(j).string())));
      d.files.push_back(l.gramians(j));
    }
  }
  return d;
}

inline std::vector<int> fit_orders(const ExperimentConfig& c,
                                   const std::vector<GramianPair>& grams) {
  std::vector<int> orders = c.n_z;
  if (c.hankel_threshold > 0.0 && !grams.empty()) {
    std::vector<Vector> h;
    for (const auto& g : grams) h.push_back(prepare_bmd_factors(g).hankel);
    orders.push_back(select_order_from_hankel(h, c.hankel_threshold));
  }
  std::sort(orders.begin(), orders.end());
  orders.erase(std::unique(orders.begin(), orders.end()), orders.end());
  return orders;
}

inline void cmd_fit(const ExperimentConfig& c, const RunOptions& o = {}) {
  const Layout l{c.output_dir};
  const bool need_gram =
      std::find(c.algorithms.begin(), c.algorithms.end(), Algorithm::bmd) != c.algorithms.end() ||
      c.hankel_threshold > 0.0;
  const GeneratedData d = load_generated(c, need_gram);
  fs::create_directories(l.root / "roms");
  FitContext ctx = make_fit_context(d.runs, need_gram ? &d.grams : nullptr, c.algorithms,
                                    c.algebraic, o.jobs);
  ctx.r_offset = c.r_offset;
  const auto orders = fit_orders(c, d.grams);
  struct Cell {
    Algorithm a;
    int n_z;
  };
  std::vector<Cell> cells;
  for (auto a : c.algorithms)
    for (int n : orders) cells.push_back({a, n});
  const std::string inputs = hash_files(d.files);
  parallel_for(static_cast<int>(cells.size()), o.jobs, [&](int i) {
    GridROM g = fit_grid_rom(ctx, cells[i].a, cells[i].n_z, 1);
    Archive a = to_archive(g);
    a.manifest["config_sha256"] = config_hash(c);
    a.manifest["inputs_sha256"] = inputs;
    save_archive(l.rom(cells[i].a, cells[i].n_z).string(), a);
  });
  ojson stamp;
  stamp["config_sha256"] = config_hash(c);
  stamp["orders"] = orders;
  write_file(l.fit_stamp(), stamp.dump(1) + "\n");
  log_line(o, "fit: " + std::to_string(cells.size()) + " GridROMs");
}

inline std::vector<int> fitted_orders(const Layout& l) {
  require(l.fit_stamp(), "fit");
  return ojson::parse(read_file(l.fit_stamp())).at("orders").get<std::vector<int>>();
}

inline GridROM load_rom(const Layout& l, Algorithm a, int n_z) {
  require(l.rom(a, n_z), "fit");
  return grid_rom_from_archive(load_archive(l.rom(a, n_z).string()));
}

inline std::string csv_row(const std::vector<std::string>& cells) {
  std::string s;
  for (size_t i = 0; i < cells.size(); ++i) s += (i ? "," : "") + cells[i];
  return s + "\n";
}

inline void cmd_eval(const ExperimentConfig& c, const RunOptions& o = {}) {
  const Layout l{c.output_dir};
  const GeneratedData d = load_generated(c, false);
  const auto orders = fitted_orders(l);
  fs::create_directories(l.root / "eval");
  const Matrix readout = d.plant.at(d.trims.grid.front()).C;

  std::vector<fs::path> rom_files;
  std::vector<std::vector<GridROM>> roms(c.algorithms.size());
  for (size_t a = 0; a < c.algorithms.size(); ++a)
    for (int n : orders) {
      roms[a].push_back(load_rom(l, c.algorithms[a], n));
      rom_files.push_back(l.rom(c.algorithms[a], n));
    }
  std::vector<fs::path> inputs = d.files;
  inputs.insert(inputs.end(), rom_files.begin(), rom_files.end());
  const std::string inputs_hash = hash_files(inputs);

  for (size_t s = 0; s < c.scenarios.size(); ++s) {
    const auto& sc = c.scenarios[s];
    const EvalCase ec = make_eval_case(d.plant, d.trims, sc, derive_seed(c.seed, 1000 + s));
    const size_t na = c.algorithms.size(), no = orders.size();
    std::vector<double> err(na * no);
    std::vector<Matrix> preds(na * no);
    parallel_for(static_cast<int>(na * no), o.jobs, [&](int i) {
      preds[i] = predict_outputs(roms[i / no][i % no], ec.u, ec.rho, ec.x0, readout);
      err[i] = prediction_error(preds[i], ec, c.eval_output);
    });

    std::string csv = provenance("eval", c, inputs_hash);
    std::vector<std::string> head = {"n_z"};
    for (auto a : c.algorithms) head.push_back(to_string(a));
    csv += csv_row(head);
    for (size_t k = 0; k < no; ++k) {
      std::vector<std::string> row = {std::to_string(orders[k])};
      for (size_t a = 0; a < na; ++a) row.push_back(fmt(err[a * no + k]));
      csv += csv_row(row);
    }
    write_file(l.errors(sc.name), csv);

    // derived-signal traces at the trace order
    const auto it = std::find(orders.begin(), orders.end(), c.trace_n_z);
    if (it != orders.end()) {
      const size_t k = static_cast<size_t>(it - orders.begin());
      std::string tr = provenance("eval", c, inputs_hash);
      std::vector<std::string> th = {"t", "rho", "truth"};
      for (auto a : c.algorithms) th.push_back(to_string(a));
      tr += csv_row(th);
      for (Eigen::Index i = 0; i < ec.u.cols(); ++i) {
        std::vector<std::string> row = {fmt(static_cast<double>(i) * d.plant.dt),
                                        fmt(ec.rho(i)), fmt(ec.y(c.eval_output, i))};
        for (size_t a = 0; a < na; ++a) row.push_back(fmt(preds[a * no + k](c.eval_output, i)));
        tr += csv_row(row);
      }
      write_file(l.traces(sc.name), tr);
    }
    log_line(o, "eval: scenario " + sc.name);
  }
}

inline void cmd_mpc(const ExperimentConfig& c, const RunOptions& o = {}) {
  const Layout l{c.output_dir};
  if (!c.mpc.enabled) {
    log_line(o, "mpc: disabled in config");
    return;
  }
  const GeneratedData d = load_generated(c, false);
  fitted_orders(l);
  fs::create_directories(l.root / "mpc");
  const MpcConfig cfg = c.mpc.controller();
  MpcScenarioSpec sp = c.mpc.scenario;
  sp.seed = derive_seed(c.seed, 2000);
  const ClosedLoopScenario sc = make_mpc_scenario(d.plant, sp, cfg);
  const Matrix readout = d.plant.at(d.trims.grid.front()).C;

  struct Cell {
    Algorithm a;
    int n_z;
  };
  std::vector<Cell> cells = {{Algorithm::exact, static_cast<int>(d.plant.n_x())}};
  std::vector<fs::path> inputs = d.files;
  for (auto a : c.mpc.algorithms)
    for (int n : c.mpc.n_z) {
      cells.push_back({a, n});
      inputs.push_back(l.rom(a, n));
    }
  for (size_t i = 1; i < cells.size(); ++i) require(l.rom(cells[i].a, cells[i].n_z), "fit");
  const std::string inputs_hash = hash_files(inputs);

  std::vector<ClosedLoopResult> res(cells.size());
  parallel_for(static_cast<int>(cells.size()), o.jobs, [&](int i) {
    const GridROM g = cells[i].a == Algorithm::exact
                          ? exact_grid_rom(d.plant, d.trims.trims)
                          : load_rom(l, cells[i].a, cells[i].n_z);
    auto ctrl = make_controller(g, readout);
    res[i] = closed_loop_run(d.plant, d.trims, *ctrl, sc, cfg);
  });
  std::string csv = provenance("mpc", c, inputs_hash);
  csv += csv_row({"algorithm", "n_z", "J", "J_normalized", "max_condensation_error",
                  "max_kkt_residual"});
  for (size_t i = 0; i < cells.size(); ++i)
    csv += csv_row({to_string(cells[i].a), std::to_string(cells[i].n_z), fmt(res[i].J),
                    fmt(res[i].J / res[0].J), fmt(res[i].max_condensation_error),
                    fmt(res[i].max_kkt_residual)});
  write_file(l.mpc(), csv);
  log_line(o, "mpc: " + std::to_string(cells.size()) + " closed-loop runs");
}

// Merges the per-scenario error tables into one long-format CSV.
inline void cmd_report(const ExperimentConfig& c, const RunOptions& o = {}) {
  const Layout l{c.output_dir};
  std::vector<fs::path> inputs;
  for (const auto& sc : c.scenarios) {
    require(l.errors(sc.name), "eval");
    inputs.push_back(l.errors(sc.name));
  }
  std::string out = provenance("report", c, hash_files(inputs));
  out += csv_row({"scenario", "algorithm", "n_z", "relative_error"});
  for (size_t s = 0; s < c.scenarios.size(); ++s) {
    std::istringstream is(read_file(inputs[s]));
    std::string line;
    std::vector<std::string> head;
    while (std::getline(is, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::vector<std::string> cells;
      std::stringstream ls(line);
      std::string cell;
      while (std::getline(ls, cell, ',')) cells.push_back(cell);
      if (head.empty()) {
        head = cells;
        continue;
      }
      for (size_t a = 1; a < cells.size() && a < head.size(); ++a)
        out += csv_row({c.scenarios[s].name, head[a], cells[0], cells[a]});
    }
  }
  write_file(l.report(), out);
  log_line(o, "report: " + l.report().string());
}

}  // namespace bmdrom
