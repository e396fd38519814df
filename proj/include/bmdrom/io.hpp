#pragma once

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "bmdrom/errors.hpp"
#include "bmdrom/gramians.hpp"
#include "bmdrom/linalg.hpp"
#include "bmdrom/lpv.hpp"
#include "bmdrom/plant.hpp"
#include "bmdrom/rom_bmd.hpp"
#include "bmdrom/snapshots.hpp"

namespace bmdrom {

class IoError : public Error {
 public:
  using Error::Error;
};

// Shortest round-trip decimal form.
inline std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw IoError("cannot parse number '" + std::string(s) + "'");
  return v;
}

// Text archive: "#manifest" key=value lines, then "#block name rows cols"
// headers each followed by `rows` CSV lines (row-major).
struct Archive {
  std::map<std::string, std::string> manifest;
  std::vector<std::pair<std::string, Matrix>> blocks;

  void put(const std::string& name, const Matrix& m) { blocks.emplace_back(name, m); }
  void put(const std::string& name, const Vector& v) {
    blocks.emplace_back(name, Matrix(v));
  }
  const Matrix& get(const std::string& name) const {
    for (const auto& [n, m] : blocks)
      if (n == name) return m;
    throw IoError("archive has no block '" + name + "'");
  }
  bool has(const std::string& name) const {
    for (const auto& b : blocks)
      if (b.first == name) return true;
    return false;
  }
  Vector vec(const std::string& name) const {
    const Matrix& m = get(name);
    if (m.cols() != 1 && m.rows() != 0) throw IoError("block '" + name + "' is not a vector");
    return m.col(0);
  }
  const std::string& meta(const std::string& key) const {
    auto it = manifest.find(key);
    if (it == manifest.end()) throw IoError("archive manifest lacks '" + key + "'");
    return it->second;
  }
};

inline void write_archive(std::ostream& os, const Archive& a) {
  os << "#manifest\n";
  for (const auto& [k, v] : a.manifest) os << k << '=' << v << '\n';
  for (const auto& [name, m] : a.blocks) {
    os << "#block " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        if (j) os << ',';
        os << fmt(m(i, j));
      }
      os << '\n';
    }
  }
}

inline Archive read_archive(std::istream& is) {
  Archive a;
  std::string line;
  if (!std::getline(is, line) || line != "#manifest")
    throw IoError("archive must start with #manifest");
  while (std::getline(is, line)) {
    if (line.rfind("#block ", 0) == 0) {
      std::istringstream hs(line.substr(7));
      std::string name;
      Eigen::Index r = 0, c = 0;
      if (!(hs >> name >> r >> c) || r < 0 || c < 0)
        throw IoError("malformed block header '" + line + "'");
      Matrix m(r, c);
      for (Eigen::Index i = 0; i < r; ++i) {
        if (!std::getline(is, line)) throw IoError("truncated block " + name);
        std::string_view sv(line);
        for (Eigen::Index j = 0; j < c; ++j) {
          const size_t comma = sv.find(',');
          if ((j + 1 < c) != (comma != std::string_view::npos))
            throw IoError("wrong column count in block " + name);
          m(i, j) = parse_double(sv.substr(0, comma));
          if (comma != std::string_view::npos) sv.remove_prefix(comma + 1);
        }
      }
      a.blocks.emplace_back(name, std::move(m));
    } else if (!line.empty()) {
      const auto eq = line.find('=');
      if (eq == std::string::npos || !a.blocks.empty())
        throw IoError("unexpected line '" + line + "'");
      a.manifest[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }
  return a;
}

inline void save_archive(const std::string& path, const Archive& a) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  write_archive(os, a);
  if (!os) throw IoError("write failed for " + path);
}

inline Archive load_archive(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path);
  return read_archive(is);
}

inline std::string join(const std::vector<double>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
  return s;
}

inline std::vector<double> split_doubles(const std::string& s) {
  std::vector<double> out;
  size_t start = 0;
  while (start < s.size()) {
    size_t comma = s.find(',', start);
    if (comma == std::string::npos) comma = s.size();
    out.push_back(parse_double(std::string_view(s).substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

inline std::string idx(const std::string& base, size_t j) {
  return base + "_" + std::to_string(j);
}

inline Archive to_archive(const HighOrderPlant& p) {
  Archive a;
  a.manifest["kind"] = "plant";
  a.manifest["grid_rhos"] = join(p.grid_rhos);
  a.manifest["dt"] = fmt(p.dt);
  for (size_t j = 0; j < p.systems.size(); ++j) {
    const auto& s = p.systems[j];
    a.put(idx("A", j), s.A);
    a.put(idx("B", j), s.B);
    a.put(idx("C", j), s.C);
    a.put(idx("D", j), s.D);
    a.put(idx("R", j), s.R);
    a.put(idx("P", j), s.P);
    a.put(idx("ubar", j), p.trim_inputs[j]);
  }
  return a;
}

inline HighOrderPlant plant_from_archive(const Archive& a) {
  if (a.meta("kind") != "plant") throw IoError("archive is not a plant");
  HighOrderPlant p;
  p.grid_rhos = split_doubles(a.meta("grid_rhos"));
  p.dt = parse_double(a.meta("dt"));
  for (size_t j = 0; j < p.grid_rhos.size(); ++j) {
    p.systems.push_back(StateSpace{a.get(idx("A", j)), a.get(idx("B", j)),
                                   a.get(idx("C", j)), a.get(idx("D", j)),
                                   a.get(idx("R", j)), a.get(idx("P", j))});
    p.trim_inputs.push_back(a.vec(idx("ubar", j)));
  }
  validate(p);
  return p;
}

inline void save_plant(const std::string& path, const HighOrderPlant& p) {
  save_archive(path, to_archive(p));
}
inline HighOrderPlant load_plant(const std::string& path) {
  return plant_from_archive(load_archive(path));
}

inline Archive to_archive(const GridROM& g) {
  Archive a;
  a.manifest["kind"] = "grid_rom";
  a.manifest["algorithm"] = to_string(g.algorithm);
  a.manifest["grid_rhos"] = join(g.grid_rhos);
  a.manifest["dt"] = fmt(g.dt);
  a.manifest["n_z"] = std::to_string(g.n_z());
  a.manifest["full_state_trims"] = g.xbar.empty() ? "0" : "1";
  for (size_t j = 0; j < g.size(); ++j) {
    const auto& m = g.models[j];
    a.put(idx("F", j), m.F);
    a.put(idx("G", j), m.G);
    a.put(idx("H", j), m.H);
    a.put(idx("D", j), m.D);
    a.put(idx("L", j), m.L);
    a.put(idx("P", j), m.P);
    // one shared lift/test is stored once for state-consistent models
    if (j == 0 || m.lift != g.models[0].lift) a.put(idx("lift", j), m.lift);
    if (j == 0 || m.test != g.models[0].test) a.put(idx("test", j), m.test);
    a.put(idx("zbar", j), g.zbar[j]);
    a.put(idx("ubar", j), g.ubar[j]);
    a.put(idx("ybar", j), g.ybar[j]);
    if (!g.xbar.empty()) a.put(idx("xbar", j), g.xbar[j]);
  }
  return a;
}

inline GridROM grid_rom_from_archive(const Archive& a) {
  if (a.meta("kind") != "grid_rom") throw IoError("archive is not a GridROM");
  GridROM g;
  g.algorithm = algorithm_from(a.meta("algorithm"));
  g.grid_rhos = split_doubles(a.meta("grid_rhos"));
  g.dt = parse_double(a.meta("dt"));
  const bool full = a.meta("full_state_trims") == "1";
  for (size_t j = 0; j < g.grid_rhos.size(); ++j) {
    ReducedModel m;
    m.F = a.get(idx("F", j));
    m.G = a.get(idx("G", j));
    m.H = a.get(idx("H", j));
    m.D = a.get(idx("D", j));
    m.L = a.get(idx("L", j));
    m.P = a.get(idx("P", j));
    m.lift = a.has(idx("lift", j)) ? a.get(idx("lift", j)) : a.get(idx("lift", 0));
    m.test = a.has(idx("test", j)) ? a.get(idx("test", j)) : a.get(idx("test", 0));
    m.rho = g.grid_rhos[j];
    g.models.push_back(std::move(m));
    g.zbar.push_back(a.vec(idx("zbar", j)));
    g.ubar.push_back(a.vec(idx("ubar", j)));
    g.ybar.push_back(a.vec(idx("ybar", j)));
    if (full) g.xbar.push_back(a.vec(idx("xbar", j)));
  }
  validate(g);
  return g;
}

inline Archive to_archive(const GramianPair& g) {
  Archive a;
  a.manifest["kind"] = "gramians";
  a.manifest["horizon"] = std::to_string(g.horizon);
  a.manifest["method_o"] = to_string(g.method_o);
  a.manifest["truncation_warning"] = g.truncation_warning ? "1" : "0";
  a.put("Wc", g.Wc);
  a.put("Wo", g.Wo);
  return a;
}

inline GramianPair gramians_from_archive(const Archive& a) {
  if (a.meta("kind") != "gramians") throw IoError("archive is not a Gramian pair");
  GramianPair g;
  g.horizon = std::stoi(a.meta("horizon"));
  g.method_o = observability_method_from(a.meta("method_o"));
  g.truncation_warning = a.meta("truncation_warning") == "1";
  g.Wc = a.get("Wc");
  g.Wo = a.get("Wo");
  return g;
}

inline Archive to_archive(const ObliqueProjector& p) {
  Archive a;
  a.manifest["kind"] = "projector";
  a.manifest["grid_points"] = std::to_string(p.W.size());
  a.put("V", p.V);
  for (size_t j = 0; j < p.W.size(); ++j) {
    a.put(idx("W", j), p.W[j]);
    a.put(idx("hankel", j), p.hankel[j]);
  }
  return a;
}

// Trajectory CSV: header t,x_1..,u_1..,y_1.. and one row per sample.
inline void save_trajectory_csv(const std::string& path, const TrajectorySet& t) {
  validate(t);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os << 't';
  for (Eigen::Index i = 0; i < t.states.rows(); ++i) os << ",x_" << i + 1;
  for (Eigen::Index i = 0; i < t.inputs.rows(); ++i) os << ",u_" << i + 1;
  for (Eigen::Index i = 0; i < t.outputs.rows(); ++i) os << ",y_" << i + 1;
  os << '\n';
  for (Eigen::Index k = 0; k < t.states.cols(); ++k) {
    os << fmt(static_cast<double>(k) * t.dt);
    for (Eigen::Index i = 0; i < t.states.rows(); ++i) os << ',' << fmt(t.states(i, k));
    for (Eigen::Index i = 0; i < t.inputs.rows(); ++i) os << ',' << fmt(t.inputs(i, k));
    for (Eigen::Index i = 0; i < t.outputs.rows(); ++i) os << ',' << fmt(t.outputs(i, k));
    os << '\n';
  }
  // sidecar with trim, parameter, and step
  nlohmann::ordered_json j;
  j["rho"] = t.rho;
  j["dt"] = t.dt;
  j["trim"]["x"] = std::vector<double>(t.trim.x.data(), t.trim.x.data() + t.trim.x.size());
  j["trim"]["u"] = std::vector<double>(t.trim.u.data(), t.trim.u.data() + t.trim.u.size());
  j["trim"]["y"] = std::vector<double>(t.trim.y.data(), t.trim.y.data() + t.trim.y.size());
  std::ofstream ts(path + ".trim.json", std::ios::binary);
  if (!ts) throw IoError("cannot write trim sidecar for " + path);
  ts << j.dump(1) << '\n';
}

inline TrajectorySet load_trajectory_csv(const std::string& path) {
  std::ifstream ts(path + ".trim.json", std::ios::binary);
  if (!ts) throw IoError("missing trim sidecar for " + path);
  const auto j = nlohmann::json::parse(ts);
  auto to_vec = [](const std::vector<double>& v) {
    return Vector(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  TrajectorySet t;
  t.rho = j.at("rho").get<double>();
  t.dt = j.at("dt").get<double>();
  t.trim.x = to_vec(j.at("trim").at("x").get<std::vector<double>>());
  t.trim.u = to_vec(j.at("trim").at("u").get<std::vector<double>>());
  t.trim.y = to_vec(j.at("trim").at("y").get<std::vector<double>>());
  const Eigen::Index nx = t.trim.x.size(), nu = t.trim.u.size(), ny = t.trim.y.size();

  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path);
  std::string line;
  if (!std::getline(is, line) || line.rfind("t,", 0) != 0)
    throw IoError("trajectory CSV lacks its header row");
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> r = split_doubles(line);
    if (static_cast<Eigen::Index>(r.size()) != 1 + nx + nu + ny)
      throw IoError("trajectory row width does not match the trim sidecar");
    rows.push_back(std::move(r));
  }
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  t.states.resize(nx, n);
  t.inputs.resize(nu, n);
  t.outputs.resize(ny, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& r = rows[k];
    for (Eigen::Index i = 0; i < nx; ++i) t.states(i, k) = r[1 + i];
    for (Eigen::Index i = 0; i < nu; ++i) t.inputs(i, k) = r[1 + nx + i];
    for (Eigen::Index i = 0; i < ny; ++i) t.outputs(i, k) = r[1 + nx + nu + i];
  }
  validate(t);
  return t;
}

}  // namespace bmdrom
