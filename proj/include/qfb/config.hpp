#pragma once

// JSON run configuration.
//
// {
//   "engine": "master" | "trajectory" | "oracle" | "compare",   (or subcommand)
//   "model": {"preset": "two_level", "omega": 2, "gamma": 1,
//             "Z": {"sigma_x": 1.0} | {"sigma_z": 0.3} | <matrix>}
//          | {"preset": "cavity", "N": 4, "kappa": 1, "chi": 0}
//          | {"preset": "custom", "H": <matrix>, "c": <matrix>, "Z": <matrix>,
//             "observables": [{"label": "x", "matrix": <matrix>}, ...]},
//   "feedback": {"tau": 0.0, "k": 0},                    (both optional)
//   "integration": {"dt": 1e-3, "t_final": 5, "record_every": 1},
//   "initial_state": {"basis": 0} | {"psi": <vector>} | {"rho": <matrix>},
//   "n_traj": 4000, "master_seed": 1, "output": "out.csv", "threads": 0,
//   "discretization_allowance": 2.0, "n_sigma": 5.0, "joint_cap": 16384
// }
//
// A <matrix> is an array of rows; each entry is [re, im] or a real number.
// Unknown keys are errors.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "qfb/collision.hpp"
#include "qfb/error.hpp"
#include "qfb/linalg.hpp"
#include "qfb/model.hpp"
#include "qfb/trajectory.hpp"

namespace qfb {

enum class Engine { master, trajectory, oracle, compare };

inline const char* engine_name(Engine e) {
  switch (e) {
    case Engine::master: return "master";
    case Engine::trajectory: return "trajectory";
    case Engine::oracle: return "oracle";
    case Engine::compare: return "compare";
  }
  return "?";
}

inline std::optional<Engine> engine_from_name(const std::string& name) {
  for (Engine e : {Engine::master, Engine::trajectory, Engine::oracle, Engine::compare}) {
    if (name == engine_name(e)) return e;
  }
  return std::nullopt;
}

struct RunConfig {
  Engine engine = Engine::master;
  SystemModel model;
  nlohmann::json model_json;
  double tau = 0.0;
  std::optional<int> k;
  IntegrationConfig integration;
  InitialState initial = StateVector();
  nlohmann::json initial_json;
  std::optional<long> n_traj;
  std::uint64_t master_seed = 0;
  std::string output;
  unsigned threads = 0;
  double discretization_allowance = 2.0;
  double n_sigma = 5.0;
  Index joint_cap = kDefaultJointCap;
};

// Command-line values that take precedence over the file.
struct ConfigOverrides {
  std::optional<Engine> engine;
  std::optional<std::string> output;
  std::optional<std::uint64_t> seed;
  std::optional<long> n_traj;
  std::optional<unsigned> threads;
};

namespace detail {

using nlohmann::json;

class ConfigReader {
 public:
  std::vector<std::string> errors;

  void fail(const std::string& path, const std::string& msg) { errors.push_back(path + ": " + msg); }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

  bool object(const json& j, const std::string& path) {
    if (!j.is_object()) {
      fail(path, "must be an object");
      return false;
    }
    return true;
  }

  void allow_keys(const json& j, const std::string& path, std::initializer_list<const char*> keys) {
    for (const auto& [key, _] : j.items()) {
      bool known = false;
      for (const char* k : keys) known = known || key == k;
      if (!known) fail(join(path, key), "unknown field");
    }
  }

  std::optional<double> number(const json& j, const std::string& path, const char* key,
                               bool required) {
    if (!j.contains(key)) {
      if (required) fail(join(path, key), "required");
      return std::nullopt;
    }
    const json& v = j.at(key);
    if (!v.is_number()) {
      fail(join(path, key), "must be a number");
      return std::nullopt;
    }
    const double x = v.get<double>();
    if (!std::isfinite(x)) {
      fail(join(path, key), "must be finite");
      return std::nullopt;
    }
    return x;
  }

  std::optional<long long> integer(const json& j, const std::string& path, const char* key,
                                   bool required) {
    if (!j.contains(key)) {
      if (required) fail(join(path, key), "required");
      return std::nullopt;
    }
    const json& v = j.at(key);
    if (!v.is_number_integer()) {
      fail(join(path, key), "must be an integer");
      return std::nullopt;
    }
    return v.get<long long>();
  }

  std::optional<Complex> complex(const json& v, const std::string& path) {
    if (v.is_number()) return Complex(v.get<double>(), 0.0);
    if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number()) {
      return Complex(v[0].get<double>(), v[1].get<double>());
    }
    fail(path, "entry must be [re, im] or a number");
    return std::nullopt;
  }

  std::optional<StateVector> vector(const json& v, const std::string& path) {
    if (!v.is_array() || v.empty()) {
      fail(path, "must be a non-empty array");
      return std::nullopt;
    }
    StateVector out(static_cast<Index>(v.size()));
    for (size_t i = 0; i < v.size(); ++i) {
      auto z = complex(v[i], path + "[" + std::to_string(i) + "]");
      if (!z) return std::nullopt;
      out(static_cast<Index>(i)) = *z;
    }
    return out;
  }

  std::optional<Operator> matrix(const json& v, const std::string& path) {
    if (!v.is_array() || v.empty()) {
      fail(path, "must be a non-empty array of rows");
      return std::nullopt;
    }
    const auto n = static_cast<Index>(v.size());
    Operator out(n, n);
    for (Index i = 0; i < n; ++i) {
      const json& row = v[static_cast<size_t>(i)];
      if (!row.is_array() || static_cast<Index>(row.size()) != n) {
        fail(path, "row " + std::to_string(i) + " must have " + std::to_string(n) + " entries");
        return std::nullopt;
      }
      for (Index j = 0; j < n; ++j) {
        auto z = complex(row[static_cast<size_t>(j)],
                         path + "[" + std::to_string(i) + "][" + std::to_string(j) + "]");
        if (!z) return std::nullopt;
        out(i, j) = *z;
      }
    }
    return out;
  }

  bool hermitian(const Operator& op, const std::string& path) {
    const double d = hermitian_defect(op);
    if (d > 1e-12) {
      fail(path, "not Hermitian, defect " + format_defect(d));
      return false;
    }
    return true;
  }

  std::optional<SystemModel> model(const json& j) {
    const std::string path = "model";
    if (!object(j, path)) return std::nullopt;
    if (!j.contains("preset") || !j.at("preset").is_string()) {
      fail("model.preset", "required string: two_level, cavity or custom");
      return std::nullopt;
    }
    const std::string preset = j.at("preset").get<std::string>();
    const size_t before = errors.size();
    if (preset == "two_level") {
      allow_keys(j, path, {"preset", "omega", "gamma", "Z"});
      const auto omega = number(j, path, "omega", false);
      const auto gamma = number(j, path, "gamma", true);
      if (gamma && !(*gamma > 0.0)) fail("model.gamma", "must be positive");
      ZSpec z = NoFeedback{};
      if (j.contains("Z")) {
        const json& zj = j.at("Z");
        if (zj.is_object()) {
          allow_keys(zj, "model.Z", {"sigma_x", "sigma_z"});
          if (zj.size() != 1) {
            fail("model.Z", "give exactly one of sigma_x, sigma_z, or a matrix");
          } else if (auto x = number(zj, "model.Z", "sigma_x", false)) {
            z = SigmaXFeedback{*x};
          } else if (auto p = number(zj, "model.Z", "sigma_z", false)) {
            z = SigmaZFeedback{*p};
          }
        } else if (auto m = matrix(zj, "model.Z")) {
          if (m->rows() != 2) {
            fail("model.Z", "dimension " + std::to_string(m->rows()) + " does not match model dim 2");
          } else if (hermitian(*m, "model.Z")) {
            z = *m;
          }
        }
      }
      if (errors.size() != before) return std::nullopt;
      return preset_two_level(omega.value_or(0.0), *gamma, z);
    }
    if (preset == "cavity") {
      allow_keys(j, path, {"preset", "N", "kappa", "chi"});
      const auto n = integer(j, path, "N", true);
      const auto kappa = number(j, path, "kappa", true);
      const auto chi = number(j, path, "chi", false);
      if (n && *n < 2) fail("model.N", "must be >= 2");
      if (kappa && !(*kappa > 0.0)) fail("model.kappa", "must be positive");
      if (errors.size() != before) return std::nullopt;
      return preset_cavity(static_cast<Index>(*n), *kappa, chi.value_or(0.0));
    }
    if (preset == "custom") {
      allow_keys(j, path, {"preset", "H", "c", "Z", "observables"});
      SystemModel m;
      if (!j.contains("H")) fail("model.H", "required");
      if (!j.contains("c")) fail("model.c", "required");
      if (errors.size() != before) return std::nullopt;
      auto h = matrix(j.at("H"), "model.H");
      auto c = matrix(j.at("c"), "model.c");
      if (!h || !c) return std::nullopt;
      m.dim = h->rows();
      m.hamiltonian = *h;
      hermitian(*h, "model.H");
      auto same_dim = [&](const Operator& op, const std::string& p) {
        if (op.rows() != m.dim) {
          fail(p, "dimension " + std::to_string(op.rows()) + " does not match model dim " +
                      std::to_string(m.dim));
          return false;
        }
        return true;
      };
      if (same_dim(*c, "model.c")) m.collapse = *c;
      m.feedback_generator = zero_operator(m.dim);
      if (j.contains("Z")) {
        if (auto z = matrix(j.at("Z"), "model.Z"); z && same_dim(*z, "model.Z") && hermitian(*z, "model.Z")) {
          m.feedback_generator = *z;
        }
      }
      if (j.contains("observables")) {
        const json& obs = j.at("observables");
        if (!obs.is_array()) fail("model.observables", "must be an array");
        for (size_t i = 0; obs.is_array() && i < obs.size(); ++i) {
          const std::string p = "model.observables[" + std::to_string(i) + "]";
          if (!object(obs[i], p)) continue;
          allow_keys(obs[i], p, {"label", "matrix"});
          if (!obs[i].contains("label") || !obs[i].at("label").is_string()) {
            fail(p + ".label", "required string");
            continue;
          }
          if (!obs[i].contains("matrix")) {
            fail(p + ".matrix", "required");
            continue;
          }
          auto op = matrix(obs[i].at("matrix"), p + ".matrix");
          if (op && same_dim(*op, p + ".matrix") && hermitian(*op, p + ".matrix")) {
            m.observables.push_back({obs[i].at("label").get<std::string>(), *op});
          }
        }
      }
      if (errors.size() != before) return std::nullopt;
      for (const auto& v : validate(m)) fail("model", v);
      if (errors.size() != before) return std::nullopt;
      return m;
    }
    fail("model.preset", "unknown preset '" + preset + "'");
    return std::nullopt;
  }

  std::optional<InitialState> initial_state(const json& j, Index dim) {
    const std::string path = "initial_state";
    if (!object(j, path)) return std::nullopt;
    allow_keys(j, path, {"basis", "psi", "rho"});
    if (j.size() != 1) {
      fail(path, "give exactly one of basis, psi, rho");
      return std::nullopt;
    }
    if (j.contains("basis")) {
      auto b = integer(j, path, "basis", true);
      if (!b) return std::nullopt;
      if (*b < 0 || *b >= dim) {
        fail("initial_state.basis", "index out of range for dim " + std::to_string(dim));
        return std::nullopt;
      }
      return InitialState(basis_vector(dim, static_cast<Index>(*b)));
    }
    if (j.contains("psi")) {
      auto v = vector(j.at("psi"), "initial_state.psi");
      if (!v) return std::nullopt;
      if (v->size() != dim) {
        fail("initial_state.psi", "length " + std::to_string(v->size()) +
                                      " does not match model dim " + std::to_string(dim));
        return std::nullopt;
      }
      if (!(v->norm() > 0.0)) {
        fail("initial_state.psi", "zero vector");
        return std::nullopt;
      }
      v->normalize();
      return InitialState(*v);
    }
    auto m = matrix(j.at("rho"), "initial_state.rho");
    if (!m) return std::nullopt;
    if (m->rows() != dim) {
      fail("initial_state.rho", "dimension does not match model dim " + std::to_string(dim));
      return std::nullopt;
    }
    if (auto problem = DensityMatrix::check(*m, {})) {
      fail("initial_state.rho", *problem);
      return std::nullopt;
    }
    return InitialState(DensityMatrix(*m));
  }
};

}  // namespace detail

// Parses and validates a configuration. Throws ConfigError listing every
// problem with its field path.
inline RunConfig parse_config(const std::string& text, const ConfigOverrides& overrides = {}) {
  using nlohmann::json;
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  detail::ConfigReader rd;
  if (!rd.object(root, "config")) throw ConfigError(rd.errors);
  rd.allow_keys(root, "", {"engine", "model", "feedback", "integration", "initial_state",
                           "n_traj", "master_seed", "output", "threads",
                           "discretization_allowance", "n_sigma", "joint_cap"});

  RunConfig cfg;

  std::optional<Engine> engine;
  if (root.contains("engine")) {
    const json& e = root.at("engine");
    if (!e.is_string() || !engine_from_name(e.get<std::string>())) {
      rd.fail("engine", "must be one of master, trajectory, oracle, compare");
    } else {
      engine = engine_from_name(e.get<std::string>());
    }
  }
  if (overrides.engine) {
    if (engine && *engine != *overrides.engine) {
      rd.fail("engine", std::string("config says '") + engine_name(*engine) +
                            "' but subcommand is '" + engine_name(*overrides.engine) + "'");
    }
    engine = overrides.engine;
  }
  if (!engine && rd.errors.empty()) rd.fail("engine", "required (config key or subcommand)");
  if (engine) cfg.engine = *engine;

  if (!root.contains("model")) {
    rd.fail("model", "required");
  } else if (auto m = rd.model(root.at("model"))) {
    cfg.model = std::move(*m);
    cfg.model_json = root.at("model");
  }

  if (!root.contains("integration")) {
    rd.fail("integration", "required");
  } else if (const json& ij = root.at("integration"); rd.object(ij, "integration")) {
    rd.allow_keys(ij, "integration", {"dt", "t_final", "record_every"});
    const auto dt = rd.number(ij, "integration", "dt", true);
    const auto tf = rd.number(ij, "integration", "t_final", true);
    const auto re = rd.integer(ij, "integration", "record_every", false);
    if (dt && tf) {
      cfg.integration = {*dt, *tf, re ? static_cast<long>(*re) : 1L};
      try {
        cfg.integration.steps();
      } catch (const ConfigError& e) {
        for (const auto& p : e.problems()) rd.errors.push_back(p);
      }
    }
  }

  bool have_tau = false;
  if (root.contains("feedback")) {
    const json& fj = root.at("feedback");
    if (rd.object(fj, "feedback")) {
      rd.allow_keys(fj, "feedback", {"tau", "k"});
      if (auto tau = rd.number(fj, "feedback", "tau", false)) {
        if (*tau < 0.0) {
          rd.fail("feedback.tau", "must be non-negative");
        } else {
          cfg.tau = *tau;
          have_tau = true;
        }
      }
      if (auto k = rd.integer(fj, "feedback", "k", false)) {
        if (*k < 0 || *k > 40) {
          rd.fail("feedback.k", "must be in [0, 40]");
        } else {
          cfg.k = static_cast<int>(*k);
        }
      }
    }
  }

  if (auto n = rd.integer(root, "", "n_traj", false)) {
    if (*n < 1) rd.fail("n_traj", "must be >= 1");
    cfg.n_traj = static_cast<long>(*n);
  }
  if (root.contains("master_seed")) {
    const json& s = root.at("master_seed");
    if (!s.is_number_integer() || (s.is_number_integer() && !s.is_number_unsigned() && s.get<long long>() < 0)) {
      rd.fail("master_seed", "must be a non-negative integer");
    } else {
      cfg.master_seed = s.get<std::uint64_t>();
    }
  }
  if (root.contains("output")) {
    if (!root.at("output").is_string()) {
      rd.fail("output", "must be a string");
    } else {
      cfg.output = root.at("output").get<std::string>();
    }
  }
  if (auto t = rd.integer(root, "", "threads", false)) {
    if (*t < 0) rd.fail("threads", "must be >= 0");
    cfg.threads = static_cast<unsigned>(std::max<long long>(0, *t));
  }
  if (auto c = rd.number(root, "", "discretization_allowance", false)) {
    if (*c < 0.0) rd.fail("discretization_allowance", "must be non-negative");
    cfg.discretization_allowance = *c;
  }
  if (auto s = rd.number(root, "", "n_sigma", false)) {
    if (!(*s > 0.0)) rd.fail("n_sigma", "must be positive");
    cfg.n_sigma = *s;
  }
  if (auto cap = rd.integer(root, "", "joint_cap", false)) {
    if (*cap < 4) rd.fail("joint_cap", "must be >= 4");
    cfg.joint_cap = static_cast<Index>(*cap);
  }

  if (overrides.output) cfg.output = *overrides.output;
  if (overrides.seed) cfg.master_seed = *overrides.seed;
  if (overrides.n_traj) {
    if (*overrides.n_traj < 1) rd.fail("n_traj", "must be >= 1");
    cfg.n_traj = *overrides.n_traj;
  }
  if (overrides.threads) cfg.threads = *overrides.threads;

  if (cfg.model.dim > 0) {
    cfg.initial_json = root.contains("initial_state") ? root.at("initial_state")
                                                       : json{{"basis", 0}};
    if (auto init = rd.initial_state(cfg.initial_json, cfg.model.dim)) cfg.initial = *init;
  }

  if (cfg.output.empty()) rd.fail("output", "required (config key or --output)");

  // Engine-specific requirements.
  if (engine && rd.errors.empty()) {
    const double dt = cfg.integration.dt;
    const bool needs_ntraj = *engine == Engine::trajectory || *engine == Engine::compare;
    if (needs_ntraj && !cfg.n_traj) rd.fail("n_traj", "n_traj required");
    switch (*engine) {
      case Engine::master:
        if (cfg.tau != 0.0 || cfg.k.value_or(0) != 0) {
          rd.fail("feedback", "master engine requires zero delay (tau = 0, k = 0)");
        }
        break;
      case Engine::trajectory:
        if (cfg.k) {
          const double tau_k = *cfg.k * dt;
          if (have_tau && std::abs(tau_k - cfg.tau) > 1e-12 * std::max(1.0, cfg.tau)) {
            rd.fail("feedback", "k*dt = " + format_defect(tau_k) + " does not match tau = " +
                                    format_defect(cfg.tau));
          }
          cfg.tau = tau_k;
        }
        break;
      case Engine::oracle:
      case Engine::compare:
        if (!cfg.k) {
          if (*engine == Engine::oracle || !have_tau) {
            rd.fail("feedback.k", "k required");
            break;
          }
          const double ratio = cfg.tau / dt;
          const long k = std::lround(ratio);
          if (std::abs(static_cast<double>(k) * dt - cfg.tau) > 1e-12 * std::max(1.0, cfg.tau)) {
            rd.fail("feedback", "tau = " + format_defect(cfg.tau) +
                                    " is not an integer multiple of dt");
            break;
          }
          cfg.k = static_cast<int>(k);
        } else if (have_tau) {
          const double tau_k = *cfg.k * dt;
          if (std::abs(tau_k - cfg.tau) > 1e-12 * std::max(1.0, cfg.tau)) {
            rd.fail("feedback", "k*dt = " + format_defect(tau_k) + " does not match tau = " +
                                    format_defect(cfg.tau));
          }
        }
        cfg.tau = *cfg.k * dt;
        if (cfg.k && (cfg.model.dim << (*cfg.k + 1)) > cfg.joint_cap) {
          rd.fail("feedback.k", "joint dimension D*2^(k+1) exceeds joint_cap " +
                                    std::to_string(cfg.joint_cap));
        }
        break;
    }
  }

  if (!rd.errors.empty()) throw ConfigError(rd.errors);
  return cfg;
}

// Normalized configuration with defaults and overrides applied.
inline nlohmann::json effective_config(const RunConfig& cfg) {
  nlohmann::json j;
  j["engine"] = engine_name(cfg.engine);
  j["model"] = cfg.model_json;
  j["feedback"] = {{"tau", cfg.tau}};
  if (cfg.k) j["feedback"]["k"] = *cfg.k;
  j["integration"] = {{"dt", cfg.integration.dt},
                      {"t_final", cfg.integration.t_final},
                      {"record_every", cfg.integration.record_every}};
  j["initial_state"] = cfg.initial_json;
  if (cfg.n_traj) j["n_traj"] = *cfg.n_traj;
  j["master_seed"] = cfg.master_seed;
  j["output"] = cfg.output;
  j["threads"] = cfg.threads;
  j["discretization_allowance"] = cfg.discretization_allowance;
  j["n_sigma"] = cfg.n_sigma;
  j["joint_cap"] = cfg.joint_cap;
  return j;
}

}  // namespace qfb
