#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "contourlab/classical.hpp"
#include "contourlab/errors.hpp"
#include "contourlab/hubbard.hpp"
#include "contourlab/lattice.hpp"
#include "contourlab/phasediag.hpp"
#include "contourlab/toy.hpp"

namespace contourlab {

inline const std::vector<std::string>& known_commands() {
  static const std::vector<std::string> c{"verify-classical", "verify-quantum", "scan",   "gaps",
                                          "decay",            "state-check",    "symmetry", "verify"};
  return c;
}

struct ModelSpec {
  std::string kind = "toy";  // "toy" or "hubbard"
  std::vector<int> extents{4, 4};
  int ell = 1;
  double J = 1.0, h = 0.0;  // toy
  hubbard::Params hubbard;
  std::vector<int> alphabet{0, 1, 2, 3};
};

struct ExperimentConfig {
  std::string command;
  ModelSpec model;
  std::vector<double> beta{1.0};  // +inf allowed for scan and symmetry
  int m_max = 8;
  int max_cubes = kDefaultMaxContourCubes;
  double tau = 0.0;
  std::optional<double> tolerance;  // per-command default when unset
  double epsilon = 0.05;
  std::string motive = "0";
  Axis u{"u", -4, 12, 400}, m{"m", -6, 18, 400};
  double tie_tol = 1e-9;
  std::uint64_t budget = kDefaultContourBudget;
  std::string output = "out";
  std::uint64_t seed = 1;
  int workers = 0;  // 0: hardware concurrency

  double resolved_tolerance() const {
    if (tolerance) return *tolerance;
    return command == "symmetry" ? 1e-8 : 1e-10;
  }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

inline double beta_value(const nlohmann::json& v) {
  if (v.is_string()) {
    if (v.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
    throw ConfigError("beta must be a number or \"inf\"");
  }
  const double b = v.get<double>();
  if (!(b > 0)) throw ConfigError("beta must be positive");
  return b;
}

inline nlohmann::json beta_json(double b) { return std::isinf(b) ? nlohmann::json("inf") : nlohmann::json(b); }

inline Axis parse_axis(const nlohmann::json& j, const std::string& name) {
  check_keys(j, {"lo", "hi", "n"}, "grid." + name);
  Axis a{name, j.at("lo").get<double>(), j.at("hi").get<double>(), j.at("n").get<int>()};
  if (a.n < 2) throw ConfigError("grid." + name + ".n must be >= 2");
  if (!(a.hi > a.lo)) throw ConfigError("grid." + name + " needs hi > lo");
  return a;
}

inline int local_state_of(const std::string& s) {
  for (int k = 0; k < 4; ++k)
    if (hubbard::kStateLabels[k] == s) return k;
  throw ConfigError("unknown Hubbard local state '" + s + "' (use 0, up, down, 2)");
}

inline ModelSpec parse_model(const nlohmann::json& j) {
  ModelSpec s;
  if (!j.is_object()) throw ConfigError("model must be a JSON object");
  s.kind = j.value("kind", std::string("toy"));
  if (s.kind == "toy") {
    check_keys(j, {"kind", "extents", "ell", "J", "h"}, "model");
    s.J = j.value("J", s.J);
    s.h = j.value("h", s.h);
  } else if (s.kind == "hubbard") {
    check_keys(j, {"kind", "extents", "ell", "t", "U", "W", "mu", "alphabet", "t_up_scale", "t_down_scale"}, "model");
    auto& p = s.hubbard;
    p.t = j.value("t", p.t);
    p.U = j.value("U", p.U);
    p.W = j.value("W", p.W);
    p.mu = j.value("mu", p.mu);
    p.t_up_scale = j.value("t_up_scale", p.t_up_scale);
    p.t_down_scale = j.value("t_down_scale", p.t_down_scale);
    if (j.contains("alphabet")) {
      s.alphabet.clear();
      for (const auto& a : j.at("alphabet")) s.alphabet.push_back(local_state_of(a.get<std::string>()));
      std::set<int> uniq(s.alphabet.begin(), s.alphabet.end());
      if (s.alphabet.empty() || uniq.size() != s.alphabet.size()) throw ConfigError("alphabet must be non-empty and distinct");
    }
  } else {
    throw ConfigError("model.kind must be \"toy\" or \"hubbard\"");
  }
  if (j.contains("extents")) s.extents = j.at("extents").get<std::vector<int>>();
  s.ell = j.value("ell", s.ell);
  s.hubbard.nu = static_cast<int>(s.extents.size());
  Torus(s.extents, s.ell);  // validates extents and cube side
  if (s.kind == "hubbard") s.hubbard.validate();
  return s;
}

inline nlohmann::json model_json(const ModelSpec& s) {
  nlohmann::json j{{"kind", s.kind}, {"extents", s.extents}, {"ell", s.ell}};
  if (s.kind == "toy") {
    j["J"] = s.J;
    j["h"] = s.h;
  } else {
    const auto& p = s.hubbard;
    j["t"] = p.t;
    j["U"] = p.U;
    j["W"] = p.W;
    j["mu"] = p.mu;
    j["t_up_scale"] = p.t_up_scale;
    j["t_down_scale"] = p.t_down_scale;
    std::vector<std::string> a;
    for (int k : s.alphabet) a.push_back(hubbard::kStateLabels[k]);
    j["alphabet"] = a;
  }
  return j;
}

}  // namespace detail

/// Strict parse: unknown keys, wrong types and out-of-range values raise
/// ConfigError. `command` overrides or must match the file's "command".
inline ExperimentConfig parse_config(const nlohmann::json& j, const std::string& command = "") {
  ExperimentConfig c;
  try {
    detail::check_keys(j, {"command", "model", "beta", "m_max", "max_cubes", "tau", "tolerance", "epsilon", "motive", "grid",
                           "tie_tol", "budget", "output", "seed", "workers"},
                       "config");
    c.command = j.value("command", command);
    if (!command.empty() && c.command != command)
      throw ConfigError("config is for '" + c.command + "' but '" + command + "' was requested");
    if (std::find(known_commands().begin(), known_commands().end(), c.command) == known_commands().end())
      throw ConfigError("unknown command '" + c.command + "'");
    if (j.contains("model")) c.model = detail::parse_model(j.at("model"));
    if (j.contains("beta")) {
      const auto& b = j.at("beta");
      c.beta.clear();
      if (b.is_array()) {
        for (const auto& v : b) c.beta.push_back(detail::beta_value(v));
      } else {
        c.beta.push_back(detail::beta_value(b));
      }
      if (c.beta.empty()) throw ConfigError("beta list is empty");
    }
    c.m_max = j.value("m_max", c.m_max);
    c.max_cubes = j.value("max_cubes", c.max_cubes);
    c.tau = j.value("tau", c.tau);
    if (j.contains("tolerance")) c.tolerance = j.at("tolerance").get<double>();
    c.epsilon = j.value("epsilon", c.epsilon);
    c.motive = j.value("motive", c.motive);
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      detail::check_keys(g, {"u", "m"}, "grid");
      if (g.contains("u")) c.u = detail::parse_axis(g.at("u"), "u");
      if (g.contains("m")) c.m = detail::parse_axis(g.at("m"), "m");
    }
    c.tie_tol = j.value("tie_tol", c.tie_tol);
    if (j.contains("budget")) {
      const double b = j.at("budget").get<double>();
      if (!(b >= 1) || b > 1e18) throw ConfigError("budget must be positive");
      c.budget = static_cast<std::uint64_t>(b);
    }
    c.output = j.value("output", c.output);
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  if (c.m_max < 0) throw ConfigError("m_max must be >= 0");
  if (c.max_cubes < 1) throw ConfigError("max_cubes must be >= 1");
  if (c.tolerance && !(*c.tolerance > 0)) throw ConfigError("tolerance must be positive");
  if (!(c.epsilon > 0)) throw ConfigError("epsilon must be positive");
  if (!(c.tie_tol >= 0)) throw ConfigError("tie_tol must be >= 0");
  if (c.workers < 0) throw ConfigError("workers must be >= 0");
  return c;
}

/// Every field with defaults filled in; used for the manifest and the hash.
inline nlohmann::json config_json(const ExperimentConfig& c) {
  nlohmann::json betas = nlohmann::json::array();
  for (double b : c.beta) betas.push_back(detail::beta_json(b));
  return {{"command", c.command},
          {"model", detail::model_json(c.model)},
          {"beta", betas},
          {"m_max", c.m_max},
          {"max_cubes", c.max_cubes},
          {"tau", c.tau},
          {"tolerance", c.resolved_tolerance()},
          {"epsilon", c.epsilon},
          {"motive", c.motive},
          {"grid",
           {{"u", {{"lo", c.u.lo}, {"hi", c.u.hi}, {"n", c.u.n}}}, {"m", {{"lo", c.m.lo}, {"hi", c.m.hi}, {"n", c.m.n}}}}},
          {"tie_tol", c.tie_tol},
          {"budget", c.budget},
          {"output", c.output},
          {"seed", c.seed},
          {"workers", c.workers}};
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

/// Hash of the result-determining fields (output path and worker count excluded).
inline std::string config_hash(const ExperimentConfig& c) {
  auto j = config_json(c);
  j.erase("output");
  j.erase("workers");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

struct ClassicalSetup {
  Torus torus;
  BlockInteraction block;
  MotivePartition partition;
  std::vector<Motive> motives;
};

inline ClassicalSetup classical_setup(const ModelSpec& s) {
  Torus t(s.extents, s.ell);
  if (s.kind == "toy") {
    auto m = toy::two_state(t.dimension(), s.J, s.h);
    return {t, m.block, m.partition, m.motives};
  }
  auto m = hubbard::classical_model(s.hubbard, s.alphabet);
  return {t, m.block, m.partition, m.motives};
}

inline const hubbard::Params& require_hubbard(const ModelSpec& s, const std::string& command) {
  if (s.kind != "hubbard") throw ConfigError(command + " needs a hubbard model");
  return s.hubbard;
}

}  // namespace contourlab
