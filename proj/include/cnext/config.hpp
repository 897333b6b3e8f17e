#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "compress.hpp"
#include "errors.hpp"
#include "graph.hpp"
#include "objective.hpp"
#include "solver.hpp"

namespace cnext {

struct DataBlock {
  std::string source = "synthetic";  ///< synthetic | covtype
  std::size_t N = 500;
  std::size_t p = 20;
  std::string path;  ///< covtype CSV; falls back to $CNEXT_COVTYPE_PATH
  std::size_t p_reduced = 10;
  double noise = kRidgeNoiseStddev;
  double test_fraction = 0.2;  ///< synthetic logistic only
};

struct ObjectiveBlock {
  ObjectiveKind kind = ObjectiveKind::Ridge;
  double lambda = 0.5;
  DataBlock data;
};

struct NetworkBlock {
  TopologyKind topology = TopologyKind::Ring;
  std::size_t n = 10;
  std::size_t degree = 6;
};

struct SchemeBlock {
  SchemeKind kind = SchemeKind::QNormBBitQuant;
  int b = 2;
  std::size_t k = 5;
};

/// One entry of a comparison. Unset fields inherit from the base config.
struct Variant {
  std::string label;
  Mode mode = Mode::CNEXT;
  SchemeBlock scheme;
  std::optional<double> eta, gamma, alpha_x, alpha_y;
};

struct TheoryBlock {
  std::optional<std::vector<double>> eps;  ///< searched when absent
  double tau_x = 0.0;                      ///< 0 picks the midpoint
  double tau_y = 0.0;
  std::string constants;                   ///< verify-ops manifest to read C, r, delta from
};

struct ExperimentConfig {
  ObjectiveBlock objective;
  NetworkBlock network;
  SchemeBlock scheme;
  HyperParams hp;
  Mode mode = Mode::CNEXT;
  std::uint64_t seed = kDefaultSeed;
  std::vector<std::uint64_t> seeds;  ///< non-empty selects seed averaging
  std::string output = "out";
  std::size_t threads = 1;
  std::size_t calibration_draws = 10000;
  std::vector<Variant> variants;
  TheoryBlock theory;
};

struct StepDefaults {
  double eta;
  double gamma;
};

/// Step sizes used in the published experiments for each scheme, objective
/// and topology.
inline StepDefaults paper_steps(ObjectiveKind obj, SchemeKind s, TopologyKind topo) {
  if (obj == ObjectiveKind::Ridge) {
    switch (s) {
      case SchemeKind::RandomK: return {0.0012, 0.6};
      case SchemeKind::TopK: return {0.006, 0.6};
      case SchemeKind::QNormSigned: return {0.021, 0.6};
      default: return {0.0095, 0.6};
    }
  }
  const bool ring = topo != TopologyKind::CirculantExpander;
  switch (s) {
    case SchemeKind::TopK: return ring ? StepDefaults{0.098, 0.40} : StepDefaults{0.08, 0.21};
    case SchemeKind::QNormSigned: return ring ? StepDefaults{0.095, 0.35} : StepDefaults{0.095, 0.30};
    default: return ring ? StepDefaults{0.093, 0.35} : StepDefaults{0.09, 0.20};
  }
}

/// Defaults for an objective kind before any user values are applied.
inline ExperimentConfig default_config(ObjectiveKind kind = ObjectiveKind::Ridge) {
  ExperimentConfig c;
  c.objective.kind = kind;
  if (kind == ObjectiveKind::Ridge) {
    c.objective.lambda = 0.5;
    c.objective.data = DataBlock{};
    c.hp.alpha_x = c.hp.alpha_y = 1.0;
    c.hp.T = 5000;
  } else {
    c.objective.lambda = 0.1;
    c.objective.data.source = "covtype";
    c.objective.data.p = 10;
    c.objective.data.N = 5000;
    c.hp.alpha_x = c.hp.alpha_y = 0.5;
    c.hp.T = 1000;
  }
  const auto st = paper_steps(kind, c.scheme.kind, c.network.topology);
  c.hp.eta = st.eta;
  c.hp.gamma = st.gamma;
  return c;
}

namespace detail {

using nlohmann::json;

/// 1-based line of a byte offset.
inline int line_of(std::string_view text, std::size_t byte) {
  int line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

inline void check_keys(const json& obj, const std::string& where,
                       std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw ConfigError(where, "expected an object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(where.empty() ? key : where + "." + key, "unknown key");
  }
}

template <typename T>
T get_as(const json& j, const std::string& field) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(field, "wrong type (" + std::string(j.type_name()) + ")");
  }
}

inline double get_number(const json& j, const std::string& field) {
  if (!j.is_number()) throw ConfigError(field, "expected a number");
  return j.get<double>();
}

inline std::size_t get_count(const json& j, const std::string& field) {
  if (!j.is_number_integer() || j.get<long long>() < 0)
    throw ConfigError(field, "expected a non-negative integer");
  return j.get<std::size_t>();
}

template <typename T>
void read_if(const json& j, std::string_view key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  const std::string field = where + "." + std::string(key);
  const auto& v = j.at(key);
  if constexpr (std::is_same_v<T, double>) out = get_number(v, field);
  else if constexpr (std::is_same_v<T, std::size_t>) out = get_count(v, field);
  else out = get_as<T>(v, field);
}

inline ObjectiveKind parse_objective_kind(const std::string& s, const std::string& field) {
  if (s == "ridge") return ObjectiveKind::Ridge;
  if (s == "logistic") return ObjectiveKind::Logistic;
  throw ConfigError(field, "unknown objective '" + s + "' (ridge|logistic)");
}

inline TopologyKind parse_topology(const std::string& s, const std::string& field) {
  if (s == "ring") return TopologyKind::Ring;
  if (s == "expander") return TopologyKind::CirculantExpander;
  throw ConfigError(field, "unknown topology '" + s + "' (ring|expander)");
}

inline SchemeBlock parse_scheme_block(const json& j, SchemeBlock base, const std::string& where) {
  check_keys(j, where, {"kind", "b", "k"});
  if (j.contains("kind")) {
    const auto name = get_as<std::string>(j.at("kind"), where + ".kind");
    const auto kind = parse_scheme_kind(name);
    if (!kind)
      throw ConfigError(where + ".kind",
                        "unknown scheme '" + name + "' (identity|qnbbq|randomk|topk|qnormsigned)");
    base.kind = *kind;
  }
  if (j.contains("b")) base.b = static_cast<int>(get_count(j.at("b"), where + ".b"));
  read_if(j, "k", base.k, where);
  return base;
}

inline Mode parse_mode_field(const json& j, const std::string& field) {
  const auto name = get_as<std::string>(j, field);
  const auto m = parse_mode(name);
  if (!m) throw ConfigError(field, "unknown mode '" + name + "' (cnext|first_order_gt|uncompressed_giant)");
  return *m;
}

inline void apply_json(ExperimentConfig& c, const json& root) {
  check_keys(root, "", {"objective", "network", "scheme", "hyperparams", "mode", "seed", "seeds",
                        "output", "threads", "calibration_draws", "variants", "theory"});

  // The objective kind and scheme pick the defaults, so they are read first.
  if (root.contains("objective") && root.at("objective").contains("kind")) {
    const auto kind = parse_objective_kind(
        get_as<std::string>(root.at("objective").at("kind"), "objective.kind"), "objective.kind");
    c = default_config(kind);
  }
  if (root.contains("network")) {
    const auto& j = root.at("network");
    check_keys(j, "network", {"topology", "n", "degree"});
    if (j.contains("topology"))
      c.network.topology =
          parse_topology(get_as<std::string>(j.at("topology"), "network.topology"), "network.topology");
    read_if(j, "n", c.network.n, "network");
    read_if(j, "degree", c.network.degree, "network");
  }
  if (root.contains("scheme")) c.scheme = parse_scheme_block(root.at("scheme"), c.scheme, "scheme");
  const auto st = paper_steps(c.objective.kind, c.scheme.kind, c.network.topology);
  c.hp.eta = st.eta;
  c.hp.gamma = st.gamma;

  if (root.contains("objective")) {
    const auto& j = root.at("objective");
    check_keys(j, "objective", {"kind", "lambda", "data"});
    read_if(j, "lambda", c.objective.lambda, "objective");
    if (j.contains("data")) {
      const auto& d = j.at("data");
      check_keys(d, "objective.data", {"source", "N", "p", "path", "p_reduced", "noise", "test_fraction"});
      auto& db = c.objective.data;
      read_if(d, "source", db.source, "objective.data");
      if (db.source != "synthetic" && db.source != "covtype")
        throw ConfigError("objective.data.source", "expected synthetic or covtype");
      read_if(d, "N", db.N, "objective.data");
      read_if(d, "p", db.p, "objective.data");
      read_if(d, "path", db.path, "objective.data");
      read_if(d, "p_reduced", db.p_reduced, "objective.data");
      read_if(d, "noise", db.noise, "objective.data");
      read_if(d, "test_fraction", db.test_fraction, "objective.data");
    }
  }
  if (root.contains("hyperparams")) {
    const auto& j = root.at("hyperparams");
    check_keys(j, "hyperparams", {"eta", "gamma", "alpha_x", "alpha_y", "T", "tol"});
    read_if(j, "eta", c.hp.eta, "hyperparams");
    read_if(j, "gamma", c.hp.gamma, "hyperparams");
    read_if(j, "alpha_x", c.hp.alpha_x, "hyperparams");
    read_if(j, "alpha_y", c.hp.alpha_y, "hyperparams");
    read_if(j, "T", c.hp.T, "hyperparams");
    read_if(j, "tol", c.hp.tol, "hyperparams");
  }
  if (root.contains("mode")) c.mode = parse_mode_field(root.at("mode"), "mode");
  if (root.contains("seed")) c.seed = get_count(root.at("seed"), "seed");
  if (root.contains("seeds")) {
    const auto& s = root.at("seeds");
    if (!s.is_array()) throw ConfigError("seeds", "expected an array of integers");
    c.seeds.clear();
    for (std::size_t i = 0; i < s.size(); ++i)
      c.seeds.push_back(get_count(s[i], "seeds[" + std::to_string(i) + "]"));
  }
  read_if(root, "output", c.output, "");
  read_if(root, "threads", c.threads, "");
  read_if(root, "calibration_draws", c.calibration_draws, "");
  if (root.contains("variants")) {
    const auto& vs = root.at("variants");
    if (!vs.is_array()) throw ConfigError("variants", "expected an array");
    for (std::size_t i = 0; i < vs.size(); ++i) {
      const std::string where = "variants[" + std::to_string(i) + "]";
      const auto& v = vs[i];
      check_keys(v, where, {"label", "mode", "scheme", "eta", "gamma", "alpha_x", "alpha_y"});
      Variant var;
      var.mode = c.mode;
      var.scheme = c.scheme;
      if (v.contains("mode")) var.mode = parse_mode_field(v.at("mode"), where + ".mode");
      if (v.contains("scheme")) var.scheme = parse_scheme_block(v.at("scheme"), c.scheme, where + ".scheme");
      for (auto [key, slot] : {std::pair{"eta", &var.eta}, std::pair{"gamma", &var.gamma},
                               std::pair{"alpha_x", &var.alpha_x}, std::pair{"alpha_y", &var.alpha_y}})
        if (v.contains(key)) *slot = get_number(v.at(key), where + "." + key);
      var.label = v.contains("label") ? get_as<std::string>(v.at("label"), where + ".label")
                                      : std::string(to_string(var.mode)) + ":" +
                                            std::string(to_string(var.scheme.kind));
      c.variants.push_back(std::move(var));
    }
  }
  if (root.contains("theory")) {
    const auto& j = root.at("theory");
    check_keys(j, "theory", {"eps", "tau_x", "tau_y", "constants"});
    if (j.contains("eps")) {
      auto eps = get_as<std::vector<double>>(j.at("eps"), "theory.eps");
      if (eps.size() != 5) throw ConfigError("theory.eps", "expected 5 entries");
      c.theory.eps = std::move(eps);
    }
    read_if(j, "tau_x", c.theory.tau_x, "theory");
    read_if(j, "tau_y", c.theory.tau_y, "theory");
    read_if(j, "constants", c.theory.constants, "theory");
  }
}

}  // namespace detail

/// Referential checks that need several blocks at once.
inline void validate_config(const ExperimentConfig& c) {
  const auto p = c.objective.data.source == "covtype" ? c.objective.data.p_reduced : c.objective.data.p;
  if (p == 0) throw ConfigError("objective.data.p", "must be positive");
  if (!(c.objective.lambda > 0.0)) throw ConfigError("objective.lambda", "must be positive");
  if (c.network.n == 0) throw ConfigError("network.n", "must be positive");
  if (c.network.topology == TopologyKind::CirculantExpander &&
      (c.network.degree == 0 || c.network.degree % 2 != 0 || c.network.degree >= c.network.n))
    throw ConfigError("network.degree", "must be even, positive and below n");
  if (c.objective.data.source == "synthetic" && c.objective.data.N < c.network.n)
    throw ConfigError("objective.data.N", "fewer samples than agents");
  auto check_scheme = [&](const SchemeBlock& s, const std::string& where) {
    if ((s.kind == SchemeKind::RandomK || s.kind == SchemeKind::TopK) && (s.k == 0 || s.k > p))
      throw ConfigError(where + ".k", "must lie in [1, p=" + std::to_string(p) + "]");
    if (s.kind == SchemeKind::QNormBBitQuant && s.b < 1) throw ConfigError(where + ".b", "must be >= 1");
  };
  check_scheme(c.scheme, "scheme");
  for (std::size_t i = 0; i < c.variants.size(); ++i)
    check_scheme(c.variants[i].scheme, "variants[" + std::to_string(i) + "].scheme");
  if (!(c.hp.eta >= 0.0)) throw ConfigError("hyperparams.eta", "must be >= 0");
  if (!(c.hp.gamma >= 0.0 && c.hp.gamma <= 1.0)) throw ConfigError("hyperparams.gamma", "must lie in [0, 1]");
  if (!(c.hp.alpha_x > 0.0)) throw ConfigError("hyperparams.alpha_x", "must be positive");
  if (!(c.hp.alpha_y > 0.0)) throw ConfigError("hyperparams.alpha_y", "must be positive");
  if (c.threads == 0) throw ConfigError("threads", "must be positive");
}

/// Parses a JSON config text on top of the defaults.
inline ExperimentConfig parse_config(std::string_view text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("", std::string("malformed config: ") + e.what(),
                      detail::line_of(text, e.byte == 0 ? 0 : e.byte - 1));
  }
  ExperimentConfig c = default_config();
  detail::apply_json(c, root);
  validate_config(c);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace cnext
