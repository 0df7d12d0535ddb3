#include "estrack/config.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "estrack/errors.hpp"

namespace estrack {

namespace {

int line_of(const YAML::Node& n) {
  const YAML::Mark m = n.Mark();
  return m.is_null() ? 0 : m.line + 1;
}

void check_keys(const YAML::Node& node, const std::string& section, const std::set<std::string>& allowed) {
  for (auto it = node.begin(); it != node.end(); ++it) {
    const std::string key = it->first.as<std::string>();
    if (!allowed.count(key)) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      throw ConfigError("unknown key '" + key + "' in " + section + " (allowed: " + list + ")", line_of(it->first));
    }
  }
}

YAML::Node require_map(const YAML::Node& node, const std::string& section) {
  if (!node.IsMap()) throw ConfigError(section + " must be a mapping", line_of(node));
  return node;
}

double as_double(const YAML::Node& n, const std::string& what) {
  if (!n.IsScalar()) throw ConfigError(what + " must be a number", line_of(n));
  try {
    const double v = n.as<double>();
    if (!std::isfinite(v)) throw ConfigError(what + " must be finite", line_of(n));
    return v;
  } catch (const YAML::BadConversion&) {
    throw ConfigError(what + " must be a number, got '" + n.Scalar() + "'", line_of(n));
  }
}

int as_int(const YAML::Node& n, const std::string& what) {
  if (!n.IsScalar()) throw ConfigError(what + " must be an integer", line_of(n));
  try {
    return n.as<int>();
  } catch (const YAML::BadConversion&) {
    throw ConfigError(what + " must be an integer, got '" + n.Scalar() + "'", line_of(n));
  }
}

bool as_bool(const YAML::Node& n, const std::string& what) {
  if (!n.IsScalar()) throw ConfigError(what + " must be true or false", line_of(n));
  try {
    return n.as<bool>();
  } catch (const YAML::BadConversion&) {
    throw ConfigError(what + " must be true or false, got '" + n.Scalar() + "'", line_of(n));
  }
}

std::string as_string(const YAML::Node& n, const std::string& what) {
  if (!n.IsScalar()) throw ConfigError(what + " must be a string", line_of(n));
  return n.Scalar();
}

Vec2 as_vec2(const YAML::Node& n, const std::string& what) {
  if (!n.IsSequence() || n.size() != 2) throw ConfigError(what + " must be a list of two numbers", line_of(n));
  return {as_double(n[0], what + "[0]"), as_double(n[1], what + "[1]")};
}

std::vector<double> as_list(const YAML::Node& n, const std::string& what) {
  if (!n.IsSequence() || n.size() == 0) throw ConfigError(what + " must be a non-empty list", line_of(n));
  std::vector<double> out;
  for (std::size_t i = 0; i < n.size(); ++i) out.push_back(as_double(n[i], what + "[" + std::to_string(i) + "]"));
  return out;
}

// Reads `key` from a mapping into `out` if present.
template <class T, class F>
void optional_field(const YAML::Node& map, const char* key, const std::string& section, T& out, F convert) {
  const YAML::Node n = map[key];
  if (n) out = convert(n, section + "." + key);
}

// Re-raises a ContractError from a validate() call at the given node.
template <class F>
void validate_at(const YAML::Node& node, F check) {
  try {
    check();
  } catch (const ContractError& e) {
    throw ConfigError(e.what(), line_of(node));
  }
}

void check_positive(const YAML::Node& map, const char* key, double v, const std::string& section) {
  if (!(v > 0.0)) throw ConfigError(section + "." + key + " must be positive", line_of(map[key] ? map[key] : map));
}

CstrParams parse_plant(const YAML::Node& node) {
  if (!node) throw ConfigError("missing 'plant': list the parameters or set it to paper-defaults");
  if (node.IsScalar()) {
    if (node.Scalar() != "paper-defaults") {
      throw ConfigError("plant must be a mapping or the literal paper-defaults", line_of(node));
    }
    return CstrParams::nominal();
  }
  require_map(node, "plant");
  static const std::set<std::string> numeric = {"reaction_order", "phi1", "phi2", "k1", "k2", "kappa",
                                                "u1_min", "u1_max", "u2_min", "u2_max"};
  std::set<std::string> allowed = numeric;
  allowed.insert("preset");
  allowed.insert("variant");
  check_keys(node, "plant", allowed);

  CstrParams p;
  const YAML::Node preset = node["preset"];
  if (preset) {
    if (as_string(preset, "plant.preset") != "paper-defaults") {
      throw ConfigError("plant.preset must be paper-defaults", line_of(preset));
    }
  } else {
    for (const auto& key : numeric) {
      if (!node[key]) {
        throw ConfigError("plant." + key + " is required (or set plant.preset: paper-defaults)", line_of(node));
      }
    }
  }
  optional_field(node, "reaction_order", "plant", p.reaction_order, as_double);
  optional_field(node, "phi1", "plant", p.phi1, as_double);
  optional_field(node, "phi2", "plant", p.phi2, as_double);
  optional_field(node, "k1", "plant", p.k1, as_double);
  optional_field(node, "k2", "plant", p.k2, as_double);
  optional_field(node, "kappa", "plant", p.kappa, as_double);
  optional_field(node, "u1_min", "plant", p.u1_min, as_double);
  optional_field(node, "u1_max", "plant", p.u1_max, as_double);
  optional_field(node, "u2_min", "plant", p.u2_min, as_double);
  optional_field(node, "u2_max", "plant", p.u2_max, as_double);
  if (const YAML::Node v = node["variant"]) {
    const std::string s = as_string(v, "plant.variant");
    if (s == "corrected") {
      p.variant = ModelVariant::Corrected;
    } else if (s == "as-printed") {
      p.variant = ModelVariant::AsPrinted;
    } else {
      throw ConfigError("plant.variant must be corrected or as-printed", line_of(v));
    }
  }
  validate_at(node, [&] { p.validate(); });
  return p;
}

ReferenceConfig parse_reference(const YAML::Node& node, const CstrParams& plant) {
  ReferenceConfig rc;
  rc.spec.amplitude = {plant.u1_min, plant.u2_min};
  if (!node) return rc;
  require_map(node, "reference");
  check_keys(node, "reference", {"waveform", "period", "amplitude", "mode", "grid_step", "x_star_guess", "orbit_tol"});
  if (const YAML::Node w = node["waveform"]) {
    const std::string s = as_string(w, "reference.waveform");
    if (s == "trig") {
      rc.spec.waveform = Waveform::Trig;
    } else if (s == "bang-bang") {
      rc.spec.waveform = Waveform::BangBang;
    } else {
      throw ConfigError("reference.waveform must be trig or bang-bang", line_of(w));
    }
  }
  optional_field(node, "period", "reference", rc.spec.period, as_double);
  optional_field(node, "amplitude", "reference", rc.spec.amplitude, as_vec2);
  if (const YAML::Node m = node["mode"]) {
    const std::string s = as_string(m, "reference.mode");
    if (s == "co-integrate") {
      rc.mode = EvaluationMode::CoIntegrate;
    } else if (s == "dense-grid") {
      rc.mode = EvaluationMode::DenseGrid;
    } else {
      throw ConfigError("reference.mode must be co-integrate or dense-grid", line_of(m));
    }
  }
  optional_field(node, "grid_step", "reference", rc.grid_step, as_double);
  optional_field(node, "x_star_guess", "reference", rc.x_star_guess, as_vec2);
  optional_field(node, "orbit_tol", "reference", rc.orbit_tol, as_double);
  check_positive(node, "period", rc.spec.period, "reference");
  check_positive(node, "grid_step", rc.grid_step, "reference");
  check_positive(node, "orbit_tol", rc.orbit_tol, "reference");
  validate_at(node, [&] { rc.spec.validate(plant); });
  if (!in_domain(rc.x_star_guess)) throw ConfigError("reference.x_star_guess must lie in D", line_of(node));
  return rc;
}

ESGains parse_gains(const YAML::Node& node) {
  ESGains g;
  if (!node) return g;
  require_map(node, "gains");
  check_keys(node, "gains", {"gamma", "epsilon", "eta", "n_u", "h_floor"});
  optional_field(node, "gamma", "gains", g.gamma, as_double);
  optional_field(node, "epsilon", "gains", g.epsilon, as_double);
  optional_field(node, "eta", "gains", g.eta, as_double);
  optional_field(node, "n_u", "gains", g.n_u, as_int);
  optional_field(node, "h_floor", "gains", g.h_floor, as_double);
  check_positive(node, "gamma", g.gamma, "gains");
  check_positive(node, "epsilon", g.epsilon, "gains");
  check_positive(node, "eta", g.eta, "gains");
  if (g.n_u != 2) throw ConfigError("gains.n_u must be 2 for the two-input reactor", line_of(node["n_u"]));
  validate_at(node, [&] { g.validate(); });
  return g;
}

ode::IntegratorConfig parse_integrator(const YAML::Node& node) {
  ode::IntegratorConfig ic;
  ic.dt = 2e-5;
  if (!node) return ic;
  require_map(node, "integrator");
  check_keys(node, "integrator", {"method", "dt", "abs_tol", "rel_tol", "dt_min", "dt_max"});
  if (const YAML::Node m = node["method"]) {
    const std::string s = as_string(m, "integrator.method");
    if (s == "rk4") {
      ic.method = ode::Method::RK4Fixed;
    } else if (s == "rkf45") {
      ic.method = ode::Method::RKF45Adaptive;
    } else {
      throw ConfigError("integrator.method must be rk4 or rkf45", line_of(m));
    }
  }
  optional_field(node, "dt", "integrator", ic.dt, as_double);
  optional_field(node, "abs_tol", "integrator", ic.abs_tol, as_double);
  optional_field(node, "rel_tol", "integrator", ic.rel_tol, as_double);
  optional_field(node, "dt_min", "integrator", ic.dt_min, as_double);
  optional_field(node, "dt_max", "integrator", ic.dt_max, as_double);
  validate_at(node, [&] { ic.validate(); });
  return ic;
}

InitialCondition parse_initial(const YAML::Node& node) {
  InitialCondition ic;
  if (!node) {
    ic.delta_x = StateVec{0.0, 0.0};
    ic.delta_u = InputVec{0.0, 0.0};
    return ic;
  }
  require_map(node, "initial");
  check_keys(node, "initial", {"x0", "delta_x", "u0", "delta_u"});
  if (node["x0"] && node["delta_x"]) throw ConfigError("initial: give x0 or delta_x, not both", line_of(node));
  if (node["u0"] && node["delta_u"]) throw ConfigError("initial: give u0 or delta_u, not both", line_of(node));
  if (const YAML::Node n = node["x0"]) {
    ic.x0 = as_vec2(n, "initial.x0");
    if (!in_domain(*ic.x0)) throw ConfigError("initial.x0 must lie in D (x1 > -1, x2 > -1)", line_of(n));
  } else if (const YAML::Node d = node["delta_x"]) {
    ic.delta_x = as_vec2(d, "initial.delta_x");
  } else {
    ic.delta_x = StateVec{0.0, 0.0};
  }
  if (const YAML::Node n = node["u0"]) {
    ic.u0 = as_vec2(n, "initial.u0");
  } else if (const YAML::Node d = node["delta_u"]) {
    ic.delta_u = as_vec2(d, "initial.delta_u");
  } else {
    ic.delta_u = InputVec{0.0, 0.0};
  }
  return ic;
}

SweepAxes parse_sweep(const YAML::Node& node) {
  SweepAxes s;
  if (!node) return s;
  require_map(node, "sweep");
  check_keys(node, "sweep", {"gamma", "epsilon", "eta"});
  optional_field(node, "gamma", "sweep", s.gamma, as_list);
  optional_field(node, "epsilon", "sweep", s.epsilon, as_list);
  optional_field(node, "eta", "sweep", s.eta, as_list);
  for (const auto* axis : {&s.gamma, &s.epsilon, &s.eta}) {
    for (double v : *axis) {
      if (!(v > 0.0)) throw ConfigError("sweep axis values must be positive", line_of(node));
    }
  }
  return s;
}

std::string shortest(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void emit_vec2(YAML::Emitter& out, const char* key, const Vec2& v) {
  out << YAML::Key << key << YAML::Value << YAML::Flow << YAML::BeginSeq << shortest(v[0]) << shortest(v[1])
      << YAML::EndSeq;
}

void emit_num(YAML::Emitter& out, const char* key, double v) { out << YAML::Key << key << YAML::Value << shortest(v); }

}  // namespace

std::string to_string(Waveform w) { return w == Waveform::Trig ? "trig" : "bang-bang"; }
std::string to_string(EvaluationMode m) { return m == EvaluationMode::CoIntegrate ? "co-integrate" : "dense-grid"; }
std::string to_string(ode::Method m) { return m == ode::Method::RK4Fixed ? "rk4" : "rkf45"; }
std::string to_string(ControllerMode m) {
  return m == ControllerMode::ExtremumSeeking ? "extremum-seeking" : "pinned";
}
std::string to_string(ModelVariant v) { return v == ModelVariant::Corrected ? "corrected" : "as-printed"; }

ExperimentConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("malformed YAML: " + e.msg, e.mark.line + 1);
  }
  if (!root.IsMap()) throw ConfigError("config must be a mapping at the top level", line_of(root));
  check_keys(root, "config", {"name", "plant", "reference", "gains", "integrator", "initial", "t_end", "controller",
                              "clamp_inputs", "output", "analysis", "sweep", "manifest"});

  ExperimentConfig cfg;
  optional_field(root, "name", "config", cfg.name, as_string);
  cfg.plant = parse_plant(root["plant"]);
  cfg.reference = parse_reference(root["reference"], cfg.plant);
  cfg.gains = parse_gains(root["gains"]);
  cfg.integrator = parse_integrator(root["integrator"]);
  cfg.initial = parse_initial(root["initial"]);
  optional_field(root, "t_end", "config", cfg.t_end, as_double);
  check_positive(root, "t_end", cfg.t_end, "config");
  if (const YAML::Node c = root["controller"]) {
    const std::string s = as_string(c, "controller");
    if (s == "extremum-seeking") {
      cfg.controller = ControllerMode::ExtremumSeeking;
    } else if (s == "pinned") {
      cfg.controller = ControllerMode::PinnedToReference;
    } else {
      throw ConfigError("controller must be extremum-seeking or pinned", line_of(c));
    }
  }
  optional_field(root, "clamp_inputs", "config", cfg.clamp_inputs, as_bool);

  if (const YAML::Node out = root["output"]) {
    require_map(out, "output");
    check_keys(out, "output", {"directory", "samples_per_period"});
    optional_field(out, "directory", "output", cfg.output.directory, as_string);
    optional_field(out, "samples_per_period", "output", cfg.output.samples_per_period, as_int);
    if (cfg.output.samples_per_period < 1) {
      throw ConfigError("output.samples_per_period must be >= 1", line_of(out["samples_per_period"]));
    }
    if (cfg.output.directory.empty()) throw ConfigError("output.directory must not be empty", line_of(out));
  }
  if (const YAML::Node an = root["analysis"]) {
    require_map(an, "analysis");
    check_keys(an, "analysis", {"rho", "window"});
    optional_field(an, "rho", "analysis", cfg.analysis.rho, as_double);
    optional_field(an, "window", "analysis", cfg.analysis.window, as_double);
    if (cfg.analysis.rho < 0.0) throw ConfigError("analysis.rho must be nonnegative", line_of(an["rho"]));
    if (cfg.analysis.window < 0.0) throw ConfigError("analysis.window must be nonnegative", line_of(an["window"]));
  }
  cfg.sweep = parse_sweep(root["sweep"]);
  if (const YAML::Node m = root["manifest"]) require_map(m, "manifest");

  // A fixed step coarser than the dither ceiling is rejected up front; sweeps
  // adapt dt per cell instead.
  if (cfg.controller == ControllerMode::ExtremumSeeking && cfg.integrator.method == ode::Method::RK4Fixed &&
      cfg.sweep.empty()) {
    const double ceiling = dither_period(cfg.gains) / 50.0;
    if (cfg.integrator.dt > ceiling * (1.0 + 1e-12)) {
      std::ostringstream os;
      os << "integrator.dt = " << cfg.integrator.dt << " exceeds eta*epsilon/50 = " << ceiling;
      throw ConfigError(os.str(), line_of(root["integrator"] ? root["integrator"] : root));
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string emit_config(const ExperimentConfig& cfg, const StateVec& x0, const InputVec& u0,
                        const std::string& tool_version) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << cfg.name;

  const CstrParams& p = cfg.plant;
  out << YAML::Key << "plant" << YAML::Value << YAML::BeginMap;
  emit_num(out, "reaction_order", p.reaction_order);
  emit_num(out, "phi1", p.phi1);
  emit_num(out, "phi2", p.phi2);
  emit_num(out, "k1", p.k1);
  emit_num(out, "k2", p.k2);
  emit_num(out, "kappa", p.kappa);
  emit_num(out, "u1_min", p.u1_min);
  emit_num(out, "u1_max", p.u1_max);
  emit_num(out, "u2_min", p.u2_min);
  emit_num(out, "u2_max", p.u2_max);
  out << YAML::Key << "variant" << YAML::Value << to_string(p.variant);
  out << YAML::EndMap;

  const ReferenceConfig& r = cfg.reference;
  out << YAML::Key << "reference" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "waveform" << YAML::Value << to_string(r.spec.waveform);
  emit_num(out, "period", r.spec.period);
  emit_vec2(out, "amplitude", r.spec.amplitude);
  out << YAML::Key << "mode" << YAML::Value << to_string(r.mode);
  emit_num(out, "grid_step", r.grid_step);
  emit_vec2(out, "x_star_guess", r.x_star_guess);
  emit_num(out, "orbit_tol", r.orbit_tol);
  out << YAML::EndMap;

  const ESGains& g = cfg.gains;
  out << YAML::Key << "gains" << YAML::Value << YAML::BeginMap;
  emit_num(out, "gamma", g.gamma);
  emit_num(out, "epsilon", g.epsilon);
  emit_num(out, "eta", g.eta);
  out << YAML::Key << "n_u" << YAML::Value << g.n_u;
  emit_num(out, "h_floor", g.h_floor);
  out << YAML::EndMap;

  const ode::IntegratorConfig& ic = cfg.integrator;
  out << YAML::Key << "integrator" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "method" << YAML::Value << to_string(ic.method);
  emit_num(out, "dt", ic.dt);
  emit_num(out, "abs_tol", ic.abs_tol);
  emit_num(out, "rel_tol", ic.rel_tol);
  emit_num(out, "dt_min", ic.dt_min);
  emit_num(out, "dt_max", ic.dt_max);
  out << YAML::EndMap;

  out << YAML::Key << "initial" << YAML::Value << YAML::BeginMap;
  emit_vec2(out, "x0", x0);
  emit_vec2(out, "u0", u0);
  out << YAML::EndMap;

  emit_num(out, "t_end", cfg.t_end);
  out << YAML::Key << "controller" << YAML::Value << to_string(cfg.controller);
  out << YAML::Key << "clamp_inputs" << YAML::Value << cfg.clamp_inputs;

  out << YAML::Key << "output" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "directory" << YAML::Value << cfg.output.directory;
  out << YAML::Key << "samples_per_period" << YAML::Value << cfg.output.samples_per_period;
  out << YAML::EndMap;

  out << YAML::Key << "analysis" << YAML::Value << YAML::BeginMap;
  emit_num(out, "rho", cfg.analysis.rho);
  emit_num(out, "window", cfg.analysis.window);
  out << YAML::EndMap;

  if (!cfg.sweep.empty()) {
    out << YAML::Key << "sweep" << YAML::Value << YAML::BeginMap;
    auto axis = [&](const char* key, const std::vector<double>& v) {
      if (v.empty()) return;
      out << YAML::Key << key << YAML::Value << YAML::Flow << YAML::BeginSeq;
      for (double d : v) out << shortest(d);
      out << YAML::EndSeq;
    };
    axis("gamma", cfg.sweep.gamma);
    axis("epsilon", cfg.sweep.epsilon);
    axis("eta", cfg.sweep.eta);
    out << YAML::EndMap;
  }

  out << YAML::Key << "manifest" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "tool" << YAML::Value << "estrack";
  out << YAML::Key << "version" << YAML::Value << tool_version;
  out << YAML::EndMap;

  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

std::string default_config_text() {
  return R"(# estrack experiment configuration. Every key below shows its default.
name: experiment

# Required: either the literal paper-defaults, or a mapping listing every
# parameter (reaction_order, phi1, phi2, k1, k2, kappa, u1_min, u1_max,
# u2_min, u2_max), or `preset: paper-defaults` plus overrides.
# variant: corrected | as-printed
plant: paper-defaults

reference:
  waveform: trig            # trig | bang-bang
  period: 100
  amplitude: [-1.798, -0.06663]   # defaults to (u1_min, u2_min)
  mode: co-integrate        # co-integrate | dense-grid
  grid_step: 0.01           # dense-grid only
  x_star_guess: [-0.065, 0.008]   # shooting initial guess
  orbit_tol: 1e-10

gains:
  gamma: 150
  epsilon: 0.001
  eta: 1
  n_u: 2
  h_floor: 1e-12

integrator:
  method: rk4               # rk4 | rkf45
  dt: 2e-5                  # rk4 step; rkf45 initial step
  abs_tol: 1e-10            # rkf45 only
  rel_tol: 1e-10
  dt_min: 1e-14
  dt_max: 1                 # capped at eta*epsilon/50 for closed-loop runs

# x0 / u0 are absolute; delta_x / delta_u are offsets from x*(0) / u*(0).
initial:
  delta_x: [0, 0]
  delta_u: [0, 0]

t_end: 200
controller: extremum-seeking   # extremum-seeking | pinned
clamp_inputs: false

output:
  directory: run            # relative to $ESTRACK_OUTPUT_ROOT (default: .)
  samples_per_period: 2000

analysis:
  rho: 0.5
  window: 0                 # 0 selects one reference period

# Optional: Cartesian product of gain axes for `estrack sweep`.
# sweep:
#   gamma: [150]
#   epsilon: [1e-4, 1e-3, 1e-2]
#   eta: [1, 5]
)";
}

}  // namespace estrack
