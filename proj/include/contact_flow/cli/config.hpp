#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "contact_flow/catalog.hpp"
#include "contact_flow/dynamics.hpp"
#include "contact_flow/errors.hpp"
#include "contact_flow/expression.hpp"
#include "contact_flow/measures.hpp"
#include "contact_flow/state.hpp"

namespace contact_flow::cli {

enum class Mode { simulate, verify, ensemble, sample, info };

inline const char* to_string(Mode m) {
  switch (m) {
    case Mode::simulate: return "simulate";
    case Mode::verify: return "verify";
    case Mode::ensemble: return "ensemble";
    case Mode::sample: return "sample";
    case Mode::info: return "info";
  }
  return "?";
}

inline std::optional<Mode> parse_mode(const std::string& s) {
  for (Mode m : {Mode::simulate, Mode::verify, Mode::ensemble, Mode::sample, Mode::info}) {
    if (s == to_string(m)) return m;
  }
  return std::nullopt;
}

// Raw [section] key = value text, keyed by section then key.
using ConfigText = std::map<std::string, std::map<std::string, std::string>>;

struct SystemConfig {
  std::optional<std::string> spec;        // catalog "name(key=value,...)"
  std::optional<std::string> expression;  // h in S, q1.., p1..
  std::size_t n = 0;
};

struct RunConfig {
  Mode mode = Mode::simulate;
  std::uint64_t seed = 0;
  double t0 = 0.0;
  double t1 = 10.0;

  std::optional<SystemConfig> system;
  std::optional<ContactState> initial_state;
  IntegratorOptions integrator;

  std::optional<Region> region;
  std::vector<std::size_t> grid;     // empty: no partition function
  std::optional<int> exponent;       // density exponent override

  std::size_t samples = 100'000;
  double ensemble_t = 1.0;
  std::size_t boxes = 5;
  std::vector<double> box_width{0.2};  // one value or 2n+1

  std::string trajectory_file = "trajectory.csv";
  std::string report_file = "report.json";
  std::string samples_file = "samples.csv";

  std::size_t random_states = 100;
  double sample_radius = 1.0;
  std::optional<int> corrupt_exponent;

  ConfigText text;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string where(const std::string& section, const std::string& key) {
  return "[" + section + "] " + key;
}

inline double parse_real(const std::string& section, const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError(where(section, key) + ": '" + raw + "' is not a number");
  }
  return v;
}

inline double parse_finite(const std::string& section, const std::string& key, const std::string& raw) {
  const double v = parse_real(section, key, raw);
  if (!std::isfinite(v)) throw ConfigError(where(section, key) + " must be finite");
  return v;
}

inline std::uint64_t parse_unsigned(const std::string& section, const std::string& key,
                                    const std::string& raw) {
  const std::string s = trim(raw);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError(where(section, key) + ": '" + raw + "' is not a non-negative integer");
  }
  return v;
}

inline int parse_positive_int(const std::string& section, const std::string& key, const std::string& raw) {
  const std::uint64_t v = parse_unsigned(section, key, raw);
  if (v == 0 || v > 1000) throw ConfigError(where(section, key) + " must be an integer in [1, 1000]");
  return static_cast<int>(v);
}

inline bool parse_bool(const std::string& section, const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  if (s == "true" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "no" || s == "0") return false;
  throw ConfigError(where(section, key) + ": '" + raw + "' is not a boolean");
}

inline std::vector<double> parse_list(const std::string& section, const std::string& key,
                                      const std::string& raw) {
  std::vector<double> out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_finite(section, key, item));
  if (out.empty()) throw ConfigError(where(section, key) + " is empty");
  return out;
}

inline const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s{
      {"run", {"mode", "seed", "t_span"}},
      {"system", {"spec", "expression", "n"}},
      {"initial_state", {"S", "q", "p"}},
      {"integrator", {"method", "dt", "rtol", "atol", "max_step", "max_steps", "sample_times",
                      "record_steps"}},
      {"measure", {"lower", "upper", "h_window", "grid", "exponent"}},
      {"ensemble", {"samples", "t", "boxes", "box_width"}},
      {"output", {"trajectory", "report", "samples"}},
      {"verify", {"random_states", "sample_radius", "corrupt_exponent"}},
  };
  return s;
}

inline void check_file_name(const std::string& section, const std::string& key, const std::string& v) {
  if (v.empty() || v.find('/') != std::string::npos || v == "." || v == "..") {
    throw ConfigError(where(section, key) + " must be a plain file name inside the output directory");
  }
}

}  // namespace detail

// Reads [section] key = value text. Comments start with ';' or '#'.
inline ConfigText read_config_text(std::istream& in) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("line " + std::to_string(e.line()) + ": " + e.message());
  }
  ConfigText text;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("key '" + section + "' appears outside any [section]");
    }
    const auto& known = detail::schema();
    const auto it = known.find(section);
    if (it == known.end()) throw ConfigError("unknown section [" + section + "]");
    text[section];
    for (const auto& [key, value] : body) {
      if (!it->second.count(key)) throw ConfigError("unknown key '" + key + "' in [" + section + "]");
      text[section][key] = detail::trim(value.data());
    }
  }
  return text;
}

inline ConfigText read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  return read_config_text(in);
}

// Builds and validates a RunConfig. `seed_override` replaces [run] seed.
inline RunConfig build_config(const ConfigText& text, Mode mode,
                              std::optional<std::uint64_t> seed_override = std::nullopt) {
  using namespace detail;
  RunConfig c;
  c.mode = mode;
  c.text = text;
  auto get = [&](const std::string& section, const std::string& key) -> std::optional<std::string> {
    const auto s = text.find(section);
    if (s == text.end()) return std::nullopt;
    const auto k = s->second.find(key);
    if (k == s->second.end()) return std::nullopt;
    return k->second;
  };
  auto has_section = [&](const std::string& section) { return text.count(section) > 0; };

  if (auto v = get("run", "mode")) {
    const auto m = parse_mode(*v);
    if (!m) throw ConfigError("[run] mode: unknown mode '" + *v + "'");
    if (*m != mode) {
      throw ConfigError(std::string("[run] mode is '") + *v + "' but the command is '" + to_string(mode) + "'");
    }
  }
  if (auto v = get("run", "seed")) c.seed = parse_unsigned("run", "seed", *v);
  if (seed_override) c.seed = *seed_override;
  if (auto v = get("run", "t_span")) {
    const auto span = parse_list("run", "t_span", *v);
    if (span.size() != 2) throw ConfigError("[run] t_span needs two values: t0, t1");
    c.t0 = span[0];
    c.t1 = span[1];
    if (!(c.t1 > c.t0)) throw ConfigError("[run] t_span needs t1 > t0");
  } else if (mode == Mode::simulate) {
    throw ConfigError("[run] t_span is required for simulate");
  }

  // System.
  if (has_section("system")) {
    SystemConfig s;
    s.spec = get("system", "spec");
    s.expression = get("system", "expression");
    if (s.spec && s.expression) throw ConfigError("[system] takes either spec or expression, not both");
    if (!s.spec && !s.expression) throw ConfigError("[system] needs spec or expression");
    if (s.expression) {
      const auto n = get("system", "n");
      if (!n) throw ConfigError("[system] expression needs n");
      s.n = parse_unsigned("system", "n", *n);
      if (s.n == 0 || s.n > 1000) throw ConfigError("[system] n must be in [1, 1000]");
    } else if (get("system", "n")) {
      throw ConfigError("[system] n belongs inside spec, e.g. spec = harmonic(n=2)");
    }
    c.system = s;
  } else if (mode != Mode::info) {
    throw ConfigError("missing [system] section");
  }

  // Integrator.
  IntegratorOptions& o = c.integrator;
  if (auto v = get("integrator", "method")) {
    if (*v == "rk4") o.method = Method::rk4;
    else if (*v == "rk45") o.method = Method::rk45;
    else throw ConfigError("[integrator] method must be rk4 or rk45");
  }
  if (auto v = get("integrator", "dt")) o.dt = parse_finite("integrator", "dt", *v);
  if (auto v = get("integrator", "rtol")) o.rtol = parse_finite("integrator", "rtol", *v);
  if (auto v = get("integrator", "atol")) o.atol = parse_finite("integrator", "atol", *v);
  if (auto v = get("integrator", "max_step")) o.max_step = parse_real("integrator", "max_step", *v);
  if (auto v = get("integrator", "max_steps")) o.max_steps = parse_unsigned("integrator", "max_steps", *v);
  if (auto v = get("integrator", "sample_times")) o.sample_times = parse_list("integrator", "sample_times", *v);
  if (auto v = get("integrator", "record_steps")) o.record_steps = parse_bool("integrator", "record_steps", *v);
  try {
    o.validate();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("[integrator] ") + e.what());
  }
  for (double t : o.sample_times) {
    if (!(t > c.t0 && t < c.t1)) throw ConfigError("[integrator] sample_times must lie inside t_span");
  }

  // Measure and ensemble.
  if (has_section("measure")) {
    Region r;
    const auto lo = get("measure", "lower");
    const auto hi = get("measure", "upper");
    if (!lo || !hi) throw ConfigError("[measure] needs lower and upper");
    const auto lv = parse_list("measure", "lower", *lo);
    const auto hv = parse_list("measure", "upper", *hi);
    r.lower = Eigen::Map<const Eigen::VectorXd>(lv.data(), static_cast<Eigen::Index>(lv.size()));
    r.upper = Eigen::Map<const Eigen::VectorXd>(hv.data(), static_cast<Eigen::Index>(hv.size()));
    if (auto v = get("measure", "h_window")) {
      const auto w = parse_list("measure", "h_window", *v);
      if (w.size() != 2) throw ConfigError("[measure] h_window needs two values");
      r.h_window = std::make_pair(w[0], w[1]);
    }
    c.region = r;
    if (auto v = get("measure", "grid")) {
      for (double g : parse_list("measure", "grid", *v)) {
        if (g != std::floor(g) || g < 8 || g > 4096) {
          throw ConfigError("[measure] grid entries must be integers in [8, 4096]");
        }
        c.grid.push_back(static_cast<std::size_t>(g));
      }
    }
    if (auto v = get("measure", "exponent")) c.exponent = parse_positive_int("measure", "exponent", *v);
  } else if (mode == Mode::ensemble || mode == Mode::sample) {
    throw ConfigError(std::string("[measure] is required for ") + to_string(mode));
  }
  if (auto v = get("ensemble", "samples")) {
    c.samples = parse_unsigned("ensemble", "samples", *v);
    if (c.samples == 0 || c.samples > 100'000'000) {
      throw ConfigError("[ensemble] samples must be in [1, 1e8]");
    }
  }
  if (auto v = get("ensemble", "t")) c.ensemble_t = parse_finite("ensemble", "t", *v);
  if (auto v = get("ensemble", "boxes")) {
    c.boxes = parse_unsigned("ensemble", "boxes", *v);
    if (c.boxes == 0 || c.boxes > 1000) throw ConfigError("[ensemble] boxes must be in [1, 1000]");
  }
  if (auto v = get("ensemble", "box_width")) {
    c.box_width = parse_list("ensemble", "box_width", *v);
    for (double w : c.box_width) {
      if (!(w > 0.0 && w <= 1.0)) throw ConfigError("[ensemble] box_width fractions must be in (0, 1]");
    }
  }

  // Output names.
  if (auto v = get("output", "trajectory")) c.trajectory_file = *v;
  if (auto v = get("output", "report")) c.report_file = *v;
  if (auto v = get("output", "samples")) c.samples_file = *v;
  check_file_name("output", "trajectory", c.trajectory_file);
  check_file_name("output", "report", c.report_file);
  check_file_name("output", "samples", c.samples_file);
  if (c.report_file == c.trajectory_file || c.report_file == c.samples_file) {
    throw ConfigError("[output] report must not share a file name with other outputs");
  }

  // Verification battery.
  if (auto v = get("verify", "random_states")) {
    c.random_states = parse_unsigned("verify", "random_states", *v);
    if (c.random_states == 0 || c.random_states > 100'000) {
      throw ConfigError("[verify] random_states must be in [1, 100000]");
    }
  }
  if (auto v = get("verify", "sample_radius")) {
    c.sample_radius = parse_finite("verify", "sample_radius", *v);
    if (!(c.sample_radius > 0.0)) throw ConfigError("[verify] sample_radius must be positive");
  }
  if (auto v = get("verify", "corrupt_exponent")) {
    c.corrupt_exponent = parse_positive_int("verify", "corrupt_exponent", *v);
  }

  // Initial state, checked against n once the system is known.
  if (has_section("initial_state")) {
    const auto S = get("initial_state", "S");
    const auto q = get("initial_state", "q");
    const auto p = get("initial_state", "p");
    if (!S || !q || !p) throw ConfigError("[initial_state] needs S, q and p");
    const double s0 = parse_finite("initial_state", "S", *S);
    const auto qv = parse_list("initial_state", "q", *q);
    const auto pv = parse_list("initial_state", "p", *p);
    if (qv.size() != pv.size()) {
      throw ConfigError("[initial_state] q has " + std::to_string(qv.size()) + " entries but p has " +
                        std::to_string(pv.size()));
    }
    c.initial_state = ContactState(s0, qv, pv);
  } else if (mode == Mode::simulate || mode == Mode::verify) {
    throw ConfigError(std::string("[initial_state] is required for ") + to_string(mode));
  }
  return c;
}

inline RunConfig load_config(const std::string& path, Mode mode,
                             std::optional<std::uint64_t> seed_override = std::nullopt) {
  return build_config(read_config_file(path), mode, seed_override);
}

// The system described by a config, with everything that depends on n
// checked. All configuration errors surface here or in build_config.
struct ResolvedSystem {
  ContactSystem system;
  std::string description;  // canonical spec or expression source
  std::optional<LinearDampedOscillator> damped;
};

inline ResolvedSystem resolve_system(const RunConfig& c) {
  if (!c.system) throw ConfigError("missing [system] section");
  const SystemConfig& s = *c.system;
  std::optional<ResolvedSystem> out;
  try {
    if (s.spec) {
      BuiltinSystem b = make_builtin(*s.spec);
      out.emplace(ResolvedSystem{std::move(b.system), b.spec, b.damped});
    } else {
      ExpressionSystem e(*s.expression, s.n);
      out.emplace(ResolvedSystem{e.system(), to_source(e.ast()), std::nullopt});
    }
  } catch (const ParseError& e) {
    throw ConfigError("[system] expression: " + std::string(e.what()));
  } catch (const CatalogError& e) {
    throw ConfigError("[system] spec: " + std::string(e.what()));
  }
  const std::size_t n = out->system.dof();
  if (c.initial_state && c.initial_state->dof() != n) {
    throw ConfigError("[initial_state] q and p need " + std::to_string(n) + " entries for n=" +
                      std::to_string(n) + ", got " + std::to_string(c.initial_state->dof()));
  }
  if (c.region) {
    try {
      c.region->validate(n);
    } catch (const ContractError& e) {
      throw ConfigError(std::string("[measure] ") + e.what());
    }
    if (!c.grid.empty() && c.grid.size() != 1 && c.grid.size() != phase_dim(n)) {
      throw ConfigError("[measure] grid needs 1 or 2n+1 entries");
    }
  }
  if (c.box_width.size() != 1 && c.box_width.size() != phase_dim(n)) {
    throw ConfigError("[ensemble] box_width needs 1 or 2n+1 entries");
  }
  return std::move(*out);
}

}  // namespace contact_flow::cli
