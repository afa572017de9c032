#pragma once

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "contact_flow/catalog.hpp"
#include "contact_flow/cli/config.hpp"
#include "contact_flow/dynamics.hpp"
#include "contact_flow/measures.hpp"
#include "contact_flow/version.hpp"
#include "contact_flow/verification.hpp"

namespace contact_flow::cli {

using Json = nlohmann::ordered_json;

enum ExitCode : int { exit_ok = 0, exit_config = 1, exit_runtime = 2, exit_verification = 3 };

class IoError : public Error {
 public:
  using Error::Error;
};

struct RunContext {
  std::filesystem::path out_dir = ".";
  unsigned threads = 0;
  bool quiet = false;
  std::ostream* log = &std::cerr;
};

struct RunResult {
  int exit_code = exit_ok;
  Json report;
  std::vector<std::filesystem::path> written;
};

// Worker count from CONTACT_FLOW_THREADS; 0 or unset means all cores.
inline unsigned threads_from_env() {
  const char* raw = std::getenv("CONTACT_FLOW_THREADS");
  if (!raw || !*raw) return 0;
  const std::string s = detail::trim(raw);
  unsigned v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || v > 4096) {
    throw ConfigError("CONTACT_FLOW_THREADS must be an integer in [0, 4096], got '" + std::string(raw) + "'");
  }
  return v;
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt_list(const Eigen::VectorXd& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
  return s;
}

inline std::string fmt_list(const std::vector<double>& v) {
  return fmt_list(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
}

// JSON numbers cannot be NaN or infinite.
inline Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json vec(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v[i]));
  return a;
}

inline Json state_json(const ContactState& x) {
  return Json{{"S", num(x.S())}, {"q", vec(x.q_block())}, {"p", vec(x.p_block())}};
}

// The effective configuration, defaults included, in config-file form.
inline Json config_echo(const RunConfig& c, const ResolvedSystem& sys) {
  Json j;
  j["run"] = Json{{"mode", to_string(c.mode)}, {"seed", std::to_string(c.seed)},
                  {"t_span", fmt(c.t0) + ", " + fmt(c.t1)}};
  if (c.system->spec) {
    j["system"] = Json{{"spec", sys.description}};
  } else {
    j["system"] = Json{{"expression", *c.system->expression}, {"n", std::to_string(c.system->n)}};
  }
  if (c.initial_state) {
    const ContactState& x = *c.initial_state;
    j["initial_state"] = Json{{"S", fmt(x.S())}, {"q", fmt_list(x.q_vector())}, {"p", fmt_list(x.p_vector())}};
  }
  const IntegratorOptions& o = c.integrator;
  Json integ{{"method", to_string(o.method)}, {"dt", fmt(o.dt)}, {"rtol", fmt(o.rtol)},
             {"atol", fmt(o.atol)}, {"max_step", fmt(o.max_step)},
             {"max_steps", std::to_string(o.max_steps)}, {"record_steps", o.record_steps ? "true" : "false"}};
  if (!o.sample_times.empty()) integ["sample_times"] = fmt_list(o.sample_times);
  j["integrator"] = integ;
  if (c.region) {
    Json m{{"lower", fmt_list(c.region->lower)}, {"upper", fmt_list(c.region->upper)}};
    if (c.region->h_window) {
      m["h_window"] = fmt(c.region->h_window->first) + ", " + fmt(c.region->h_window->second);
    }
    if (!c.grid.empty()) {
      std::string g;
      for (std::size_t k : c.grid) g += (g.empty() ? "" : ", ") + std::to_string(k);
      m["grid"] = g;
    }
    if (c.exponent) m["exponent"] = std::to_string(*c.exponent);
    j["measure"] = m;
  }
  if (c.mode == Mode::ensemble || c.mode == Mode::sample) {
    Json e{{"samples", std::to_string(c.samples)}};
    if (c.mode == Mode::ensemble) {
      e["t"] = fmt(c.ensemble_t);
      e["boxes"] = std::to_string(c.boxes);
      e["box_width"] = fmt_list(c.box_width);
    }
    j["ensemble"] = e;
  }
  j["output"] = Json{{"trajectory", c.trajectory_file}, {"report", c.report_file}, {"samples", c.samples_file}};
  if (c.mode == Mode::verify) {
    Json v{{"random_states", std::to_string(c.random_states)}, {"sample_radius", fmt(c.sample_radius)}};
    if (c.corrupt_exponent) v["corrupt_exponent"] = std::to_string(*c.corrupt_exponent);
    j["verify"] = v;
  }
  return j;
}

inline Json check_json(const Check& c) {
  Json j{{"name", c.name},           {"measured", num(c.measured)}, {"tolerance", num(c.tolerance)},
         {"bound", to_string(c.bound)}, {"applicable", c.applicable},  {"pass", c.pass}};
  if (!c.note.empty()) j["note"] = c.note;
  if (!c.extra.empty()) {
    Json e;
    for (const auto& [k, v] : c.extra) e[k] = num(v);
    j["extra"] = e;
  }
  return j;
}

inline Json report_skeleton(const RunConfig& c, const ResolvedSystem& sys) {
  Json r;
  r["tool"] = "contact_flow";
  r["version"] = version;
  r["command"] = to_string(c.mode);
  r["seed"] = c.seed;
  r["system"] = Json{{"name", sys.system.name()},
                     {"description", sys.description},
                     {"n", sys.system.dof()},
                     {"derivatives", contact_flow::to_string(sys.system.derivative_mode())}};
  r["config"] = config_echo(c, sys);
  return r;
}

inline void finish_report(Json& r, const std::vector<Check>& checks, bool ok,
                          const std::optional<std::string>& error = std::nullopt) {
  Json a = Json::array();
  bool all = ok;
  for (const auto& c : checks) {
    a.push_back(check_json(c));
    all = all && c.pass;
  }
  r["checks"] = a;
  r["pass"] = all;
  if (error) r["error"] = *error;
}

// Writes the whole file or throws IoError.
inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << content;
  out.flush();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

inline std::string trajectory_csv(const Trajectory& tr) {
  const std::size_t n = tr.n;
  std::string s = "t,S";
  for (std::size_t a = 1; a <= n; ++a) s += ",q" + std::to_string(a);
  for (std::size_t a = 1; a <= n; ++a) s += ",p" + std::to_string(a);
  s += ",h,xi_h,logJ,I\n";
  for (std::size_t k = 0; k < tr.size(); ++k) {
    s += fmt(tr.times[k]);
    const Eigen::VectorXd& x = tr.states[k].coords();
    for (Eigen::Index i = 0; i < x.size(); ++i) s += "," + fmt(x[i]);
    s += "," + fmt(tr.h_vals[k]) + "," + fmt(tr.xi_h_vals[k]) + "," + fmt(tr.logJ[k]) + ",";
    if (std::isfinite(tr.invariant_I[k])) s += fmt(tr.invariant_I[k]);
    s += "\n";
  }
  return s;
}

inline std::string samples_csv(const ContactSystem& sys, const Ensemble& e) {
  const std::size_t n = sys.dof();
  std::string s = "S";
  for (std::size_t a = 1; a <= n; ++a) s += ",q" + std::to_string(a);
  for (std::size_t a = 1; a <= n; ++a) s += ",p" + std::to_string(a);
  s += ",h,weight\n";
  for (std::size_t k = 0; k < e.size(); ++k) {
    const Eigen::VectorXd& x = e.states[k].coords();
    for (Eigen::Index i = 0; i < x.size(); ++i) s += (i ? "," : "") + fmt(x[i]);
    s += "," + fmt(sys.h(e.states[k])) + "," + fmt(e.weights[k]) + "\n";
  }
  return s;
}

class Runner {
 public:
  Runner(RunConfig config, RunContext ctx)
      : c_(std::move(config)), ctx_(std::move(ctx)), sys_(resolve_system(c_)) {
    // Everything mode-specific that can be rejected up front.
    if ((c_.mode == Mode::simulate || c_.mode == Mode::verify) && !c_.initial_state) {
      throw ConfigError(std::string("[initial_state] is required for ") + to_string(c_.mode));
    }
    if ((c_.mode == Mode::ensemble || c_.mode == Mode::sample) && !c_.region) {
      throw ConfigError(std::string("[measure] is required for ") + to_string(c_.mode));
    }
    if (c_.mode == Mode::ensemble && c_.region && !c_.region->h_window) {
      throw ConfigError("[measure] h_window is required for ensemble runs");
    }
  }

  const RunConfig& config() const { return c_; }
  const ResolvedSystem& system() const { return sys_; }

  // Report for a run that stopped on a runtime error. Best effort: a failure
  // to write it is not reported again.
  RunResult failure(const std::string& message) {
    RunResult res;
    res.exit_code = exit_runtime;
    res.report = report_skeleton(c_, sys_);
    finish_report(res.report, {}, false, message);
    try {
      emit_report(res);
    } catch (const IoError&) {
    }
    return res;
  }

  RunResult run() {
    prepare_output_dir();
    const auto start = std::chrono::steady_clock::now();
    RunResult res;
    switch (c_.mode) {
      case Mode::simulate: res = simulate(); break;
      case Mode::verify: res = verify(); break;
      case Mode::ensemble: res = ensemble(); break;
      case Mode::sample: res = sample(); break;
      case Mode::info: throw ConfigError("info does not run through Runner");
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!ctx_.quiet) {
      *ctx_.log << to_string(c_.mode) << ": " << (res.report.value("pass", false) ? "pass" : "FAIL") << ", wrote";
      for (const auto& p : res.written) *ctx_.log << " " << p.string();
      char buf[64];
      std::snprintf(buf, sizeof buf, " (%.3f s wall clock)", secs);
      *ctx_.log << buf << "\n";
    }
    return res;
  }

 private:
  void prepare_output_dir() {
    std::error_code ec;
    std::filesystem::create_directories(ctx_.out_dir, ec);
    if (ec || !std::filesystem::is_directory(ctx_.out_dir)) {
      throw IoError("cannot create output directory '" + ctx_.out_dir.string() + "'");
    }
  }

  std::filesystem::path out(const std::string& name) const { return ctx_.out_dir / name; }

  void emit(RunResult& res, const std::string& name, const std::string& content) {
    write_file(out(name), content);
    res.written.push_back(out(name));
  }

  void emit_report(RunResult& res) { emit(res, c_.report_file, res.report.dump(2) + "\n"); }

  CanonicalMeasure measure() const {
    return c_.exponent ? CanonicalMeasure::with_exponent(sys_.system, *c_.region, *c_.exponent)
                       : CanonicalMeasure(sys_.system, *c_.region);
  }

  void attach_partition(Json& result, const CanonicalMeasure& m) const {
    if (c_.grid.empty()) return;
    const PartitionResult z = partition_function(m, c_.grid, ctx_.threads);
    result["partition_function"] =
        Json{{"Z", num(z.Z)}, {"err_estimate", num(z.err_estimate)}, {"support_fraction", num(z.support_fraction)}};
  }

  RunResult simulate() {
    RunResult res;
    res.report = report_skeleton(c_, sys_);
    const ContactState& x0 = *c_.initial_state;
    Trajectory tr;
    std::optional<std::string> failure;
    try {
      tr = integrate(sys_.system, x0, c_.t0, c_.t1, c_.integrator);
    } catch (const IntegrationError& e) {
      tr = e.partial();
      failure = e.what();
    }
    Json result;
    result["samples"] = tr.size();
    if (!tr.empty()) {
      const std::size_t k = tr.size() - 1;
      result["final"] = Json{{"t", num(tr.times[k])}, {"state", state_json(tr.states[k])},
                             {"h", num(tr.h_vals[k])}, {"xi_h", num(tr.xi_h_vals[k])},
                             {"logJ", num(tr.logJ[k])}, {"I", num(tr.invariant_I[k])}};
      double max_abs_h_change = 0.0;
      for (double h : tr.h_vals) max_abs_h_change = std::max(max_abs_h_change, std::abs(h - tr.h_vals[0]));
      result["max_abs_h_change"] = num(max_abs_h_change);
      try {
        result["invariant_max_rel_dev"] = num(pointwise_invariant_check(tr).max_rel_dev);
      } catch (const SingularDensityError&) {
        result["invariant_max_rel_dev"] = nullptr;
      }
      if (sys_.damped && !failure) {
        try {
          double worst = 0.0;
          for (std::size_t i = 0; i < tr.size(); ++i) {
            const DampedSolution s = damped_closed_form(*sys_.damped, x0, tr.times[i] - c_.t0);
            for (std::size_t a = 0; a < tr.n; ++a) {
              worst = std::max(worst, std::abs(tr.states[i].q(a) - s.q[a]));
              worst = std::max(worst, std::abs(tr.states[i].p(a) - s.p[a]));
            }
            worst = std::max(worst, std::abs(tr.h_vals[i] - s.h));
          }
          result["closed_form_max_error"] = num(worst);
        } catch (const UnsupportedRegimeError&) {
        }
      }
    }
    Json warnings = Json::array();
    for (const auto& w : tr.warnings) warnings.push_back(w);
    result["warnings"] = warnings;
    res.report["result"] = result;
    finish_report(res.report, {}, !failure, failure);
    emit(res, c_.trajectory_file, trajectory_csv(tr));
    emit_report(res);
    res.exit_code = failure ? exit_runtime : exit_ok;
    return res;
  }

  RunResult verify() {
    RunResult res;
    res.report = report_skeleton(c_, sys_);
    VerifySettings s{*c_.initial_state};
    s.t0 = c_.t0;
    s.t1 = c_.t1;
    s.integrator = c_.integrator;
    s.seed = c_.seed;
    s.random_states = c_.random_states;
    s.sample_radius = c_.sample_radius;
    s.corrupt_exponent = c_.corrupt_exponent;
    const VerificationReport v = verify_system(sys_.system, s);
    std::size_t applicable = 0, failed = 0;
    for (const auto& ch : v.checks) {
      applicable += ch.applicable ? 1 : 0;
      failed += ch.pass ? 0 : 1;
    }
    res.report["result"] = Json{{"checks", v.checks.size()}, {"applicable", applicable}, {"failed", failed}};
    finish_report(res.report, v.checks, true);
    emit_report(res);
    res.exit_code = v.pass() ? exit_ok : exit_verification;
    return res;
  }

  RunResult ensemble() {
    RunResult res;
    res.report = report_skeleton(c_, sys_);
    const CanonicalMeasure m = measure();
    const std::size_t d = phase_dim(sys_.system.dof());
    const Eigen::VectorXd widths =
        c_.box_width.size() == 1
            ? Eigen::VectorXd(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(d), c_.box_width[0]))
            : Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(c_.box_width.data(), static_cast<Eigen::Index>(d)));
    const Ensemble ens = sample_canonical(m, c_.samples, c_.seed, ctx_.threads);
    const std::vector<Region> boxes =
        random_test_boxes(m, c_.ensemble_t, c_.boxes, widths, c_.seed, c_.integrator);
    const InvarianceReport rep = pushforward_invariance_test(m, ens, c_.ensemble_t, boxes, c_.integrator, ctx_.threads);

    Json result{{"samples", ens.size()},
                {"proposals", ens.proposals},
                {"acceptance_rate", num(ens.acceptance_rate())},
                {"envelope", num(ens.envelope)},
                {"exponent", m.exponent()},
                {"t", num(rep.t)},
                {"retained_fraction", num(rep.retained_fraction)}};
    attach_partition(result, m);
    Json jb = Json::array();
    std::vector<Check> checks;
    for (std::size_t i = 0; i < rep.boxes.size(); ++i) {
      const BoxComparison& b = rep.boxes[i];
      jb.push_back(Json{{"lower", vec(b.box.lower)}, {"upper", vec(b.box.upper)},
                        {"direct", num(b.direct)}, {"pushed", num(b.pushed)},
                        {"se_direct", num(b.se_direct)}, {"se_pushed", num(b.se_pushed)},
                        {"direct_count", b.direct_count}, {"pushed_count", b.pushed_count},
                        {"z_score", num(b.z_score)}, {"pass", b.pass}});
      Check ch;
      ch.name = "box_" + std::to_string(i);
      ch.measured = b.z_score;
      ch.tolerance = 3.0;
      ch.pass = b.pass;
      ch.note = "|direct - pushed| in combined standard errors";
      checks.push_back(std::move(ch));
    }
    result["boxes"] = jb;
    res.report["result"] = result;
    finish_report(res.report, checks, true);
    emit(res, c_.samples_file, samples_csv(sys_.system, ens));
    emit_report(res);
    res.exit_code = rep.pass ? exit_ok : exit_verification;
    return res;
  }

  RunResult sample() {
    RunResult res;
    res.report = report_skeleton(c_, sys_);
    const CanonicalMeasure m = measure();
    const Ensemble ens = sample_canonical(m, c_.samples, c_.seed, ctx_.threads);
    Json result{{"samples", ens.size()},
                {"proposals", ens.proposals},
                {"acceptance_rate", num(ens.acceptance_rate())},
                {"envelope", num(ens.envelope)},
                {"exponent", m.exponent()}};
    attach_partition(result, m);
    res.report["result"] = result;
    finish_report(res.report, {}, true);
    emit(res, c_.samples_file, samples_csv(sys_.system, ens));
    emit_report(res);
    return res;
  }

  RunConfig c_;
  RunContext ctx_;
  ResolvedSystem sys_;
};

// Catalog and version listing, plus a description of the configured system
// when a config is given. Printed, never written to files.
inline Json info_report(const std::optional<RunConfig>& c) {
  Json r;
  r["tool"] = "contact_flow";
  r["version"] = version;
  Json cat = Json::array();
  for (const auto& e : builtin_catalog()) {
    Json defaults;
    for (const auto& [k, v] : e.defaults) defaults[k] = v;
    cat.push_back(Json{{"name", e.name}, {"description", e.description}, {"defaults", defaults}});
  }
  r["catalog"] = cat;
  r["subcommands"] = Json::array({"simulate", "verify", "ensemble", "sample", "info"});
  if (c && c->system) {
    const ResolvedSystem sys = resolve_system(*c);
    Json s{{"name", sys.system.name()},
           {"description", sys.description},
           {"n", sys.system.dof()},
           {"dimension", phase_dim(sys.system.dof())},
           {"derivatives", contact_flow::to_string(sys.system.derivative_mode())}};
    if (c->initial_state) {
      const ContactState& x = *c->initial_state;
      s["initial_state"] = state_json(x);
      s["h"] = num(sys.system.h(x));
      s["xi_h"] = num(xi_of(sys.system, x));
      s["divergence"] = num(divergence(sys.system, x));
    }
    r["system"] = s;
  }
  return r;
}

}  // namespace contact_flow::cli
