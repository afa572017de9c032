#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "contact_flow/errors.hpp"
#include "contact_flow/field.hpp"
#include "contact_flow/geometry.hpp"
#include "contact_flow/state.hpp"

namespace contact_flow {

enum class Method { rk4, rk45 };

inline const char* to_string(Method m) { return m == Method::rk4 ? "rk4" : "rk45"; }

struct IntegratorOptions {
  Method method = Method::rk45;
  double dt = 1e-2;  // fixed step for rk4
  double rtol = 1e-10;
  double atol = 1e-12;
  double max_step = std::numeric_limits<double>::infinity();
  std::size_t max_steps = 1'000'000;  // attempted steps, accepted or rejected
  // Extra output times inside (t0, t1), reached exactly by clipping steps.
  std::vector<double> sample_times;
  // When false only t0, the sample times and t1 are recorded.
  bool record_steps = true;
  // Allowed |log det J - ∫div dt| before the variational run emits a warning.
  double volume_tolerance = 1e-6;

  void validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ContractError("dt must be positive and finite");
    if (!(rtol > 0.0)) throw ContractError("rtol must be positive");
    if (!(atol > 0.0)) throw ContractError("atol must be positive");
    if (!(max_step > 0.0)) throw ContractError("max_step must be positive");
    if (max_steps == 0) throw ContractError("max_steps must be positive");
    for (std::size_t i = 1; i < sample_times.size(); ++i) {
      if (!(sample_times[i] > sample_times[i - 1])) {
        throw ContractError("sample_times must be strictly increasing");
      }
    }
  }
};

// Sampled solution with per-sample diagnostics. invariant_I is NaN where h is
// below the density floor.
struct Trajectory {
  std::size_t n = 0;
  std::vector<double> times;
  std::vector<ContactState> states;
  std::vector<double> h_vals;
  std::vector<double> xi_h_vals;
  std::vector<double> logJ;
  std::vector<double> invariant_I;
  std::vector<std::string> warnings;

  std::size_t size() const { return times.size(); }
  bool empty() const { return times.empty(); }
  const ContactState& final_state() const { return states.back(); }
};

// Relative floor below which |h| counts as zero: 1e-12·(1+|h0|).
inline double density_floor(double h0) { return 1e-12 * (1.0 + std::abs(h0)); }

class IntegrationError : public Error {
 public:
  enum class Kind { truncated, blow_up, variational_breakdown };

  IntegrationError(Kind kind, const std::string& what, Trajectory partial = {})
      : Error(what), kind_(kind), partial_(std::move(partial)) {}

  Kind kind() const noexcept { return kind_; }
  const Trajectory& partial() const noexcept { return partial_; }

 private:
  Kind kind_;
  Trajectory partial_;
};

namespace detail {

using Rhs = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using Recorder = std::function<void(double, const Eigen::VectorXd&)>;

inline bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

inline Eigen::VectorXd eval_rhs(const Rhs& f, const Eigen::VectorXd& y, double t) {
  Eigen::VectorXd out;
  try {
    out = f(y);
  } catch (const EvaluationError& e) {
    throw IntegrationError(IntegrationError::Kind::blow_up,
                           "field evaluation failed at t=" + std::to_string(t) + ": " + e.what());
  } catch (const ContractError& e) {
    throw IntegrationError(IntegrationError::Kind::blow_up,
                           "state left the valid domain at t=" + std::to_string(t) + ": " +
                               e.what());
  }
  if (!all_finite(out)) {
    throw IntegrationError(IntegrationError::Kind::blow_up,
                           "non-finite field value at t=" + std::to_string(t));
  }
  return out;
}

inline Eigen::VectorXd rk4_advance(const Rhs& f, const Eigen::VectorXd& y, double t, double dt) {
  const Eigen::VectorXd k1 = eval_rhs(f, y, t);
  const Eigen::VectorXd k2 = eval_rhs(f, y + 0.5 * dt * k1, t + 0.5 * dt);
  const Eigen::VectorXd k3 = eval_rhs(f, y + 0.5 * dt * k2, t + 0.5 * dt);
  const Eigen::VectorXd k4 = eval_rhs(f, y + dt * k3, t + dt);
  return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// Dormand-Prince 5(4) tableau.
struct DormandPrince {
  static constexpr std::array<double, 7> c{0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  // b - b*, the embedded 4th-order error weights.
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
};

struct Dp5Result {
  Eigen::VectorXd y;
  Eigen::VectorXd k7;  // derivative at the new point (FSAL)
  Eigen::VectorXd err;
};

inline Dp5Result dp5_attempt(const Rhs& f, const Eigen::VectorXd& y, const Eigen::VectorXd& k1,
                             double t, double h) {
  using T = DormandPrince;
  const Eigen::VectorXd k2 = eval_rhs(f, y + h * (T::a21 * k1), t + T::c[1] * h);
  const Eigen::VectorXd k3 = eval_rhs(f, y + h * (T::a31 * k1 + T::a32 * k2), t + T::c[2] * h);
  const Eigen::VectorXd k4 =
      eval_rhs(f, y + h * (T::a41 * k1 + T::a42 * k2 + T::a43 * k3), t + T::c[3] * h);
  const Eigen::VectorXd k5 = eval_rhs(
      f, y + h * (T::a51 * k1 + T::a52 * k2 + T::a53 * k3 + T::a54 * k4), t + T::c[4] * h);
  const Eigen::VectorXd k6 = eval_rhs(
      f, y + h * (T::a61 * k1 + T::a62 * k2 + T::a63 * k3 + T::a64 * k4 + T::a65 * k5),
      t + T::c[5] * h);
  Dp5Result r;
  r.y = y + h * (T::b1 * k1 + T::b3 * k3 + T::b4 * k4 + T::b5 * k5 + T::b6 * k6);
  r.k7 = eval_rhs(f, r.y, t + h);
  r.err = h * (T::e1 * k1 + T::e3 * k3 + T::e4 * k4 + T::e5 * k5 + T::e6 * k6 + T::e7 * r.k7);
  return r;
}

inline double error_norm(const Eigen::VectorXd& err, const Eigen::VectorXd& y0,
                         const Eigen::VectorXd& y1, double rtol, double atol) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < err.size(); ++i) {
    const double scale = atol + rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
    worst = std::max(worst, std::abs(err[i]) / scale);
  }
  return worst;
}

// Starting step after Hairer, Nørsett & Wanner (II.4).
inline double initial_step(const Rhs& f, const Eigen::VectorXd& y0, const Eigen::VectorXd& f0,
                           double t0, double span, const IntegratorOptions& o) {
  auto scaled_norm = [&](const Eigen::VectorXd& v) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double sc = o.atol + o.rtol * std::abs(y0[i]);
      s += (v[i] / sc) * (v[i] / sc);
    }
    return std::sqrt(s / static_cast<double>(v.size()));
  };
  const double d0 = scaled_norm(y0);
  const double d1 = scaled_norm(f0);
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  h0 = std::min({h0, span, o.max_step});
  const Eigen::VectorXd f1 = eval_rhs(f, y0 + h0 * f0, t0 + h0);
  const double d2 = scaled_norm(f1 - f0) / h0;
  const double h1 = std::max(d1, d2) <= 1e-15 ? std::max(1e-6, h0 * 1e-3)
                                              : std::pow(0.01 / std::max(d1, d2), 1.0 / 5.0);
  return std::min({100.0 * h0, h1, span, o.max_step});
}

// Next stopping point after t: the following sample time or t1.
class StopSchedule {
 public:
  StopSchedule(const std::vector<double>& samples, double t0, double t1) : t1_(t1) {
    for (double s : samples) {
      if (s > t0 && s < t1) stops_.push_back(s);
    }
  }
  double next() const { return idx_ < stops_.size() ? stops_[idx_] : t1_; }
  bool is_sample(double t) const { return idx_ < stops_.size() && t == stops_[idx_]; }
  void advance() { ++idx_; }

 private:
  std::vector<double> stops_;
  std::size_t idx_ = 0;
  double t1_;
};

// Integrates y' = f(y) from t0 to t1, calling `record` at t0, at accepted
// steps (if options.record_steps), at every sample time and at t1.
// `after_accept` may veto a step by throwing.
inline void drive(const Rhs& f, Eigen::VectorXd y, double t0, double t1,
                  const IntegratorOptions& o, const Recorder& record,
                  const std::function<void(double, const Eigen::VectorXd&)>& after_accept = {}) {
  record(t0, y);
  StopSchedule stops(o.sample_times, t0, t1);
  double t = t0;
  std::size_t attempts = 0;
  const double span = t1 - t0;
  auto tiny = [&](double tt) { return 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(tt)); };

  auto accept = [&](double t_new, Eigen::VectorXd y_new, bool at_stop) {
    if (!all_finite(y_new)) {
      throw IntegrationError(IntegrationError::Kind::blow_up,
                             "non-finite state at t=" + std::to_string(t_new));
    }
    t = t_new;
    y = std::move(y_new);
    if (after_accept) after_accept(t, y);
    if (at_stop || o.record_steps) record(t, y);
    if (at_stop && t < t1) stops.advance();
  };

  if (o.method == Method::rk4) {
    while (t < t1) {
      if (++attempts > o.max_steps) {
        throw IntegrationError(IntegrationError::Kind::truncated,
                               "max_steps exceeded at t=" + std::to_string(t));
      }
      const double target = stops.next();
      double h = std::min(o.dt, o.max_step);
      bool at_stop = false;
      if (t + h >= target - tiny(target)) {
        h = target - t;
        at_stop = true;
      }
      Eigen::VectorXd y_new = rk4_advance(f, y, t, h);
      accept(at_stop ? target : t + h, std::move(y_new), at_stop);
    }
    return;
  }

  Eigen::VectorXd k1 = eval_rhs(f, y, t);
  double h = initial_step(f, y, k1, t, span, o);
  bool last_rejected = false;
  while (t < t1) {
    if (++attempts > o.max_steps) {
      throw IntegrationError(IntegrationError::Kind::truncated,
                             "max_steps exceeded at t=" + std::to_string(t));
    }
    const double target = stops.next();
    h = std::min(h, o.max_step);
    bool at_stop = false;
    double step = h;
    if (t + step >= target - tiny(target)) {
      step = target - t;
      at_stop = true;
    }
    Dp5Result r;
    double err = std::numeric_limits<double>::infinity();
    try {
      r = dp5_attempt(f, y, k1, t, step);
      if (all_finite(r.y)) err = error_norm(r.err, y, r.y, o.rtol, o.atol);
    } catch (const IntegrationError&) {
      // An evaluation failure inside the step is treated as a rejection.
    }
    if (!std::isfinite(err) || err > 1.0) {
      const double factor = std::isfinite(err) ? std::max(0.2, 0.9 * std::pow(err, -0.2)) : 0.2;
      h = step * std::min(1.0, factor);
      last_rejected = true;
      if (h < tiny(t)) {
        throw IntegrationError(IntegrationError::Kind::blow_up,
                               "step size underflow at t=" + std::to_string(t));
      }
      continue;
    }
    double factor = err == 0.0 ? 5.0 : 0.9 * std::pow(err, -0.2);
    factor = std::clamp(factor, 0.2, 5.0);
    if (last_rejected) factor = std::min(factor, 1.0);
    last_rejected = false;
    // A step clipped to a stop keeps the unclipped proposal for the next one.
    h = at_stop ? std::max(h, step * factor) : step * factor;
    k1 = std::move(r.k7);
    accept(at_stop ? target : t + step, std::move(r.y), at_stop);
  }
}

}  // namespace detail

inline Eigen::VectorXd field_coords(const ContactSystem& sys, const Eigen::VectorXd& x) {
  return hamiltonian_vector_field(sys.hamiltonian(), ContactState(x)).coords();
}

// Classical fourth-order Runge-Kutta step of the contact flow.
inline ContactState rk4_step(const ContactSystem& sys, const ContactState& x, double dt) {
  if (!(dt > 0.0)) throw ContractError("rk4_step: dt must be positive");
  sys.check(x);
  detail::Rhs f = [&sys](const Eigen::VectorXd& y) { return field_coords(sys, y); };
  Eigen::VectorXd y = detail::rk4_advance(f, x.coords(), 0.0, dt);
  if (!y.allFinite()) {
    throw IntegrationError(IntegrationError::Kind::blow_up, "rk4_step produced a non-finite state");
  }
  return ContactState(std::move(y));
}

// ∂(Ṡ, q̇, ṗ)/∂(S, q, p) assembled from the gradient and Hessian of h. The
// Hessian is analytic when available and a difference approximation
// otherwise.
inline Eigen::MatrixXd field_jacobian(const ContactSystem& sys, const ContactState& x) {
  sys.check(x);
  const ScalarField& h = sys.hamiltonian();
  const std::size_t n = x.dof();
  const Eigen::Index d = x.dim();
  const Eigen::MatrixXd H = h.hessian_or_fd(x);
  const Gradient g = h.gradient(x);
  Eigen::MatrixXd A(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    double row_s = g.coords()[j];
    for (std::size_t a = 0; a < n; ++a) row_s -= x.p(a) * H(p_index(n, a), j);
    A(0, j) = row_s;
    for (std::size_t a = 0; a < n; ++a) {
      A(q_index(n, a), j) = H(p_index(n, a), j);
      A(p_index(n, a), j) = -H(q_index(n, a), j) + x.p(a) * H(0, j);
    }
  }
  for (std::size_t a = 0; a < n; ++a) {
    A(0, p_index(n, a)) -= g.dp(a);
    A(p_index(n, a), p_index(n, a)) += g.dS();
  }
  if (!A.allFinite()) throw EvaluationError("field jacobian", std::numeric_limits<double>::quiet_NaN());
  return A;
}

namespace detail {

// Fills h, ξ(h), trapezoidal logJ and the canonical invariant from states.
inline void fill_diagnostics(const ContactSystem& sys, Trajectory& tr) {
  const std::size_t m = tr.states.size();
  const double exponent = static_cast<double>(sys.dof() + 1);
  tr.h_vals.resize(m);
  tr.xi_h_vals.resize(m);
  tr.logJ.resize(m);
  tr.invariant_I.resize(m);
  for (std::size_t k = 0; k < m; ++k) {
    const ContactState& x = tr.states[k];
    tr.h_vals[k] = sys.h(x);
    tr.xi_h_vals[k] = sys.grad_S(x);
    if (k == 0) {
      tr.logJ[k] = 0.0;
    } else {
      tr.logJ[k] = tr.logJ[k - 1] + 0.5 * (tr.times[k] - tr.times[k - 1]) * exponent *
                                        (tr.xi_h_vals[k] + tr.xi_h_vals[k - 1]);
    }
  }
  const double floor = m ? density_floor(tr.h_vals[0]) : 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const double ah = std::abs(tr.h_vals[k]);
    tr.invariant_I[k] = ah < floor ? std::numeric_limits<double>::quiet_NaN()
                                   : std::exp(-exponent * std::log(ah) + tr.logJ[k]);
  }
}

inline void check_span(double t0, double t1) {
  if (!(t1 > t0) || !std::isfinite(t0) || !std::isfinite(t1)) {
    throw ContractError("integration requires finite t1 > t0");
  }
}

}  // namespace detail

// Integrates the contact flow from state0 over [t0, t1].
inline Trajectory integrate(const ContactSystem& sys, const ContactState& state0, double t0,
                            double t1, const IntegratorOptions& opts) {
  opts.validate();
  detail::check_span(t0, t1);
  sys.check(state0);
  Trajectory tr;
  tr.n = sys.dof();
  detail::Rhs f = [&sys](const Eigen::VectorXd& y) { return field_coords(sys, y); };
  auto record = [&tr](double t, const Eigen::VectorXd& y) {
    tr.times.push_back(t);
    tr.states.emplace_back(y);
  };
  try {
    detail::drive(f, state0.coords(), t0, t1, opts, record);
  } catch (const IntegrationError& e) {
    detail::fill_diagnostics(sys, tr);
    throw IntegrationError(e.kind(), e.what(), std::move(tr));
  }
  detail::fill_diagnostics(sys, tr);
  return tr;
}

// Final state of the flow at time t without recording diagnostics.
inline ContactState flow_to(const ContactSystem& sys, const ContactState& state0, double t,
                            IntegratorOptions opts) {
  if (t == 0.0) return state0;
  opts.record_steps = false;
  opts.sample_times.clear();
  opts.validate();
  sys.check(state0);
  detail::Rhs f = [&sys](const Eigen::VectorXd& y) { return field_coords(sys, y); };
  Eigen::VectorXd last = state0.coords();
  auto record = [&last](double, const Eigen::VectorXd& y) { last = y; };
  if (t > 0.0) {
    detail::drive(f, state0.coords(), 0.0, t, opts, record);
  } else {
    detail::Rhs g = [&sys](const Eigen::VectorXd& y) { return Eigen::VectorXd(-field_coords(sys, y)); };
    detail::drive(g, state0.coords(), 0.0, -t, opts, record);
  }
  return ContactState(std::move(last));
}

struct VariationalState {
  ContactState base;
  Eigen::MatrixXd J_matrix;  // ∂φ_t/∂x0
  double logJ_scalar;        // ∫ div X_h dt
  double log_det_J;          // log det J_matrix
};

struct VariationalResult {
  Trajectory trajectory;
  std::vector<VariationalState> variational;

  double max_volume_discrepancy() const {
    double worst = 0.0;
    for (const auto& v : variational) worst = std::max(worst, std::abs(v.log_det_J - v.logJ_scalar));
    return worst;
  }
};

// Co-integrates the flow, the tangent flow dJ/dt = A(x) J from J = I, and
// the divergence integral, giving two independent routes to the volume
// expansion factor.
inline VariationalResult integrate_variational(const ContactSystem& sys, const ContactState& state0,
                                               double t0, double t1, const IntegratorOptions& opts) {
  opts.validate();
  detail::check_span(t0, t1);
  sys.check(state0);
  const Eigen::Index d = state0.dim();
  const Eigen::Index dd = d * d;
  const double exponent = static_cast<double>(sys.dof() + 1);

  Eigen::VectorXd y0(d + dd + 1);
  y0.head(d) = state0.coords();
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(d, d);
  y0.segment(d, dd) = Eigen::Map<const Eigen::VectorXd>(identity.data(), dd);
  y0[d + dd] = 0.0;

  detail::Rhs f = [&sys, d, dd, exponent](const Eigen::VectorXd& y) {
    const ContactState x(Eigen::VectorXd(y.head(d)));
    Eigen::VectorXd out(y.size());
    out.head(d) = hamiltonian_vector_field(sys.hamiltonian(), x).coords();
    const Eigen::MatrixXd A = field_jacobian(sys, x);
    const Eigen::Map<const Eigen::MatrixXd> J(y.data() + d, d, d);
    Eigen::MatrixXd dJ = A * J;
    out.segment(d, dd) = Eigen::Map<const Eigen::VectorXd>(dJ.data(), dd);
    out[d + dd] = exponent * sys.grad_S(x);
    return out;
  };

  VariationalResult res;
  Trajectory& tr = res.trajectory;
  tr.n = sys.dof();
  auto unpack = [d, dd](const Eigen::VectorXd& y) {
    Eigen::MatrixXd J = Eigen::Map<const Eigen::MatrixXd>(y.data() + d, d, d);
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(J);
    const double det = lu.determinant();
    return std::make_pair(std::move(J), det);
  };
  auto check_det = [&unpack](double t, const Eigen::VectorXd& y) {
    const double det = unpack(y).second;
    if (!(det > 0.0)) {
      throw IntegrationError(IntegrationError::Kind::variational_breakdown,
                             "flow jacobian became singular (det=" + std::to_string(det) +
                                 ") at t=" + std::to_string(t));
    }
  };
  auto record = [&](double t, const Eigen::VectorXd& y) {
    auto [J, det] = unpack(y);
    ContactState base(Eigen::VectorXd(y.head(d)));
    tr.times.push_back(t);
    tr.states.push_back(base);
    res.variational.push_back({std::move(base), std::move(J), y[d + dd], std::log(det)});
  };
  try {
    detail::drive(f, y0, t0, t1, opts, record, check_det);
  } catch (const IntegrationError& e) {
    detail::fill_diagnostics(sys, tr);
    throw IntegrationError(e.kind(), e.what(), std::move(tr));
  }
  detail::fill_diagnostics(sys, tr);
  const double gap = res.max_volume_discrepancy();
  if (gap > opts.volume_tolerance) {
    tr.warnings.push_back("log det J and the divergence integral differ by " + std::to_string(gap));
  }
  return res;
}

}  // namespace contact_flow
