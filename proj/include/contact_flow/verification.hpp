#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "contact_flow/dynamics.hpp"
#include "contact_flow/errors.hpp"
#include "contact_flow/field.hpp"
#include "contact_flow/geometry.hpp"
#include "contact_flow/measures.hpp"
#include "contact_flow/polynomial.hpp"
#include "contact_flow/random.hpp"
#include "contact_flow/state.hpp"

namespace contact_flow {

struct Check {
  enum class Bound { at_most, at_least, exact };

  std::string name;
  double measured = 0.0;
  double tolerance = 0.0;
  Bound bound = Bound::at_most;
  bool applicable = true;
  bool pass = false;
  std::string note;
  std::map<std::string, double> extra;

  static Check skipped(std::string name, std::string why) {
    Check c;
    c.name = std::move(name);
    c.applicable = false;
    c.pass = true;
    c.note = "not applicable: " + std::move(why);
    return c;
  }

  static Check failed(std::string name, std::string why) {
    Check c;
    c.name = std::move(name);
    c.measured = std::numeric_limits<double>::quiet_NaN();
    c.pass = false;
    c.note = std::move(why);
    return c;
  }
};

inline const char* to_string(Check::Bound b) {
  switch (b) {
    case Check::Bound::at_most: return "at_most";
    case Check::Bound::at_least: return "at_least";
    case Check::Bound::exact: return "exact";
  }
  return "?";
}

struct VerifySettings {
  ContactState x0;
  double t0 = 0.0;
  double t1 = 10.0;
  IntegratorOptions integrator;
  std::uint64_t seed = 0;
  std::size_t random_states = 100;
  double sample_radius = 1.0;  // random states are x0 + U[-r, r] per coordinate
  // Replaces n+1 as the exponent claimed to be invariant; used as a
  // negative control for the uniqueness check.
  std::optional<int> corrupt_exponent;
};

struct VerificationReport {
  std::vector<Check> checks;
  bool pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
  }
};

namespace detail {

inline Check bounded(std::string name, double measured, double tol, Check::Bound b = Check::Bound::at_most) {
  Check c;
  c.name = std::move(name);
  c.measured = measured;
  c.tolerance = tol;
  c.bound = b;
  switch (b) {
    case Check::Bound::at_most: c.pass = measured <= tol; break;
    case Check::Bound::at_least: c.pass = measured >= tol; break;
    case Check::Bound::exact: c.pass = measured == tol; break;
  }
  return c;
}

// Runs `body` and turns a numerical failure into a failed check.
inline Check guarded(const std::string& name, const std::function<Check()>& body) {
  try {
    return body();
  } catch (const Error& e) {
    return Check::failed(name, e.what());
  }
}

// Draws states near x0 at which h and its gradient evaluate to finite values.
inline std::vector<ContactState> probe_states(const ContactSystem& sys, const VerifySettings& s) {
  RandomStream rng(s.seed, 0x5EED'0001ULL);
  std::vector<ContactState> out;
  out.reserve(s.random_states);
  const std::size_t budget = 20 * s.random_states + 100;
  for (std::size_t tries = 0; tries < budget && out.size() < s.random_states; ++tries) {
    Eigen::VectorXd x = s.x0.coords();
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += rng.uniform(-s.sample_radius, s.sample_radius);
    ContactState st(std::move(x));
    try {
      hamiltonian_vector_field(sys, st);
      out.push_back(std::move(st));
    } catch (const EvaluationError&) {
    }
  }
  if (out.size() < s.random_states) {
    throw EvaluationError("h", std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

inline double rel(double err, double scale) { return std::abs(err) / (1.0 + std::abs(scale)); }

}  // namespace detail

// Pointwise identities at random states near x0.
inline std::vector<Check> geometric_checks(const ContactSystem& sys, const VerifySettings& s) {
  using detail::bounded;
  using detail::rel;
  std::vector<ContactState> states;
  try {
    states = detail::probe_states(sys, s);
  } catch (const Error&) {
    return {Check::failed("geometry", "h is not finite at enough states near the initial state")};
  }
  const std::size_t n = sys.dof();
  const ScalarField& h = sys.hamiltonian();
  const bool analytic = h.derivative_mode() == DerivativeMode::analytic;
  RandomStream rng(s.seed, 0x5EED'0002ULL);
  auto random_poly = [&] { return Polynomial::random(n, 3, 4, rng.engine()).field(); };
  auto random_tangent = [&](const ContactState& x) {
    Eigen::VectorXd v(x.dim());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.uniform(-1.0, 1.0);
    return TangentVector(std::move(v));
  };
  const std::string nested_note =
      analytic ? "" : "h has finite-difference derivatives; nested checks use polynomials only";

  std::vector<Check> out;
  out.push_back(detail::guarded("reeb_conditions", [&] {
    double worst = 0.0;
    for (const auto& x : states) {
      const TangentVector xi = reeb_vector(n);
      worst = std::max(worst, std::abs(contact_form_pair(x, xi) - 1.0));
      worst = std::max(worst, std::abs(d_eta_pair(x, xi, random_tangent(x))));
    }
    return bounded("reeb_conditions", worst, 1e-12);
  }));

  out.push_back(detail::guarded("eta_of_field", [&] {
    double worst = 0.0;
    for (const auto& x : states) {
      const double hv = sys.h(x);
      worst = std::max(worst, rel(contact_form_pair(x, hamiltonian_vector_field(sys, x)) - hv, hv));
    }
    return bounded("eta_of_field", worst, 1e-12);
  }));

  out.push_back(detail::guarded("bracket_antisymmetry", [&] {
    double worst = 0.0;
    for (const auto& x : states) {
      const ScalarField f = random_poly();
      const ScalarField g = random_poly();
      for (const auto& [a, b] : {std::pair{&h, &f}, std::pair{&f, &g}}) {
        const double ab = jacobi_bracket(*a, *b, x);
        worst = std::max(worst, rel(ab + jacobi_bracket(*b, *a, x), ab));
      }
    }
    return bounded("bracket_antisymmetry", worst, 1e-12);
  }));

  out.push_back(detail::guarded("jacobi_identity", [&] {
    double worst = 0.0;
    for (const auto& x : states) {
      const ScalarField f = analytic ? h : random_poly();
      const ScalarField g = random_poly();
      const ScalarField k = random_poly();
      const double a = jacobi_bracket(f, bracket_field(g, k), x);
      const double b = jacobi_bracket(g, bracket_field(k, f), x);
      const double c = jacobi_bracket(k, bracket_field(f, g), x);
      worst = std::max(worst, std::abs(a + b + c) / (1.0 + std::abs(a) + std::abs(b) + std::abs(c)));
    }
    Check c = bounded("jacobi_identity", worst, 1e-6);
    c.note = nested_note;
    return c;
  }));

  out.push_back(detail::guarded("bracket_commutator", [&] {
    double worst = 0.0;
    for (const auto& x : states) {
      const ScalarField f = analytic ? h : random_poly();
      const ScalarField g = random_poly();
      const TangentVector c = fd_lie_bracket(hamiltonian_field_map(f), hamiltonian_field_map(g), x);
      const double fg = jacobi_bracket(f, g, x);
      worst = std::max(worst, rel(contact_form_pair(x, c) - fg, fg));
    }
    Check c = bounded("bracket_commutator", worst, 1e-5);
    c.note = nested_note;
    return c;
  }));

  out.push_back(detail::guarded("basis_commutators", [&] {
    double worst = 0.0;
    for (const auto& x : states) {
      const ScalarField f = analytic ? h : random_poly();
      const double xi_f = xi_of(f, x);
      auto commutator = [&](const BasisElement& A, const BasisElement& B) {
        return derivative_along(A, derivative_along(B, f))(x) -
               derivative_along(B, derivative_along(A, f))(x);
      };
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const double expected = i == j ? xi_f : 0.0;
          worst = std::max(worst, rel(commutator(BasisElement::P(i), BasisElement::Q(j)) - expected, xi_f));
        }
        worst = std::max(worst, rel(commutator(BasisElement::xi(), BasisElement::P(i)), xi_f));
        worst = std::max(worst, rel(commutator(BasisElement::xi(), BasisElement::Q(i)), xi_f));
      }
    }
    Check c = bounded("basis_commutators", worst, 1e-6);
    c.note = nested_note;
    return c;
  }));

  out.push_back(detail::guarded("divergence_trace", [&] {
    double worst = 0.0;
    for (const auto& x : states) {
      const double div = divergence(sys, x);
      worst = std::max(worst, rel(fd_field_jacobian(hamiltonian_field_map(h), x).trace() - div, div));
    }
    return bounded("divergence_trace", worst, 1e-5);
  }));

  out.push_back(detail::guarded("h_evolution_law", [&] {
    // The derivative of h along X_h by central differences against h ξ(h).
    double worst = 0.0;
    for (const auto& x : states) {
      const TangentVector v = hamiltonian_vector_field(sys, x);
      const double scale = std::max(1.0, v.coords().lpNorm<Eigen::Infinity>());
      const double eps = 1e-5 / scale;
      const double dh = (sys.h(ContactState(Eigen::VectorXd(x.coords() + eps * v.coords()))) -
                         sys.h(ContactState(Eigen::VectorXd(x.coords() - eps * v.coords())))) /
                        (2 * eps);
      const double expected = sys.h(x) * xi_of(sys, x);
      worst = std::max(worst, rel(dh - expected, expected));
    }
    return bounded("h_evolution_law", worst, 1e-6);
  }));

  if (analytic) {
    out.push_back(detail::guarded("derivative_consistency", [&] {
      double worst = 0.0;
      for (const auto& x : states) worst = std::max(worst, derivative_consistency(h, x));
      return bounded("derivative_consistency", worst, 1e-6);
    }));
  } else {
    out.push_back(Check::skipped("derivative_consistency", "h has no analytic gradient"));
  }
  return out;
}

namespace detail {

// Newton iteration on S for h(S, q0, p0) = 0.
inline std::optional<ContactState> zero_level_start(const ContactSystem& sys, const ContactState& x0) {
  ContactState x = x0;
  for (int it = 0; it < 100; ++it) {
    const double hv = sys.h(x);
    if (std::abs(hv) <= 1e-14) return x;
    const double slope = sys.grad_S(x);
    if (!(std::abs(slope) > 1e-300) || !std::isfinite(slope)) return std::nullopt;
    x = x.shifted(0, -hv / slope);
  }
  return std::abs(sys.h(x)) <= 1e-10 ? std::optional<ContactState>(x) : std::nullopt;
}

inline double max_drift(const std::vector<double>& series) {
  double worst = 0.0;
  for (double v : series) worst = std::max(worst, std::abs(v - series.front()));
  return worst;
}

}  // namespace detail

// Checks along the orbit from x0 and related orbits.
inline std::vector<Check> orbit_checks(const ContactSystem& sys, const VerifySettings& s) {
  using detail::bounded;
  const std::size_t n = sys.dof();
  const int canonical = static_cast<int>(n + 1);
  std::vector<Check> out;

  std::optional<Trajectory> traj;
  std::string traj_error;
  try {
    traj = integrate(sys, s.x0, s.t0, s.t1, s.integrator);
  } catch (const Error& e) {
    traj_error = e.what();
  }
  double max_xi = 0.0;
  if (traj) {
    for (double v : traj->xi_h_vals) max_xi = std::max(max_xi, std::abs(v));
  }
  const bool basic_orbit = traj && max_xi <= 1e-14;
  const bool on_zero_level = traj && !(std::abs(traj->h_vals[0]) >= density_floor(traj->h_vals[0]));

  // Orbit-level checks need the main orbit.
  auto need_orbit = [&](const std::string& name, const std::function<Check()>& body) {
    if (!traj) return Check::failed(name, "integration failed: " + traj_error);
    return detail::guarded(name, body);
  };

  if (on_zero_level) {
    out.push_back(Check::skipped("pointwise_invariant", "initial state lies on h = 0"));
    out.push_back(Check::skipped("uniqueness", "initial state lies on h = 0"));
  } else {
    out.push_back(need_orbit("pointwise_invariant", [&] {
      const InvariantCheck c = pointwise_invariant_check(*traj, canonical);
      Check k = bounded("pointwise_invariant", c.max_rel_dev, 1e-6);
      k.extra["exponent"] = canonical;
      return k;
    }));
    const int claimed = s.corrupt_exponent.value_or(canonical);
    if (basic_orbit && claimed == canonical) {
      out.push_back(Check::skipped("uniqueness", "xi(h) = 0 along the orbit, so every exponent is invariant"));
    } else {
      out.push_back(need_orbit("uniqueness", [&] {
        // The claimed exponent must leave I constant while another one drifts.
        const int alternative = claimed != canonical ? canonical : canonical - 1;
        const double dev = pointwise_invariant_check(*traj, claimed).max_rel_dev;
        const double drift = pointwise_invariant_check(*traj, alternative).max_rel_dev;
        Check k = bounded("uniqueness", dev, 1e-6);
        k.pass = k.pass && drift >= 0.1;
        k.extra["claimed_exponent"] = claimed;
        k.extra["control_exponent"] = alternative;
        k.extra["control_drift"] = drift;
        k.extra["control_min_drift"] = 0.1;
        if (claimed != canonical) k.note = "claimed exponent overridden for a negative control";
        return k;
      }));
    }
  }

  // Orbit on the h = 0 level reached by moving S from the initial state.
  const char* zero_names[] = {"zero_level_orbit", "zero_level_f_identity", "zero_level_f_exp",
                              "zero_level_f_square"};
  std::optional<ContactState> z;
  try {
    z = detail::zero_level_start(sys, s.x0);
  } catch (const Error&) {
  }
  if (!z) {
    for (const char* name : zero_names) {
      out.push_back(Check::skipped(name, "no state with h = 0 along the S axis through the initial state"));
    }
  } else {
    try {
      const MicrocanonicalCheck mc = microcanonical_orbit_check(sys, *z, s.t0, s.t1, s.integrator);
      Check k = bounded(zero_names[0], mc.max_abs_h, 1e-8);
      k.extra["S0"] = z->S();
      out.push_back(std::move(k));
      const std::vector<double>& hs = mc.trajectory.h_vals;
      const std::pair<const char*, std::function<double(double)>> fs[] = {
          {zero_names[1], [](double h) { return h; }},
          {zero_names[2], [](double h) { return std::exp(h); }},
          {zero_names[3], [](double h) { return h * h; }}};
      for (const auto& [name, f] : fs) {
        std::vector<double> fv;
        fv.reserve(hs.size());
        for (double h : hs) fv.push_back(f(h));
        out.push_back(bounded(name, detail::max_drift(fv), 1e-8));
      }
    } catch (const Error& e) {
      for (const char* name : zero_names) out.push_back(Check::failed(name, e.what()));
    }
  }

  // Volume bookkeeping, and the symplectic limit for basic Hamiltonians.
  std::optional<VariationalResult> var;
  std::string var_error;
  try {
    var = integrate_variational(sys, s.x0, s.t0, s.t1, s.integrator);
  } catch (const Error& e) {
    var_error = e.what();
  }
  out.push_back(var ? bounded("volume_consistency", var->max_volume_discrepancy(), 1e-6)
                    : Check::failed("volume_consistency", var_error));

  bool basic = basic_orbit;
  std::vector<ContactState> states;
  if (basic) {
    try {
      states = detail::probe_states(sys, s);
      for (const auto& x : states) basic = basic && std::abs(xi_of(sys, x)) <= 1e-14;
    } catch (const Error&) {
      basic = false;
    }
  }
  if (!basic) {
    const std::string why = traj ? "h depends on S" : "integration failed";
    out.push_back(Check::skipped("energy_conservation", why));
    out.push_back(Check::skipped("hamilton_equations", why));
    out.push_back(Check::skipped("volume_preservation", why));
    return out;
  }
  out.push_back(bounded("energy_conservation", detail::max_drift(traj->h_vals), 1e-9));
  out.push_back(detail::guarded("hamilton_equations", [&] {
    double worst = 0.0;
    for (const auto& x : states) {
      const TangentVector v = hamiltonian_vector_field(sys, x);
      const Gradient g = sys.gradient(x);
      worst = std::max(worst, (v.q_block() - g.p_block()).template lpNorm<Eigen::Infinity>());
      worst = std::max(worst, (v.p_block() + g.q_block()).template lpNorm<Eigen::Infinity>());
    }
    return bounded("hamilton_equations", worst, 0.0, Check::Bound::exact);
  }));
  if (var) {
    double worst = 0.0;
    for (const auto& v : var->variational) worst = std::max(worst, std::abs(v.J_matrix.determinant() - 1.0));
    out.push_back(bounded("volume_preservation", worst, 1e-8));
  } else {
    out.push_back(Check::failed("volume_preservation", var_error));
  }
  return out;
}

inline VerificationReport verify_system(const ContactSystem& sys, const VerifySettings& s) {
  require_same_dof(sys.dof(), s.x0.dof(), "initial state");
  VerificationReport rep;
  rep.checks = geometric_checks(sys, s);
  std::vector<Check> orbit = orbit_checks(sys, s);
  rep.checks.insert(rep.checks.end(), std::make_move_iterator(orbit.begin()),
                    std::make_move_iterator(orbit.end()));
  return rep;
}

}  // namespace contact_flow
