#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>

#include <Eigen/Dense>

#include "contact_flow/errors.hpp"
#include "contact_flow/field.hpp"
#include "contact_flow/state.hpp"

namespace contact_flow {

// Contact-geometric primitives in Darboux coordinates, with
// η = dS + p_a dq^a and dη = dp_a ∧ dq^a.

using VectorField = std::function<TangentVector(const ContactState&)>;

namespace detail {

inline void require_finite(double v, const std::string& component) {
  if (!std::isfinite(v)) throw EvaluationError(component, v);
}

inline Gradient checked_gradient(const ScalarField& f, const ContactState& x) {
  Gradient g = f.gradient(x);
  require_same_dof(x.dof(), g.dof(), "gradient");
  const std::size_t n = x.dof();
  require_finite(g.dS(), "d/dS");
  for (std::size_t a = 0; a < n; ++a) {
    require_finite(g.dq(a), "d/dq" + std::to_string(a + 1));
    require_finite(g.dp(a), "d/dp" + std::to_string(a + 1));
  }
  return g;
}

inline double checked_value(const ScalarField& f, const ContactState& x) {
  const double v = f(x);
  require_finite(v, "value");
  return v;
}

inline double p_dot(const ContactState& x, const Eigen::VectorXd& v) {
  return x.p_block().dot(v.segment(1, static_cast<Eigen::Index>(x.dof())));
}

}  // namespace detail

// η(v) = dS(v) + p_a dq^a(v).
inline double contact_form_pair(const ContactState& x, const TangentVector& v) {
  require_same_dof(x.dof(), v.dof(), "contact_form_pair");
  return v.dS() + x.p_block().dot(v.q_block());
}

// dη(v, w) = Σ_a [dp_a(v) dq^a(w) - dp_a(w) dq^a(v)].
inline double d_eta_pair(const ContactState& x, const TangentVector& v, const TangentVector& w) {
  require_same_dof(x.dof(), v.dof(), "d_eta_pair");
  require_same_dof(v.dof(), w.dof(), "d_eta_pair");
  return v.p_block().dot(w.q_block()) - w.p_block().dot(v.q_block());
}

// The Reeb field ξ = ∂/∂S.
inline TangentVector reeb_vector(std::size_t n) {
  if (n == 0) throw ContractError("reeb_vector: n must be >= 1");
  TangentVector v = TangentVector::zero(n);
  Eigen::VectorXd c = v.coords();
  c[0] = 1.0;
  return TangentVector(std::move(c));
}

// X_h = (h - p_a ∂h/∂p_a) ∂_S + (∂h/∂p_a) ∂_{q^a} + (p_a ∂h/∂S - ∂h/∂q^a) ∂_{p_a}.
inline TangentVector hamiltonian_vector_field(const ScalarField& h, const ContactState& x) {
  const double hv = detail::checked_value(h, x);
  const Gradient g = detail::checked_gradient(h, x);
  const std::size_t n = x.dof();
  Eigen::VectorXd v(x.dim());
  v[0] = hv - x.p_block().dot(g.p_block());
  for (std::size_t a = 0; a < n; ++a) {
    v[q_index(n, a)] = g.dp(a);
    v[p_index(n, a)] = x.p(a) * g.dS() - g.dq(a);
  }
  return TangentVector(std::move(v));
}

inline TangentVector hamiltonian_vector_field(const ContactSystem& sys, const ContactState& x) {
  sys.check(x);
  return hamiltonian_vector_field(sys.hamiltonian(), x);
}

inline VectorField hamiltonian_field_map(const ScalarField& h) {
  return [h](const ContactState& x) { return hamiltonian_vector_field(h, x); };
}

// ξ(f) = ∂f/∂S.
inline double xi_of(const ScalarField& f, const ContactState& x) {
  return detail::checked_gradient(f, x).dS();
}

inline double xi_of(const ContactSystem& sys, const ContactState& x) {
  sys.check(x);
  return xi_of(sys.hamiltonian(), x);
}

// div X_h = (n+1) ξ(h) with respect to η ∧ (dη)^n.
inline double divergence(const ContactSystem& sys, const ContactState& x) {
  return static_cast<double>(sys.dof() + 1) * xi_of(sys, x);
}

struct AdaptedDerivatives {
  double xi_f;           // ξ(f)
  Eigen::VectorXd P_f;   // P̂^a(f) = ∂f/∂p_a
  Eigen::VectorXd Q_f;   // Q̂_a(f) = p_a ∂f/∂S - ∂f/∂q^a
};

inline AdaptedDerivatives adapted_derivatives(const ScalarField& f, const ContactState& x) {
  const Gradient g = detail::checked_gradient(f, x);
  AdaptedDerivatives d;
  d.xi_f = g.dS();
  d.P_f = g.p_block();
  d.Q_f = x.p_block() * g.dS() - Eigen::VectorXd(g.q_block());
  return d;
}

// {f, g} = f ξ(g) - g ξ(f) + Q̂_a(f) P̂^a(g) - P̂^a(f) Q̂_a(g).
inline double jacobi_bracket(const ScalarField& f, const ScalarField& g, const ContactState& x) {
  const double fv = detail::checked_value(f, x);
  const double gv = detail::checked_value(g, x);
  const AdaptedDerivatives df = adapted_derivatives(f, x);
  const AdaptedDerivatives dg = adapted_derivatives(g, x);
  return fv * dg.xi_f - gv * df.xi_f + df.Q_f.dot(dg.P_f) - df.P_f.dot(dg.Q_f);
}

// The bracket as a field in its own right (partials by finite differences),
// so brackets can be nested.
inline ScalarField bracket_field(const ScalarField& f, const ScalarField& g) {
  return ScalarField([f, g](const ContactState& x) { return jacobi_bracket(f, g, x); });
}

// X_h f = h ξ(f) + Q̂_a(h) P̂^a(f) - P̂^a(h) Q̂_a(f).
inline double field_action(const ContactSystem& sys, const ScalarField& f, const ContactState& x) {
  sys.check(x);
  const double hv = detail::checked_value(sys.hamiltonian(), x);
  const AdaptedDerivatives dh = adapted_derivatives(sys.hamiltonian(), x);
  const AdaptedDerivatives df = adapted_derivatives(f, x);
  return hv * df.xi_f + dh.Q_f.dot(df.P_f) - dh.P_f.dot(df.Q_f);
}

// Elements of the adapted basis {ξ, P̂^i, Q̂_i}.
struct BasisElement {
  enum class Kind { xi, P, Q };
  Kind kind;
  std::size_t index = 0;  // ignored for ξ

  static BasisElement xi() { return {Kind::xi, 0}; }
  static BasisElement P(std::size_t i) { return {Kind::P, i}; }
  static BasisElement Q(std::size_t i) { return {Kind::Q, i}; }
};

inline TangentVector basis_vector(const BasisElement& b, const ContactState& x) {
  const std::size_t n = x.dof();
  if (b.kind != BasisElement::Kind::xi && b.index >= n) {
    throw ContractError("adapted basis index " + std::to_string(b.index) + " out of range");
  }
  Eigen::VectorXd v = Eigen::VectorXd::Zero(x.dim());
  switch (b.kind) {
    case BasisElement::Kind::xi:
      v[0] = 1.0;
      break;
    case BasisElement::Kind::P:
      v[p_index(n, b.index)] = 1.0;
      break;
    case BasisElement::Kind::Q:
      v[0] = x.p(b.index);
      v[q_index(n, b.index)] = -1.0;
      break;
  }
  return TangentVector(std::move(v));
}

// The function x ↦ X(x)·∇f(x), i.e. the vector field acting as a derivation.
inline ScalarField derivative_along(VectorField X, const ScalarField& f) {
  return ScalarField([X = std::move(X), f](const ContactState& x) {
    return X(x).coords().dot(detail::checked_gradient(f, x).coords());
  });
}

inline ScalarField derivative_along(const BasisElement& b, const ScalarField& f) {
  return derivative_along([b](const ContactState& x) { return basis_vector(b, x); }, f);
}

// Central-difference Jacobian ∂X^i/∂x^j of a vector field.
inline Eigen::MatrixXd fd_field_jacobian(const VectorField& X, const ContactState& x) {
  const Eigen::Index d = x.dim();
  Eigen::MatrixXd J(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double h = fd_step(x.coords()[j]);
    J.col(j) = (X(x.shifted(j, h)).coords() - X(x.shifted(j, -h)).coords()) / (2.0 * h);
  }
  return J;
}

// Lie bracket [X, Y]^i = X^j ∂_j Y^i - Y^j ∂_j X^i by central differences.
inline TangentVector fd_lie_bracket(const VectorField& X, const VectorField& Y,
                                    const ContactState& x) {
  const Eigen::VectorXd xv = X(x).coords();
  const Eigen::VectorXd yv = Y(x).coords();
  return TangentVector(fd_field_jacobian(Y, x) * xv - fd_field_jacobian(X, x) * yv);
}

}  // namespace contact_flow
