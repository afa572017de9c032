#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "contact_flow/errors.hpp"
#include "contact_flow/field.hpp"
#include "contact_flow/state.hpp"

namespace contact_flow {

namespace detail {

inline std::vector<double> broadcast(std::size_t n, const std::vector<double>& v, const char* what) {
  if (v.size() == 1) return std::vector<double>(n, v[0]);
  if (v.size() != n) {
    throw ContractError(std::string(what) + " needs 1 or n=" + std::to_string(n) + " entries");
  }
  return v;
}

}  // namespace detail

// h = Σ_a (p_a²/2m_a + k_a (q^a)²/2) - αS. The contact form of the linearly
// damped oscillator q̈ + αq̇ + (k/m)q = 0.
struct LinearDampedOscillator {
  std::size_t n = 1;
  std::vector<double> masses{1.0};
  std::vector<double> stiffnesses{1.0};
  double alpha = 0.1;

  LinearDampedOscillator() = default;
  LinearDampedOscillator(std::size_t dof, std::vector<double> m, std::vector<double> k, double a)
      : n(dof), masses(detail::broadcast(dof, m, "masses")),
        stiffnesses(detail::broadcast(dof, k, "stiffnesses")), alpha(a) {
    validate();
  }

  void validate() const {
    if (n == 0) throw ContractError("damped oscillator needs n >= 1");
    if (masses.size() != n || stiffnesses.size() != n) {
      throw ContractError("damped oscillator parameter lengths must equal n");
    }
    for (std::size_t a = 0; a < n; ++a) {
      if (!(masses[a] > 0.0)) throw ContractError("masses must be positive");
      if (!(stiffnesses[a] > 0.0)) throw ContractError("stiffnesses must be positive");
    }
    if (!std::isfinite(alpha)) throw ContractError("alpha must be finite");
  }

  // Σ_a (p_a²/2m_a + k_a q_a²/2), without the -αS term.
  double mechanical_energy(const ContactState& x) const {
    double e = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      e += 0.5 * x.p(a) * x.p(a) / masses[a] + 0.5 * stiffnesses[a] * x.q(a) * x.q(a);
    }
    return e;
  }

  ContactSystem system() const {
    const LinearDampedOscillator self = *this;
    auto h = [self](const ContactState& x) { return self.mechanical_energy(x) - self.alpha * x.S(); };
    auto grad = [self](const ContactState& x) {
      const std::size_t n = self.n;
      Eigen::VectorXd g(x.dim());
      g[0] = -self.alpha;
      for (std::size_t a = 0; a < n; ++a) {
        g[q_index(n, a)] = self.stiffnesses[a] * x.q(a);
        g[p_index(n, a)] = x.p(a) / self.masses[a];
      }
      return Gradient(std::move(g));
    };
    auto hess = [self](const ContactState& x) {
      const std::size_t n = self.n;
      Eigen::MatrixXd H = Eigen::MatrixXd::Zero(x.dim(), x.dim());
      for (std::size_t a = 0; a < n; ++a) {
        H(q_index(n, a), q_index(n, a)) = self.stiffnesses[a];
        H(p_index(n, a), p_index(n, a)) = 1.0 / self.masses[a];
      }
      return H;
    };
    return ContactSystem(n, ScalarField(h, grad, hess), "damped_oscillator");
  }
};

// h(S, q, p) = H(q, p) for a symplectic Hamiltonian H with analytic partials.
struct ConservativeSystem {
  using EnergyFn = std::function<double(const Eigen::VectorXd& q, const Eigen::VectorXd& p)>;
  using PartialFn = std::function<Eigen::VectorXd(const Eigen::VectorXd& q, const Eigen::VectorXd& p)>;

  std::size_t n;
  EnergyFn H;
  PartialFn dH_dq;
  PartialFn dH_dp;
  std::string name = "conservative";

  ContactSystem system() const {
    if (n == 0) throw ContractError("conservative system needs n >= 1");
    const ConservativeSystem self = *this;
    auto h = [self](const ContactState& x) {
      return self.H(x.q_block(), x.p_block());
    };
    auto grad = [self](const ContactState& x) {
      Eigen::VectorXd g(x.dim());
      g[0] = 0.0;
      g.segment(1, static_cast<Eigen::Index>(self.n)) = self.dH_dq(x.q_block(), x.p_block());
      g.segment(static_cast<Eigen::Index>(1 + self.n), static_cast<Eigen::Index>(self.n)) =
          self.dH_dp(x.q_block(), x.p_block());
      return Gradient(std::move(g));
    };
    return ContactSystem(n, ScalarField(h, grad), name);
  }
};

// H = Σ_a (p_a²/2m + k q_a²/2), as a contact system with analytic Hessian.
inline ContactSystem harmonic_oscillator(std::size_t n, double m = 1.0, double k = 1.0) {
  if (n == 0) throw ContractError("harmonic oscillator needs n >= 1");
  if (!(m > 0.0) || !(k > 0.0)) throw ContractError("harmonic oscillator needs m, k > 0");
  LinearDampedOscillator osc(n, {m}, {k}, 0.0);
  ContactSystem base = osc.system();
  return ContactSystem(n, base.hamiltonian(), "harmonic");
}

// h = Σ_a p_a²/2m - αS.
inline ContactSystem free_damped_particle(std::size_t n, double m, double alpha) {
  if (n == 0) throw ContractError("free damped particle needs n >= 1");
  if (!(m > 0.0)) throw ContractError("free damped particle needs m > 0");
  auto h = [m, alpha](const ContactState& x) {
    return 0.5 * x.p_block().squaredNorm() / m - alpha * x.S();
  };
  auto grad = [n, m, alpha](const ContactState& x) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(x.dim());
    g[0] = -alpha;
    for (std::size_t a = 0; a < n; ++a) g[p_index(n, a)] = x.p(a) / m;
    return Gradient(std::move(g));
  };
  auto hess = [n, m](const ContactState& x) {
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(x.dim(), x.dim());
    for (std::size_t a = 0; a < n; ++a) H(p_index(n, a), p_index(n, a)) = 1.0 / m;
    return H;
  };
  return ContactSystem(n, ScalarField(h, grad, hess), "free_damped");
}

// h ≡ c. Its field is c·∂/∂S.
inline ContactSystem constant_hamiltonian(std::size_t n, double c) {
  auto h = [c](const ContactState&) { return c; };
  auto grad = [](const ContactState& x) { return Gradient(Eigen::VectorXd::Zero(x.dim())); };
  auto hess = [](const ContactState& x) { return Eigen::MatrixXd(Eigen::MatrixXd::Zero(x.dim(), x.dim())); };
  return ContactSystem(n, ScalarField(h, grad, hess), "constant");
}

struct DampedSolution {
  std::vector<double> q;
  std::vector<double> p;
  double h;
};

// Exact underdamped solution of the damped oscillator. S has no simple closed
// form and is not returned.
inline DampedSolution damped_closed_form(const LinearDampedOscillator& osc, const ContactState& x0,
                                         double t) {
  osc.validate();
  require_same_dof(osc.n, x0.dof(), "damped_closed_form");
  const double alpha = osc.alpha;
  DampedSolution out;
  out.q.resize(osc.n);
  out.p.resize(osc.n);
  for (std::size_t a = 0; a < osc.n; ++a) {
    const double m = osc.masses[a];
    const double w2 = osc.stiffnesses[a] / m - 0.25 * alpha * alpha;
    if (!(w2 > 0.0)) {
      throw UnsupportedRegimeError("mode " + std::to_string(a + 1) +
                                   " is not underdamped (alpha^2 >= 4k/m)");
    }
    if (t == 0.0) {
      out.q[a] = x0.q(a);
      out.p[a] = x0.p(a);
      continue;
    }
    const double w = std::sqrt(w2);
    const double A = x0.q(a);
    const double B = (x0.p(a) / m + 0.5 * alpha * A) / w;
    const double decay = std::exp(-0.5 * alpha * t);
    const double c = std::cos(w * t);
    const double s = std::sin(w * t);
    out.q[a] = decay * (A * c + B * s);
    out.p[a] = m * decay * (-0.5 * alpha * (A * c + B * s) + w * (B * c - A * s));
  }
  const double h0 = osc.mechanical_energy(x0) - alpha * x0.S();
  out.h = t == 0.0 ? h0 : h0 * std::exp(-alpha * t);
  return out;
}

}  // namespace contact_flow
