#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "contact_flow/errors.hpp"
#include "contact_flow/state.hpp"

namespace contact_flow {

enum class DerivativeMode { analytic, finite_difference };

inline const char* to_string(DerivativeMode mode) {
  return mode == DerivativeMode::analytic ? "analytic" : "finite-difference";
}

// Central-difference step for coordinate value x: cbrt(eps)·(1+|x|).
inline double fd_step(double x) {
  static const double base = std::cbrt(std::numeric_limits<double>::epsilon());
  return base * (1.0 + std::abs(x));
}

using EvalFn = std::function<double(const ContactState&)>;
using GradientFn = std::function<Gradient(const ContactState&)>;
using HessianFn = std::function<Eigen::MatrixXd(const ContactState&)>;

inline Gradient fd_gradient(const EvalFn& f, const ContactState& x) {
  Eigen::VectorXd g(x.dim());
  for (Eigen::Index i = 0; i < x.dim(); ++i) {
    const double h = fd_step(x.coords()[i]);
    g[i] = (f(x.shifted(i, h)) - f(x.shifted(i, -h))) / (2.0 * h);
  }
  return Gradient(std::move(g));
}

// Second partials from values alone: central second differences with steps
// of order eps^(1/4), which balances truncation against rounding.
inline Eigen::MatrixXd fd_hessian(const EvalFn& f, const ContactState& x) {
  static const double base = std::pow(std::numeric_limits<double>::epsilon(), 0.25);
  const Eigen::Index d = x.dim();
  Eigen::VectorXd step(d);
  for (Eigen::Index i = 0; i < d; ++i) step[i] = base * (1.0 + std::abs(x.coords()[i]));
  const double f0 = f(x);
  Eigen::MatrixXd H(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double hi = step[i];
    H(i, i) = (f(x.shifted(i, hi)) - 2.0 * f0 + f(x.shifted(i, -hi))) / (hi * hi);
    for (Eigen::Index j = 0; j < i; ++j) {
      const double hj = step[j];
      auto at = [&](double si, double sj) { return f(x.shifted(i, si).shifted(j, sj)); };
      H(i, j) = H(j, i) = (at(hi, hj) - at(hi, -hj) - at(-hi, hj) + at(-hi, -hj)) / (4.0 * hi * hj);
    }
  }
  return H;
}

// A smooth real function on the contact phase space with optional analytic
// first (and second) partials. Missing partials fall back to central
// differences.
class ScalarField {
 public:
  ScalarField() = default;
  explicit ScalarField(EvalFn eval, GradientFn gradient = {}, HessianFn hessian = {})
      : eval_(std::move(eval)), gradient_(std::move(gradient)), hessian_(std::move(hessian)) {
    if (!eval_) throw ContractError("scalar field needs an evaluation function");
  }

  double operator()(const ContactState& x) const { return eval_(x); }

  Gradient gradient(const ContactState& x) const {
    return gradient_ ? gradient_(x) : fd_gradient(eval_, x);
  }

  Gradient fd_gradient_of(const ContactState& x) const { return fd_gradient(eval_, x); }

  DerivativeMode derivative_mode() const {
    return gradient_ ? DerivativeMode::analytic : DerivativeMode::finite_difference;
  }

  bool has_hessian() const { return static_cast<bool>(hessian_); }
  std::optional<Eigen::MatrixXd> hessian(const ContactState& x) const {
    if (!hessian_) return std::nullopt;
    return hessian_(x);
  }

  // The analytic Hessian if present; else central differences of the
  // analytic gradient; else second differences of values.
  Eigen::MatrixXd hessian_or_fd(const ContactState& x) const {
    if (hessian_) return hessian_(x);
    if (!gradient_) return fd_hessian(eval_, x);
    const Eigen::Index d = x.dim();
    Eigen::MatrixXd H(d, d);
    for (Eigen::Index j = 0; j < d; ++j) {
      const double h = fd_step(x.coords()[j]);
      H.col(j) = (gradient_(x.shifted(j, h)).coords() - gradient_(x.shifted(j, -h)).coords()) / (2.0 * h);
    }
    return 0.5 * (H + H.transpose());
  }

  const EvalFn& eval_fn() const { return eval_; }

  ScalarField scaled(double c) const {
    EvalFn e = [f = eval_, c](const ContactState& x) { return c * f(x); };
    GradientFn g;
    if (gradient_) {
      g = [f = gradient_, c](const ContactState& x) { return Gradient(c * f(x).coords()); };
    }
    HessianFn hs;
    if (hessian_) {
      hs = [f = hessian_, c](const ContactState& x) -> Eigen::MatrixXd { return c * f(x); };
    }
    return ScalarField(std::move(e), std::move(g), std::move(hs));
  }

 private:
  EvalFn eval_;
  GradientFn gradient_;
  HessianFn hessian_;
};

// A contact Hamiltonian h on the (2n+1)-dimensional phase space.
class ContactSystem {
 public:
  ContactSystem(std::size_t n, ScalarField h, std::string name = "custom")
      : n_(n), h_(std::move(h)), name_(std::move(name)) {
    if (n_ == 0) throw ContractError("contact system needs n >= 1 degrees of freedom");
  }

  std::size_t dof() const noexcept { return n_; }
  const std::string& name() const noexcept { return name_; }
  const ScalarField& hamiltonian() const noexcept { return h_; }
  DerivativeMode derivative_mode() const { return h_.derivative_mode(); }

  double h(const ContactState& x) const {
    check(x);
    return h_(x);
  }
  Gradient gradient(const ContactState& x) const {
    check(x);
    return h_.gradient(x);
  }
  double grad_S(const ContactState& x) const { return gradient(x).dS(); }
  Eigen::VectorXd grad_q(const ContactState& x) const { return gradient(x).q_block(); }
  Eigen::VectorXd grad_p(const ContactState& x) const { return gradient(x).p_block(); }

  // The system generated by -h, whose field is the time-reversed field.
  ContactSystem negated() const { return ContactSystem(n_, h_.scaled(-1.0), name_ + "[reversed]"); }

  void check(const ContactState& x) const { require_same_dof(n_, x.dof(), name_.c_str()); }

 private:
  std::size_t n_;
  ScalarField h_;
  std::string name_;
};

// Largest |analytic - central FD| / (1 + |analytic|) over all partials at x.
// Zero for fields that have no analytic partials.
inline double derivative_consistency(const ScalarField& f, const ContactState& x) {
  if (f.derivative_mode() != DerivativeMode::analytic) return 0.0;
  const Eigen::VectorXd a = f.gradient(x).coords();
  const Eigen::VectorXd d = f.fd_gradient_of(x).coords();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - d[i]) / (1.0 + std::abs(a[i])));
  }
  return worst;
}

}  // namespace contact_flow
