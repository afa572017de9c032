#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "contact_flow/errors.hpp"

namespace contact_flow {

// All phase-space objects share the flat coordinate layout
// [S, q^1..q^n, p_1..p_n] of length 2n+1.
inline std::size_t phase_dim(std::size_t n) { return 2 * n + 1; }

inline std::size_t dof_from_dim(Eigen::Index dim) {
  if (dim < 3 || dim % 2 == 0) {
    throw ContractError("phase-space vector of length " + std::to_string(dim) +
                        " is not of the form 2n+1 with n >= 1");
  }
  return static_cast<std::size_t>((dim - 1) / 2);
}

inline Eigen::Index s_index() { return 0; }
inline Eigen::Index q_index(std::size_t n, std::size_t a) {
  (void)n;
  return static_cast<Eigen::Index>(1 + a);
}
inline Eigen::Index p_index(std::size_t n, std::size_t a) {
  return static_cast<Eigen::Index>(1 + n + a);
}

namespace detail {

inline Eigen::VectorXd pack(double s, std::span<const double> q, std::span<const double> p) {
  if (q.size() != p.size()) {
    throw ContractError("q has length " + std::to_string(q.size()) + " but p has length " +
                        std::to_string(p.size()));
  }
  if (q.empty()) throw ContractError("contact phase space needs n >= 1");
  const std::size_t n = q.size();
  Eigen::VectorXd x(static_cast<Eigen::Index>(phase_dim(n)));
  x[0] = s;
  for (std::size_t a = 0; a < n; ++a) {
    x[q_index(n, a)] = q[a];
    x[p_index(n, a)] = p[a];
  }
  return x;
}

// Shared storage and accessors for the three flat phase-space types.
template <typename Derived>
class PhaseVectorBase {
 public:
  std::size_t dof() const noexcept { return n_; }
  Eigen::Index dim() const noexcept { return x_.size(); }
  const Eigen::VectorXd& coords() const noexcept { return x_; }

  double s_part() const { return x_[0]; }
  double q_part(std::size_t a) const { return x_[q_index(n_, a)]; }
  double p_part(std::size_t a) const { return x_[p_index(n_, a)]; }

  auto q_block() const { return x_.segment(1, static_cast<Eigen::Index>(n_)); }
  auto p_block() const {
    return x_.segment(static_cast<Eigen::Index>(1 + n_), static_cast<Eigen::Index>(n_));
  }

  std::vector<double> q_vector() const {
    return {x_.data() + 1, x_.data() + 1 + n_};
  }
  std::vector<double> p_vector() const {
    return {x_.data() + 1 + n_, x_.data() + 1 + 2 * n_};
  }

  friend bool operator==(const PhaseVectorBase& a, const PhaseVectorBase& b) {
    return a.n_ == b.n_ && a.x_ == b.x_;
  }

 protected:
  PhaseVectorBase() = default;
  explicit PhaseVectorBase(Eigen::VectorXd x) : n_(dof_from_dim(x.size())), x_(std::move(x)) {}

  std::size_t n_ = 0;
  Eigen::VectorXd x_;
};

}  // namespace detail

// A point (S, q^a, p_a) of the contact phase space in Darboux coordinates.
class ContactState : public detail::PhaseVectorBase<ContactState> {
 public:
  ContactState(double s, std::span<const double> q, std::span<const double> p)
      : ContactState(detail::pack(s, q, p)) {}
  ContactState(double s, std::initializer_list<double> q, std::initializer_list<double> p)
      : ContactState(s, std::span<const double>(q.begin(), q.size()),
                     std::span<const double>(p.begin(), p.size())) {}

  explicit ContactState(Eigen::VectorXd coords) : PhaseVectorBase(std::move(coords)) {
    for (Eigen::Index i = 0; i < x_.size(); ++i) {
      if (!std::isfinite(x_[i])) {
        throw ContractError("contact state coordinate " + std::to_string(i) + " is not finite");
      }
    }
  }

  double S() const { return s_part(); }
  double q(std::size_t a) const { return q_part(a); }
  double p(std::size_t a) const { return p_part(a); }

  // Copy with one flat coordinate shifted, used by finite differences.
  ContactState shifted(Eigen::Index i, double delta) const {
    ContactState out = *this;
    out.x_[i] += delta;
    return out;
  }
};

// Tangent vector (dS, dq^a, dp_a) attached to a point of dimension n.
class TangentVector : public detail::PhaseVectorBase<TangentVector> {
 public:
  TangentVector(double ds, std::span<const double> dq, std::span<const double> dp)
      : PhaseVectorBase(detail::pack(ds, dq, dp)) {}
  TangentVector(double ds, std::initializer_list<double> dq, std::initializer_list<double> dp)
      : TangentVector(ds, std::span<const double>(dq.begin(), dq.size()),
                      std::span<const double>(dp.begin(), dp.size())) {}
  explicit TangentVector(Eigen::VectorXd components) : PhaseVectorBase(std::move(components)) {}

  static TangentVector zero(std::size_t n) {
    return TangentVector(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(phase_dim(n))));
  }

  double dS() const { return s_part(); }
  double dq(std::size_t a) const { return q_part(a); }
  double dp(std::size_t a) const { return p_part(a); }
};

// First partial derivatives (∂/∂S, ∂/∂q^a, ∂/∂p_a) of a scalar field.
class Gradient : public detail::PhaseVectorBase<Gradient> {
 public:
  explicit Gradient(Eigen::VectorXd components) : PhaseVectorBase(std::move(components)) {}

  double dS() const { return s_part(); }
  double dq(std::size_t a) const { return q_part(a); }
  double dp(std::size_t a) const { return p_part(a); }
};

inline void require_same_dof(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw ContractError(std::string(what) + ": dimension mismatch (n=" + std::to_string(a) +
                        " vs n=" + std::to_string(b) + ")");
  }
}

}  // namespace contact_flow
