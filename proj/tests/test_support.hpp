#pragma once

#include <cstddef>
#include <initializer_list>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "contact_flow/field.hpp"
#include "contact_flow/polynomial.hpp"
#include "contact_flow/state.hpp"

namespace contact_flow::testing {

inline ContactState random_state(std::size_t n, std::mt19937_64& rng, double radius = 1.0) {
  std::uniform_real_distribution<double> u(-radius, radius);
  Eigen::VectorXd x(static_cast<Eigen::Index>(phase_dim(n)));
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = u(rng);
  return ContactState(std::move(x));
}

inline TangentVector random_tangent(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXd v(static_cast<Eigen::Index>(phase_dim(n)));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = u(rng);
  return TangentVector(std::move(v));
}

// Builds a polynomial field from (coefficient, exponents) pairs.
inline ScalarField poly(std::size_t n,
                        std::initializer_list<std::pair<double, std::vector<int>>> terms) {
  Polynomial p(n);
  for (const auto& [c, e] : terms) p.add_term(c, e);
  return p.field();
}

// Coordinate functions for n = 1: (S, q, p).
inline ScalarField coord_field(std::size_t n, Eigen::Index i) {
  std::vector<int> e(phase_dim(n), 0);
  e[static_cast<std::size_t>(i)] = 1;
  return poly(n, {{1.0, e}});
}

// Value-only wrapper, forcing finite-difference partials.
inline ScalarField value_only(const ScalarField& f) { return ScalarField(f.eval_fn()); }

}  // namespace contact_flow::testing
