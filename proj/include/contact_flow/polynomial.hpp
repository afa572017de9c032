#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "contact_flow/field.hpp"
#include "contact_flow/state.hpp"

namespace contact_flow {

// Multivariate polynomial in the flat coordinates (S, q, p), with analytic
// gradient and Hessian. Used as a source of smooth test functions.
class Polynomial {
 public:
  struct Term {
    double coefficient;
    std::vector<int> powers;  // one exponent per flat coordinate
  };

  explicit Polynomial(std::size_t n) : n_(n) {}

  std::size_t dof() const { return n_; }
  const std::vector<Term>& terms() const { return terms_; }

  Polynomial& add_term(double coefficient, std::vector<int> powers) {
    if (powers.size() != phase_dim(n_)) {
      throw ContractError("polynomial term has the wrong number of exponents");
    }
    terms_.push_back({coefficient, std::move(powers)});
    return *this;
  }

  double operator()(const ContactState& x) const {
    double sum = 0.0;
    for (const Term& t : terms_) sum += t.coefficient * monomial(t.powers, x, -1, -1);
    return sum;
  }

  Gradient gradient(const ContactState& x) const {
    const Eigen::Index d = x.dim();
    Eigen::VectorXd g = Eigen::VectorXd::Zero(d);
    for (const Term& t : terms_) {
      for (Eigen::Index i = 0; i < d; ++i) {
        const int k = t.powers[static_cast<std::size_t>(i)];
        if (k == 0) continue;
        g[i] += t.coefficient * k * monomial(t.powers, x, i, -1);
      }
    }
    return Gradient(std::move(g));
  }

  Eigen::MatrixXd hessian(const ContactState& x) const {
    const Eigen::Index d = x.dim();
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(d, d);
    for (const Term& t : terms_) {
      for (Eigen::Index i = 0; i < d; ++i) {
        const int ki = t.powers[static_cast<std::size_t>(i)];
        if (ki == 0) continue;
        for (Eigen::Index j = 0; j < d; ++j) {
          const int kj = t.powers[static_cast<std::size_t>(j)];
          if (i == j) {
            if (ki < 2) continue;
            H(i, i) += t.coefficient * ki * (ki - 1) * monomial(t.powers, x, i, i);
          } else if (kj > 0) {
            H(i, j) += t.coefficient * ki * kj * monomial(t.powers, x, i, j);
          }
        }
      }
    }
    return H;
  }

  ScalarField field() const {
    Polynomial self = *this;
    return ScalarField([self](const ContactState& x) { return self(x); },
                       [self](const ContactState& x) { return self.gradient(x); },
                       [self](const ContactState& x) { return self.hessian(x); });
  }

  // Random polynomial of total degree <= max_degree with `term_count` terms
  // and coefficients uniform in [-1, 1].
  template <typename Rng>
  static Polynomial random(std::size_t n, int max_degree, int term_count, Rng& rng) {
    Polynomial poly(n);
    const std::size_t d = phase_dim(n);
    std::uniform_real_distribution<double> coef(-1.0, 1.0);
    std::uniform_int_distribution<std::size_t> var(0, d - 1);
    std::uniform_int_distribution<int> degree(1, max_degree);
    for (int t = 0; t < term_count; ++t) {
      std::vector<int> powers(d, 0);
      const int deg = degree(rng);
      for (int k = 0; k < deg; ++k) ++powers[var(rng)];
      poly.add_term(coef(rng), std::move(powers));
    }
    return poly;
  }

 private:
  // Product of x_k^{powers_k}, with the exponents at `skip1`/`skip2` lowered by
  // one each (a derivative has been taken).
  static double monomial(const std::vector<int>& powers, const ContactState& x, Eigen::Index skip1,
                         Eigen::Index skip2) {
    double m = 1.0;
    for (Eigen::Index i = 0; i < x.dim(); ++i) {
      int k = powers[static_cast<std::size_t>(i)];
      if (i == skip1) --k;
      if (i == skip2) --k;
      for (int r = 0; r < k; ++r) m *= x.coords()[i];
    }
    return m;
  }

  std::size_t n_;
  std::vector<Term> terms_;
};

}  // namespace contact_flow
