#pragma once

// Independent reference computations used only by the tests. Nothing here
// calls into the library routines it is used to check.

#include <cmath>
#include <cstddef>
#include <functional>

#include <Eigen/Dense>

namespace contact_flow::oracles {

using Field = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using Scalar = std::function<double(const Eigen::VectorXd&)>;

// Fourth-order five-point derivative of a scalar along coordinate i.
inline double d5(const Scalar& f, const Eigen::VectorXd& x, Eigen::Index i, double h = 1e-3) {
  auto at = [&](double s) {
    Eigen::VectorXd y = x;
    y[i] += s;
    return f(y);
  };
  return (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
}

inline Eigen::VectorXd gradient5(const Scalar& f, const Eigen::VectorXd& x) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) g[i] = d5(f, x, i);
  return g;
}

inline Eigen::MatrixXd jacobian5(const Field& X, const Eigen::VectorXd& x, double h = 1e-3) {
  const Eigen::Index d = x.size();
  Eigen::MatrixXd J(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    auto at = [&](double s) {
      Eigen::VectorXd y = x;
      y[j] += s;
      return X(y);
    };
    J.col(j) = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
  }
  return J;
}

// Contact Hamiltonian field written out componentwise with five-point
// partials of h, flat layout [S, q, p].
inline Field contact_field(const Scalar& h, std::size_t n) {
  return [h, n](const Eigen::VectorXd& x) {
    const Eigen::VectorXd g = gradient5(h, x);
    Eigen::VectorXd v(x.size());
    double pdh = 0.0;
    for (std::size_t a = 0; a < n; ++a) pdh += x[1 + n + a] * g[1 + n + a];
    v[0] = h(x) - pdh;
    for (std::size_t a = 0; a < n; ++a) {
      v[1 + a] = g[1 + n + a];
      v[1 + n + a] = -g[1 + a] + x[1 + n + a] * g[0];
    }
    return v;
  };
}

// η([X, Y]) at x with [X, Y] = (DY)X - (DX)Y.
inline double eta_of_commutator(const Field& X, const Field& Y, const Eigen::VectorXd& x,
                                std::size_t n) {
  const Eigen::VectorXd c = jacobian5(Y, x) * X(x) - jacobian5(X, x) * Y(x);
  double eta = c[0];
  for (std::size_t a = 0; a < n; ++a) eta += x[1 + n + a] * c[1 + a];
  return eta;
}

// Area of the disc of radius R intersected with the square [-1, 1]^2.
inline double disc_square_area(double R) {
  if (R <= 0.0) return 0.0;
  if (R <= 1.0) return M_PI * R * R;
  if (R >= std::sqrt(2.0)) return 4.0;
  // Remove the four circular segments beyond |x| = 1 or |y| = 1.
  const double segment = R * R * std::acos(1.0 / R) - std::sqrt(R * R - 1.0);
  return M_PI * R * R - 4.0 * segment;
}

// For h = (q^2 + p^2)/2 - alpha S on S in [0,1], q, p in [-1,1]:
// coordinate volume of {h <= c}.
inline double damped_sublevel_volume(double c, double alpha) {
  // Gauss-Legendre in S on 64 panels of 5 nodes.
  static const double xg[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                               0.9061798459386640};
  static const double wg[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                               0.4786286704993665, 0.2369268850561891};
  const int panels = 64;
  double sum = 0.0;
  for (int k = 0; k < panels; ++k) {
    const double a = static_cast<double>(k) / panels;
    const double b = static_cast<double>(k + 1) / panels;
    for (int i = 0; i < 5; ++i) {
      const double s = 0.5 * (a + b) + 0.5 * (b - a) * xg[i];
      const double r2 = 2.0 * (c + alpha * s);
      sum += 0.5 * (b - a) * wg[i] * disc_square_area(r2 > 0.0 ? std::sqrt(r2) : 0.0);
    }
  }
  return sum;
}

// ∫_{a<=h<=b} h^{-m} dV for the same system, via integration by parts
// against the sublevel volume V(c): [c^{-m} V(c)]_a^b + m ∫_a^b c^{-m-1} V(c) dc.
inline double damped_window_mass(double a, double b, double alpha, int m) {
  const int panels = 400;
  double integral = 0.0;
  static const double xg[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                               0.9061798459386640};
  static const double wg[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                               0.4786286704993665, 0.2369268850561891};
  for (int k = 0; k < panels; ++k) {
    const double lo = a + (b - a) * k / panels;
    const double hi = a + (b - a) * (k + 1) / panels;
    for (int i = 0; i < 5; ++i) {
      const double c = 0.5 * (lo + hi) + 0.5 * (hi - lo) * xg[i];
      integral += 0.5 * (hi - lo) * wg[i] * std::pow(c, -m - 1) * damped_sublevel_volume(c, alpha);
    }
  }
  return std::pow(b, -m) * damped_sublevel_volume(b, alpha) -
         std::pow(a, -m) * damped_sublevel_volume(a, alpha) + m * integral;
}

}  // namespace contact_flow::oracles
