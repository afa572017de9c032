#include "contact_flow/systems.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "contact_flow/catalog.hpp"
#include "contact_flow/dynamics.hpp"
#include "contact_flow/expression.hpp"
#include "contact_flow/geometry.hpp"
#include "test_support.hpp"

namespace contact_flow {
namespace {

using testing::random_state;

IntegratorOptions tight() {
  IntegratorOptions o;
  o.rtol = 1e-10;
  o.atol = 1e-12;
  return o;
}

TEST(DampedClosedForm, UndampedQuarterPeriod) {
  const LinearDampedOscillator osc(1, {1.0}, {1.0}, 0.0);
  const DampedSolution s = damped_closed_form(osc, ContactState(0, {1}, {0}), std::numbers::pi / 2);
  EXPECT_NEAR(s.q[0], 0.0, 1e-15);
  EXPECT_NEAR(s.p[0], -1.0, 1e-15);
  EXPECT_DOUBLE_EQ(s.h, 0.5);
}

TEST(DampedClosedForm, UnderdampedAtTen) {
  const LinearDampedOscillator osc(1, {1.0}, {1.0}, 0.1);
  const double w = std::sqrt(0.9975);
  const double expected = std::exp(-0.5) * (std::cos(10 * w) + (0.05 / w) * std::sin(10 * w));
  const DampedSolution s = damped_closed_form(osc, ContactState(0, {1}, {0}), 10.0);
  EXPECT_NEAR(s.q[0], expected, 1e-14);
  EXPECT_NEAR(s.h, 0.5 * std::exp(-1.0), 1e-15);
}

TEST(DampedClosedForm, IdentityAtTimeZero) {
  const LinearDampedOscillator osc(2, {1.0, 3.0}, {2.0, 0.5}, 0.2);
  const ContactState x0(0.3, {0.1, -0.7}, {1.2, 0.4});
  const DampedSolution s = damped_closed_form(osc, x0, 0.0);
  EXPECT_EQ(s.q, x0.q_vector());
  EXPECT_EQ(s.p, x0.p_vector());
}

TEST(DampedClosedForm, RefusesOverdampedModes) {
  const LinearDampedOscillator osc(1, {1.0}, {1.0}, 2.0);
  EXPECT_THROW(damped_closed_form(osc, ContactState(0, {1}, {0}), 1.0), UnsupportedRegimeError);
  // The flow itself still integrates.
  EXPECT_NO_THROW(integrate(osc.system(), ContactState(0, {1}, {0}), 0.0, 1.0, tight()));
}

TEST(DampedOscillator, DivergenceAndXiEverywhere) {
  std::mt19937_64 rng(1);
  const ContactSystem sys = LinearDampedOscillator(3, {1, 2, 3}, {1, 1, 1}, 0.25).system();
  for (int k = 0; k < 20; ++k) {
    const ContactState x = random_state(3, rng, 4.0);
    EXPECT_DOUBLE_EQ(xi_of(sys, x), -0.25);
    EXPECT_DOUBLE_EQ(divergence(sys, x), -1.0);
  }
}

TEST(DampedOscillator, IntegrationMatchesClosedFormOverFiftyUnits) {
  const LinearDampedOscillator osc(2, {1.0, 2.0}, {1.0, 3.0}, 0.1);
  const ContactState x0(0.0, {1.0, -0.5}, {0.0, 0.8});
  const Trajectory tr = integrate(osc.system(), x0, 0.0, 50.0, tight());
  for (std::size_t k = 0; k < tr.size(); ++k) {
    const DampedSolution s = damped_closed_form(osc, x0, tr.times[k]);
    for (std::size_t a = 0; a < 2; ++a) {
      EXPECT_NEAR(tr.states[k].q(a), s.q[a], 1e-8);
      EXPECT_NEAR(tr.states[k].p(a), s.p[a], 1e-8);
    }
    EXPECT_NEAR(tr.h_vals[k], s.h, 1e-8);
  }
}

TEST(DampedOscillator, SOracleIsTightIntegration) {
  // S has no closed form; Ṡ = h - p q̇ integrated at rtol 1e-12 is the oracle.
  const LinearDampedOscillator osc(1, {1.0}, {1.0}, 0.1);
  const ContactState x0(0.0, {1}, {0});
  IntegratorOptions ref = tight();
  ref.rtol = 1e-12;
  ref.atol = 1e-14;
  const double s_ref = flow_to(osc.system(), x0, 10.0, ref).S();
  const double s = flow_to(osc.system(), x0, 10.0, tight()).S();
  EXPECT_NEAR(s, s_ref, 1e-8);
  // Consistency with the closed-form h: S = (H - h)/alpha.
  const DampedSolution c = damped_closed_form(osc, x0, 10.0);
  const double H = 0.5 * (c.q[0] * c.q[0] + c.p[0] * c.p[0]);
  EXPECT_NEAR(s_ref, (H - c.h) / 0.1, 1e-8);
}

TEST(Conservative, ReducesToHamiltonsEquations) {
  std::mt19937_64 rng(2);
  const ConservativeSystem quartic{
      2, [](const Eigen::VectorXd& q, const Eigen::VectorXd& p) { return 0.5 * p.squaredNorm() + 0.25 * q.array().pow(4).sum(); },
      [](const Eigen::VectorXd& q, const Eigen::VectorXd&) { return Eigen::VectorXd(q.array().pow(3)); },
      [](const Eigen::VectorXd&, const Eigen::VectorXd& p) { return Eigen::VectorXd(p); }, "quartic"};
  const ContactSystem sys = quartic.system();
  for (int k = 0; k < 20; ++k) {
    const ContactState x = random_state(2, rng, 2.0);
    const TangentVector v = hamiltonian_vector_field(sys, x);
    for (std::size_t a = 0; a < 2; ++a) {
      EXPECT_EQ(v.dq(a), x.p(a));
      EXPECT_EQ(v.dp(a), -std::pow(x.q(a), 3));
    }
    EXPECT_EQ(xi_of(sys, x), 0.0);
  }
  const ContactState x0(0.0, {1.0, -0.3}, {0.2, 0.5});
  const Trajectory tr = integrate(sys, x0, 0.0, 20.0, tight());
  for (double h : tr.h_vals) EXPECT_NEAR(h, tr.h_vals.front(), 1e-9);
}

TEST(Parser, EvaluatesDampedOscillator) {
  const ExpressionSystem e = parse_hamiltonian("p1^2/2 + q1^2/2 - 0.1*S", 1);
  EXPECT_DOUBLE_EQ(e(ContactState(0, {1}, {0})), 0.5);
}

TEST(Parser, UnknownIdentifierNamesIt) {
  try {
    parse_hamiltonian("q2", 1);
    FAIL();
  } catch (const UnknownIdentifierError& err) {
    EXPECT_EQ(err.name(), "q2");
    EXPECT_EQ(err.offset(), 0u);
  }
  EXPECT_THROW(parse_hamiltonian("x + 1", 1), UnknownIdentifierError);
  EXPECT_THROW(parse_hamiltonian("q0", 1), UnknownIdentifierError);
}

TEST(Parser, FunctionsAndConstants) {
  EXPECT_DOUBLE_EQ(parse_hamiltonian("exp(-S)*p1", 1)(ContactState(0, {0}, {2})), 2.0);
  const ContactState x(0.5, {0.25, 4.0}, {-1.0, 9.0});
  EXPECT_DOUBLE_EQ(parse_hamiltonian("sqrt(p2) + abs(p1) + log(exp(q1))", 2)(x), 3.0 + 1.0 + 0.25);
  EXPECT_DOUBLE_EQ(parse_hamiltonian("sin(0)+cos(0)", 1)(ContactState(0, {0}, {0})), 1.0);
  EXPECT_DOUBLE_EQ(parse_hamiltonian("1.5e1 + .5 + 2E-1", 1)(ContactState(0, {0}, {0})), 15.7);
}

TEST(Parser, Precedence) {
  const ContactState x(0, {0}, {0});
  EXPECT_DOUBLE_EQ(parse_hamiltonian("-2^2", 1)(x), -4.0);
  EXPECT_DOUBLE_EQ(parse_hamiltonian("2^3^2", 1)(x), 512.0);
  EXPECT_DOUBLE_EQ(parse_hamiltonian("2^-1", 1)(x), 0.5);
  EXPECT_DOUBLE_EQ(parse_hamiltonian("1 - 2 - 3", 1)(x), -4.0);
  EXPECT_DOUBLE_EQ(parse_hamiltonian("8 / 4 / 2", 1)(x), 1.0);
  EXPECT_DOUBLE_EQ(parse_hamiltonian("2 + 3 * 4", 1)(x), 14.0);
  EXPECT_DOUBLE_EQ(parse_hamiltonian("3 * -2", 1)(x), -6.0);
  EXPECT_DOUBLE_EQ(parse_hamiltonian("(2 + 3) * 4", 1)(x), 20.0);
}

TEST(Parser, SyntaxErrorsCarryOffsets) {
  auto offset_of = [](const std::string& src) -> std::size_t {
    try {
      parse_hamiltonian(src, 1);
    } catch (const ParseError& e) {
      return e.offset();
    }
    return std::string::npos;
  };
  EXPECT_EQ(offset_of("1 +"), 3u);
  EXPECT_EQ(offset_of("(1 + 2"), 6u);
  EXPECT_EQ(offset_of("1 2"), 2u);
  EXPECT_EQ(offset_of("1e+"), 1u);
  EXPECT_EQ(offset_of("q1 # 2"), 3u);
  EXPECT_EQ(offset_of(""), 0u);
  EXPECT_EQ(offset_of("--1"), 1u);
}

TEST(Parser, ArityErrors) {
  EXPECT_THROW(parse_hamiltonian("sin(1, 2)", 1), ArityError);
  EXPECT_THROW(parse_hamiltonian("exp()", 1), ArityError);
  EXPECT_THROW(parse_hamiltonian("cos + 1", 1), ArityError);
  EXPECT_THROW(parse_hamiltonian("S(1)", 1), ParseError);
}

TEST(Parser, PrettyPrintRoundTrips) {
  std::mt19937_64 rng(3);
  const char* atoms[] = {"S", "q1", "p2", "0.1", "3", "1e-7", "2.5"};
  const char* ops[] = {" + ", " - ", " * ", " / ", "^"};
  const char* funcs[] = {"sin", "cos", "exp", "log", "sqrt", "abs"};
  std::function<std::string(int)> gen = [&](int depth) -> std::string {
    std::uniform_int_distribution<int> pick(0, 9);
    const int r = depth <= 0 ? 0 : pick(rng);
    if (r < 3) return atoms[rng() % 7];
    if (r < 4) return "-(" + gen(depth - 1) + ")";
    if (r < 5) return std::string(funcs[rng() % 6]) + "(" + gen(depth - 1) + ")";
    if (r < 6) return "(" + gen(depth - 1) + ")";
    return gen(depth - 1) + ops[rng() % 5] + "(" + gen(depth - 1) + ")";
  };
  for (int k = 0; k < 300; ++k) {
    const std::string src = gen(5);
    const ExprPtr a = parse_expression(src, 2);
    const std::string printed = to_source(*a);
    const ExprPtr b = parse_expression(printed, 2);
    EXPECT_TRUE(*a == *b) << src << " -> " << printed;
    EXPECT_EQ(to_source(*b), printed);
  }
}

TEST(ExpressionSystem, AgreesWithBuiltin) {
  std::mt19937_64 rng(4);
  const ContactSystem builtin = LinearDampedOscillator(2, {1.0, 2.0}, {3.0, 0.5}, 0.15).system();
  const ContactSystem expr =
      parse_hamiltonian("p1^2/2 + 3*q1^2/2 + p2^2/(2*2) + 0.5*q2^2/2 - 0.15*S", 2).system();
  EXPECT_EQ(expr.derivative_mode(), DerivativeMode::finite_difference);
  for (int k = 0; k < 100; ++k) {
    const ContactState x = random_state(2, rng, 2.0);
    EXPECT_NEAR(expr.h(x), builtin.h(x), 1e-12 * (1 + std::abs(builtin.h(x))));
    const Eigen::VectorXd ga = builtin.gradient(x).coords();
    const Eigen::VectorXd gf = expr.gradient(x).coords();
    for (Eigen::Index i = 0; i < ga.size(); ++i) EXPECT_NEAR(gf[i], ga[i], 1e-5 * (1 + std::abs(ga[i])));
  }
}

TEST(ExpressionSystem, NonFiniteValueSurfacesAsEvaluationError) {
  const ContactSystem sys = parse_hamiltonian("log(q1)", 1).system();
  EXPECT_THROW(hamiltonian_vector_field(sys, ContactState(0, {-1}, {0})), EvaluationError);
}

TEST(Catalog, ListsRequiredSystems) {
  std::vector<std::string> names;
  for (const auto& e : builtin_catalog()) names.push_back(e.name);
  for (const char* required : {"harmonic", "damped_oscillator", "free_damped", "constant"}) {
    EXPECT_NE(std::find(names.begin(), names.end(), required), names.end()) << required;
  }
}

TEST(Catalog, DampedOscillatorDivergence) {
  const BuiltinSystem b = make_builtin("damped_oscillator(n=1,m=1,k=1,alpha=0.1)");
  EXPECT_DOUBLE_EQ(divergence(b.system, ContactState(0.3, {2}, {-1})), -0.2);
  ASSERT_TRUE(b.damped.has_value());
  EXPECT_EQ(b.spec, "damped_oscillator(alpha=0.10000000000000001,k=1,m=1,n=1)");
}

TEST(Catalog, HarmonicIsBasic) {
  std::mt19937_64 rng(5);
  const BuiltinSystem b = make_builtin("harmonic(n=2)");
  EXPECT_EQ(b.system.dof(), 2u);
  for (int k = 0; k < 10; ++k) EXPECT_EQ(xi_of(b.system, random_state(2, rng)), 0.0);
}

TEST(Catalog, ConstantGeneratesReebField) {
  const BuiltinSystem b = make_builtin("constant(c=1)");
  std::mt19937_64 rng(6);
  const ContactState x = random_state(1, rng);
  EXPECT_EQ(hamiltonian_vector_field(b.system, x), reeb_vector(1));
}

TEST(Catalog, Errors) {
  try {
    make_builtin("pendulum(n=1)");
    FAIL();
  } catch (const CatalogError& e) {
    EXPECT_NE(std::string(e.what()).find("damped_oscillator"), std::string::npos);
  }
  EXPECT_THROW(make_builtin("harmonic(n=0)"), CatalogError);
  EXPECT_THROW(make_builtin("harmonic(n=1.5)"), CatalogError);
  EXPECT_THROW(make_builtin("harmonic(mass=1)"), CatalogError);
  EXPECT_THROW(make_builtin("harmonic(m=-1)"), CatalogError);
  EXPECT_THROW(make_builtin("harmonic(m=abc)"), CatalogError);
  EXPECT_THROW(make_builtin("harmonic(m=1"), CatalogError);
}

}  // namespace
}  // namespace contact_flow
