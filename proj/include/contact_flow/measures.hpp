#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "contact_flow/dynamics.hpp"
#include "contact_flow/errors.hpp"
#include "contact_flow/field.hpp"
#include "contact_flow/parallel.hpp"
#include "contact_flow/random.hpp"
#include "contact_flow/state.hpp"

namespace contact_flow {

// Axis-aligned box in (S, q, p) with an optional window on h that excludes
// the singular set h = 0.
struct Region {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  std::optional<std::pair<double, double>> h_window;

  void validate(std::size_t n) const {
    const auto d = static_cast<Eigen::Index>(phase_dim(n));
    if (lower.size() != d || upper.size() != d) {
      throw ContractError("region bounds must have length 2n+1 = " + std::to_string(d));
    }
    for (Eigen::Index i = 0; i < d; ++i) {
      if (!std::isfinite(lower[i]) || !std::isfinite(upper[i]) || !(lower[i] < upper[i])) {
        throw ContractError("region needs finite lower < upper on axis " + std::to_string(i));
      }
    }
    if (h_window) {
      const auto [lo, hi] = *h_window;
      if (!(lo < hi) || !(lo * hi > 0.0)) {
        throw ContractError("h_window must satisfy h_min < h_max and exclude 0");
      }
    }
  }

  double volume() const { return (upper - lower).prod(); }

  bool contains(const ContactState& x) const {
    const Eigen::VectorXd& c = x.coords();
    return (c.array() >= lower.array()).all() && (c.array() <= upper.array()).all();
  }

  bool in_window(double h) const {
    return !h_window || (h >= h_window->first && h <= h_window->second);
  }

  // The same box grown by `fraction` of its width on every side.
  Region enlarged(double fraction) const {
    Region r = *this;
    const Eigen::VectorXd w = upper - lower;
    r.lower -= fraction * w;
    r.upper += fraction * w;
    r.h_window.reset();
    return r;
  }
};

// The power-law density |h|^{-m}/Z over a region. m = n+1 is the invariant
// exponent; other exponents exist only for negative controls.
class CanonicalMeasure {
 public:
  CanonicalMeasure(ContactSystem sys, Region region, std::optional<double> Z = std::nullopt)
      : CanonicalMeasure(sys, std::move(region), static_cast<int>(sys.dof() + 1), Z) {}

  static CanonicalMeasure with_exponent(ContactSystem sys, Region region, int exponent) {
    return CanonicalMeasure(std::move(sys), std::move(region), exponent, std::nullopt);
  }

  const ContactSystem& system() const { return sys_; }
  const Region& region() const { return region_; }
  int exponent() const { return exponent_; }
  bool is_canonical() const { return exponent_ == static_cast<int>(sys_.dof() + 1); }
  std::optional<double> Z() const { return Z_; }
  bool normalized() const { return Z_.has_value(); }

  CanonicalMeasure normalized_by(double Z) const {
    CanonicalMeasure m = *this;
    if (!(Z > 0.0) || !std::isfinite(Z)) throw ContractError("Z must be positive and finite");
    m.Z_ = Z;
    return m;
  }

  // |h|^{-m} without the normalization, 0 outside the h window.
  double unnormalized(const ContactState& x) const {
    const double h = sys_.h(x);
    if (!region_.in_window(h)) return 0.0;
    if (!(std::abs(h) >= density_floor(0.0))) {
      throw SingularDensityError("|h| = " + std::to_string(std::abs(h)) +
                                 " is below the density floor");
    }
    return std::exp(-exponent_ * std::log(std::abs(h)));
  }

 private:
  CanonicalMeasure(ContactSystem sys, Region region, int exponent, std::optional<double> Z)
      : sys_(std::move(sys)), region_(std::move(region)), exponent_(exponent), Z_(Z) {
    region_.validate(sys_.dof());
    if (exponent_ <= 0) throw ContractError("density exponent must be positive");
    if (Z_ && !(*Z_ > 0.0)) throw ContractError("Z must be positive");
  }

  ContactSystem sys_;
  Region region_;
  int exponent_;
  std::optional<double> Z_;
};

// |h(x)|^{-(n+1)}/Z. The contact volume η∧(dη)^n is dS dq dp in Darboux
// coordinates, so no Jacobian factor enters.
inline double canonical_density(const CanonicalMeasure& measure, const ContactState& x) {
  if (!measure.region().contains(x)) throw ContractError("state lies outside the measure region");
  const double u = measure.unnormalized(x);
  return measure.Z() ? u / *measure.Z() : u;
}

// Uniform density f(0)/Z_f on the invariant surface h = 0.
inline double microcanonical_density(double f0, double Zf) {
  if (!(Zf > 0.0) || !std::isfinite(Zf)) throw ContractError("Z_f must be positive and finite");
  if (!std::isfinite(f0)) {
    throw SingularDensityError("f(0) is not finite; choose f finite at h = 0");
  }
  return f0 / Zf;
}

inline double microcanonical_density(const std::function<double(double)>& f, double Zf) {
  return microcanonical_density(f(0.0), Zf);
}

struct PartitionResult {
  double Z;
  double err_estimate;
  double support_fraction;  // fraction of cells with h inside the window
};

namespace detail {

inline std::vector<std::size_t> broadcast_grid(const std::vector<std::size_t>& grid, std::size_t d) {
  if (grid.size() == 1) return std::vector<std::size_t>(d, grid[0]);
  if (grid.size() != d) throw ContractError("grid needs 1 or 2n+1 resolutions");
  return grid;
}

struct MidpointSum {
  double sum;
  std::size_t inside;
  std::size_t total;
};

inline MidpointSum midpoint_sum(const CanonicalMeasure& m, const std::vector<std::size_t>& res,
                                unsigned threads) {
  const Region& r = m.region();
  const std::size_t d = res.size();
  std::size_t total = 1;
  for (std::size_t k : res) total *= k;
  // Chunks over the first axis keep the summation order fixed.
  const std::size_t chunks = res[0];
  std::vector<double> partial(chunks, 0.0);
  std::vector<std::size_t> inside(chunks, 0);
  const Eigen::VectorXd width = r.upper - r.lower;
  parallel_for_chunks(chunks, threads, [&](std::size_t c) {
    std::vector<std::size_t> idx(d, 0);
    idx[0] = c;
    Eigen::VectorXd x(static_cast<Eigen::Index>(d));
    const std::size_t per_chunk = total / res[0];
    double sum = 0.0;
    std::size_t in = 0;
    for (std::size_t cell = 0; cell < per_chunk; ++cell) {
      for (std::size_t a = 0; a < d; ++a) {
        const auto i = static_cast<Eigen::Index>(a);
        x[i] = r.lower[i] + (static_cast<double>(idx[a]) + 0.5) * width[i] / static_cast<double>(res[a]);
      }
      const ContactState s(x);
      const double h = m.system().h(s);
      if (r.in_window(h)) {
        ++in;
        sum += m.unnormalized(s);
      }
      for (std::size_t a = d - 1; a >= 1; --a) {
        if (++idx[a] < res[a]) break;
        idx[a] = 0;
      }
    }
    partial[c] = sum;
    inside[c] = in;
  });
  MidpointSum out{0.0, 0, total};
  for (std::size_t c = 0; c < chunks; ++c) {
    out.sum += partial[c];
    out.inside += inside[c];
  }
  double cell_volume = 1.0;
  for (std::size_t a = 0; a < d; ++a) cell_volume *= width[static_cast<Eigen::Index>(a)] / static_cast<double>(res[a]);
  out.sum *= cell_volume;
  return out;
}

}  // namespace detail

// Midpoint tensor quadrature of |h|^{-m} over region ∩ window at resolution
// 2r; the error estimate is the change from resolution r.
inline PartitionResult partition_function(const CanonicalMeasure& measure,
                                          const std::vector<std::size_t>& grid,
                                          unsigned threads = 1) {
  const std::size_t d = phase_dim(measure.system().dof());
  const std::vector<std::size_t> coarse = detail::broadcast_grid(grid, d);
  for (std::size_t k : coarse) {
    if (k < 8) throw ContractError("partition_function needs at least 8 cells per axis");
  }
  std::vector<std::size_t> fine = coarse;
  for (auto& k : fine) k *= 2;
  const detail::MidpointSum a = detail::midpoint_sum(measure, coarse, threads);
  const detail::MidpointSum b = detail::midpoint_sum(measure, fine, threads);
  const double fraction = static_cast<double>(b.inside) / static_cast<double>(b.total);
  if (fraction < 0.01) {
    throw EmptySupportError("only " + std::to_string(100.0 * fraction) +
                            "% of grid cells fall inside the h window");
  }
  return {b.sum, std::abs(b.sum - a.sum), fraction};
}

struct Ensemble {
  std::vector<ContactState> states;
  std::vector<double> weights;
  std::uint64_t seed = 0;
  std::size_t proposals = 0;
  double envelope = 0.0;  // rejection constant M actually used

  std::size_t size() const { return states.size(); }
  double acceptance_rate() const {
    return proposals ? static_cast<double>(states.size()) / static_cast<double>(proposals) : 0.0;
  }
};

namespace detail {

inline ContactState uniform_in_box(const Region& r, RandomStream& rng) {
  Eigen::VectorXd x(r.lower.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = rng.uniform(r.lower[i], r.upper[i]);
  return ContactState(std::move(x));
}

// Largest density over a node grid of roughly 2·10^5 points.
inline double grid_supremum(const CanonicalMeasure& m) {
  const Region& r = m.region();
  const auto d = static_cast<std::size_t>(r.lower.size());
  const auto per_axis = static_cast<std::size_t>(
      std::max(3.0, std::floor(std::pow(2e5, 1.0 / static_cast<double>(d)))));
  std::vector<std::size_t> idx(d, 0);
  Eigen::VectorXd x(r.lower.size());
  double best = 0.0;
  for (;;) {
    for (std::size_t a = 0; a < d; ++a) {
      const auto i = static_cast<Eigen::Index>(a);
      x[i] = r.lower[i] + (r.upper[i] - r.lower[i]) * static_cast<double>(idx[a]) /
                              static_cast<double>(per_axis - 1);
    }
    best = std::max(best, m.unnormalized(ContactState(x)));
    std::size_t a = 0;
    while (a < d && ++idx[a] == per_axis) idx[a++] = 0;
    if (a == d) break;
  }
  return best;
}

constexpr std::size_t kSampleChunk = 4096;
constexpr std::uint64_t kProbeStream = 0xFFFF'FFFF'FFFF'FFFFULL;

}  // namespace detail

// Rejection sampling of the measure: uniform proposals on the box, accepted
// with probability density/M. M starts at 1.1x the supremum seen on a grid
// and a probe run; a proposal above M raises M and restarts, so the result
// never carries envelope bias. Output depends only on (measure, N, seed).
inline Ensemble sample_canonical(const CanonicalMeasure& measure, std::size_t N, std::uint64_t seed,
                                 unsigned threads = 1) {
  if (N == 0) throw ContractError("sample size must be positive");
  const Region& r = measure.region();

  constexpr std::size_t kProbe = 1'000'000;
  double sup = detail::grid_supremum(measure);
  {
    RandomStream rng(seed, detail::kProbeStream);
    std::size_t hits = 0;
    double mean = 0.0;
    for (std::size_t i = 0; i < kProbe; ++i) {
      const double u = measure.unnormalized(detail::uniform_in_box(r, rng));
      sup = std::max(sup, u);
      mean += u;
      if (u > 0.0) ++hits;
    }
    mean /= static_cast<double>(kProbe);
    if (!(sup > 0.0)) throw InefficiencyError("density vanishes on the whole region");
    const double rate = mean / (1.1 * sup);
    if (rate < 1e-4 || hits == 0) {
      throw InefficiencyError("acceptance rate " + std::to_string(rate) +
                              " is below 1e-4; shrink the region or narrow the h window");
    }
  }

  double M = 1.1 * sup;
  const std::size_t chunks = (N + detail::kSampleChunk - 1) / detail::kSampleChunk;
  for (;;) {
    std::vector<std::vector<ContactState>> out(chunks);
    std::vector<std::size_t> proposals(chunks, 0);
    std::vector<double> overshoot(chunks, 0.0);
    parallel_for_chunks(chunks, threads, [&](std::size_t c) {
      const std::size_t want = std::min(detail::kSampleChunk, N - c * detail::kSampleChunk);
      RandomStream rng(seed, c);
      auto& dst = out[c];
      dst.reserve(want);
      while (dst.size() < want) {
        ContactState x = detail::uniform_in_box(r, rng);
        const double u = measure.unnormalized(x);
        ++proposals[c];
        if (u > M) {
          overshoot[c] = u;
          return;
        }
        if (rng.uniform() * M < u) dst.push_back(std::move(x));
      }
    });
    const double worst = *std::max_element(overshoot.begin(), overshoot.end());
    if (worst > 0.0) {
      M = 1.1 * worst;
      continue;
    }
    Ensemble e;
    e.seed = seed;
    e.envelope = M;
    for (std::size_t c = 0; c < chunks; ++c) {
      e.proposals += proposals[c];
      for (auto& x : out[c]) e.states.push_back(std::move(x));
    }
    e.weights.assign(e.states.size(), 1.0);
    return e;
  }
}

struct InvariantCheck {
  double max_rel_dev;
  std::vector<double> series;  // I(t)/I(0)
};

// Along an orbit with h ≠ 0, I(t) = |h(t)|^{-m}·exp(logJ(t)); constant for
// m = n+1. `exponent` defaults to n+1.
inline InvariantCheck pointwise_invariant_check(const Trajectory& traj,
                                                std::optional<int> exponent = std::nullopt) {
  if (traj.empty()) throw ContractError("empty trajectory");
  const double m = static_cast<double>(exponent.value_or(static_cast<int>(traj.n + 1)));
  const double floor = density_floor(traj.h_vals[0]);
  InvariantCheck out{0.0, {}};
  out.series.reserve(traj.size());
  const double log_h0 = std::log(std::abs(traj.h_vals[0]));
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const double ah = std::abs(traj.h_vals[k]);
    if (!(ah >= floor)) {
      throw SingularDensityError("orbit reaches |h| < floor at t=" + std::to_string(traj.times[k]));
    }
    const double ratio = std::exp(-m * (std::log(ah) - log_h0) + traj.logJ[k] - traj.logJ[0]);
    out.series.push_back(ratio);
    out.max_rel_dev = std::max(out.max_rel_dev, std::abs(ratio - 1.0));
  }
  return out;
}

struct MicrocanonicalCheck {
  double max_abs_h;
  Trajectory trajectory;
};

// Integrates an orbit started on h = 0 and reports how far h strays.
inline MicrocanonicalCheck microcanonical_orbit_check(const ContactSystem& sys,
                                                      const ContactState& x0, double t0, double t1,
                                                      const IntegratorOptions& opts) {
  const double h0 = sys.h(x0);
  if (!(std::abs(h0) <= 1e-10)) {
    throw ContractError("microcanonical check needs |h(x0)| <= 1e-10, got " + std::to_string(h0));
  }
  MicrocanonicalCheck out{0.0, integrate(sys, x0, t0, t1, opts)};
  for (double h : out.trajectory.h_vals) out.max_abs_h = std::max(out.max_abs_h, std::abs(h));
  return out;
}

struct BoxComparison {
  Region box;
  double direct;          // μ(A), fraction of samples in A
  double pushed;          // μ(φ_t⁻¹(A)), fraction of evolved samples in A
  double se_direct;
  double se_pushed;
  std::size_t direct_count;
  std::size_t pushed_count;
  double z_score;         // |direct - pushed| / combined standard error
  bool pass;
};

struct InvarianceReport {
  double t;
  std::size_t samples;
  std::uint64_t seed;
  int exponent;
  double retained_fraction;  // evolved samples inside the enlarged region
  std::vector<BoxComparison> boxes;
  bool pass;
};

// Final states of an ensemble evolved for time t.
inline std::vector<ContactState> evolve_ensemble(const ContactSystem& sys,
                                                 const std::vector<ContactState>& states, double t,
                                                 const IntegratorOptions& opts, unsigned threads = 1) {
  std::vector<ContactState> out(states);
  if (t == 0.0) return out;
  constexpr std::size_t kChunk = 1024;
  const std::size_t chunks = (states.size() + kChunk - 1) / kChunk;
  parallel_for_chunks(chunks, threads, [&](std::size_t c) {
    const std::size_t end = std::min(states.size(), (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i) out[i] = flow_to(sys, states[i], t, opts);
  });
  return out;
}

// Compares μ(A) with μ(φ_t⁻¹(A)) for each box A by evolving a canonical
// ensemble forward and counting arrivals. Passes when every box agrees within
// 3 combined standard errors.
inline InvarianceReport pushforward_invariance_test(const CanonicalMeasure& measure,
                                                    const Ensemble& ens, double t,
                                                    const std::vector<Region>& boxes,
                                                    const IntegratorOptions& opts,
                                                    unsigned threads = 1) {
  const ContactSystem& sys = measure.system();
  if (boxes.empty()) throw ContractError("pushforward test needs at least one box");
  if (ens.states.empty()) throw ContractError("pushforward test needs a non-empty ensemble");
  for (const auto& b : boxes) b.validate(sys.dof());
  const std::size_t N = ens.size();
  const std::vector<ContactState> evolved = evolve_ensemble(sys, ens.states, t, opts, threads);

  const Region wide = measure.region().enlarged(0.5);
  std::size_t retained = 0;
  for (const auto& y : evolved) retained += wide.contains(y) ? 1 : 0;
  const double retained_fraction = static_cast<double>(retained) / static_cast<double>(N);
  if (retained_fraction < 0.5) {
    throw ContractError("flow carries more than half of the samples out of the enlarged region");
  }

  InvarianceReport rep{t, N, ens.seed, measure.exponent(), retained_fraction, {}, true};
  const double count = static_cast<double>(N);
  for (const auto& box : boxes) {
    std::size_t c1 = 0, c2 = 0;
    for (std::size_t i = 0; i < N; ++i) {
      if (box.contains(ens.states[i])) ++c1;
      if (box.contains(evolved[i])) ++c2;
    }
    if (c1 < 100) {
      throw UnderpoweredTestError("only " + std::to_string(c1) +
                                  " samples fall in a test box (need 100)");
    }
    BoxComparison bc;
    bc.box = box;
    bc.direct_count = c1;
    bc.pushed_count = c2;
    bc.direct = static_cast<double>(c1) / count;
    bc.pushed = static_cast<double>(c2) / count;
    bc.se_direct = binomial_standard_error(bc.direct, count);
    bc.se_pushed = binomial_standard_error(bc.pushed, count);
    const double se = std::hypot(bc.se_direct, bc.se_pushed);
    const double diff = std::abs(bc.direct - bc.pushed);
    bc.z_score = se > 0.0 ? diff / se : (diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
    bc.pass = diff <= 3.0 * se;
    rep.pass = rep.pass && bc.pass;
    rep.boxes.push_back(std::move(bc));
  }
  return rep;
}

inline InvarianceReport pushforward_invariance_test(const CanonicalMeasure& measure, double t,
                                                    std::size_t N, const std::vector<Region>& boxes,
                                                    std::uint64_t seed,
                                                    const IntegratorOptions& opts,
                                                    unsigned threads = 1) {
  for (const auto& b : boxes) b.validate(measure.system().dof());
  if (boxes.empty()) throw ContractError("pushforward test needs at least one box");
  return pushforward_invariance_test(measure, sample_canonical(measure, N, seed, threads), t, boxes,
                                     opts, threads);
}

// Random test boxes whose every probe point lies in the region's window and
// whose backward images under φ_t stay inside the region and window, so that
// μ(φ_t⁻¹(A)) is fully represented by the sampled ensemble.
// `width_fraction` gives each box edge as a fraction of the region's extent,
// per axis.
inline std::vector<Region> random_test_boxes(const CanonicalMeasure& measure, double t,
                                             std::size_t count,
                                             const Eigen::VectorXd& width_fraction,
                                             std::uint64_t seed, const IntegratorOptions& opts,
                                             std::size_t max_attempts = 20000) {
  const Region& r = measure.region();
  const ContactSystem& sys = measure.system();
  const Eigen::Index d = r.lower.size();
  if (width_fraction.size() != d || (width_fraction.array() <= 0.0).any() ||
      (width_fraction.array() > 1.0).any()) {
    throw ContractError("box width fractions must lie in (0, 1] on every axis");
  }
  const Eigen::VectorXd width = width_fraction.cwiseProduct(r.upper - r.lower);
  RandomStream rng(seed, 0xB0B0'0000ULL);
  std::vector<Region> boxes;
  auto admissible = [&](const ContactState& x) {
    if (!r.contains(x) || !r.in_window(sys.h(x))) return false;
    if (t == 0.0) return true;
    const ContactState back = flow_to(sys, x, -t, opts);
    return r.contains(back) && r.in_window(sys.h(back));
  };
  for (std::size_t attempt = 0; attempt < max_attempts && boxes.size() < count; ++attempt) {
    Region box;
    box.lower.resize(d);
    box.upper.resize(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      box.lower[i] = rng.uniform(r.lower[i], r.upper[i] - width[i]);
      box.upper[i] = box.lower[i] + width[i];
    }
    bool ok = true;
    // Corners first, then interior points.
    const std::size_t corners = std::size_t{1} << d;
    for (std::size_t c = 0; ok && c < corners; ++c) {
      Eigen::VectorXd x(d);
      for (Eigen::Index i = 0; i < d; ++i) x[i] = (c >> i) & 1U ? box.upper[i] : box.lower[i];
      ok = admissible(ContactState(x));
    }
    for (int k = 0; ok && k < 64; ++k) ok = admissible(detail::uniform_in_box(box, rng));
    if (ok) boxes.push_back(std::move(box));
  }
  if (boxes.size() < count) {
    throw ContractError("could not place " + std::to_string(count) +
                        " admissible test boxes; reduce the box width or t");
  }
  return boxes;
}

inline std::vector<Region> random_test_boxes(const CanonicalMeasure& measure, double t,
                                             std::size_t count, double width_fraction,
                                             std::uint64_t seed, const IntegratorOptions& opts,
                                             std::size_t max_attempts = 20000) {
  return random_test_boxes(measure, t, count,
                           Eigen::VectorXd::Constant(measure.region().lower.size(), width_fraction),
                           seed, opts, max_attempts);
}

}  // namespace contact_flow
