#pragma once

// Sequential measurement pipeline: one Alice, a chain of Bob rounds acting on
// the same particle. Each Bob round applies an instrument (a set of Kraus
// operators per outcome) and hands the post-measurement state onward.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "seqrand/cglmp.hpp"
#include "seqrand/distribution.hpp"
#include "seqrand/error.hpp"
#include "seqrand/parallel.hpp"
#include "seqrand/qcore.hpp"

namespace seqrand {

//------------------------------------------------------------------------------
// Unsharp measurements
//------------------------------------------------------------------------------

// E_l = eps |l><l| + (1 - eps)/d I over the columns |l> of `basis`.
struct WeakPovmSpec {
  double epsilon = 1.0;
  ComplexMatrix basis;

  Eigen::Index dim() const { return basis.rows(); }
};

inline Povm weak_povm(const WeakPovmSpec& spec, const Tolerances& tol = default_tolerances()) {
  if (!(spec.epsilon >= 0.0 && spec.epsilon <= 1.0))
    throw Error(ErrorCode::EpsilonOutOfRange, "sharpness " + std::to_string(spec.epsilon) + " not in [0,1]");
  const Eigen::Index d = spec.basis.rows();
  if (d == 0 || spec.basis.cols() != d)
    throw Error(ErrorCode::DimensionMismatch, "basis must be a square matrix of column vectors");
  if (max_abs(spec.basis.adjoint() * spec.basis - identity(d)) > tol.num)
    throw Error(ErrorCode::NotComplete, "basis is not orthonormal");
  const double noise = (1.0 - spec.epsilon) / static_cast<double>(d);
  std::vector<ComplexMatrix> elems;
  for (Eigen::Index l = 0; l < d; ++l)
    elems.push_back(spec.epsilon * projector(spec.basis.col(l)) + noise * identity(d));
  return validate_povm(std::move(elems), tol);
}

// Recovers (eps, basis) from a POVM of the unsharp form. At eps = 0 the basis
// is undetermined and the computational basis is returned.
inline WeakPovmSpec recover_weak_form(const Povm& povm, const Tolerances& tol = default_tolerances()) {
  const Eigen::Index d = povm.dim();
  if (povm.outcomes() != static_cast<std::size_t>(d))
    throw Error(ErrorCode::NotWeakPovmForm, "outcome count differs from the dimension");
  const auto eig0 = hermitian_eigen(povm.element(0));
  const double epsilon = eig0.eigenvalues()(d - 1) - eig0.eigenvalues()(0);
  WeakPovmSpec spec{epsilon, identity(d)};
  if (epsilon > tol.num)
    for (Eigen::Index l = 0; l < d; ++l) {
      const auto eig = hermitian_eigen(povm.element(l));
      spec.basis.col(l) = eig.eigenvectors().col(d - 1);
    }
  if (epsilon < -tol.num || epsilon > 1.0 + tol.num)
    throw Error(ErrorCode::NotWeakPovmForm, "spectrum does not match an unsharp measurement");
  spec.epsilon = std::clamp(epsilon, 0.0, 1.0);
  const double noise = (1.0 - spec.epsilon) / static_cast<double>(d);
  for (Eigen::Index l = 0; l < d; ++l) {
    const ComplexMatrix expect = spec.epsilon * projector(spec.basis.col(l)) + noise * identity(d);
    if (max_abs(expect - povm.element(static_cast<std::size_t>(l))) > tol.num)
      throw Error(ErrorCode::NotWeakPovmForm, "element " + std::to_string(l) + " is not of unsharp form");
  }
  return spec;
}

//------------------------------------------------------------------------------
// Mixtures of projective measurements
//------------------------------------------------------------------------------

struct MixtureBranch {
  double weight = 0.0;
  Povm pvm;
};

// Convex combination of projective measurements with a common outcome set.
class PvmMixture {
 public:
  PvmMixture() = default;

  explicit PvmMixture(std::vector<MixtureBranch> branches, const Tolerances& tol = default_tolerances())
      : branches_(std::move(branches)) {
    if (branches_.empty()) throw Error(ErrorCode::NotAValidMixture, "mixture has no branches");
    double total = 0.0;
    const auto& first = branches_.front().pvm;
    for (const auto& br : branches_) {
      if (!(br.weight >= 0.0)) throw Error(ErrorCode::NotAValidMixture, "negative branch weight");
      if (!br.pvm.is_projective()) throw Error(ErrorCode::NotAValidMixture, "branch is not projective");
      if (br.pvm.dim() != first.dim() || br.pvm.outcomes() != first.outcomes())
        throw Error(ErrorCode::NotAValidMixture, "branches disagree in shape");
      total += br.weight;
    }
    if (std::abs(total - 1.0) > tol.norm)
      throw Error(ErrorCode::NotAValidMixture, "branch weights sum to " + std::to_string(total));
  }

  std::size_t size() const { return branches_.size(); }
  const MixtureBranch& branch(std::size_t j) const { return branches_.at(j); }
  const std::vector<MixtureBranch>& branches() const { return branches_; }
  std::size_t outcomes() const { return branches_.front().pvm.outcomes(); }
  Eigen::Index dim() const { return branches_.front().pvm.dim(); }

  // The POVM this mixture realizes: sum_j w_j P_j, element-wise.
  Povm target(const Tolerances& tol = default_tolerances()) const {
    std::vector<ComplexMatrix> elems(outcomes(), ComplexMatrix::Zero(dim(), dim()));
    for (const auto& br : branches_)
      for (std::size_t b = 0; b < outcomes(); ++b) elems[b] += br.weight * br.pvm.element(b);
    return validate_povm(std::move(elems), tol);
  }

  // Largest element-wise deviation between target() and `povm`.
  double reconstruction_error(const Povm& povm) const {
    double worst = 0.0;
    const Povm t = target();
    for (std::size_t b = 0; b < outcomes(); ++b) worst = std::max(worst, max_abs(t.element(b) - povm.element(b)));
    return worst;
  }

 private:
  std::vector<MixtureBranch> branches_;
};

// Single-branch mixture wrapping a projective measurement.
inline PvmMixture sharp_mixture(const Povm& pvm) { return PvmMixture({MixtureBranch{1.0, pvm}}); }

namespace detail {

inline bool same_measurement(const Povm& a, const Povm& b, double tol) {
  if (a.outcomes() != b.outcomes() || a.dim() != b.dim()) return false;
  for (std::size_t k = 0; k < a.outcomes(); ++k)
    if (max_abs(a.element(k) - b.element(k)) > tol) return false;
  return true;
}

// Drops zero-weight branches and merges branches with identical PVMs.
inline std::vector<MixtureBranch> compact(std::vector<MixtureBranch> raw, double tol) {
  std::vector<MixtureBranch> out;
  for (auto& br : raw) {
    if (br.weight <= 0.0) continue;
    auto hit = std::find_if(out.begin(), out.end(),
                            [&](const MixtureBranch& o) { return same_measurement(o.pvm, br.pvm, tol); });
    if (hit != out.end())
      hit->weight += br.weight;
    else
      out.push_back(std::move(br));
  }
  return out;
}

}  // namespace detail

// eps * P_0 + sum_{k=1}^{d} (1 - eps)/d * P_k, where P_0 measures in the
// POVM's own eigenbasis and P_k assigns outcome l to |theta_{(l + k - 1) mod d}>.
// Zero-weight branches are dropped and coinciding branches merged.
inline PvmMixture extremal_decomposition(const WeakPovmSpec& spec, const ComplexMatrix& theta,
                                         const Tolerances& tol = default_tolerances()) {
  const Eigen::Index d = spec.dim();
  if (theta.rows() != d || theta.cols() != d)
    throw Error(ErrorCode::DimensionMismatch, "theta basis has the wrong shape");
  if (max_abs(theta.adjoint() * theta - identity(d)) > tol.num)
    throw Error(ErrorCode::NotComplete, "theta basis is not orthonormal");
  weak_povm(spec, tol);  // validates the spec

  std::vector<MixtureBranch> raw;
  raw.push_back({spec.epsilon, basis_measurement(spec.basis, tol)});
  const double w = (1.0 - spec.epsilon) / static_cast<double>(d);
  for (Eigen::Index k = 1; k <= d; ++k) {
    ComplexMatrix shifted(d, d);
    for (Eigen::Index l = 0; l < d; ++l) shifted.col(l) = theta.col((l + k - 1) % d);
    raw.push_back({w, basis_measurement(shifted, tol)});
  }
  return PvmMixture(detail::compact(std::move(raw), tol.num), tol);
}

// Same, starting from the POVM itself; theta defaults to its eigenbasis.
inline PvmMixture extremal_decomposition(const Povm& povm, const std::optional<ComplexMatrix>& theta = std::nullopt,
                                         const Tolerances& tol = default_tolerances()) {
  const WeakPovmSpec spec = recover_weak_form(povm, tol);
  return extremal_decomposition(spec, theta ? *theta : spec.basis, tol);
}

//------------------------------------------------------------------------------
// Instruments
//------------------------------------------------------------------------------

enum class InstrumentMode { SqrtLuders, ExtremalMixture };

inline std::string to_string(InstrumentMode mode) {
  return mode == InstrumentMode::SqrtLuders ? "sqrt" : "mixture";
}

class Instrument {
 public:
  Instrument() = default;

  Instrument(std::vector<std::vector<ComplexMatrix>> kraus, InstrumentMode mode,
             const Tolerances& tol = default_tolerances())
      : kraus_(std::move(kraus)), mode_(mode) {
    if (kraus_.empty() || kraus_.front().empty())
      throw Error(ErrorCode::DimensionMismatch, "instrument needs Kraus operators");
    const Eigen::Index d = kraus_.front().front().cols();
    ComplexMatrix sum = ComplexMatrix::Zero(d, d);
    for (const auto& ops : kraus_)
      for (const auto& k : ops) {
        if (k.cols() != d || k.rows() != d) throw Error(ErrorCode::DimensionMismatch, "Kraus shape mismatch");
        sum += k.adjoint() * k;
      }
    if (max_abs(sum - identity(d)) > tol.num)
      throw Error(ErrorCode::NotComplete, "Kraus operators are not trace preserving");
  }

  std::size_t outcomes() const { return kraus_.size(); }
  Eigen::Index dim() const { return kraus_.front().front().cols(); }
  InstrumentMode mode() const { return mode_; }
  const std::vector<ComplexMatrix>& kraus(std::size_t b) const { return kraus_.at(b); }

  // Sum_k K^dag K for outcome b.
  ComplexMatrix effect(std::size_t b) const {
    ComplexMatrix e = ComplexMatrix::Zero(dim(), dim());
    for (const auto& k : kraus(b)) e += k.adjoint() * k;
    return e;
  }

  // Subnormalized post-measurement state for outcome b when the instrument
  // acts on the last factor (of dimension dim()) of rho.
  ComplexMatrix update(const ComplexMatrix& rho, std::size_t b) const {
    const Eigen::Index front = rho.rows() / dim();
    if (front * dim() != rho.rows()) throw Error(ErrorCode::DimensionMismatch, "state does not factor");
    ComplexMatrix out = ComplexMatrix::Zero(rho.rows(), rho.cols());
    for (const auto& k : kraus(b)) {
      const ComplexMatrix big = front == 1 ? k : kron(identity(front), k);
      out += big * rho * big.adjoint();
    }
    return out;
  }

  // The non-selective channel: sum over outcomes of update().
  ComplexMatrix channel(const ComplexMatrix& rho) const {
    ComplexMatrix out = ComplexMatrix::Zero(rho.rows(), rho.cols());
    for (std::size_t b = 0; b < outcomes(); ++b) out += update(rho, b);
    return out;
  }

 private:
  std::vector<std::vector<ComplexMatrix>> kraus_;
  InstrumentMode mode_ = InstrumentMode::SqrtLuders;
};

// SqrtLuders: K_b = sqrt(M_b). ExtremalMixture: sqrt(w_j) P_j^b for every
// branch j of the supplied decomposition.
inline Instrument make_instrument(const Povm& povm, InstrumentMode mode,
                                  const std::optional<PvmMixture>& decomposition = std::nullopt,
                                  const Tolerances& tol = default_tolerances()) {
  std::vector<std::vector<ComplexMatrix>> kraus(povm.outcomes());
  if (mode == InstrumentMode::SqrtLuders) {
    for (std::size_t b = 0; b < povm.outcomes(); ++b) kraus[b].push_back(psd_sqrt(povm.element(b), tol));
    return Instrument(std::move(kraus), mode, tol);
  }
  if (!decomposition) throw Error(ErrorCode::MissingDecomposition, "mixture instrument needs a decomposition");
  if (decomposition->outcomes() != povm.outcomes() || decomposition->dim() != povm.dim())
    throw Error(ErrorCode::DimensionMismatch, "decomposition does not match the POVM");
  if (decomposition->reconstruction_error(povm) > tol.num)
    throw Error(ErrorCode::NotAValidMixture, "decomposition does not reproduce the POVM");
  for (const auto& br : decomposition->branches())
    for (std::size_t b = 0; b < povm.outcomes(); ++b)
      kraus[b].push_back(std::sqrt(br.weight) * br.pvm.element(b));
  return Instrument(std::move(kraus), mode, tol);
}

//------------------------------------------------------------------------------
// Sequential scenario
//------------------------------------------------------------------------------

struct BobRound {
  std::vector<Instrument> settings;
};

// Alice holds the first factor of `state`, the Bob chain the second.
struct SequentialScenario {
  DensityOperator state;
  std::vector<Povm> alice;
  std::vector<BobRound> bobs;
};

// p(a, b_1..b_n | x, y_1..y_n): Bob instruments applied in order with
// subnormalized updates, Alice's PVM measured on her factor at the end.
inline JointDistribution sequential_distribution(const SequentialScenario& s) {
  if (s.alice.empty() || s.bobs.empty()) throw Error(ErrorCode::DimensionMismatch, "scenario is incomplete");
  const Eigen::Index da = s.alice.front().dim();
  Eigen::Index db = 0;
  std::vector<std::size_t> settings{s.alice.size()}, outcomes{s.alice.front().outcomes()};
  for (const auto& a : s.alice)
    if (a.dim() != da || a.outcomes() != outcomes.front())
      throw Error(ErrorCode::DimensionMismatch, "Alice settings disagree in shape");
  for (const auto& round : s.bobs) {
    if (round.settings.empty()) throw Error(ErrorCode::DimensionMismatch, "Bob round without settings");
    if (db == 0) db = round.settings.front().dim();
    for (const auto& inst : round.settings)
      if (inst.dim() != db || inst.outcomes() != round.settings.front().outcomes())
        throw Error(ErrorCode::DimensionMismatch, "Bob instruments disagree in shape");
    settings.push_back(round.settings.size());
    outcomes.push_back(round.settings.front().outcomes());
  }
  if (da * db != s.state.dim()) throw Error(ErrorCode::DimensionMismatch, "state does not match the parties");

  JointDistribution dist(settings, outcomes);
  const std::size_t n = s.bobs.size();
  std::vector<ComplexMatrix> alice_ops;
  for (const auto& a : s.alice)
    for (const auto& e : a.elements()) alice_ops.push_back(kron(e, identity(db)));

  std::vector<std::size_t> sv(n + 1), ov(n + 1);
  // Depth-first over Bob rounds; `rho` is the subnormalized state so far.
  auto descend = [&](auto&& self, std::size_t round, const ComplexMatrix& rho) -> void {
    if (round == n) {
      for (std::size_t x = 0; x < s.alice.size(); ++x)
        for (std::size_t a = 0; a < s.alice[x].outcomes(); ++a) {
          sv[0] = x;
          ov[0] = a;
          dist(sv, ov) = born_probability(alice_ops[x * s.alice[x].outcomes() + a], rho);
        }
      return;
    }
    const auto& choices = s.bobs[round].settings;
    for (std::size_t y = 0; y < choices.size(); ++y)
      for (std::size_t b = 0; b < choices[y].outcomes(); ++b) {
        sv[round + 1] = y;
        ov[round + 1] = b;
        self(self, round + 1, choices[y].update(rho, b));
      }
  };
  descend(descend, 0, s.state.matrix());
  return dist;
}

//------------------------------------------------------------------------------
// The one-Alice / two-Bob CGLMP experiment
//------------------------------------------------------------------------------

struct CglmpChainConfig {
  cglmp::StateKind state = cglmp::StateKind::MES;
  double eps1 = 1.0;
  double eps2 = 1.0;
  InstrumentMode mode = InstrumentMode::SqrtLuders;
  // Basis for the cyclic branches of the first-round decomposition; empty
  // means the measurement's own eigenbasis.
  std::optional<ComplexMatrix> theta;
  cglmp::Settings settings{};
};

inline PvmMixture first_round_decomposition(const CglmpChainConfig& cfg, std::size_t y) {
  const WeakPovmSpec spec{cfg.eps1, cglmp::basis_vectors(cglmp::Party::Bob, y, cfg.settings)};
  return extremal_decomposition(spec, cfg.theta ? *cfg.theta : spec.basis);
}

inline SequentialScenario cglmp_chain(const CglmpChainConfig& cfg) {
  using cglmp::Party;
  SequentialScenario s{DensityOperator(cglmp::canonical_state(cfg.state, cfg.settings.d)),
                       cglmp::measurement_bases(Party::Alice, cfg.settings),
                       {}};
  BobRound first, second;
  for (std::size_t y = 0; y < cfg.settings.beta.size(); ++y) {
    const ComplexMatrix basis = cglmp::basis_vectors(Party::Bob, y, cfg.settings);
    const Povm m1 = weak_povm({cfg.eps1, basis});
    if (cfg.mode == InstrumentMode::ExtremalMixture)
      first.settings.push_back(make_instrument(m1, cfg.mode, first_round_decomposition(cfg, y)));
    else
      first.settings.push_back(make_instrument(m1, cfg.mode));
    second.settings.push_back(make_instrument(weak_povm({cfg.eps2, basis}), InstrumentMode::SqrtLuders));
  }
  s.bobs = {std::move(first), std::move(second)};
  return s;
}

struct CurvePoint {
  double epsilon = 0.0;
  double first = 0.0;   // Alice with Bob 1
  double second = 0.0;  // Alice with Bob 2, Bob 1's input averaged uniformly
};

inline CurvePoint simulate_point(const CglmpChainConfig& cfg) {
  const JointDistribution dist = sequential_distribution(cglmp_chain(cfg));
  const std::size_t d = cfg.settings.d;
  return {cfg.eps1, cglmp::cglmp_value(dist.marginal({0, 1}), d), cglmp::cglmp_value(dist.marginal({0, 2}), d)};
}

inline std::vector<CurvePoint> violation_curves(cglmp::StateKind kind, InstrumentMode mode,
                                                const std::vector<double>& grid, double eps2 = 1.0) {
  return parallel_map<CurvePoint>(grid.size(), [&](std::size_t i) {
    CglmpChainConfig cfg;
    cfg.state = kind;
    cfg.mode = mode;
    cfg.eps1 = grid[i];
    cfg.eps2 = eps2;
    return simulate_point(cfg);
  });
}

// Closed-form CGLMP values for the two-Bob chain with a projective second Bob.
namespace closed_form {

// (4/9)(3 + 2 sqrt3) eps
inline double mes_first(double eps) { return 4.0 / 9.0 * (3.0 + 2.0 * std::sqrt(3.0)) * eps; }

// (1/81)(56 sqrt3 - (24 + 8 sqrt3) eps + (48 + 16 sqrt3) sqrt(1-eps) sqrt(1+2eps) + 60)
inline double mes_second(double eps) {
  const double s3 = std::sqrt(3.0);
  return (56.0 * s3 - (24.0 + 8.0 * s3) * eps +
          (48.0 + 16.0 * s3) * std::sqrt(1.0 - eps) * std::sqrt(1.0 + 2.0 * eps) + 60.0) /
         81.0;
}

// Variant with eps on the 8 sqrt3 term only, -(24 + 8 sqrt3 eps). It does
// not match the simulation: at eps = 0 it gives 2.5766, not 2.8729.
inline double mes_second_variant(double eps) {
  const double s3 = std::sqrt(3.0);
  return (56.0 * s3 - (24.0 + 8.0 * s3 * eps) +
          (48.0 + 16.0 * s3) * std::sqrt(1.0 - eps) * std::sqrt(1.0 + 2.0 * eps) + 60.0) /
         81.0;
}

// (1 + sqrt(11/3)) eps
inline double mvs_first(double eps) { return (1.0 + std::sqrt(11.0 / 3.0)) * eps; }

// 1.929 + 0.986 sqrt((1-eps)(1+2eps)) - 0.493 eps (three-digit coefficients)
inline double mvs_second(double eps) {
  return 1.929 + 0.986 * std::sqrt((1.0 - eps) * (1.0 + 2.0 * eps)) - 0.493 * eps;
}

inline double first(cglmp::StateKind k, double eps) {
  return k == cglmp::StateKind::MES ? mes_first(eps) : mvs_first(eps);
}
inline double second(cglmp::StateKind k, double eps) {
  return k == cglmp::StateKind::MES ? mes_second(eps) : mvs_second(eps);
}

}  // namespace closed_form

// Bisection for a sign change of f on [lo, hi] down to `width`.
template <class Fn>
double bisect(Fn&& f, double lo, double hi, double width = 1e-8) {
  double flo = f(lo);
  if (flo * f(hi) > 0.0) throw Error(ErrorCode::NoWindow, "no sign change in the bracket");
  while (hi - lo > width) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

struct Window {
  double low = 0.0;
  double high = 0.0;
};

// Range of eps_1 where both rounds exceed the local bound 2, from the closed
// forms: low = 2 / I1(1), high = root of I2 = 2.
inline Window double_violation_window(cglmp::StateKind kind) {
  const double low = 2.0 / closed_form::first(kind, 1.0);
  auto g = [&](double e) { return closed_form::second(kind, e) - 2.0; };
  if (g(low) <= 0.0) throw Error(ErrorCode::NoWindow, "second round does not violate at the first-round threshold");
  return {low, bisect(g, low, 1.0)};
}

// The same window read off the simulated curves for a given instrument.
inline Window simulated_window(cglmp::StateKind kind, InstrumentMode mode) {
  auto point = [&](double e) {
    CglmpChainConfig cfg;
    cfg.state = kind;
    cfg.mode = mode;
    cfg.eps1 = e;
    return simulate_point(cfg);
  };
  const double low = bisect([&](double e) { return point(e).first - 2.0; }, 0.0, 1.0);
  if (point(low).second <= 2.0) throw Error(ErrorCode::NoWindow, "second round does not violate at the threshold");
  return {low, bisect([&](double e) { return point(e).second - 2.0; }, low, 1.0)};
}

}  // namespace seqrand
