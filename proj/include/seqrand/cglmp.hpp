#pragma once

// CGLMP machinery: Fourier-phase measurement bases, the canonical qutrit
// states and the I_d Bell functional (local bound 2).

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "seqrand/distribution.hpp"
#include "seqrand/error.hpp"
#include "seqrand/qcore.hpp"

namespace seqrand::cglmp {

enum class Party { Alice, Bob };
enum class StateKind { MES, MVS };

// Phase offsets of the optimal qutrit settings: alpha = {0, 1/2},
// beta = {1/4, -1/4}.
struct Settings {
  std::size_t d = 3;
  std::vector<double> alpha{0.0, 0.5};
  std::vector<double> beta{0.25, -0.25};
};

// Columns are the d basis vectors of the requested setting:
//   Alice: |k>_x = d^{-1/2} sum_j exp(2 pi i j (k + alpha_x) / d) |j>
//   Bob:   |l>_y = d^{-1/2} sum_j exp(2 pi i j (-l + beta_y) / d) |j>
inline ComplexMatrix basis_vectors(Party party, std::size_t setting, const Settings& cfg = {}) {
  const auto& offsets = party == Party::Alice ? cfg.alpha : cfg.beta;
  if (setting >= offsets.size())
    throw Error(ErrorCode::BadSetting, "setting " + std::to_string(setting) + " out of range");
  if (cfg.d < 2) throw Error(ErrorCode::UnsupportedDimension, "CGLMP needs d >= 2");
  const auto d = static_cast<Eigen::Index>(cfg.d);
  const double sign = party == Party::Alice ? 1.0 : -1.0;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  ComplexMatrix basis(d, d);
  for (Eigen::Index k = 0; k < d; ++k)
    for (Eigen::Index j = 0; j < d; ++j) {
      const double phase = 2.0 * std::numbers::pi / static_cast<double>(d) * static_cast<double>(j) *
                           (sign * static_cast<double>(k) + offsets[setting]);
      basis(j, k) = scale * std::polar(1.0, phase);
    }
  return basis;
}

inline Povm measurement_basis(Party party, std::size_t setting, const Settings& cfg = {}) {
  return basis_measurement(basis_vectors(party, setting, cfg));
}

inline std::vector<Povm> measurement_bases(Party party, const Settings& cfg = {}) {
  const auto& offsets = party == Party::Alice ? cfg.alpha : cfg.beta;
  std::vector<Povm> out;
  for (std::size_t s = 0; s < offsets.size(); ++s) out.push_back(measurement_basis(party, s, cfg));
  return out;
}

inline double mvs_gamma() { return (std::sqrt(11.0) - std::sqrt(3.0)) / 2.0; }

// MES is available for any d >= 2; MVS only for d = 3.
inline StateVector canonical_state(StateKind kind, std::size_t d = 3) {
  if (d < 2) throw Error(ErrorCode::UnsupportedDimension, "d must be at least 2");
  if (kind == StateKind::MVS && d != 3)
    throw Error(ErrorCode::UnsupportedDimension, "the maximum-violation state is defined for d = 3");
  const auto n = static_cast<Eigen::Index>(d);
  ComplexVector v = ComplexVector::Zero(n * n);
  for (Eigen::Index j = 0; j < n; ++j) v(j * n + j) = 1.0;
  if (kind == StateKind::MVS) v(1 * n + 1) = mvs_gamma();
  return StateVector::normalized(v);
}

inline std::string to_string(StateKind kind) { return kind == StateKind::MES ? "mes" : "mvs"; }

//------------------------------------------------------------------------------
// Born statistics
//------------------------------------------------------------------------------

// p(a, b | x, y) = <psi| A_{a|x} (x) B_{b|y} |psi> for every setting pair.
inline JointDistribution born_joint(const StateVector& state, std::span<const Povm> alice,
                                    std::span<const Povm> bob) {
  if (alice.empty() || bob.empty()) throw Error(ErrorCode::ShapeMismatch, "no measurement settings");
  const Eigen::Index da = alice.front().dim();
  const Eigen::Index db = bob.front().dim();
  if (da * db != state.dim())
    throw Error(ErrorCode::DimensionMismatch, "state dimension does not match the measurements");
  for (const auto& m : alice)
    if (m.dim() != da || m.outcomes() != alice.front().outcomes())
      throw Error(ErrorCode::DimensionMismatch, "Alice settings disagree in shape");
  for (const auto& m : bob)
    if (m.dim() != db || m.outcomes() != bob.front().outcomes())
      throw Error(ErrorCode::DimensionMismatch, "Bob settings disagree in shape");

  JointDistribution dist({alice.size(), bob.size()}, {alice.front().outcomes(), bob.front().outcomes()});
  const ComplexVector& psi = state.amplitudes();
  for (std::size_t x = 0; x < alice.size(); ++x)
    for (std::size_t y = 0; y < bob.size(); ++y)
      for (std::size_t a = 0; a < alice[x].outcomes(); ++a)
        for (std::size_t b = 0; b < bob[y].outcomes(); ++b) {
          const ComplexMatrix op = kron(alice[x].element(a), bob[y].element(b));
          dist.at({x, y}, {a, b}) = psi.dot(op * psi).real();
        }
  return dist;
}

inline JointDistribution born_joint(const StateVector& state, const Povm& alice, const Povm& bob) {
  return born_joint(state, std::span<const Povm>(&alice, 1), std::span<const Povm>(&bob, 1));
}

//------------------------------------------------------------------------------
// The Bell functional
//------------------------------------------------------------------------------

namespace detail {

inline void check_shape(const JointDistribution& dist, std::size_t d) {
  if (dist.parties() != 2 || dist.settings(0) != 2 || dist.settings(1) != 2 || dist.outcomes(0) != d ||
      dist.outcomes(1) != d)
    throw Error(ErrorCode::ShapeMismatch, "CGLMP needs two parties with two settings and d outcomes each");
}

inline std::size_t mod(long long v, std::size_t d) {
  const auto dd = static_cast<long long>(d);
  return static_cast<std::size_t>(((v % dd) + dd) % dd);
}

}  // namespace detail

// P(A_x = B_y + k): the outcomes differ by k modulo d.
inline double prob_alice_ahead(const JointDistribution& dist, std::size_t x, std::size_t y, long long k) {
  const std::size_t d = dist.outcomes(0);
  double sum = 0.0;
  for (std::size_t j = 0; j < d; ++j)
    sum += dist.at({x, y}, {detail::mod(static_cast<long long>(j) + k, d), j});
  return sum;
}

// P(B_y = A_x + k).
inline double prob_bob_ahead(const JointDistribution& dist, std::size_t x, std::size_t y, long long k) {
  const std::size_t d = dist.outcomes(0);
  double sum = 0.0;
  for (std::size_t j = 0; j < d; ++j)
    sum += dist.at({x, y}, {j, detail::mod(static_cast<long long>(j) + k, d)});
  return sum;
}

// I_d = sum_{k=0}^{floor(d/2)-1} (1 - 2k/(d-1)) [f(k) - f(-k-1)] with
// f(k) = P(A1 = B1 + k) + P(B1 = A2 + k + 1) + P(A2 = B2 + k) + P(B2 = A1 + k).
// Settings index 0 is A1/B1, index 1 is A2/B2.
inline double cglmp_value(const JointDistribution& dist, std::size_t d) {
  detail::check_shape(dist, d);
  auto f = [&](long long k) {
    return prob_alice_ahead(dist, 0, 0, k) + prob_bob_ahead(dist, 1, 0, k + 1) +
           prob_alice_ahead(dist, 1, 1, k) + prob_bob_ahead(dist, 0, 1, k);
  };
  double value = 0.0;
  const auto terms = static_cast<long long>(d / 2);
  for (long long k = 0; k < terms; ++k) {
    const double weight = 1.0 - 2.0 * static_cast<double>(k) / static_cast<double>(d - 1);
    value += weight * (f(k) - f(-k - 1));
  }
  return value;
}

// The qutrit functional written out term by term; an independent evaluation
// path for cross-checking cglmp_value at d = 3.
inline double cglmp3_expanded(const JointDistribution& dist) {
  detail::check_shape(dist, 3);
  auto p = [&](std::size_t x, std::size_t y, std::size_t a, std::size_t b) { return dist.at({x, y}, {a, b}); };
  double plus = 0.0, minus = 0.0;
  for (std::size_t j = 0; j < 3; ++j) {
    // P(A1 = B1), P(B1 = A2 + 1), P(A2 = B2), P(B2 = A1)
    plus += p(0, 0, j, j) + p(1, 0, j, (j + 1) % 3) + p(1, 1, j, j) + p(0, 1, j, j);
    // P(A1 = B1 - 1), P(B1 = A2), P(A2 = B2 - 1), P(B2 = A1 - 1)
    minus += p(0, 0, j, (j + 1) % 3) + p(1, 0, j, j) + p(1, 1, j, (j + 1) % 3) + p(0, 1, (j + 1) % 3, j);
  }
  return plus - minus;
}

// Statistics of the canonical state under the default optimal settings.
inline JointDistribution optimal_statistics(StateKind kind, const Settings& cfg = {}) {
  const auto alice = measurement_bases(Party::Alice, cfg);
  const auto bob = measurement_bases(Party::Bob, cfg);
  return born_joint(canonical_state(kind, cfg.d), alice, bob);
}

}  // namespace seqrand::cglmp
