#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "seqrand/guessing.hpp"
#include "seqrand/random.hpp"

using namespace seqrand;
using cglmp::Party;
using cglmp::StateKind;

namespace {

Povm z_basis(bool flipped) {
  ComplexMatrix b = identity(2);
  if (flipped) b.col(0).swap(b.col(1));
  return basis_measurement(b);
}

StateVector bell() {
  ComplexVector v = ComplexVector::Zero(4);
  v(0) = v(3) = 1.0 / std::sqrt(2.0);
  return StateVector(v);
}

// Same PVM with outcomes permuted: new outcome k is old outcome perm[k].
Povm permuted(const Povm& p, const std::vector<std::size_t>& perm) {
  std::vector<ComplexMatrix> e;
  for (std::size_t k : perm) e.push_back(p.element(k));
  return validate_povm(e);
}

PvmMixture random_mixture(std::size_t branches, Rng& rng, Eigen::Index dim = 3) {
  const auto w = random_probabilities(branches, rng);
  std::vector<MixtureBranch> out;
  for (double x : w) out.push_back({x, random_basis_pvm(dim, rng)});
  return PvmMixture(out);
}

}  // namespace

TEST(MinEntropy, Values) {
  EXPECT_DOUBLE_EQ(min_entropy(0.5), 1.0);
  EXPECT_DOUBLE_EQ(min_entropy(1.0), 0.0);
  EXPECT_DOUBLE_EQ(min_entropy(0.25), 2.0);
  for (double g : {0.0, -0.1, 1.5}) {
    try {
      min_entropy(g);
      FAIL() << g;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::OutOfRange);
    }
  }
  const auto r = make_report(0.3, "x");
  EXPECT_NEAR(r.min_entropy, -std::log2(0.3), 1e-12);
}

TEST(ClassicalGuess, EigenEnsembleSaturates) {
  const auto ens = eigen_ensemble(DensityOperator(identity(2) / 2.0));
  EXPECT_NEAR(classical_guess(ens, std::vector<Povm>{z_basis(false)}).guess, 1.0, 1e-12);
}

TEST(ClassicalGuess, UnbiasedOutcome) {
  ComplexVector plus(2);
  plus << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(classical_guess(pure_ensemble(StateVector(plus)), std::vector<Povm>{z_basis(false)}).guess, 0.5, 1e-12);
}

TEST(ClassicalGuess, ChshCorrelatedBranches) {
  // Bob's rounds act on the second qubit of |Phi+>. Eve picks P0 for both
  // rounds with probability eps and P1 for both otherwise.
  for (double eps : {0.3, 0.8}) {
    const PvmMixture round({{eps, embed_povm(z_basis(false), 2, 1)}, {1 - eps, embed_povm(z_basis(true), 2, 1)}});
    const std::vector<double> joint{eps, 0.0, 0.0, 1 - eps};
    const auto r = classical_guess(pure_ensemble(bell()), {round, round}, joint);
    EXPECT_NEAR(r.guess, 0.5, 1e-12);
    EXPECT_NEAR(r.min_entropy, 1.0, 1e-12);
    // The dilated chain with the same correlated registers gives the same.
    const auto q = quantum_guess_eval(dilated_chain(pure_ensemble(bell()), {round, round}, joint));
    EXPECT_NEAR(q.guess, 0.5, 1e-12);
  }
}

TEST(ClassicalGuess, JointTableChecked) {
  const PvmMixture round({{0.5, z_basis(false)}, {0.5, z_basis(true)}});
  try {
    classical_guess(pure_ensemble(StateVector::normalized(ComplexVector::Ones(2))), {round, round},
                    std::vector<double>{0.5, 0.5});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(EveOptimalPvm, DiagonalCase) {
  const auto ens = eigen_ensemble(DensityOperator(identity(2) / 2.0));
  const std::vector<Povm> chain{z_basis(false), z_basis(false)};
  const auto [eve, report] = eve_optimal_pvm(ens, chain);
  EXPECT_NEAR(report.guess, 1.0, 1e-12);
  EXPECT_NEAR(classical_guess(ens, chain).guess, 1.0, 1e-12);
}

TEST(EveOptimalPvm, ProjectorsPartitionEveSpace) {
  Rng rng(53);
  const auto ens = eigen_ensemble(random_density(3, rng));
  const auto [eve, report] = eve_optimal_pvm(ens, {random_basis_pvm(3, rng), random_basis_pvm(3, rng)});
  ASSERT_EQ(eve.eve.size(), 9u);
  ComplexMatrix sum = ComplexMatrix::Zero(3, 3);
  for (const auto& e : eve.eve) {
    sum += e;
    EXPECT_LT(max_abs(e * e - e), 1e-15);
  }
  EXPECT_LT(max_abs(sum - identity(3)), 1e-15);
}

TEST(EveOptimalPvm, RejectsUnsharpRounds) {
  try {
    eve_optimal_pvm(pure_ensemble(bell()), {validate_povm({identity(4) / 2.0, identity(4) / 2.0})});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotProjective);
  }
}

TEST(TheoremBatteries, ProjectiveChainsMatchClassical) {
  const auto r = projective_battery(7, 100);
  EXPECT_EQ(r.instances, 100u);
  EXPECT_LT(r.max_difference, 1e-8);
}

TEST(TheoremBatteries, DilationsMatchClassical) {
  const auto r = dilation_battery(7, 100);
  EXPECT_LT(r.max_difference, 1e-8);
  EXPECT_LT(r.max_recovery, 1e-10);
}

TEST(TheoremBatteries, SeededAndOrderIndependent) {
  const auto a = dilation_battery(3, 10);
  const auto b = dilation_battery(3, 10);
  EXPECT_EQ(a.min_guess, b.min_guess);
  EXPECT_EQ(a.max_guess, b.max_guess);
  EXPECT_NE(a.max_guess, dilation_battery(4, 10).max_guess);
}

TEST(Naimark, TrivialMixture) {
  const Povm p = cglmp::measurement_basis(Party::Bob, 0);
  const auto ext = naimark_dilation(sharp_mixture(p));
  EXPECT_EQ(ext.branches, 1);
  EXPECT_EQ(ext.ancilla_dim(), 3);
  EXPECT_LT(ext.recovery_residual(p), 1e-12);
  EXPECT_LT(ext.projectivity_residual(), 1e-12);
}

TEST(Naimark, RecoversUnsharpMeasurement) {
  const Povm m = weak_povm({0.7, cglmp::basis_vectors(Party::Bob, 1)});
  const auto ext = naimark_dilation(extremal_decomposition(m));
  EXPECT_LT(ext.recovery_residual(m), 1e-10);
  EXPECT_LT(ext.projectivity_residual(), 1e-10);
}

TEST(QuantumGuessEval, WrongEveIsNoBetter) {
  Rng rng(59);
  for (int t = 0; t < 10; ++t) {
    const auto ens = pure_ensemble(random_pure_state(3, rng));
    const std::vector<PvmMixture> rounds{random_mixture(3, rng), random_mixture(2, rng)};
    auto chain = dilated_chain(ens, rounds);
    const double best = quantum_guess_eval(chain).guess;
    // Eve always announces the first outcome tuple.
    const auto ne = chain.eve.front().rows();
    for (auto& e : chain.eve) e.setZero();
    chain.eve.front() = identity(ne);
    EXPECT_LE(quantum_guess_eval(chain).guess, best + 1e-12);
  }
}

TEST(QuantumGuessEval, RejectsNonProjectiveEve) {
  Rng rng(61);
  auto chain = dilated_chain(pure_ensemble(random_pure_state(3, rng)), {random_mixture(2, rng)});
  const auto ne = chain.eve.front().rows();
  for (auto& e : chain.eve) e = identity(ne) / static_cast<double>(chain.eve.size());
  try {
    quantum_guess_eval(chain);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConstraintViolated);
  }
}

TEST(GuessProperties, CoarseGrainingNeverHelps) {
  // Eve who only learns which half of the branches occurred does no better
  // than Eve who learns the branch.
  Rng rng(67);
  for (int t = 0; t < 30; ++t) {
    const auto psi = random_pure_state(3, rng);
    const auto mix = random_mixture(4, rng);
    const double fine = classical_guess(pure_ensemble(psi), {mix}).guess;
    double coarse = 0.0;
    for (std::size_t group : {0u, 2u}) {
      double best = 0.0;
      for (std::size_t b = 0; b < 3; ++b) {
        double p = 0.0;
        for (std::size_t j = group; j < group + 2; ++j)
          p += mix.branch(j).weight * psi.amplitudes().dot(mix.branch(j).pvm.element(b) * psi.amplitudes()).real();
        best = std::max(best, p);
      }
      coarse += best;
    }
    EXPECT_GE(fine, coarse - 1e-12);
  }
}

TEST(GuessProperties, RelabelingInvariance) {
  Rng rng(71);
  for (int t = 0; t < 20; ++t) {
    const auto ens = eigen_ensemble(random_density(3, rng));
    const std::vector<PvmMixture> rounds{random_mixture(3, rng), random_mixture(2, rng)};
    const double base = classical_guess(ens, rounds).guess;
    // Per-branch relabeling: Eve knows the branch, so her guess follows.
    std::vector<PvmMixture> moved;
    for (const auto& r : rounds) {
      std::vector<MixtureBranch> br;
      for (const auto& b : r.branches()) {
        std::vector<std::size_t> perm{0, 1, 2};
        std::shuffle(perm.begin(), perm.end(), rng);
        br.push_back({b.weight, permuted(b.pvm, perm)});
      }
      moved.emplace_back(br);
    }
    EXPECT_NEAR(classical_guess(ens, moved).guess, base, 1e-12);
    EXPECT_NEAR(quantum_guess_eval(dilated_chain(ens, moved)).guess, base, 1e-9);
  }
}

TEST(GuessCglmp, SharpChainIsModalTriple) {
  for (auto kind : {StateKind::MES, StateKind::MVS}) {
    CglmpChainConfig c;
    c.state = kind;
    c.eps1 = 1.0;
    const auto dist = sequential_distribution(cglmp_chain(c));
    for (TargetSetting s : {TargetSetting{0, 0, 1}, TargetSetting{1, 1, 1}, TargetSetting{1, 0, 0}}) {
      double best = 0.0;
      for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t b1 = 0; b1 < 3; ++b1)
          for (std::size_t b2 = 0; b2 < 3; ++b2) best = std::max(best, dist.at({s.x, s.y1, s.y2}, {a, b1, b2}));
      EXPECT_NEAR(guess_cglmp(c, s, GuessScope::Global).guess, best, 1e-12);
    }
  }
}

TEST(GuessCglmp, AtLeastModalObservedProbability) {
  for (auto kind : {StateKind::MES, StateKind::MVS})
    for (double eps : {0.7, 0.8, 0.9}) {
      CglmpChainConfig c;
      c.state = kind;
      c.eps1 = eps;
      c.mode = InstrumentMode::ExtremalMixture;
      for (bool comp : {false, true}) {
        if (comp) c.theta = identity(3);
        const auto dist = sequential_distribution(cglmp_chain(c));
        for (TargetSetting s : {TargetSetting{0, 0, 1}, TargetSetting{1, 0, 0}}) {
          const auto t = observed_table(dist, s);
          const auto lt = local_table(t, 3);
          EXPECT_GE(guess_cglmp(c, s, GuessScope::Global).guess, *std::max_element(t.begin(), t.end()) - 1e-12);
          EXPECT_GE(guess_cglmp(c, s, GuessScope::Local).guess, *std::max_element(lt.begin(), lt.end()) - 1e-12);
        }
      }
    }
}

TEST(GuessCglmp, MatchesBranchEnumeration) {
  // MES at eps = 0.8 with the eigenbasis decomposition: weight eps on the
  // sharp measurement and (1 - eps)/3 on each cyclic relabeling of it.
  const double eps = 0.8;
  const TargetSetting s{0, 0, 1};
  const ComplexVector psi = cglmp::canonical_state(StateKind::MES).amplitudes();
  const ComplexMatrix basis = cglmp::basis_vectors(Party::Bob, s.y1);
  const Povm alice = cglmp::measurement_basis(Party::Alice, s.x);
  const Povm bob2 = cglmp::measurement_basis(Party::Bob, s.y2);
  double global = 0.0, local = 0.0;
  for (int k = 0; k <= 3; ++k) {
    const double w = k == 0 ? eps : (1 - eps) / 3;
    double best = 0.0, best_local = 0.0;
    std::vector<double> marg(9, 0.0);
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b1 = 0; b1 < 3; ++b1)
        for (std::size_t b2 = 0; b2 < 3; ++b2) {
          const int col = k == 0 ? static_cast<int>(b1) : (static_cast<int>(b1) + k - 1) % 3;
          const ComplexMatrix P = projector(basis.col(col));
          const ComplexVector v = kron(identity(3), P) * psi;
          const double p = v.dot(kron(alice.element(a), bob2.element(b2)) * v).real();
          best = std::max(best, p);
          marg[3 * b1 + b2] += p;
        }
    for (double m : marg) best_local = std::max(best_local, m);
    global += w * best;
    local += w * best_local;
  }
  CglmpChainConfig c;
  c.eps1 = eps;
  EXPECT_NEAR(guess_cglmp(c, s, GuessScope::Global).guess, global, 1e-12);
  EXPECT_NEAR(guess_cglmp(c, s, GuessScope::Local).guess, local, 1e-12);
}
