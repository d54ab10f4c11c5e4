#include <gtest/gtest.h>

#include <cmath>

#include "seqrand/random.hpp"
#include "seqrand/seqsim.hpp"

using namespace seqrand;
using cglmp::Party;
using cglmp::StateKind;

namespace {

ComplexMatrix bob_basis(std::size_t y) { return cglmp::basis_vectors(Party::Bob, y); }

double sorted_eig(const ComplexMatrix& m, int k) { return hermitian_eigen(m).eigenvalues()(k); }

CglmpChainConfig chain(StateKind kind, double eps1, InstrumentMode mode, double eps2 = 1.0) {
  CglmpChainConfig c;
  c.state = kind;
  c.eps1 = eps1;
  c.eps2 = eps2;
  c.mode = mode;
  return c;
}

}  // namespace

TEST(WeakPovm, Limits) {
  const Povm sharp = weak_povm({1.0, bob_basis(0)});
  EXPECT_TRUE(sharp.is_projective());
  const Povm basis = basis_measurement(bob_basis(0));
  for (std::size_t b = 0; b < 3; ++b) EXPECT_LT(max_abs(sharp.element(b) - basis.element(b)), 1e-14);
  const Povm noise = weak_povm({0.0, bob_basis(1)});
  for (std::size_t b = 0; b < 3; ++b) EXPECT_LT(max_abs(noise.element(b) - identity(3) / 3.0), 1e-14);
}

TEST(WeakPovm, Spectrum) {
  const Povm m = weak_povm({0.7, bob_basis(0)});
  EXPECT_NEAR(sorted_eig(m.element(1), 0), 0.1, 1e-12);
  EXPECT_NEAR(sorted_eig(m.element(1), 1), 0.1, 1e-12);
  EXPECT_NEAR(sorted_eig(m.element(1), 2), 0.8, 1e-12);
  try {
    weak_povm({1.2, bob_basis(0)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EpsilonOutOfRange);
  }
}

TEST(ExtremalDecomposition, SharpInputIsSingleBranch) {
  const auto mix = extremal_decomposition(weak_povm({1.0, bob_basis(0)}));
  ASSERT_EQ(mix.size(), 1u);
  EXPECT_DOUBLE_EQ(mix.branch(0).weight, 1.0);
}

TEST(ExtremalDecomposition, EigenbasisThetaGivesThreeBranches) {
  const double eps = 0.6;
  const auto mix = extremal_decomposition(weak_povm({eps, bob_basis(1)}));
  ASSERT_EQ(mix.size(), 3u);
  std::vector<double> w;
  for (const auto& br : mix.branches()) w.push_back(br.weight);
  std::sort(w.begin(), w.end());
  EXPECT_NEAR(w[0], (1 - eps) / 3, 1e-14);
  EXPECT_NEAR(w[1], (1 - eps) / 3, 1e-14);
  EXPECT_NEAR(w[2], (1 + 2 * eps) / 3, 1e-14);
}

TEST(ExtremalDecomposition, ReconstructsForAnyTheta) {
  Rng rng(31);
  for (int t = 0; t < 20; ++t) {
    const double eps = std::uniform_real_distribution<double>(0, 1)(rng);
    const WeakPovmSpec spec{eps, random_unitary(3, rng)};
    const auto mix = extremal_decomposition(spec, random_unitary(3, rng));
    EXPECT_EQ(mix.size(), eps < 1 ? 4u : 1u);
    EXPECT_LT(mix.reconstruction_error(weak_povm(spec)), 1e-10);
  }
}

TEST(ExtremalDecomposition, RejectsOtherPovms) {
  Rng rng(37);
  const DensityOperator rho = random_density(3, rng);
  std::vector<ComplexMatrix> elems{rho.matrix(), identity(3) - rho.matrix(), ComplexMatrix::Zero(3, 3)};
  try {
    extremal_decomposition(validate_povm(elems));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotWeakPovmForm);
  }
}

TEST(Instrument, SqrtAtZeroIsIdentityChannel) {
  const Instrument inst = make_instrument(weak_povm({0.0, bob_basis(0)}), InstrumentMode::SqrtLuders);
  for (std::size_t b = 0; b < 3; ++b) EXPECT_LT(max_abs(inst.kraus(b).front() - identity(3) / std::sqrt(3.0)), 1e-12);
  Rng rng(41);
  const ComplexMatrix rho = random_density(3, rng).matrix();
  EXPECT_LT(max_abs(inst.channel(rho) - rho), 1e-12);
}

TEST(Instrument, MixtureAtZeroDephases) {
  const Povm m = weak_povm({0.0, bob_basis(0)});
  const auto mix = extremal_decomposition(WeakPovmSpec{0.0, bob_basis(0)}, bob_basis(0));
  const Instrument inst = make_instrument(m, InstrumentMode::ExtremalMixture, mix);
  Rng rng(43);
  const ComplexMatrix rho = random_density(3, rng).matrix();
  const ComplexMatrix out = bob_basis(0).adjoint() * inst.channel(rho) * bob_basis(0);
  const ComplexMatrix in = bob_basis(0).adjoint() * rho * bob_basis(0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_LT(std::abs(out(i, j) - (i == j ? in(i, j) : Complex(0))), 1e-12);
}

TEST(Instrument, CompletenessAndMissingDecomposition) {
  Rng rng(47);
  const WeakPovmSpec spec{0.55, random_unitary(3, rng)};
  const Povm m = weak_povm(spec);
  for (const auto& inst : {make_instrument(m, InstrumentMode::SqrtLuders),
                           make_instrument(m, InstrumentMode::ExtremalMixture, extremal_decomposition(spec, random_unitary(3, rng)))}) {
    ComplexMatrix sum = ComplexMatrix::Zero(3, 3);
    for (std::size_t b = 0; b < 3; ++b) {
      sum += inst.effect(b);
      EXPECT_LT(max_abs(inst.effect(b) - m.element(b)), 1e-10);
    }
    EXPECT_LT(max_abs(sum - identity(3)), 1e-10);
  }
  try {
    make_instrument(m, InstrumentMode::ExtremalMixture);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingDecomposition);
  }
}

TEST(SequentialDistribution, ProjectiveChainIsBornSandwich) {
  for (auto mode : {InstrumentMode::SqrtLuders, InstrumentMode::ExtremalMixture}) {
    const auto dist = sequential_distribution(cglmp_chain(chain(StateKind::MVS, 1.0, mode)));
    const auto psi = cglmp::canonical_state(StateKind::MVS).amplitudes();
    for (std::size_t x = 0; x < 2; ++x)
      for (std::size_t y1 = 0; y1 < 2; ++y1)
        for (std::size_t y2 = 0; y2 < 2; ++y2)
          for (std::size_t a = 0; a < 3; ++a)
            for (std::size_t b1 = 0; b1 < 3; ++b1)
              for (std::size_t b2 = 0; b2 < 3; ++b2) {
                const ComplexMatrix A = cglmp::measurement_basis(Party::Alice, x).element(a);
                const ComplexMatrix P1 = cglmp::measurement_basis(Party::Bob, y1).element(b1);
                const ComplexMatrix P2 = cglmp::measurement_basis(Party::Bob, y2).element(b2);
                const ComplexMatrix op = kron(A, P1 * P2 * P1);
                const double expect = psi.dot(op * psi).real();
                EXPECT_NEAR(dist.at({x, y1, y2}, {a, b1, b2}), expect, 1e-12);
              }
  }
}

TEST(SequentialDistribution, NormalizedAndFirstRoundLinear) {
  for (double eps : {0.0, 0.3, 0.7, 0.95}) {
    const auto dist = sequential_distribution(cglmp_chain(chain(StateKind::MES, eps, InstrumentMode::SqrtLuders, 0.6)));
    EXPECT_LT(dist.normalization_defect(), 1e-9);
    EXPECT_NEAR(cglmp::cglmp_value(dist.marginal({0, 1}), 3), 4.0 / 9 * (3 + 2 * std::sqrt(3.0)) * eps, 1e-9);
  }
}

TEST(ClosedForms, PublishedAndDerivedValues) {
  // The variant with eps on the 8 sqrt3 term alone; its value at 0 is the
  // arithmetic of that expression.
  const double s3 = std::sqrt(3.0);
  EXPECT_NEAR(closed_form::mes_second_variant(0.0), (56 * s3 - 24 + 48 + 16 * s3 + 60) / 81, 1e-15);
  EXPECT_NEAR(closed_form::mes_second_variant(0.0), 2.5766378, 1e-7);
  EXPECT_NEAR(closed_form::mvs_first(1.0), 2.9148542, 1e-7);
  EXPECT_NEAR(closed_form::mes_first(1.0), 2.8729, 1e-4);
  EXPECT_NEAR(2.0 / closed_form::mes_first(1.0), 0.69615, 1e-5);
}

TEST(Window, Bounds) {
  const auto mes = double_violation_window(StateKind::MES);
  const auto mvs = double_violation_window(StateKind::MVS);
  EXPECT_NEAR(mes.low, 2.0 / (4.0 / 9 * (3 + 2 * std::sqrt(3.0))), 1e-15);
  EXPECT_NEAR(mes.low, 0.69616, 1e-4);
  EXPECT_NEAR(mvs.low, 2.0 / (1 + std::sqrt(11.0 / 3)), 1e-15);
  EXPECT_NEAR(mvs.low, 0.68614, 1e-5);
  EXPECT_NEAR(mvs.high, 0.902, 0.015);
  EXPECT_NEAR(mes.high, 0.904, 0.015);
  EXPECT_NEAR(closed_form::mes_second(mes.high), 2.0, 1e-7);
}

TEST(Window, SimulatedMatchesClosedForm) {
  const auto mes = simulated_window(StateKind::MES, InstrumentMode::SqrtLuders);
  EXPECT_NEAR(mes.low, double_violation_window(StateKind::MES).low, 1e-7);
  EXPECT_NEAR(mes.high, double_violation_window(StateKind::MES).high, 1e-7);
  // The MVS closed form carries three-digit coefficients.
  const auto mvs = simulated_window(StateKind::MVS, InstrumentMode::SqrtLuders);
  EXPECT_NEAR(mvs.high, double_violation_window(StateKind::MVS).high, 1e-3);
}

TEST(Curves, SqrtSecondRoundMatchesClosedForm) {
  for (auto kind : {StateKind::MES, StateKind::MVS}) {
    const auto w = double_violation_window(kind);
    std::vector<double> grid;
    for (int k = 0; k <= 20; ++k) grid.push_back(w.low + (w.high - w.low) * k / 20.0);
    const auto pts = violation_curves(kind, InstrumentMode::SqrtLuders, grid);
    for (const auto& p : pts) {
      EXPECT_NEAR(p.first, closed_form::first(kind, p.epsilon), 1e-9);
      EXPECT_NEAR(p.second, closed_form::second(kind, p.epsilon), kind == StateKind::MES ? 1e-9 : 1e-3);
    }
  }
}

TEST(Curves, MixtureInstrumentDoesNotReproduceTheSecondRound) {
  // The eigenbasis mixture dephases Bob 2's input; its second-round value
  // is far from the closed form inside the window.
  const auto p = simulate_point(chain(StateKind::MES, 0.8, InstrumentMode::ExtremalMixture));
  EXPECT_GT(std::abs(p.second - closed_form::mes_second(0.8)), 0.5);
}

TEST(SeqsimProperties, FirstRoundIndependentOfInstrument) {
  for (double eps : {0.1, 0.5, 0.9})
    for (auto kind : {StateKind::MES, StateKind::MVS}) {
      const auto a = simulate_point(chain(kind, eps, InstrumentMode::SqrtLuders));
      const auto b = simulate_point(chain(kind, eps, InstrumentMode::ExtremalMixture));
      EXPECT_NEAR(a.first, closed_form::first(kind, eps), 1e-9);
      EXPECT_NEAR(b.first, closed_form::first(kind, eps), 1e-9);
    }
}

TEST(SeqsimProperties, SqrtAtZeroPassesStateThrough) {
  for (auto kind : {StateKind::MES, StateKind::MVS}) {
    const auto p = simulate_point(chain(kind, 0.0, InstrumentMode::SqrtLuders));
    EXPECT_NEAR(p.second, closed_form::first(kind, 1.0), 1e-9);
  }
}

TEST(SeqsimProperties, ModesCoincideWhenSharp) {
  const auto a = sequential_distribution(cglmp_chain(chain(StateKind::MVS, 1.0, InstrumentMode::SqrtLuders)));
  const auto b = sequential_distribution(cglmp_chain(chain(StateKind::MVS, 1.0, InstrumentMode::ExtremalMixture)));
  for (std::size_t i = 0; i < a.values().size(); ++i) EXPECT_NEAR(a.values()[i], b.values()[i], 1e-10);
}

TEST(SeqsimProperties, ChainDecompositionsReconstruct) {
  for (double eps : {0.0, 0.25, 0.7, 1.0})
    for (std::size_t y = 0; y < 2; ++y) {
      CglmpChainConfig c = chain(StateKind::MES, eps, InstrumentMode::ExtremalMixture);
      EXPECT_LT(first_round_decomposition(c, y).reconstruction_error(weak_povm({eps, bob_basis(y)})), 1e-10);
      c.theta = identity(3);
      EXPECT_LT(first_round_decomposition(c, y).reconstruction_error(weak_povm({eps, bob_basis(y)})), 1e-10);
    }
}

TEST(Bisect, FindsRootAndReportsMissingBracket) {
  EXPECT_NEAR(bisect([](double x) { return x * x - 0.5; }, 0.0, 1.0), std::sqrt(0.5), 1e-8);
  try {
    bisect([](double x) { return x + 1.0; }, 0.0, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoWindow);
  }
}
