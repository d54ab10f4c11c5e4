#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>

#include "seqrand/sdp.hpp"

using namespace seqrand;
using namespace seqrand::sdp;

namespace {

Problem diag_toy() {
  Problem p;
  p.blocks = {2};
  p.objective = {{0, 0, 0, 1.0}, {0, 1, 1, 2.0}};
  p.constraints = {{{0, 0, 0, 1.0}, {0, 1, 1, 1.0}}};
  p.rhs = Vector::Constant(1, 1.0);
  return p;
}

SparseSym trace_op(std::size_t n) {
  SparseSym s;
  for (std::size_t i = 0; i < n; ++i) s.push_back({0, i, i, 1.0});
  return s;
}

// max <M, X> over density matrices.
Problem lambda_max_problem(const Matrix& m, double scale = 1.0) {
  const auto n = static_cast<std::size_t>(m.rows());
  Problem p;
  p.blocks = {static_cast<long>(n)};
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i <= j; ++i) p.objective.push_back({0, i, j, m(i, j)});
  p.constraints = {trace_op(n)};
  p.rhs = Vector::Constant(1, scale);
  return p;
}

Matrix random_symmetric(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Matrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = g(rng);
  return 0.5 * (m + m.transpose());
}

// Lovasz theta of the 5-cycle: max <J, X>, tr X = 1, X_ij = 0 on edges.
Problem theta_c5() {
  Problem p;
  p.blocks = {5};
  for (std::size_t j = 0; j < 5; ++j)
    for (std::size_t i = 0; i <= j; ++i) p.objective.push_back({0, i, j, 1.0});
  p.constraints.push_back(trace_op(5));
  for (std::size_t i = 0; i < 5; ++i) {
    const std::size_t a = std::min(i, (i + 1) % 5), b = std::max(i, (i + 1) % 5);
    p.constraints.push_back({{0, a, b, 1.0}});
  }
  p.rhs = Vector::Zero(6);
  p.rhs(0) = 1.0;
  return p;
}

// The dual slack is forced to vanish in the (2,2) corner, so there is no
// strictly feasible dual point and one reduction step is needed.
Problem face_toy() {
  Problem p;
  p.blocks = {3};
  p.objective = {{0, 2, 2, 1.0}};
  p.constraints = {{{0, 0, 0, 1.0}}, {{0, 0, 1, 1.0}}, {{0, 2, 2, 1.0}}};
  p.rhs = Vector(3);
  p.rhs << 1.0, 1.0, 2.0;
  return p;
}

double equality_residual(const Problem& p, const Solution& s) {
  double worst = 0.0;
  for (std::size_t k = 0; k < p.constraints.size(); ++k)
    worst = std::max(worst, std::abs((p.dense(p.constraints[k]).cwiseProduct(s.x)).sum() - p.rhs(static_cast<Eigen::Index>(k))));
  return worst;
}

void expect_code(ErrorCode code, const std::function<void()>& f) {
  try {
    f();
    FAIL() << "no error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

}  // namespace

TEST(SdpToys, DiagonalObjective) {
  const auto s = solve(diag_toy());
  ASSERT_EQ(s.status, Status::Optimal);
  EXPECT_NEAR(s.primal, 2.0, 1e-7);
  EXPECT_LE(s.gap, Config{}.gap_tol * 3);
  EXPECT_EQ(s.reductions, 0u);
}

TEST(SdpToys, LargestEigenvalue) {
  std::mt19937_64 rng(31);
  for (Eigen::Index n : {3, 6, 10}) {
    const Matrix m = random_symmetric(n, rng);
    const double top = Eigen::SelfAdjointEigenSolver<Matrix>(m).eigenvalues().maxCoeff();
    const auto s = solve(lambda_max_problem(m));
    ASSERT_EQ(s.status, Status::Optimal);
    EXPECT_NEAR(s.primal, top, 1e-6 * (1 + std::abs(top)));
  }
}

TEST(SdpToys, LinearProgramInDiagonalBlock) {
  // max x1 + 2 x2 + 3 x3 with x1 + x2 + x3 = 1 and x3 + x4 = 1/2.
  Problem p;
  p.blocks = {-4};
  p.objective = {{0, 0, 0, 1.0}, {0, 1, 1, 2.0}, {0, 2, 2, 3.0}};
  p.constraints = {{{0, 0, 0, 1.0}, {0, 1, 1, 1.0}, {0, 2, 2, 1.0}}, {{0, 2, 2, 1.0}, {0, 3, 3, 1.0}}};
  p.rhs = Vector(2);
  p.rhs << 1.0, 0.5;
  const auto s = solve(p);
  ASSERT_EQ(s.status, Status::Optimal);
  EXPECT_NEAR(s.primal, 2.5, 1e-7);
  EXPECT_NEAR(s.x(0, 1), 0.0, 1e-12);
}

TEST(SdpToys, LovaszThetaPentagon) {
  const auto s = solve(theta_c5());
  ASSERT_EQ(s.status, Status::Optimal);
  EXPECT_NEAR(s.primal, std::sqrt(5.0), 1e-6);
}

TEST(SdpToys, FacialReductionNeeded) {
  const auto s = solve(face_toy());
  ASSERT_EQ(s.status, Status::Optimal);
  EXPECT_NEAR(s.primal, 2.0, 1e-7);
  EXPECT_EQ(s.reductions, 1u);
  const auto fr = reduce_face(face_toy());
  EXPECT_EQ(fr.steps, 1u);
  EXPECT_NEAR(fr.offset + solve(fr.problem).primal, 2.0, 1e-7);
}

TEST(SdpContract, GapAndResiduals) {
  std::mt19937_64 rng(37);
  const Config cfg;
  std::vector<Problem> problems{diag_toy(), theta_c5(), face_toy(), lambda_max_problem(random_symmetric(8, rng))};
  for (const auto& p : problems) {
    const auto s = solve(p, cfg);
    ASSERT_EQ(s.status, Status::Optimal);
    EXPECT_LE(s.gap, cfg.gap_tol * (1 + std::abs(s.primal)));
    // After facial reduction x is lifted from the reduced face and only
    // satisfies the equations that survived the reduction.
    if (s.reductions == 0) EXPECT_LT(equality_residual(p, s), 1e-6);
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<Matrix>(s.x).eigenvalues().minCoeff(), -1e-8);
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<Matrix>(s.z).eigenvalues().minCoeff(), -1e-6);
  }
}

TEST(SdpContract, WeakDuality) {
  Config cfg;
  cfg.check_weak_duality = true;
  std::mt19937_64 rng(41);
  for (int t = 0; t < 5; ++t) {
    const auto s = solve(lambda_max_problem(random_symmetric(5, rng)), cfg);
    EXPECT_LE(s.primal, s.dual + 1e-7 * (1 + std::abs(s.dual)));
  }
}

TEST(SdpContract, ScaleCovariance) {
  std::mt19937_64 rng(43);
  const Matrix m = random_symmetric(6, rng);
  const double base = solve(lambda_max_problem(m)).primal;
  EXPECT_NEAR(solve(lambda_max_problem(3.0 * m)).primal, 3.0 * base, 1e-6 * (1 + std::abs(base)));
  EXPECT_NEAR(solve(lambda_max_problem(m, 2.0)).primal, 2.0 * base, 1e-6 * (1 + std::abs(base)));
}

TEST(SdpContract, InconsistentEqualities) {
  Problem p;
  p.blocks = {2};
  p.objective = {{0, 1, 1, -1.0}};
  p.constraints = {{{0, 0, 0, 1.0}}, {{0, 0, 0, 1.0}}};
  p.rhs = Vector(2);
  p.rhs << 1.0, 2.0;
  expect_code(ErrorCode::Infeasible, [&] { solve(p); });
}

TEST(SdpContract, RedundantEqualitiesDropped) {
  Problem p = diag_toy();
  p.constraints.push_back({{0, 0, 0, 2.0}, {0, 1, 1, 2.0}});
  p.rhs = Vector(2);
  p.rhs << 1.0, 2.0;
  const auto s = solve(p);
  EXPECT_NEAR(s.primal, 2.0, 1e-7);
}

TEST(SdpContract, RejectsMalformedProblems) {
  Problem p = diag_toy();
  p.objective.push_back({0, 1, 0, 1.0});
  expect_code(ErrorCode::ShapeMismatch, [&] { solve(p); });
  p = diag_toy();
  p.rhs = Vector::Zero(2);
  expect_code(ErrorCode::ShapeMismatch, [&] { solve(p); });
}

TEST(Sdpa, DiagonalToyLayout) {
  const std::string text = to_sdpa(diag_toy());
  std::istringstream in(text);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  ASSERT_EQ(lines.size(), 8u);
  EXPECT_EQ(lines[0], "1");
  EXPECT_EQ(lines[1], "1");
  EXPECT_EQ(lines[2], "2");
  EXPECT_EQ(lines[3], "1");
  EXPECT_EQ(lines[4], "0 1 1 1 1");
  EXPECT_EQ(lines[5], "0 1 2 2 2");
  EXPECT_EQ(lines[6], "1 1 1 1 1");
  EXPECT_EQ(lines[7], "1 1 2 2 1");
}

TEST(Sdpa, RoundTripIsExact) {
  std::mt19937_64 rng(47);
  for (const auto& p : {diag_toy(), theta_c5(), face_toy(), lambda_max_problem(random_symmetric(7, rng))}) {
    std::istringstream in(to_sdpa(p));
    EXPECT_EQ(parse_sdpa(in), p);
  }
}

TEST(Sdpa, FileRoundTripAndAtomicWrite) {
  const auto dir = std::filesystem::temp_directory_path() / "seqrand_sdpa_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "theta.dat-s";
  export_sdpa(theta_c5(), path);
  EXPECT_FALSE(std::filesystem::exists(dir / "theta.dat-s.tmp"));
  EXPECT_EQ(import_sdpa(path), theta_c5());
  expect_code(ErrorCode::IoFailure, [&] { import_sdpa(dir / "missing.dat-s"); });
  std::filesystem::remove_all(dir);
}

TEST(Sdpa, AcceptsCommentsPunctuationAndLowerTriangle) {
  std::istringstream in(
      "\"a comment\n"
      "* another\n"
      "1 = m\n1\n{2}\n{1.0}\n"
      "0 1 1 1 1\n0 1 2 2 2\n1 1 1 1 1\n1 1 2 2 1\n1 1 2 1 0.0\n");
  const auto p = parse_sdpa(in);
  EXPECT_EQ(p.constraints[0].back().row, 0u);
  EXPECT_EQ(p.constraints[0].back().col, 1u);
  EXPECT_NEAR(solve(p).primal, 2.0, 1e-7);
}

TEST(Sdpa, ParseErrors) {
  for (const char* bad : {"1\n1\n2\n1\n0 1 1 1\n", "1\n1\n2\n", "1\n1\n2\n1\n0 1 3 3 1\n", "1\n1\n2\n1\n2 1 1 1 1\n"}) {
    std::istringstream in(bad);
    expect_code(ErrorCode::ParseError, [&] { parse_sdpa(in); });
  }
}
