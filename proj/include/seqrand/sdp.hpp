#pragma once

// Real symmetric SDP in the form
//
//   maximize <C, X>  subject to  <A_k, X> = b_k,  X block diagonal, X >= 0
//
// with dual  minimize b.y  subject to  Z = sum_k y_k A_k - C >= 0.
// Blocks are dense PSD blocks or diagonal (nonnegative) blocks, as in SDPA.

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <Eigen/SparseQR>
#include <Eigen/OrderingMethods>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "seqrand/error.hpp"

namespace seqrand::sdp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// One upper-triangle entry (row <= col) of a block, 0-based.
struct Entry {
  std::size_t block = 0;
  std::size_t row = 0;
  std::size_t col = 0;
  double value = 0.0;

  bool operator==(const Entry&) const = default;
};

using SparseSym = std::vector<Entry>;

struct Problem {
  std::vector<long> blocks;  // positive: dense block size, negative: diagonal block
  SparseSym objective;       // C
  std::vector<SparseSym> constraints;  // A_k
  Vector rhs;                          // b

  std::size_t dim() const {
    std::size_t n = 0;
    for (long b : blocks) n += static_cast<std::size_t>(std::labs(b));
    return n;
  }

  std::vector<std::size_t> offsets() const {
    std::vector<std::size_t> out;
    std::size_t n = 0;
    for (long b : blocks) {
      out.push_back(n);
      n += static_cast<std::size_t>(std::labs(b));
    }
    return out;
  }

  void validate() const {
    if (blocks.empty()) throw Error(ErrorCode::ShapeMismatch, "problem has no blocks");
    if (constraints.empty()) throw Error(ErrorCode::ShapeMismatch, "problem has no constraints");
    if (static_cast<std::size_t>(rhs.size()) != constraints.size())
      throw Error(ErrorCode::ShapeMismatch, "right-hand side does not match the constraint count");
    auto check = [&](const SparseSym& s) {
      for (const auto& e : s) {
        if (e.block >= blocks.size()) throw Error(ErrorCode::ShapeMismatch, "entry refers to a missing block");
        const auto size = static_cast<std::size_t>(std::labs(blocks[e.block]));
        if (e.row > e.col || e.col >= size) throw Error(ErrorCode::ShapeMismatch, "entry outside the upper triangle");
        if (blocks[e.block] < 0 && e.row != e.col)
          throw Error(ErrorCode::ShapeMismatch, "off-diagonal entry in a diagonal block");
        if (!std::isfinite(e.value)) throw Error(ErrorCode::ShapeMismatch, "non-finite entry");
      }
    };
    check(objective);
    for (const auto& a : constraints) check(a);
  }

  // Full symmetric matrix of a sparse block-diagonal operand.
  Matrix dense(const SparseSym& s) const {
    const auto off = offsets();
    Matrix m = Matrix::Zero(static_cast<Eigen::Index>(dim()), static_cast<Eigen::Index>(dim()));
    for (const auto& e : s) {
      const auto r = static_cast<Eigen::Index>(off[e.block] + e.row);
      const auto c = static_cast<Eigen::Index>(off[e.block] + e.col);
      m(r, c) += e.value;
      if (r != c) m(c, r) += e.value;
    }
    return m;
  }

  bool operator==(const Problem&) const = default;
};

enum class Status { Optimal, MaxIter, NumericalTrouble };

inline std::string to_string(Status s) {
  switch (s) {
    case Status::Optimal: return "optimal";
    case Status::MaxIter: return "max-iter";
    case Status::NumericalTrouble: return "numerical-trouble";
  }
  return "?";
}

struct Solution {
  Status status = Status::NumericalTrouble;
  double primal = 0.0;  // <C, X>
  double dual = 0.0;    // b.y
  double gap = 0.0;     // |primal - dual|
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int iterations = 0;
  Matrix x;
  Vector y;  // multipliers for all original constraints (dropped ones are 0)
  Matrix z;  // sum_k y_k A_k - C
  std::vector<std::size_t> dropped;  // constraints removed by presolve
  std::size_t reductions = 0;        // facial-reduction steps taken
  std::size_t face_dim = 0;          // size of the PSD block actually solved
};

struct Config {
  double gap_tol = 1e-7;        // |primal - dual| <= gap_tol (1 + |primal|)
  double feas_tol = 1e-8;       // absolute equality and dual-slack residuals
  double step_fraction = 0.98;
  double regularization = 1e-12;
  int max_iter = 200;
  double rank_tol = 1e-10;      // presolve, relative to the largest R diagonal
  bool check_weak_duality = false;
  bool facial_reduction = true;
  double face_tol = 1e-7;       // auxiliary margin below which the dual face is reduced
  double face_rank_tol = 1e-6;  // relative eigenvalue cutoff for the face
  double face_equation_tol = 1e-4;  // relative singular value cutoff for the face equations
  std::size_t max_reductions = 4;
};

namespace detail {

// Global (row, col, value) triplets, row <= col, for one operand.
struct Sym {
  std::vector<Eigen::Index> r, c;
  std::vector<double> v;
};

inline Sym globalize(const Problem& p, const SparseSym& s) {
  const auto off = p.offsets();
  Sym out;
  for (const auto& e : s) {
    out.r.push_back(static_cast<Eigen::Index>(off[e.block] + e.row));
    out.c.push_back(static_cast<Eigen::Index>(off[e.block] + e.col));
    out.v.push_back(e.value);
  }
  return out;
}

inline double inner(const Sym& a, const Matrix& x) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.v.size(); ++k)
    s += a.r[k] == a.c[k] ? a.v[k] * x(a.r[k], a.c[k]) : a.v[k] * (x(a.r[k], a.c[k]) + x(a.c[k], a.r[k]));
  return s;
}

inline void add_scaled(Matrix& m, const Sym& a, double y) {
  for (std::size_t k = 0; k < a.v.size(); ++k) {
    m(a.r[k], a.c[k]) += y * a.v[k];
    if (a.r[k] != a.c[k]) m(a.c[k], a.r[k]) += y * a.v[k];
  }
}

struct Presolved {
  std::vector<std::size_t> kept;
  std::vector<std::size_t> dropped;
};

// Finds a maximal independent subset of the constraint operators with a
// rank-revealing sparse QR and checks that the dropped equations are
// implied by the kept ones.
inline Presolved presolve(const Problem& p, const std::vector<Sym>& a, double rank_tol, double feas_tol) {
  const auto n = static_cast<Eigen::Index>(p.dim());
  const auto m = static_cast<Eigen::Index>(a.size());
  auto svec_index = [](Eigen::Index r, Eigen::Index c) { return c * (c + 1) / 2 + r; };
  const Eigen::Index rows = n * (n + 1) / 2;
  using Sp = Eigen::SparseMatrix<double, Eigen::ColMajor>;
  std::vector<Eigen::Triplet<double>> trip;
  for (Eigen::Index k = 0; k < m; ++k)
    for (std::size_t e = 0; e < a[k].v.size(); ++e) {
      const double scale = a[k].r[e] == a[k].c[e] ? 1.0 : std::sqrt(2.0);
      trip.emplace_back(svec_index(a[k].r[e], a[k].c[e]), k, scale * a[k].v[e]);
    }
  Sp at(rows, m);
  at.setFromTriplets(trip.begin(), trip.end());
  at.makeCompressed();

  Eigen::SparseQR<Sp, Eigen::COLAMDOrdering<int>> qr;
  double maxnorm = 0.0;
  for (Eigen::Index k = 0; k < m; ++k) maxnorm = std::max(maxnorm, at.col(k).norm());
  qr.setPivotThreshold(rank_tol * std::max(1.0, maxnorm));
  qr.compute(at);
  if (qr.info() != Eigen::Success) throw Error(ErrorCode::NumericalTrouble, "presolve factorization failed");
  const Eigen::Index rank = qr.rank();

  Presolved out;
  const auto& perm = qr.colsPermutation().indices();
  std::vector<bool> keep(static_cast<std::size_t>(m), false);
  for (Eigen::Index k = 0; k < rank; ++k) keep[static_cast<std::size_t>(perm(k))] = true;
  for (Eigen::Index k = 0; k < m; ++k)
    (keep[static_cast<std::size_t>(k)] ? out.kept : out.dropped).push_back(static_cast<std::size_t>(k));
  if (out.dropped.empty()) return out;

  // Express the dropped operators through the kept ones and compare b.
  std::vector<Eigen::Triplet<double>> kt, dt;
  for (Eigen::Index k = 0; k < at.outerSize(); ++k)
    for (Sp::InnerIterator it(at, k); it; ++it) {
      if (keep[static_cast<std::size_t>(k)]) {
        const auto pos = std::lower_bound(out.kept.begin(), out.kept.end(), static_cast<std::size_t>(k)) - out.kept.begin();
        kt.emplace_back(it.row(), pos, it.value());
      } else {
        const auto pos =
            std::lower_bound(out.dropped.begin(), out.dropped.end(), static_cast<std::size_t>(k)) - out.dropped.begin();
        dt.emplace_back(it.row(), pos, it.value());
      }
    }
  Sp kmat(rows, static_cast<Eigen::Index>(out.kept.size())), dmat(rows, static_cast<Eigen::Index>(out.dropped.size()));
  kmat.setFromTriplets(kt.begin(), kt.end());
  dmat.setFromTriplets(dt.begin(), dt.end());
  kmat.makeCompressed();
  Eigen::SparseQR<Sp, Eigen::COLAMDOrdering<int>> kqr(kmat);
  if (kqr.info() != Eigen::Success) throw Error(ErrorCode::NumericalTrouble, "presolve factorization failed");
  Vector bk(static_cast<Eigen::Index>(out.kept.size()));
  for (std::size_t i = 0; i < out.kept.size(); ++i) bk(static_cast<Eigen::Index>(i)) = p.rhs(static_cast<Eigen::Index>(out.kept[i]));
  for (std::size_t d = 0; d < out.dropped.size(); ++d) {
    const Vector col = Matrix(dmat.col(static_cast<Eigen::Index>(d)));
    const Vector lam = kqr.solve(col);
    const double resid = (kmat * lam - col).norm();
    const double implied = bk.dot(lam);
    const double actual = p.rhs(static_cast<Eigen::Index>(out.dropped[d]));
    if (resid > 1e-6 * std::max(1.0, col.norm()) || std::abs(implied - actual) > feas_tol * (1.0 + std::abs(actual)) * 1e2)
      throw Error(ErrorCode::Infeasible, "constraint " + std::to_string(out.dropped[d]) +
                                             " contradicts the others (implied " + std::to_string(implied) +
                                             ", given " + std::to_string(actual) + ")");
  }
  return out;
}

}  // namespace detail

namespace detail {

// Infeasible-start primal-dual path following with the Nesterov-Todd
// direction and a Mehrotra predictor-corrector. Internally solves the minimization form
// min <-C, X> so that the dual slack is Z = (-C) - sum y_k A_k.
inline Solution interior_point(const Problem& problem, const Config& cfg) {
  problem.validate();
  std::vector<detail::Sym> all;
  for (const auto& a : problem.constraints) all.push_back(detail::globalize(problem, a));
  const auto pre = detail::presolve(problem, all, cfg.rank_tol, cfg.feas_tol);

  std::vector<detail::Sym> a;
  Vector b(static_cast<Eigen::Index>(pre.kept.size()));
  for (std::size_t i = 0; i < pre.kept.size(); ++i) {
    a.push_back(all[pre.kept[i]]);
    b(static_cast<Eigen::Index>(i)) = problem.rhs(static_cast<Eigen::Index>(pre.kept[i]));
  }
  const auto n = static_cast<Eigen::Index>(problem.dim());
  const auto m = static_cast<Eigen::Index>(a.size());
  const Matrix c = -problem.dense(problem.objective);

  auto apply_a = [&](const Matrix& x) {
    Vector out(m);
    for (Eigen::Index k = 0; k < m; ++k) out(k) = detail::inner(a[static_cast<std::size_t>(k)], x);
    return out;
  };
  auto apply_at = [&](const Vector& y) {
    Matrix out = Matrix::Zero(n, n);
    for (Eigen::Index k = 0; k < m; ++k) detail::add_scaled(out, a[static_cast<std::size_t>(k)], y(k));
    return out;
  };

  // Constraints produced by facial reduction are dense; for those the
  // Schur matrix is cheaper as a Gram matrix of G^T A_k G.
  std::size_t nnz = 0;
  for (const auto& ak : a) nnz += ak.v.size();
  std::vector<Matrix> dense_a;
  if (nnz > static_cast<std::size_t>(m * n))
    for (const auto& ak : a) {
      Matrix d = Matrix::Zero(n, n);
      detail::add_scaled(d, ak, 1.0);
      dense_a.push_back(std::move(d));
    }

  // Starting point.
  double xi = std::max(10.0, std::sqrt(static_cast<double>(n)));
  double eta = std::max(10.0, std::sqrt(static_cast<double>(n)));
  for (Eigen::Index k = 0; k < m; ++k) {
    double fro = 0.0;
    for (double v : a[static_cast<std::size_t>(k)].v) fro += 2.0 * v * v;
    fro = std::sqrt(fro);
    xi = std::max(xi, static_cast<double>(n) * (1.0 + std::abs(b(k))) / (1.0 + fro));
    eta = std::max(eta, fro);
  }
  eta = std::max(eta, c.norm());
  Matrix x = xi * Matrix::Identity(n, n);
  Matrix z = eta * Matrix::Identity(n, n);
  Vector y = Vector::Zero(m);

  Solution sol;
  sol.dropped = pre.dropped;

  auto finish = [&](Status st, int iters) {
    sol.status = st;
    sol.iterations = iters;
    sol.x = x;
    sol.primal = -(c.cwiseProduct(x)).sum();
    sol.dual = -b.dot(y);
    sol.gap = std::abs(sol.primal - sol.dual);
    sol.primal_residual = (b - apply_a(x)).lpNorm<Eigen::Infinity>();
    sol.dual_residual = (c - z - apply_at(y)).cwiseAbs().maxCoeff();
    sol.y = Vector::Zero(static_cast<Eigen::Index>(problem.constraints.size()));
    for (std::size_t i = 0; i < pre.kept.size(); ++i)
      sol.y(static_cast<Eigen::Index>(pre.kept[i])) = -y(static_cast<Eigen::Index>(i));
    sol.z = z;
    sol.face_dim = static_cast<std::size_t>(n);
    return sol;
  };

  for (int iter = 0; iter < cfg.max_iter; ++iter) {
    const Vector rp = b - apply_a(x);
    const Matrix rd = c - z - apply_at(y);
    const double mu = x.cwiseProduct(z).sum() / static_cast<double>(n);
    const double pobj = (c.cwiseProduct(x)).sum();
    const double dobj = b.dot(y);
    const double pres = rp.lpNorm<Eigen::Infinity>();
    const double dres = rd.cwiseAbs().maxCoeff();
    if (cfg.check_weak_duality && pres <= cfg.feas_tol && dres <= cfg.feas_tol && pobj < dobj - 1e-6 * (1 + std::abs(pobj)))
      throw Error(ErrorCode::NumericalTrouble, "weak duality violated at iteration " + std::to_string(iter));
    if (pres <= cfg.feas_tol && dres <= cfg.feas_tol && std::abs(pobj - dobj) <= cfg.gap_tol * (1.0 + std::abs(pobj)))
      return finish(Status::Optimal, iter);

    // NT scaling: G with G^T Z G = G^-1 X G^-T = diag(lam), W = G G^T.
    const Eigen::LLT<Matrix> xchol(x), zchol(z);
    if (xchol.info() != Eigen::Success || zchol.info() != Eigen::Success) return finish(Status::NumericalTrouble, iter);
    const Matrix lx = xchol.matrixL(), lz = zchol.matrixL();
    const Eigen::JacobiSVD<Matrix> svd(lz.transpose() * lx, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vector lam = svd.singularValues();
    if (lam.minCoeff() <= 0.0 || !lam.allFinite()) return finish(Status::NumericalTrouble, iter);
    const Matrix g = lx * svd.matrixV() * lam.cwiseSqrt().cwiseInverse().asDiagonal();
    const Matrix ginv = lam.cwiseInverse().asDiagonal() * g.transpose() * z;
    const Matrix w = g * g.transpose();

    // Schur complement M_kl = <A_k, W A_l W>.
    Matrix schur(m, m);
    if (!dense_a.empty()) {
      const Eigen::Index len = n * (n + 1) / 2;
      Matrix sv(m, len);
      for (Eigen::Index k = 0; k < m; ++k) {
        const Matrix t = g.transpose() * dense_a[static_cast<std::size_t>(k)] * g;
        Eigen::Index q = 0;
        for (Eigen::Index j = 0; j < n; ++j)
          for (Eigen::Index i = 0; i <= j; ++i) sv(k, q++) = i == j ? t(i, j) : std::sqrt(2.0) * t(i, j);
      }
      schur.setZero();
      schur.selfadjointView<Eigen::Lower>().rankUpdate(sv);
      schur = schur.selfadjointView<Eigen::Lower>();
    } else {
      Matrix wal(n, n);
      for (Eigen::Index l = 0; l < m; ++l) {
        const auto& al = a[static_cast<std::size_t>(l)];
        wal.setZero();
        for (std::size_t e = 0; e < al.v.size(); ++e) {
          const Eigen::Index r = al.r[e], cc = al.c[e];
          wal.noalias() += al.v[e] * w.col(r) * w.row(cc);
          if (r != cc) wal.noalias() += al.v[e] * w.col(cc) * w.row(r);
        }
        for (Eigen::Index k = l; k < m; ++k) schur(k, l) = schur(l, k) = detail::inner(a[static_cast<std::size_t>(k)], wal);
      }
    }
    // Jacobi-scaled Cholesky; the diagonal shift only kicks in when the
    // scaled matrix is numerically indefinite.
    const Vector dscale = schur.diagonal().cwiseMax(std::numeric_limits<double>::min()).cwiseSqrt().cwiseInverse();
    const Matrix scaled = dscale.asDiagonal() * schur * dscale.asDiagonal();
    Eigen::LLT<Matrix> schol(scaled);
    for (double reg = cfg.regularization; schol.info() != Eigen::Success; reg *= 100.0) {
      if (reg > 1e-6) return finish(Status::NumericalTrouble, iter);
      schol.compute(scaled + reg * Matrix::Identity(m, m));
    }
    auto schur_solve = [&](const Vector& r) { return Vector(dscale.asDiagonal() * schol.solve(dscale.asDiagonal() * r)); };
    const Matrix wrdw = w * rd * w;

    // Scaled complementarity: lam (dX~ + dZ~) + (dX~ + dZ~) lam = rc, so
    // dX + W dZ W = G T G^T with T_ij = rc_ij / (lam_i + lam_j).
    auto direction = [&](const Matrix& rc, Matrix& dx, Vector& dy, Matrix& dz) {
      Matrix t(n, n);
      for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i) t(i, j) = rc(i, j) / (lam(i) + lam(j));
      const Matrix gtg = g * t * g.transpose();
      const Vector rhs = rp - apply_a(gtg) + apply_a(wrdw);
      dy = schur_solve(rhs);
      for (int k = 0; k < 2; ++k) dy += schur_solve(rhs - schur * dy);
      dz = rd - apply_at(dy);
      dx = gtg - w * dz * w;
      dx = 0.5 * (dx + dx.transpose()).eval();
      dz = 0.5 * (dz + dz.transpose()).eval();
    };
    // Step to the boundary measured in the scaled space where X~ = Z~ = lam.
    auto step = [&](const Matrix& ds, double fraction) {
      const Vector is = lam.cwiseSqrt().cwiseInverse();
      Matrix t = is.asDiagonal() * ds * is.asDiagonal();
      t = 0.5 * (t + t.transpose()).eval();
      const double low = Eigen::SelfAdjointEigenSolver<Matrix>(t, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
      return low >= 0.0 ? 1.0 : std::min(1.0, fraction * (-1.0 / low));
    };
    auto scaled_x = [&](const Matrix& dx) { return Matrix(ginv * dx * ginv.transpose()); };
    auto scaled_z = [&](const Matrix& dz) { return Matrix(g.transpose() * dz * g); };

    const Matrix lam2 = lam.cwiseAbs2().asDiagonal();
    Matrix dxa, dza;
    Vector dya;
    direction(-2.0 * lam2, dxa, dya, dza);
    const Matrix sxa = scaled_x(dxa), sza = scaled_z(dza);
    const double ap_aff = step(sxa, 1.0);
    const double ad_aff = step(sza, 1.0);
    const double mu_aff = (x + ap_aff * dxa).cwiseProduct(z + ad_aff * dza).sum() / static_cast<double>(n);
    const double sigma = std::clamp(std::pow(mu_aff / mu, 3.0), 0.0, 1.0);

    const Matrix cross = sxa * sza;
    Matrix rc = 2.0 * sigma * mu * Matrix::Identity(n, n) - 2.0 * lam2 - (cross + cross.transpose());
    Matrix dx, dz;
    Vector dy;
    direction(rc, dx, dy, dz);
    const double ap = step(scaled_x(dx), cfg.step_fraction);
    const double ad = step(scaled_z(dz), cfg.step_fraction);
    if (ap <= 0.0 || ad <= 0.0 || !dx.allFinite() || !dz.allFinite())
      return finish(Status::NumericalTrouble, iter);
    x += ap * dx;
    x = 0.5 * (x + x.transpose()).eval();
    y += ad * dy;
    z += ad * dz;
    z = 0.5 * (z + z.transpose()).eval();
  }
  return finish(Status::MaxIter, cfg.max_iter);
}

// One facial-reduction step on the dual side. Maximizing t subject to
// sum y_k A_k - C - t I >= 0 is well posed (its primal is trace-normalized);
// t* ~ 0 means no strictly feasible slack exists and the optimal X of
// this auxiliary problem spans directions U with S(y) U = 0 for every
// feasible y.
struct FaceStep {
  bool reduced = false;
  double margin = 0.0;  // t*
  Problem problem;      // reduced problem (valid when reduced)
  Matrix basis;         // V: S(y) = V S'(u) V^T
  Vector shift;         // y0
  Matrix lift;          // N: y = y0 + N u
  double offset = 0.0;  // b.y0
};

inline FaceStep face_step(const Problem& p, const Config& cfg) {
  const auto n = static_cast<Eigen::Index>(p.dim());
  const auto m = static_cast<Eigen::Index>(p.constraints.size());
  Problem aux = p;
  aux.rhs = Vector::Zero(m + 1);
  aux.rhs(m) = -1.0;
  SparseSym minus_identity;
  for (std::size_t blk = 0; blk < p.blocks.size(); ++blk)
    for (std::size_t i = 0; i < static_cast<std::size_t>(std::labs(p.blocks[blk])); ++i) minus_identity.push_back({blk, i, i, -1.0});
  aux.constraints.push_back(minus_identity);
  // The null space is read off the auxiliary X, so it is solved far past
  // the usual tolerances; it typically ends in NumericalTrouble once the
  // gap is at roundoff level, which is fine.
  Config aux_cfg = cfg;
  aux_cfg.check_weak_duality = false;
  aux_cfg.gap_tol = 1e-13;
  aux_cfg.feas_tol = 1e-12;
  aux_cfg.max_iter = std::max(cfg.max_iter, 100);
  FaceStep out;
  Solution as;
  try {
    as = interior_point(aux, aux_cfg);
  } catch (const Error& e) {
    // -I lies in the span of the A_k: the slack can be shifted freely.
    if (e.code() != ErrorCode::Infeasible) throw;
    out.margin = std::numeric_limits<double>::infinity();
    return out;
  }
  // A dual iterate with a clearly positive t certifies a strictly feasible
  // slack on its own.
  const double achieved = -as.dual;
  if (achieved > cfg.face_tol && as.dual_residual < 0.1 * achieved) {
    out.margin = achieved;
    return out;
  }
  if (as.status != Status::Optimal && (as.gap > cfg.face_tol || as.primal_residual > cfg.face_tol))
    throw Error(ErrorCode::NumericalTrouble, "facial reduction: auxiliary problem ended with status " + to_string(as.status) +
                                                 " (gap " + std::to_string(as.gap) + ", size " + std::to_string(n) + ")");

  out.margin = -as.primal;
  if (out.margin < -std::sqrt(cfg.face_tol))
    throw Error(ErrorCode::Infeasible, "no positive semidefinite dual slack exists (margin " + std::to_string(out.margin) + ")");

  const Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (as.x + as.x.transpose()));
  const Vector ev = es.eigenvalues();
  const double top = ev.maxCoeff();
  std::vector<Eigen::Index> in_range, outside;
  for (Eigen::Index i = 0; i < n; ++i) (ev(i) > cfg.face_rank_tol * top ? in_range : outside).push_back(i);
  if (in_range.empty() || outside.empty()) throw Error(ErrorCode::NumericalTrouble, "facial reduction: degenerate face");
  Matrix u(n, static_cast<Eigen::Index>(in_range.size())), v(n, static_cast<Eigen::Index>(outside.size()));
  for (std::size_t i = 0; i < in_range.size(); ++i) u.col(static_cast<Eigen::Index>(i)) = es.eigenvectors().col(in_range[i]);
  for (std::size_t i = 0; i < outside.size(); ++i) v.col(static_cast<Eigen::Index>(i)) = es.eigenvectors().col(outside[i]);

  // (sum y_k A_k - C) U = 0 as a linear system in y.
  std::vector<Sym> ops;
  for (const auto& ak : p.constraints) ops.push_back(globalize(p, ak));
  const Eigen::Index r = u.cols();
  Matrix lin(n * r, m);
  for (Eigen::Index k = 0; k < m; ++k) {
    Matrix ak = Matrix::Zero(n, n);
    add_scaled(ak, ops[static_cast<std::size_t>(k)], 1.0);
    lin.col(k) = (ak * u).reshaped();
  }
  const Matrix cmat = p.dense(p.objective);
  const Vector rhs = (cmat * u).reshaped();
  const Eigen::BDCSVD<Matrix> svd(lin, Eigen::ComputeThinU | Eigen::ComputeFullV);
  const Vector sv = svd.singularValues();
  Eigen::Index rank = 0;
  while (rank < sv.size() && sv(rank) > cfg.face_equation_tol * sv(0)) ++rank;
  const Matrix vv = svd.matrixV();
  const Matrix range = vv.leftCols(rank);
  out.shift = range * ((svd.matrixU().leftCols(rank).transpose() * rhs).cwiseQuotient(sv.head(rank)));
  out.lift = vv.rightCols(m - rank);
  const double inconsistency = (lin * out.shift - rhs).lpNorm<Eigen::Infinity>();
  if (inconsistency > std::sqrt(cfg.face_tol))
    throw Error(ErrorCode::NumericalTrouble, "facial reduction: face equations inconsistent (" + std::to_string(inconsistency) + ")");
  if (out.lift.cols() == 0) throw Error(ErrorCode::NumericalTrouble, "facial reduction: no free multipliers left");

  // Reduced data: C' = V^T (C - A*(y0)) V, A'_j = V^T A*(N_j) V, b' = N^T b.
  Matrix ay0 = Matrix::Zero(n, n);
  for (Eigen::Index k = 0; k < m; ++k) add_scaled(ay0, ops[static_cast<std::size_t>(k)], out.shift(k));
  const Eigen::Index nr = v.cols();
  const Eigen::Index len = nr * (nr + 1) / 2;
  Matrix compressed(m, len);
  for (Eigen::Index k = 0; k < m; ++k) {
    Matrix av = Matrix::Zero(n, nr);
    const auto& ak = ops[static_cast<std::size_t>(k)];
    for (std::size_t e = 0; e < ak.v.size(); ++e) {
      av.row(ak.r[e]) += ak.v[e] * v.row(ak.c[e]);
      if (ak.r[e] != ak.c[e]) av.row(ak.c[e]) += ak.v[e] * v.row(ak.r[e]);
    }
    const Matrix vav = v.transpose() * av;
    Eigen::Index q = 0;
    for (Eigen::Index j = 0; j < nr; ++j)
      for (Eigen::Index i = 0; i <= j; ++i) compressed(k, q++) = vav(i, j);
  }
  const Matrix reduced_ops = out.lift.transpose() * compressed;
  const Matrix c_red = v.transpose() * (cmat - ay0) * v;

  Problem& red = out.problem;
  red.blocks = {static_cast<int>(nr)};
  auto to_sparse = [&](auto&& value) {
    SparseSym sym;
    Eigen::Index q = 0;
    for (Eigen::Index j = 0; j < nr; ++j)
      for (Eigen::Index i = 0; i <= j; ++i, ++q) {
        const double x = value(i, j, q);
        if (x != 0.0) sym.push_back({0, static_cast<std::size_t>(i), static_cast<std::size_t>(j), x});
      }
    return sym;
  };
  red.objective = to_sparse([&](Eigen::Index i, Eigen::Index j, Eigen::Index) { return 0.5 * (c_red(i, j) + c_red(j, i)); });
  for (Eigen::Index jcol = 0; jcol < reduced_ops.rows(); ++jcol)
    red.constraints.push_back(to_sparse([&](Eigen::Index, Eigen::Index, Eigen::Index q) { return reduced_ops(jcol, q); }));
  red.rhs = out.lift.transpose() * p.rhs;
  out.offset = p.rhs.dot(out.shift);
  out.basis = v;
  out.reduced = true;
  return out;
}

}  // namespace detail

// Repeated facial reduction of the dual side. The reduced problem has a
// strictly feasible slack; its optimum plus `offset` is the optimum of the
// original, and y = shift + lift u, S(y) = basis S'(u) basis^T.
struct FaceReduction {
  Problem problem;
  double offset = 0.0;
  Matrix basis;
  Vector shift;
  Matrix lift;
  std::size_t steps = 0;
  double margin = 0.0;  // auxiliary t* of the final problem
};

inline FaceReduction reduce_face(const Problem& problem, const Config& cfg = {}) {
  problem.validate();
  const auto n = static_cast<Eigen::Index>(problem.dim());
  const auto m = static_cast<Eigen::Index>(problem.constraints.size());
  FaceReduction fr;
  fr.problem = problem;
  fr.basis = Matrix::Identity(n, n);
  fr.shift = Vector::Zero(m);
  fr.lift = Matrix::Identity(m, m);
  for (;;) {
    auto fs = detail::face_step(fr.problem, cfg);
    fr.margin = fs.margin;
    if (!fs.reduced) break;
    if (fr.steps == cfg.max_reductions)
      throw Error(ErrorCode::NumericalTrouble, "facial reduction did not reach a strictly feasible face");
    fr.shift += fr.lift * fs.shift;
    fr.lift = fr.lift * fs.lift;
    fr.basis = fr.basis * fs.basis;
    fr.offset += fs.offset;
    fr.problem = std::move(fs.problem);
    ++fr.steps;
  }
  return fr;
}

// Solves max <C, X> s.t. <A_k, X> = b_k. With facial reduction enabled the
// dual side is first restricted to its minimal face, which keeps the
// iterates bounded when no strictly feasible slack exists (common for
// moment relaxations of boundary data). Values and multipliers are reported
// for the original problem; x is the lifted reduced primal V X' V^T.
inline Solution solve(const Problem& problem, const Config& cfg = {}) {
  if (!cfg.facial_reduction) return detail::interior_point(problem, cfg);
  const auto fr = reduce_face(problem, cfg);
  if (fr.steps == 0) return detail::interior_point(problem, cfg);
  const Solution red = detail::interior_point(fr.problem, cfg);
  Solution sol = red;
  sol.primal = red.primal + fr.offset;
  sol.dual = red.dual + fr.offset;
  sol.gap = std::abs(sol.primal - sol.dual);
  sol.x = fr.basis * red.x * fr.basis.transpose();
  sol.y = fr.shift + fr.lift * red.y;
  sol.z = fr.basis * red.z * fr.basis.transpose();
  sol.dropped.clear();
  sol.reductions = fr.steps;
  sol.face_dim = static_cast<std::size_t>(fr.basis.cols());
  // Dual residual against the original operators; the primal residual
  // stays that of the reduced problem.
  Matrix s = -problem.dense(problem.objective);
  for (std::size_t k = 0; k < problem.constraints.size(); ++k)
    detail::add_scaled(s, detail::globalize(problem, problem.constraints[k]), sol.y(static_cast<Eigen::Index>(k)));
  sol.dual_residual = (s - sol.z).cwiseAbs().maxCoeff();
  return sol;
}

//------------------------------------------------------------------------------
// SDPA sparse format
//------------------------------------------------------------------------------

inline std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string to_sdpa(const Problem& p) {
  p.validate();
  std::ostringstream out;
  out << p.constraints.size() << "\n" << p.blocks.size() << "\n";
  for (std::size_t i = 0; i < p.blocks.size(); ++i) out << (i ? " " : "") << p.blocks[i];
  out << "\n";
  for (Eigen::Index k = 0; k < p.rhs.size(); ++k) out << (k ? " " : "") << format_value(p.rhs(k));
  out << "\n";
  auto emit = [&](std::size_t k, const SparseSym& s) {
    for (const auto& e : s)
      if (e.value != 0.0)
        out << k << " " << e.block + 1 << " " << e.row + 1 << " " << e.col + 1 << " " << format_value(e.value) << "\n";
  };
  emit(0, p.objective);
  for (std::size_t k = 0; k < p.constraints.size(); ++k) emit(k + 1, p.constraints[k]);
  return out.str();
}

// Writes to a temporary sibling and renames, so a failed export never leaves
// a partial file behind.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::IoFailure, "cannot open " + tmp.string());
    f << content;
    if (!f.good()) throw Error(ErrorCode::IoFailure, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error(ErrorCode::IoFailure, "cannot rename onto " + path.string() + ": " + ec.message());
  }
}

inline void export_sdpa(const Problem& p, const std::filesystem::path& path) { write_file_atomic(path, to_sdpa(p)); }

inline Problem parse_sdpa(std::istream& in) {
  Problem p;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& why) -> Error {
    return Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": " + why);
  };
  // Header tokens may carry SDPA punctuation such as "{2, -3}".
  auto header_line = [&]() -> std::istringstream {
    while (std::getline(in, line)) {
      ++lineno;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos) continue;
      if (line[first] == '"' || line[first] == '*') continue;
      for (char& ch : line)
        if (ch == '{' || ch == '}' || ch == '(' || ch == ')' || ch == ',') ch = ' ';
      return std::istringstream(line);
    }
    throw fail("unexpected end of file in header");
  };

  long m = 0, nb = 0;
  {
    auto s = header_line();
    if (!(s >> m) || m < 1) throw fail("expected the constraint count");
  }
  {
    auto s = header_line();
    if (!(s >> nb) || nb < 1) throw fail("expected the block count");
  }
  {
    auto s = header_line();
    for (long i = 0; i < nb; ++i) {
      long b = 0;
      if (!(s >> b) || b == 0) throw fail("expected " + std::to_string(nb) + " block sizes");
      p.blocks.push_back(b);
    }
  }
  {
    auto s = header_line();
    p.rhs.resize(m);
    for (long k = 0; k < m; ++k)
      if (!(s >> p.rhs(k))) throw fail("expected " + std::to_string(m) + " right-hand values");
  }
  p.constraints.assign(static_cast<std::size_t>(m), {});
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '"' || line[first] == '*') continue;
    std::istringstream s(line);
    long k = 0, blk = 0, i = 0, j = 0;
    double v = 0.0;
    if (!(s >> k >> blk >> i >> j >> v)) throw fail("entry needs five fields: matrix block row col value");
    if (k < 0 || k > m) throw fail("matrix index out of range");
    if (blk < 1 || blk > nb) throw fail("block index out of range");
    const long size = std::labs(p.blocks[static_cast<std::size_t>(blk - 1)]);
    if (i < 1 || j < 1 || i > size || j > size) throw fail("row or column out of range");
    if (i > j) std::swap(i, j);
    Entry e{static_cast<std::size_t>(blk - 1), static_cast<std::size_t>(i - 1), static_cast<std::size_t>(j - 1), v};
    (k == 0 ? p.objective : p.constraints[static_cast<std::size_t>(k - 1)]).push_back(e);
  }
  p.validate();
  return p;
}

inline Problem import_sdpa(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  return parse_sdpa(f);
}

}  // namespace seqrand::sdp
