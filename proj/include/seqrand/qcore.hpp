#pragma once

// Dense complex linear algebra and validated quantum objects: state vectors,
// density operators and POVMs, plus the handful of operations (square roots,
// partial traces, purification) the rest of the library is built on.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "seqrand/error.hpp"

namespace seqrand {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;

// Absolute tolerances used by every validity check.
struct Tolerances {
  double norm = 1e-9;  // trace / norm / completeness
  double herm = 1e-9;  // Hermiticity and idempotence
  double psd = 1e-9;   // most negative eigenvalue still treated as zero
  double num = 1e-8;   // general numerical agreement
};

inline const Tolerances& default_tolerances() {
  static const Tolerances tol{};
  return tol;
}

//------------------------------------------------------------------------------
// Matrix helpers
//------------------------------------------------------------------------------

inline double max_abs(const ComplexMatrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

inline double hermiticity_defect(const ComplexMatrix& m) {
  return max_abs(m - m.adjoint());
}

inline bool is_hermitian(const ComplexMatrix& m, double tol) {
  return m.rows() == m.cols() && hermiticity_defect(m) <= tol;
}

inline ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline ComplexVector kron(const ComplexVector& a, const ComplexVector& b) {
  ComplexVector out(a.size() * b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a(i) * b;
  return out;
}

inline ComplexMatrix identity(Eigen::Index dim) { return ComplexMatrix::Identity(dim, dim); }

inline ComplexMatrix projector(const ComplexVector& v) { return v * v.adjoint(); }

// Eigen-decomposition of the Hermitian part of m. Eigenvalues ascend.
inline Eigen::SelfAdjointEigenSolver<ComplexMatrix> hermitian_eigen(const ComplexMatrix& m) {
  const ComplexMatrix h = 0.5 * (m + m.adjoint());
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(h);
  if (solver.info() != Eigen::Success)
    throw Error(ErrorCode::NumericalTrouble, "Hermitian eigendecomposition did not converge");
  return solver;
}

inline double min_eigenvalue(const ComplexMatrix& m) {
  return hermitian_eigen(m).eigenvalues().minCoeff();
}

inline std::size_t product(std::span<const std::size_t> dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

//------------------------------------------------------------------------------
// psd_sqrt
//------------------------------------------------------------------------------

// Positive square root of a PSD matrix. Eigenvalues in [-tol.psd, 0) are
// clipped to zero first.
inline ComplexMatrix psd_sqrt(const ComplexMatrix& m, const Tolerances& tol = default_tolerances()) {
  if (m.rows() != m.cols())
    throw Error(ErrorCode::DimensionMismatch, "psd_sqrt requires a square matrix");
  if (hermiticity_defect(m) > tol.herm)
    throw Error(ErrorCode::NotHermitian,
                "hermiticity defect " + std::to_string(hermiticity_defect(m)));
  const auto eig = hermitian_eigen(m);
  RealVector values = eig.eigenvalues();
  if (values.size() > 0 && values.minCoeff() < -tol.psd)
    throw Error(ErrorCode::NegativeEigenvalue,
                "eigenvalue " + std::to_string(values.minCoeff()) + " below -tau_psd");
  // Eigenvalues at roundoff level are zero; their square roots (~1e-8)
  // would otherwise leak into sandwiches like sqrt(P) rho sqrt(P).
  const double floor = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, values.cwiseAbs().maxCoeff());
  values = values.unaryExpr([floor](double x) { return x <= floor ? 0.0 : std::sqrt(x); });
  const ComplexMatrix& v = eig.eigenvectors();
  return v * values.cast<Complex>().asDiagonal() * v.adjoint();
}

//------------------------------------------------------------------------------
// Subsystem index arithmetic
//------------------------------------------------------------------------------

namespace detail {

// Row-major mixed-radix digits: the first factor is the most significant.
inline std::vector<std::size_t> strides_of(std::span<const std::size_t> dims) {
  std::vector<std::size_t> strides(dims.size(), 1);
  for (std::size_t k = dims.size(); k-- > 1;) strides[k - 1] = strides[k] * dims[k];
  return strides;
}

// For every basis index of the full space, the index inside the `chosen`
// factors (in the given order) and inside the remaining factors.
struct SplitIndex {
  std::vector<std::size_t> inner;
  std::vector<std::size_t> outer;
  std::size_t inner_dim = 1;
  std::size_t outer_dim = 1;
};

inline SplitIndex split_index(std::span<const std::size_t> dims, std::span<const std::size_t> chosen) {
  const std::size_t n = dims.size();
  std::vector<bool> picked(n, false);
  for (std::size_t c : chosen) {
    if (c >= n || picked[c])
      throw Error(ErrorCode::DimensionMismatch, "subsystem index out of range or repeated");
    picked[c] = true;
  }
  std::vector<std::size_t> rest;
  for (std::size_t k = 0; k < n; ++k)
    if (!picked[k]) rest.push_back(k);

  SplitIndex out;
  for (std::size_t c : chosen) out.inner_dim *= dims[c];
  for (std::size_t r : rest) out.outer_dim *= dims[r];
  const std::size_t total = product(dims);
  out.inner.resize(total);
  out.outer.resize(total);
  std::vector<std::size_t> digit(n, 0);
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t in = 0, ou = 0;
    for (std::size_t c : chosen) in = in * dims[c] + digit[c];
    for (std::size_t r : rest) ou = ou * dims[r] + digit[r];
    out.inner[idx] = in;
    out.outer[idx] = ou;
    for (std::size_t k = n; k-- > 0;) {
      if (++digit[k] < dims[k]) break;
      digit[k] = 0;
    }
  }
  return out;
}

}  // namespace detail

// Tr over every factor not listed in `keep`. The kept factors appear in the
// order given by `keep`.
inline ComplexMatrix partial_trace(const ComplexMatrix& m, std::span<const std::size_t> dims,
                                   std::span<const std::size_t> keep) {
  const std::size_t total = product(dims);
  if (m.rows() != m.cols() || static_cast<std::size_t>(m.rows()) != total)
    throw Error(ErrorCode::DimensionMismatch,
                "matrix dimension " + std::to_string(m.rows()) + " vs factor product " +
                    std::to_string(total));
  const auto split = detail::split_index(dims, keep);
  ComplexMatrix out = ComplexMatrix::Zero(split.inner_dim, split.inner_dim);
  for (std::size_t i = 0; i < total; ++i)
    for (std::size_t j = 0; j < total; ++j)
      if (split.outer[i] == split.outer[j]) out(split.inner[i], split.inner[j]) += m(i, j);
  return out;
}

inline ComplexMatrix partial_trace(const ComplexMatrix& m, std::initializer_list<std::size_t> dims,
                                   std::initializer_list<std::size_t> keep) {
  return partial_trace(m, std::span<const std::size_t>(dims.begin(), dims.size()),
                       std::span<const std::size_t>(keep.begin(), keep.size()));
}

// Applies `op` to the factors `targets` (in that order) of a vector living on
// the tensor product described by `dims`.
inline ComplexVector apply_local(const ComplexMatrix& op, const ComplexVector& psi,
                                 std::span<const std::size_t> dims,
                                 std::span<const std::size_t> targets) {
  const std::size_t total = product(dims);
  if (static_cast<std::size_t>(psi.size()) != total)
    throw Error(ErrorCode::DimensionMismatch, "state size does not match factor dimensions");
  const auto split = detail::split_index(dims, targets);
  if (static_cast<std::size_t>(op.rows()) != split.inner_dim || op.rows() != op.cols())
    throw Error(ErrorCode::DimensionMismatch, "operator does not match target factors");
  ComplexMatrix grid(split.inner_dim, split.outer_dim);
  for (std::size_t idx = 0; idx < total; ++idx) grid(split.inner[idx], split.outer[idx]) = psi(idx);
  const ComplexMatrix moved = op * grid;
  ComplexVector out(total);
  for (std::size_t idx = 0; idx < total; ++idx) out(idx) = moved(split.inner[idx], split.outer[idx]);
  return out;
}

//------------------------------------------------------------------------------
// Validated quantum objects
//------------------------------------------------------------------------------

class StateVector {
 public:
  StateVector() = default;

  explicit StateVector(ComplexVector amplitudes, const Tolerances& tol = default_tolerances())
      : amplitudes_(std::move(amplitudes)) {
    if (amplitudes_.size() == 0) throw Error(ErrorCode::DimensionMismatch, "empty state vector");
    if (!amplitudes_.allFinite()) throw Error(ErrorCode::NotComplete, "non-finite amplitude");
    const double norm = amplitudes_.norm();
    if (std::abs(norm - 1.0) > tol.norm)
      throw Error(ErrorCode::NotComplete, "state norm " + std::to_string(norm) + " differs from 1");
  }

  // Normalizes before validating.
  static StateVector normalized(const ComplexVector& v) {
    const double norm = v.norm();
    if (!(norm > 0.0)) throw Error(ErrorCode::NotComplete, "cannot normalize a zero vector");
    return StateVector(v / norm);
  }

  Eigen::Index dim() const { return amplitudes_.size(); }
  const ComplexVector& amplitudes() const { return amplitudes_; }
  ComplexMatrix projector() const { return seqrand::projector(amplitudes_); }

 private:
  ComplexVector amplitudes_;
};

class DensityOperator {
 public:
  DensityOperator() = default;

  explicit DensityOperator(ComplexMatrix m, const Tolerances& tol = default_tolerances())
      : matrix_(std::move(m)) {
    if (matrix_.rows() != matrix_.cols() || matrix_.rows() == 0)
      throw Error(ErrorCode::DimensionMismatch, "density operator must be square and nonempty");
    if (hermiticity_defect(matrix_) > tol.herm)
      throw Error(ErrorCode::NotHermitian, "density operator is not Hermitian");
    const double lo = min_eigenvalue(matrix_);
    if (lo < -tol.psd)
      throw Error(ErrorCode::NotPsd, "density operator eigenvalue " + std::to_string(lo));
    const double tr = matrix_.trace().real();
    if (std::abs(tr - 1.0) > tol.norm)
      throw Error(ErrorCode::NotComplete, "density operator trace " + std::to_string(tr));
  }

  explicit DensityOperator(const StateVector& pure) : matrix_(pure.projector()) {}

  Eigen::Index dim() const { return matrix_.rows(); }
  const ComplexMatrix& matrix() const { return matrix_; }

 private:
  ComplexMatrix matrix_;
};

class Povm {
 public:
  Povm() = default;

  std::size_t outcomes() const { return elements_.size(); }
  Eigen::Index dim() const { return elements_.empty() ? 0 : elements_.front().rows(); }
  const ComplexMatrix& element(std::size_t b) const { return elements_.at(b); }
  const std::vector<ComplexMatrix>& elements() const { return elements_; }
  bool is_projective() const { return projective_; }

 private:
  friend Povm validate_povm(std::vector<ComplexMatrix> elements, const Tolerances& tol);
  std::vector<ComplexMatrix> elements_;
  bool projective_ = false;
};

// Checks positivity and completeness and computes the projective flag.
inline Povm validate_povm(std::vector<ComplexMatrix> elements,
                          const Tolerances& tol = default_tolerances()) {
  if (elements.empty()) throw Error(ErrorCode::DimensionMismatch, "POVM has no elements");
  const Eigen::Index dim = elements.front().rows();
  ComplexMatrix sum = ComplexMatrix::Zero(dim, dim);
  bool projective = true;
  for (std::size_t b = 0; b < elements.size(); ++b) {
    const ComplexMatrix& e = elements[b];
    if (e.rows() != dim || e.cols() != dim)
      throw Error(ErrorCode::DimensionMismatch, "POVM element " + std::to_string(b) + " has wrong shape");
    if (hermiticity_defect(e) > tol.herm)
      throw Error(ErrorCode::NotPsd, "POVM element " + std::to_string(b) + " is not Hermitian");
    const double lo = min_eigenvalue(e);
    if (lo < -tol.psd)
      throw Error(ErrorCode::NotPsd,
                  "POVM element " + std::to_string(b) + " has eigenvalue " + std::to_string(lo));
    if (max_abs(e * e - e) > tol.herm) projective = false;
    sum += e;
  }
  const double defect = max_abs(sum - identity(dim));
  if (defect > tol.norm)
    throw Error(ErrorCode::NotComplete, "POVM elements sum to identity only within " + std::to_string(defect));
  Povm out;
  out.elements_ = std::move(elements);
  out.projective_ = projective;
  return out;
}

// Rank-1 projective measurement from the columns of an orthonormal basis.
inline Povm basis_measurement(const ComplexMatrix& basis, const Tolerances& tol = default_tolerances()) {
  std::vector<ComplexMatrix> elems;
  elems.reserve(basis.cols());
  for (Eigen::Index k = 0; k < basis.cols(); ++k) elems.push_back(projector(basis.col(k)));
  return validate_povm(std::move(elems), tol);
}

inline double born_probability(const ComplexMatrix& effect, const ComplexMatrix& rho) {
  return (effect * rho).trace().real();
}

// Purification on system (x) ancilla with ancilla dimension rank(rho).
// Components are ordered by descending eigenvalue.
inline StateVector purify(const DensityOperator& rho, const Tolerances& tol = default_tolerances()) {
  const auto eig = hermitian_eigen(rho.matrix());
  const Eigen::Index n = rho.dim();
  std::vector<Eigen::Index> support;
  for (Eigen::Index k = n; k-- > 0;)
    if (eig.eigenvalues()(k) > tol.psd) support.push_back(k);
  const auto rank = static_cast<Eigen::Index>(support.size());
  ComplexVector out = ComplexVector::Zero(n * rank);
  for (Eigen::Index a = 0; a < rank; ++a) {
    const Eigen::Index k = support[a];
    const double weight = std::sqrt(eig.eigenvalues()(k));
    for (Eigen::Index i = 0; i < n; ++i) out(i * rank + a) = weight * eig.eigenvectors()(i, k);
  }
  return StateVector::normalized(out);
}

}  // namespace seqrand
