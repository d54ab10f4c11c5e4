#pragma once

// Seeded random quantum objects for property batteries.

#include <cstdint>
#include <random>
#include <vector>

#include "seqrand/qcore.hpp"

namespace seqrand {

using Rng = std::mt19937_64;

inline ComplexMatrix random_ginibre(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ComplexMatrix g(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) {
      const double re = normal(rng);
      const double im = normal(rng);
      g(i, j) = Complex(re, im);
    }
  return g;
}

// Haar-distributed unitary (QR of a Ginibre matrix with the phase fix).
inline ComplexMatrix random_unitary(Eigen::Index dim, Rng& rng) {
  const ComplexMatrix g = random_ginibre(dim, dim, rng);
  Eigen::HouseholderQR<ComplexMatrix> qr(g);
  ComplexMatrix q = qr.householderQ();
  const ComplexMatrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index k = 0; k < dim; ++k) {
    const Complex diag = r(k, k);
    const double mag = std::abs(diag);
    if (mag > 0.0) q.col(k) *= diag / mag;
  }
  return q;
}

inline StateVector random_pure_state(Eigen::Index dim, Rng& rng) {
  return StateVector::normalized(random_ginibre(dim, 1, rng).col(0));
}

// Full-rank mixed state from the Hilbert-Schmidt measure.
inline DensityOperator random_density(Eigen::Index dim, Rng& rng) {
  const ComplexMatrix g = random_ginibre(dim, dim, rng);
  ComplexMatrix rho = g * g.adjoint();
  rho /= rho.trace().real();
  rho = 0.5 * (rho + rho.adjoint());
  return DensityOperator(rho);
}

// Uniform point on the probability simplex.
inline std::vector<double> random_probabilities(std::size_t n, Rng& rng) {
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> w(n);
  double total = 0.0;
  for (auto& x : w) {
    x = expo(rng);
    total += x;
  }
  for (auto& x : w) x /= total;
  return w;
}

// Rank-1 projective measurement in a Haar-random basis.
inline Povm random_basis_pvm(Eigen::Index dim, Rng& rng) {
  return basis_measurement(random_unitary(dim, rng));
}

}  // namespace seqrand
