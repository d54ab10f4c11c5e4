#pragma once

// Eve's guessing probability for sequential measurements: classical side
// information (ensembles and measurement decompositions), the constructive
// quantum strategies that match it, and the CGLMP attack.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "seqrand/cglmp.hpp"
#include "seqrand/distribution.hpp"
#include "seqrand/error.hpp"
#include "seqrand/parallel.hpp"
#include "seqrand/qcore.hpp"
#include "seqrand/random.hpp"
#include "seqrand/seqsim.hpp"

namespace seqrand {

inline double min_entropy(double g) {
  if (!(g > 0.0 && g <= 1.0 + 1e-12))
    throw Error(ErrorCode::OutOfRange, "guessing probability " + std::to_string(g) + " not in (0,1]");
  return -std::log2(std::min(g, 1.0));
}

struct GuessReport {
  double guess = 0.0;
  double min_entropy = 0.0;
  std::string strategy;
};

inline GuessReport make_report(double g, std::string strategy) {
  return {g, min_entropy(g), std::move(strategy)};
}

//------------------------------------------------------------------------------
// Ensembles
//------------------------------------------------------------------------------

struct EnsembleDecomposition {
  std::vector<double> weights;
  std::vector<StateVector> states;

  std::size_t size() const { return weights.size(); }
  Eigen::Index dim() const { return states.front().dim(); }

  ComplexMatrix average() const {
    ComplexMatrix rho = ComplexMatrix::Zero(dim(), dim());
    for (std::size_t k = 0; k < size(); ++k) rho += weights[k] * states[k].projector();
    return rho;
  }

  void validate(const Tolerances& tol = default_tolerances()) const {
    if (weights.empty() || weights.size() != states.size())
      throw Error(ErrorCode::DimensionMismatch, "ensemble weights and states differ in count");
    double total = 0.0;
    for (std::size_t k = 0; k < size(); ++k) {
      if (!(weights[k] >= 0.0)) throw Error(ErrorCode::NotAValidMixture, "negative ensemble weight");
      if (states[k].dim() != dim()) throw Error(ErrorCode::DimensionMismatch, "ensemble states differ in size");
      total += weights[k];
    }
    if (std::abs(total - 1.0) > tol.norm) throw Error(ErrorCode::NotAValidMixture, "ensemble weights do not sum to 1");
  }

  // Checks that the ensemble averages to `rho`.
  void validate(const DensityOperator& rho, const Tolerances& tol = default_tolerances()) const {
    validate(tol);
    if (rho.dim() != dim() || max_abs(average() - rho.matrix()) > tol.num)
      throw Error(ErrorCode::NotAValidMixture, "ensemble does not average to the given state");
  }
};

inline EnsembleDecomposition pure_ensemble(const StateVector& psi) { return {{1.0}, {psi}}; }

// Spectral decomposition, dropping eigenvalues below tol.psd.
inline EnsembleDecomposition eigen_ensemble(const DensityOperator& rho, const Tolerances& tol = default_tolerances()) {
  const auto eig = hermitian_eigen(rho.matrix());
  EnsembleDecomposition out;
  for (Eigen::Index k = rho.dim(); k-- > 0;) {
    const double w = eig.eigenvalues()(k);
    if (w <= tol.psd) continue;
    out.weights.push_back(w);
    out.states.push_back(StateVector::normalized(eig.eigenvectors().col(k)));
  }
  double total = 0.0;
  for (double w : out.weights) total += w;
  for (double& w : out.weights) w /= total;
  return out;
}

// Lifts a measurement on one factor to left (x) M (x) right.
inline Povm embed_povm(const Povm& m, Eigen::Index left, Eigen::Index right) {
  std::vector<ComplexMatrix> elems;
  for (const auto& e : m.elements()) elems.push_back(kron(kron(identity(left), e), identity(right)));
  return validate_povm(std::move(elems));
}

//------------------------------------------------------------------------------
// Classical side information
//------------------------------------------------------------------------------

namespace detail {

// p(b_1..b_n) for a pure state under a chain of projective measurements,
// row-major over outcome tuples.
inline std::vector<double> chain_probabilities(const ComplexVector& phi, const std::vector<const Povm*>& chain) {
  std::vector<double> out;
  auto descend = [&](auto&& self, std::size_t round, const ComplexVector& v) -> void {
    if (round == chain.size()) {
      out.push_back(v.squaredNorm());
      return;
    }
    for (const auto& p : chain[round]->elements()) self(self, round + 1, (p * v).eval());
  };
  descend(descend, 0, phi);
  return out;
}

// Lexicographically smallest index attaining the maximum.
inline std::size_t first_argmax(const std::vector<double>& v, double tol = 1e-12) {
  double best = v.front();
  for (double x : v) best = std::max(best, x);
  for (std::size_t k = 0; k < v.size(); ++k)
    if (v[k] >= best - tol) return k;
  return 0;
}

inline std::vector<std::size_t> unflatten(std::size_t t, const std::vector<std::size_t>& shape) {
  std::vector<std::size_t> digits(shape.size());
  for (std::size_t k = shape.size(); k-- > 0;) {
    digits[k] = t % shape[k];
    t /= shape[k];
  }
  return digits;
}

inline void check_rounds(const EnsembleDecomposition& ens, const std::vector<PvmMixture>& rounds) {
  ens.validate();
  if (rounds.empty()) throw Error(ErrorCode::DimensionMismatch, "no measurement rounds");
  for (const auto& r : rounds)
    if (r.dim() != ens.dim()) throw Error(ErrorCode::DimensionMismatch, "round does not act on the system");
}

// Branch-tuple weights: the supplied joint table or the product of the
// per-round weights.
inline std::vector<double> branch_weights(const std::vector<PvmMixture>& rounds,
                                          const std::optional<std::vector<double>>& joint) {
  std::vector<std::size_t> shape;
  std::size_t total = 1;
  for (const auto& r : rounds) {
    shape.push_back(r.size());
    total *= r.size();
  }
  if (joint) {
    if (joint->size() != total) throw Error(ErrorCode::DimensionMismatch, "joint weight table has the wrong size");
    double sum = 0.0;
    for (double w : *joint) {
      if (!(w >= 0.0)) throw Error(ErrorCode::NotAValidMixture, "negative joint weight");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorCode::NotAValidMixture, "joint weights do not sum to 1");
    return *joint;
  }
  std::vector<double> out(total, 1.0);
  for (std::size_t t = 0; t < total; ++t) {
    const auto js = unflatten(t, shape);
    for (std::size_t i = 0; i < rounds.size(); ++i) out[t] *= rounds[i].branch(js[i]).weight;
  }
  return out;
}

inline std::vector<const Povm*> branch_chain(const std::vector<PvmMixture>& rounds, const std::vector<std::size_t>& js) {
  std::vector<const Povm*> chain;
  for (std::size_t i = 0; i < rounds.size(); ++i) chain.push_back(&rounds[i].branch(js[i]).pvm);
  return chain;
}

inline std::vector<std::size_t> branch_shape(const std::vector<PvmMixture>& rounds) {
  std::vector<std::size_t> shape;
  for (const auto& r : rounds) shape.push_back(r.size());
  return shape;
}

}  // namespace detail

// sum over (lambda, branch tuple) of weight * max_b p(b | phi_lambda, branches).
// Branch weights across rounds multiply unless a joint table (row-major over
// branch tuples) is given.
inline GuessReport classical_guess(const EnsembleDecomposition& ens, const std::vector<PvmMixture>& rounds,
                                   const std::optional<std::vector<double>>& joint = std::nullopt) {
  detail::check_rounds(ens, rounds);
  const auto weights = detail::branch_weights(rounds, joint);
  const auto shape = detail::branch_shape(rounds);
  double g = 0.0;
  for (std::size_t l = 0; l < ens.size(); ++l)
    for (std::size_t t = 0; t < weights.size(); ++t) {
      if (weights[t] == 0.0) continue;
      const auto probs =
          detail::chain_probabilities(ens.states[l].amplitudes(), detail::branch_chain(rounds, detail::unflatten(t, shape)));
      g += ens.weights[l] * weights[t] * *std::max_element(probs.begin(), probs.end());
    }
  return make_report(g, "classical");
}

inline GuessReport classical_guess(const EnsembleDecomposition& ens, const std::vector<Povm>& pvms) {
  std::vector<PvmMixture> rounds;
  for (const auto& p : pvms) rounds.push_back(sharp_mixture(p));
  return classical_guess(ens, rounds);
}

//------------------------------------------------------------------------------
// Quantum side information: projective chains
//------------------------------------------------------------------------------

// Eve holds the purification sum_l sqrt(p_l) |phi_l>|e_l> and projects onto
// the e_l whose state makes b the (lexicographically first) likeliest outcome.
struct EveStrategy {
  ComplexVector joint_state;          // on S (x) E
  std::vector<std::size_t> dims;      // {S, E}
  std::vector<ComplexMatrix> eve;     // one projector per outcome tuple
  std::vector<std::vector<std::size_t>> index_sets;
};

// Objective sum_b || (I (x) E_b) K_b |Psi> ||^2 where K_b is the measurement
// chain acting on the listed factors.
struct ChainRound {
  std::vector<ComplexMatrix> ops;  // one per outcome
  std::vector<std::size_t> targets;
};

inline double chain_guess_value(const ComplexVector& psi, const std::vector<std::size_t>& dims,
                                const std::vector<ChainRound>& rounds, std::size_t eve_factor,
                                const std::vector<ComplexMatrix>& eve) {
  double value = 0.0;
  std::size_t tuple = 0;
  const std::size_t ef[] = {eve_factor};
  auto descend = [&](auto&& self, std::size_t round, const ComplexVector& v) -> void {
    if (round == rounds.size()) {
      value += apply_local(eve.at(tuple), v, dims, ef).squaredNorm();
      ++tuple;
      return;
    }
    for (const auto& op : rounds[round].ops) self(self, round + 1, apply_local(op, v, dims, rounds[round].targets));
  };
  descend(descend, 0, psi);
  return value;
}

namespace detail {

inline void check_eve(const std::vector<ComplexMatrix>& eve, double tol) {
  if (eve.empty()) throw Error(ErrorCode::ConstraintViolated, "Eve measurement is empty");
  const Eigen::Index d = eve.front().rows();
  ComplexMatrix sum = ComplexMatrix::Zero(d, d);
  for (const auto& e : eve) {
    const double r = max_abs(e * e - e) + hermiticity_defect(e);
    if (r > tol) throw Error(ErrorCode::ConstraintViolated, "Eve element not a projector, residual " + std::to_string(r));
    sum += e;
  }
  const double r = max_abs(sum - identity(d));
  if (r > tol) throw Error(ErrorCode::ConstraintViolated, "Eve measurement incomplete, residual " + std::to_string(r));
}

}  // namespace detail

inline std::pair<EveStrategy, GuessReport> eve_optimal_pvm(const EnsembleDecomposition& ens,
                                                          const std::vector<Povm>& pvms) {
  ens.validate();
  for (const auto& p : pvms) {
    if (!p.is_projective()) throw Error(ErrorCode::NotProjective, "chain contains a non-projective measurement");
    if (p.dim() != ens.dim()) throw Error(ErrorCode::DimensionMismatch, "measurement does not act on the system");
  }
  const auto ds = static_cast<std::size_t>(ens.dim());
  const std::size_t de = ens.size();
  EveStrategy eve;
  eve.dims = {ds, de};
  eve.joint_state = ComplexVector::Zero(static_cast<Eigen::Index>(ds * de));
  for (std::size_t l = 0; l < de; ++l)
    for (std::size_t s = 0; s < ds; ++s)
      eve.joint_state(static_cast<Eigen::Index>(s * de + l)) = std::sqrt(ens.weights[l]) * ens.states[l].amplitudes()(s);

  std::vector<const Povm*> chain;
  std::size_t tuples = 1;
  for (const auto& p : pvms) {
    chain.push_back(&p);
    tuples *= p.outcomes();
  }
  eve.index_sets.assign(tuples, {});
  for (std::size_t l = 0; l < de; ++l)
    eve.index_sets[detail::first_argmax(detail::chain_probabilities(ens.states[l].amplitudes(), chain))].push_back(l);
  for (const auto& set : eve.index_sets) {
    ComplexMatrix e = ComplexMatrix::Zero(static_cast<Eigen::Index>(de), static_cast<Eigen::Index>(de));
    for (std::size_t l : set) e(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(l)) = 1.0;
    eve.eve.push_back(e);
  }

  std::vector<ChainRound> rounds;
  for (const auto& p : pvms) rounds.push_back({p.elements(), {0}});
  const double g = chain_guess_value(eve.joint_state, eve.dims, rounds, 1, eve.eve);
  return {eve, make_report(g, "quantum-projective")};
}

//------------------------------------------------------------------------------
// Naimark dilation of a projective mixture
//------------------------------------------------------------------------------

// Ancilla A = A' (x) A'' with dim A' = outcomes, dim A'' = branches, prepared
// in |0><0| (x) sum_j w_j |j><j|. U acts on S (x) A' (x) A'' and is block
// diagonal in j with U|s,0,j> = sum_b P^{b,j}|s> (x) |b> (x) |j>.
struct NaimarkExtension {
  Eigen::Index system_dim = 0;
  Eigen::Index outcomes = 0;
  Eigen::Index branches = 0;
  std::vector<double> weights;
  ComplexMatrix unitary;
  std::vector<ComplexMatrix> projectors;  // U^dag (I (x) |b><b| (x) I) U
  ComplexMatrix sigma;                    // ancilla state on A' (x) A''

  Eigen::Index ancilla_dim() const { return outcomes * branches; }

  // U followed by the register projection onto |b>; the Kraus form used when
  // chaining rounds.
  ComplexMatrix register_op(Eigen::Index b) const {
    ComplexMatrix reg = ComplexMatrix::Zero(outcomes, outcomes);
    reg(b, b) = 1.0;
    return kron(kron(identity(system_dim), reg), identity(branches)) * unitary;
  }

  // max_b |tr_A[Pi^b (I (x) sigma)] - M^b|
  double recovery_residual(const Povm& target) const {
    double worst = 0.0;
    const std::size_t dims[] = {static_cast<std::size_t>(system_dim), static_cast<std::size_t>(ancilla_dim())};
    const std::size_t keep[] = {0};
    const ComplexMatrix lifted_sigma = kron(identity(system_dim), sigma);
    for (std::size_t b = 0; b < projectors.size(); ++b) {
      const ComplexMatrix reduced = partial_trace(projectors[b] * lifted_sigma, dims, keep);
      worst = std::max(worst, max_abs(reduced - target.element(b)));
    }
    return worst;
  }

  double projectivity_residual() const {
    double worst = 0.0;
    ComplexMatrix sum = ComplexMatrix::Zero(unitary.rows(), unitary.cols());
    for (const auto& p : projectors) {
      worst = std::max(worst, max_abs(p * p - p) + hermiticity_defect(p));
      sum += p;
    }
    return std::max(worst, max_abs(sum - identity(unitary.rows())));
  }
};

inline NaimarkExtension naimark_dilation(const PvmMixture& mix, const Tolerances& tol = default_tolerances()) {
  PvmMixture checked(mix.branches(), tol);  // revalidates
  NaimarkExtension ext;
  ext.system_dim = mix.dim();
  ext.outcomes = static_cast<Eigen::Index>(mix.outcomes());
  ext.branches = static_cast<Eigen::Index>(mix.size());
  const Eigen::Index d = ext.system_dim, k = ext.outcomes, nb = ext.branches;
  const Eigen::Index block = d * k;
  ext.unitary = ComplexMatrix::Zero(block * nb, block * nb);

  for (Eigen::Index j = 0; j < nb; ++j) {
    const auto& br = mix.branch(static_cast<std::size_t>(j));
    ext.weights.push_back(br.weight);
    // Isometry S -> S (x) A'.
    ComplexMatrix v = ComplexMatrix::Zero(block, d);
    for (Eigen::Index b = 0; b < k; ++b) {
      const ComplexMatrix& p = br.pvm.element(static_cast<std::size_t>(b));
      for (Eigen::Index s = 0; s < d; ++s)
        for (Eigen::Index r = 0; r < d; ++r) v(r * k + b, s) = p(r, s);
    }
    // Orthonormal complement of range(v) fills the columns with A' != 0.
    Eigen::HouseholderQR<ComplexMatrix> qr(v);
    const ComplexMatrix q = qr.householderQ();
    ComplexMatrix uj(block, block);
    Eigen::Index next = d;
    for (Eigen::Index s = 0; s < d; ++s)
      for (Eigen::Index a = 0; a < k; ++a) uj.col(s * k + a) = a == 0 ? ComplexVector(v.col(s)) : ComplexVector(q.col(next++));
    for (Eigen::Index r = 0; r < block; ++r)
      for (Eigen::Index c = 0; c < block; ++c) ext.unitary(r * nb + j, c * nb + j) = uj(r, c);
  }
  if (max_abs(ext.unitary.adjoint() * ext.unitary - identity(block * nb)) > tol.num)
    throw Error(ErrorCode::NumericalTrouble, "dilation failed to produce a unitary");

  for (Eigen::Index b = 0; b < k; ++b) {
    ComplexMatrix reg = ComplexMatrix::Zero(k, k);
    reg(b, b) = 1.0;
    const ComplexMatrix mid = kron(kron(identity(d), reg), identity(nb));
    ext.projectors.push_back(ext.unitary.adjoint() * mid * ext.unitary);
  }
  ComplexMatrix zero = ComplexMatrix::Zero(k, k);
  zero(0, 0) = 1.0;
  ComplexMatrix mix_state = ComplexMatrix::Zero(nb, nb);
  for (Eigen::Index j = 0; j < nb; ++j) mix_state(j, j) = ext.weights[static_cast<std::size_t>(j)];
  ext.sigma = kron(zero, mix_state);
  return ext;
}

// The full dilated scenario: factors S, then (A'_i, A''_i) per round, then
// Eve. Eve holds |lambda, j_1..j_n> purifying the ensemble index and the
// (possibly correlated) branch registers, and measures with the index sets
// built from the lexicographically first likeliest outcome tuple.
struct DilatedChain {
  std::vector<std::size_t> dims;
  ComplexVector state;
  std::vector<NaimarkExtension> extensions;
  std::vector<Povm> targets;  // the POVM each round realizes
  std::vector<ComplexMatrix> eve;
  std::size_t eve_factor = 0;

  std::vector<ChainRound> rounds() const {
    std::vector<ChainRound> out;
    for (std::size_t i = 0; i < extensions.size(); ++i) {
      ChainRound r;
      r.targets = {0, 2 * i + 1, 2 * i + 2};
      for (Eigen::Index b = 0; b < extensions[i].outcomes; ++b) r.ops.push_back(extensions[i].register_op(b));
      out.push_back(std::move(r));
    }
    return out;
  }
};

inline DilatedChain dilated_chain(const EnsembleDecomposition& ens, const std::vector<PvmMixture>& rounds,
                                  const std::optional<std::vector<double>>& joint = std::nullopt) {
  detail::check_rounds(ens, rounds);
  const auto weights = detail::branch_weights(rounds, joint);
  const auto shape = detail::branch_shape(rounds);
  DilatedChain out;
  out.dims.push_back(static_cast<std::size_t>(ens.dim()));
  for (const auto& r : rounds) {
    out.extensions.push_back(naimark_dilation(r));
    out.targets.push_back(r.target());
    out.dims.push_back(r.outcomes());
    out.dims.push_back(r.size());
  }
  const std::size_t ne = ens.size() * weights.size();
  out.eve_factor = out.dims.size();
  out.dims.push_back(ne);

  out.state = ComplexVector::Zero(static_cast<Eigen::Index>(product(out.dims)));
  const auto strides = detail::strides_of(out.dims);
  std::size_t tuples = 1;
  for (const auto& r : rounds) tuples *= r.outcomes();
  std::vector<std::vector<std::size_t>> sets(tuples);
  for (std::size_t l = 0; l < ens.size(); ++l)
    for (std::size_t t = 0; t < weights.size(); ++t) {
      const std::size_t e = l * weights.size() + t;
      const auto js = detail::unflatten(t, shape);
      const double amp = std::sqrt(ens.weights[l] * weights[t]);
      if (amp > 0.0)
        for (std::size_t s = 0; s < out.dims[0]; ++s) {
          std::size_t idx = s * strides[0] + e * strides[out.eve_factor];
          for (std::size_t i = 0; i < rounds.size(); ++i) idx += js[i] * strides[2 * i + 2];
          out.state(static_cast<Eigen::Index>(idx)) = amp * ens.states[l].amplitudes()(static_cast<Eigen::Index>(s));
        }
      const auto probs = detail::chain_probabilities(ens.states[l].amplitudes(), detail::branch_chain(rounds, js));
      sets[detail::first_argmax(probs)].push_back(e);
    }
  for (const auto& set : sets) {
    ComplexMatrix e = ComplexMatrix::Zero(static_cast<Eigen::Index>(ne), static_cast<Eigen::Index>(ne));
    for (std::size_t k : set) e(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) = 1.0;
    out.eve.push_back(e);
  }
  return out;
}

// Evaluates sum_b <Psi| K_b^dag (I (x) E_b) K_b |Psi> for a fixed Eve
// measurement after checking projectivity of every extension, recovery of the
// target POVMs, and that Eve's measurement is a complete projective one.
// A lower bound on the optimum over Eve strategies, not an optimization.
inline GuessReport quantum_guess_eval(const DilatedChain& chain, const Tolerances& tol = default_tolerances()) {
  for (std::size_t i = 0; i < chain.extensions.size(); ++i) {
    const double pr = chain.extensions[i].projectivity_residual();
    if (pr > tol.num)
      throw Error(ErrorCode::ConstraintViolated,
                  "round " + std::to_string(i) + " extension not projective, residual " + std::to_string(pr));
    const double rr = chain.extensions[i].recovery_residual(chain.targets[i]);
    if (rr > tol.num)
      throw Error(ErrorCode::ConstraintViolated,
                  "round " + std::to_string(i) + " does not recover its POVM, residual " + std::to_string(rr));
  }
  detail::check_eve(chain.eve, tol.num);
  if (std::abs(chain.state.squaredNorm() - 1.0) > tol.norm)
    throw Error(ErrorCode::ConstraintViolated, "joint state is not normalized");
  const double g = chain_guess_value(chain.state, chain.dims, chain.rounds(), chain.eve_factor, chain.eve);
  return make_report(g, "quantum-dilated");
}

//------------------------------------------------------------------------------
// CGLMP attack on the one-Alice / two-Bob chain
//------------------------------------------------------------------------------

enum class GuessScope { Local, Global };

inline std::string to_string(GuessScope s) { return s == GuessScope::Local ? "local" : "global"; }

struct TargetSetting {
  std::size_t x = 0;
  std::size_t y1 = 0;
  std::size_t y2 = 1;
};

// Per-branch table p_j(a, b1, b2) = tr[(I (x) P_j^{b1}) rho (I (x) P_j^{b1}) (A_x^a (x) B_{y2}^{b2})]
// with Bob 2 projective. Row-major over (a, b1, b2).
inline std::vector<double> branch_table(const StateVector& psi, const Povm& alice, const Povm& branch,
                                        const Povm& bob2) {
  std::vector<double> out;
  for (std::size_t a = 0; a < alice.outcomes(); ++a)
    for (std::size_t b1 = 0; b1 < branch.outcomes(); ++b1) {
      const ComplexVector v = kron(alice.element(a), branch.element(b1)) * psi.amplitudes();
      for (std::size_t b2 = 0; b2 < bob2.outcomes(); ++b2)
        out.push_back(v.dot(kron(identity(alice.dim()), bob2.element(b2)) * v).real());
    }
  return out;
}

// Collapses a (a, b1, b2) table to (b1, b2) by summing over a.
inline std::vector<double> local_table(const std::vector<double>& t, std::size_t da) {
  const std::size_t rest = t.size() / da;
  std::vector<double> out(rest, 0.0);
  for (std::size_t a = 0; a < da; ++a)
    for (std::size_t k = 0; k < rest; ++k) out[k] += t[a * rest + k];
  return out;
}

// G = sum_j w_j max p_j over (a, b1, b2) for the global scope or over (b1, b2)
// for the local one.
inline GuessReport guess_cglmp(cglmp::StateKind kind, const PvmMixture& bob1, TargetSetting s,
                               GuessScope scope = GuessScope::Local, const cglmp::Settings& cfg = {}) {
  const StateVector psi = cglmp::canonical_state(kind, cfg.d);
  const Povm alice = cglmp::measurement_basis(cglmp::Party::Alice, s.x, cfg);
  const Povm bob2 = cglmp::measurement_basis(cglmp::Party::Bob, s.y2, cfg);
  if (bob1.dim() != bob2.dim() || alice.dim() * bob1.dim() != psi.dim())
    throw Error(ErrorCode::DimensionMismatch, "decomposition does not fit the scenario");
  double g = 0.0;
  for (const auto& br : bob1.branches()) {
    auto t = branch_table(psi, alice, br.pvm, bob2);
    if (scope == GuessScope::Local) t = local_table(t, alice.outcomes());
    g += br.weight * *std::max_element(t.begin(), t.end());
  }
  return make_report(g, "decomposition-" + to_string(scope));
}

// Convenience: the default decomposition of Bob 1's unsharp measurement.
inline GuessReport guess_cglmp(const CglmpChainConfig& chain, TargetSetting s, GuessScope scope = GuessScope::Local) {
  return guess_cglmp(chain.state, first_round_decomposition(chain, s.y1), s, scope, chain.settings);
}

// Observed p(a, b1, b2 | x, y1, y2) as a row-major (a, b1, b2) table.
inline std::vector<double> observed_table(const JointDistribution& dist, TargetSetting s) {
  std::vector<double> out;
  for (std::size_t a = 0; a < dist.outcomes(0); ++a)
    for (std::size_t b1 = 0; b1 < dist.outcomes(1); ++b1)
      for (std::size_t b2 = 0; b2 < dist.outcomes(2); ++b2) out.push_back(dist.at({s.x, s.y1, s.y2}, {a, b1, b2}));
  return out;
}

//------------------------------------------------------------------------------
// Seeded random-instance batteries for the two constructive strategies
//------------------------------------------------------------------------------

struct BatteryResult {
  std::size_t instances = 0;
  double max_difference = 0.0;  // max |G_Q - G_C|
  double max_recovery = 0.0;    // dilation batteries only
  double min_guess = 1.0;
  double max_guess = 0.0;
};

namespace detail {

// Instance i draws from its own stream so results do not depend on the
// worker count.
inline Rng instance_rng(std::uint64_t seed, std::size_t i) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(i), 0x5eedu};
  return Rng(seq);
}

inline BatteryResult merge(const std::vector<std::array<double, 3>>& rows) {
  BatteryResult out;
  out.instances = rows.size();
  for (const auto& r : rows) {
    out.max_difference = std::max(out.max_difference, r[0]);
    out.max_recovery = std::max(out.max_recovery, r[1]);
    out.min_guess = std::min(out.min_guess, r[2]);
    out.max_guess = std::max(out.max_guess, r[2]);
  }
  return out;
}

}  // namespace detail

// Random mixed qutrit state split into its eigen-ensemble, measured by a
// chain of `rounds` Haar-random basis PVMs. Compares the constructed Eve
// against the classical value.
inline BatteryResult projective_battery(std::uint64_t seed, std::size_t instances, std::size_t rounds = 2,
                                        Eigen::Index dim = 3) {
  auto rows = parallel_map<std::array<double, 3>>(instances, [&](std::size_t i) {
    Rng rng = detail::instance_rng(seed, i);
    const DensityOperator rho = random_density(dim, rng);
    const EnsembleDecomposition ens = eigen_ensemble(rho);
    std::vector<Povm> chain;
    for (std::size_t r = 0; r < rounds; ++r) chain.push_back(random_basis_pvm(dim, rng));
    const double gc = classical_guess(ens, chain).guess;
    const double gq = eve_optimal_pvm(ens, chain).second.guess;
    return std::array<double, 3>{std::abs(gq - gc), 0.0, gc};
  });
  return detail::merge(rows);
}

// Random pure qutrit state measured by `rounds` random mixtures of 1 to
// `max_branches` Haar-random basis PVMs. Compares the Naimark construction
// against the classical value and records the worst POVM recovery residual.
inline BatteryResult dilation_battery(std::uint64_t seed, std::size_t instances, std::size_t rounds = 2,
                                      std::size_t max_branches = 4, Eigen::Index dim = 3) {
  auto rows = parallel_map<std::array<double, 3>>(instances, [&](std::size_t i) {
    Rng rng = detail::instance_rng(seed, i);
    const StateVector psi = random_pure_state(dim, rng);
    std::uniform_int_distribution<std::size_t> count(1, max_branches);
    std::vector<PvmMixture> mixes;
    for (std::size_t r = 0; r < rounds; ++r) {
      const auto w = random_probabilities(count(rng), rng);
      std::vector<MixtureBranch> branches;
      for (double x : w) branches.push_back({x, random_basis_pvm(dim, rng)});
      mixes.emplace_back(std::move(branches));
    }
    const auto ens = pure_ensemble(psi);
    const double gc = classical_guess(ens, mixes).guess;
    const DilatedChain chain = dilated_chain(ens, mixes);
    double recovery = 0.0;
    for (std::size_t r = 0; r < rounds; ++r)
      recovery = std::max(recovery, chain.extensions[r].recovery_residual(mixes[r].target()));
    const double gq = quantum_guess_eval(chain).guess;
    return std::array<double, 3>{std::abs(gq - gc), recovery, gc};
  });
  return detail::merge(rows);
}

}  // namespace seqrand
