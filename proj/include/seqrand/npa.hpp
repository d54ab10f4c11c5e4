#pragma once

// Sequential NPA relaxation at level 1+AB for one Alice, two Bob rounds on
// the same particle and a commuting Eve with one d^2-outcome measurement that
// guesses both Bob outcomes.
//
// Operators are projectors. Letters of different parties commute except the
// Bob rounds, which keep their time order. A moment is <psi| w |psi> for a
// canonical word w.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "seqrand/distribution.hpp"
#include "seqrand/error.hpp"
#include "seqrand/guessing.hpp"
#include "seqrand/qcore.hpp"
#include "seqrand/sdp.hpp"
#include "seqrand/seqsim.hpp"

namespace seqrand::npa {

enum Party : std::uint8_t { Alice = 0, Bob1 = 1, Bob2 = 2, Eve = 3 };

struct Letter {
  std::uint8_t party = Alice;
  std::uint8_t setting = 0;
  std::uint8_t outcome = 0;

  auto operator<=>(const Letter&) const = default;
};

using Word = std::vector<Letter>;

inline int block_of(std::uint8_t party) { return party == Alice ? 0 : party == Eve ? 2 : 1; }

inline std::string to_string(const Letter& l) {
  static const char* names[] = {"A", "B1", "B2", "E"};
  return std::string(names[l.party]) + "_" + std::to_string(l.outcome) + "|" + std::to_string(l.setting);
}

inline std::string to_string(const Word& w) {
  if (w.empty()) return "1";
  std::string s;
  for (const auto& l : w) s += (s.empty() ? "" : " ") + to_string(l);
  return s;
}

// Sorts letters into Alice < Bob rounds < Eve (stable, so the Bob block keeps
// its order), merges adjacent repeats and returns nullopt when adjacent
// letters of one measurement have different outcomes. Repeats until nothing
// changes.
inline std::optional<Word> canonicalize(Word w) {
  for (;;) {
    std::stable_sort(w.begin(), w.end(), [](const Letter& a, const Letter& b) { return block_of(a.party) < block_of(b.party); });
    Word out;
    bool changed = false;
    for (const auto& l : w) {
      if (!out.empty() && out.back().party == l.party && out.back().setting == l.setting) {
        if (out.back().outcome != l.outcome) return std::nullopt;
        changed = true;
        continue;
      }
      out.push_back(l);
    }
    if (!changed) return out;
    w = std::move(out);
  }
}

inline Word reversed(const Word& w) { return Word(w.rbegin(), w.rend()); }

// Canonical form of the adjoint.
inline std::optional<Word> adjoint(const Word& w) { return canonicalize(reversed(w)); }

inline Word concat(const Word& a, const Word& b) {
  Word out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

//------------------------------------------------------------------------------
// Problem shape and word profiles
//------------------------------------------------------------------------------

struct Shape {
  std::size_t settings[3] = {2, 2, 2};  // Alice, Bob1, Bob2
  std::size_t outcomes[3] = {3, 3, 3};
  std::size_t eve_outcomes() const { return outcomes[1] * outcomes[2]; }
  std::size_t outcome_count(std::uint8_t party) const { return party == Eve ? eve_outcomes() : outcomes[party]; }
  std::size_t setting_count(std::uint8_t party) const { return party == Eve ? 1 : settings[party]; }
};

inline Shape shape_of(const JointDistribution& p) {
  if (p.parties() != 3) throw Error(ErrorCode::ShapeMismatch, "expected a distribution over Alice and two Bob rounds");
  Shape s;
  for (std::size_t k = 0; k < 3; ++k) {
    s.settings[k] = p.settings(k);
    s.outcomes[k] = p.outcomes(k);
    if (s.outcomes[k] < 2 || s.outcomes[k] > 255 || s.settings[k] > 255)
      throw Error(ErrorCode::ShapeMismatch, "unsupported measurement shape");
  }
  return s;
}

enum class WordProfile { Default, Extended };

inline std::string to_string(WordProfile p) { return p == WordProfile::Default ? "default" : "extended"; }

inline std::vector<Letter> letters_of(const Shape& s, std::uint8_t party) {
  std::vector<Letter> out;
  for (std::size_t x = 0; x < s.setting_count(party); ++x)
    for (std::size_t a = 0; a < s.outcome_count(party); ++a)
      out.push_back({party, static_cast<std::uint8_t>(x), static_cast<std::uint8_t>(a)});
  return out;
}

// {1} u A u B1 u B2 u E u A.B1 u B2.B1 u B1.E, plus B1.B2 and A.B2 for the
// extended profile. Words act on the state from the right, so B2.B1 means
// B1 first.
inline std::vector<Word> word_list(const Shape& s, WordProfile profile) {
  const auto a = letters_of(s, Alice), b1 = letters_of(s, Bob1), b2 = letters_of(s, Bob2), e = letters_of(s, Eve);
  std::vector<Word> w{{}};
  for (const auto* fam : {&a, &b1, &b2, &e})
    for (const auto& l : *fam) w.push_back({l});
  auto pairs = [&](const std::vector<Letter>& u, const std::vector<Letter>& v) {
    for (const auto& x : u)
      for (const auto& y : v) w.push_back({x, y});
  };
  pairs(a, b1);
  pairs(b2, b1);
  pairs(b1, e);
  if (profile == WordProfile::Extended) {
    pairs(b1, b2);
    pairs(a, b2);
  }
  return w;
}

//------------------------------------------------------------------------------
// Moment problem
//------------------------------------------------------------------------------

enum class RowKind { Normalization, Completeness, Data };

struct LinearRow {
  std::vector<std::pair<std::size_t, double>> terms;  // real variable, coefficient
  double rhs = 0.0;
  RowKind kind = RowKind::Completeness;
};

// Reference from a matrix entry to the real variables holding its value:
// entry = re + i * im_sign * im. var < 0 marks a structural zero.
struct EntryRef {
  long re = -1;
  long im = -1;
  double im_sign = 0.0;
};

struct TargetBobs {
  std::size_t y1 = 0;
  std::size_t y2 = 1;
};

struct BuildOptions {
  WordProfile profile = WordProfile::Default;
  bool complex_moments = false;
  bool include_data = true;
  // Eve outcome assigned to the guess (b1, b2); defaults to b1 * d2 + b2.
  std::vector<std::size_t> eve_labels;
};

class MomentProblem {
 public:
  Shape shape;
  BuildOptions options;
  std::vector<Word> words;
  std::vector<Word> moments;  // one canonical representative per moment
  std::size_t variables = 0;  // real unknowns (2 per moment in complex mode)
  std::vector<std::vector<EntryRef>> entries;
  std::vector<LinearRow> rows;
  std::vector<std::pair<std::size_t, double>> objective;

  std::size_t size() const { return words.size(); }

  std::size_t count(RowKind kind) const {
    return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [&](const LinearRow& r) { return r.kind == kind; }));
  }

  // Variable holding the real part of a word's moment, or nullopt if the word
  // is not indexed; a zero word maps to -1.
  std::optional<EntryRef> lookup(const Word& w) const {
    const auto c = canonicalize(w);
    if (!c) return EntryRef{};
    return find(*c);
  }

  // Rows whose words contain no last-outcome letter (Collins-Gisin rows).
  std::vector<std::size_t> reduced_rows() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < words.size(); ++i)
      if (last_letters(words[i]) == 0) out.push_back(i);
    return out;
  }

  std::size_t last_letters(const Word& w) const {
    std::size_t n = 0;
    for (const auto& l : w) n += l.outcome + 1u == shape.outcome_count(l.party);
    return n;
  }

  // The moment representative behind a real variable.
  const Word& moment_of(std::size_t var) const { return moments[options.complex_moments ? var / 2 : var]; }

  std::optional<EntryRef> find(const Word& canonical) const {
    auto it = index_.find(canonical);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::map<Word, EntryRef> index_;
};

namespace detail {

inline std::size_t eve_label(const MomentProblem& p, std::size_t b1, std::size_t b2) {
  const std::size_t natural = b1 * p.shape.outcomes[2] + b2;
  return p.options.eve_labels.empty() ? natural : p.options.eve_labels.at(natural);
}

// Registers the canonical word c (and its adjoint) and returns its reference.
inline EntryRef intern(MomentProblem& p, const Word& c) {
  if (auto hit = p.find(c)) return *hit;
  const Word adj = *adjoint(c);
  if (!p.options.complex_moments) {
    const Word& rep = std::min(c, adj);
    const EntryRef ref{static_cast<long>(p.moments.size()), -1, 0.0};
    p.moments.push_back(rep);
    p.variables = p.moments.size();
    p.index_[c] = ref;
    p.index_[adj] = ref;
    return ref;
  }
  const bool self = c == adj;
  const bool c_is_rep = c <= adj;
  const auto id = static_cast<long>(p.moments.size());
  p.moments.push_back(c_is_rep ? c : adj);
  p.variables = 2 * p.moments.size();
  const EntryRef rep{2 * id, self ? -1 : 2 * id + 1, self ? 0.0 : 1.0};
  const EntryRef other{2 * id, self ? -1 : 2 * id + 1, self ? 0.0 : -1.0};
  p.index_[c_is_rep ? c : adj] = rep;
  if (!self) p.index_[c_is_rep ? adj : c] = other;
  return p.index_.at(c);
}

inline void add_terms(std::map<std::size_t, double>& acc, const EntryRef& r, double coef, bool imaginary) {
  if (imaginary) {
    if (r.im >= 0) acc[static_cast<std::size_t>(r.im)] += coef * r.im_sign;
  } else if (r.re >= 0) {
    acc[static_cast<std::size_t>(r.re)] += coef;
  }
}

inline void push_row(MomentProblem& p, const std::map<std::size_t, double>& acc, double rhs, RowKind kind) {
  LinearRow row{{}, rhs, kind};
  for (const auto& [k, v] : acc)
    if (v != 0.0) row.terms.emplace_back(k, v);
  if (!row.terms.empty() || rhs != 0.0) p.rows.push_back(std::move(row));
}

}  // namespace detail

// Builds the moment matrix index, completeness rows (sum over the outcomes of
// one letter equals the word with the letter removed, wherever every term is
// indexed), the 216 data rows <A B1 B2 B1> = p_obs and the objective
// sum_{b1,b2} <B1_{b1|y1} B2_{b2|y2} B1_{b1|y1} E_{e(b1,b2)}>.
inline MomentProblem build_problem(const JointDistribution& p_obs, TargetBobs target, const BuildOptions& opt = {}) {
  MomentProblem p;
  p.shape = shape_of(p_obs);
  p.options = opt;
  if (target.y1 >= p.shape.settings[1] || target.y2 >= p.shape.settings[2])
    throw Error(ErrorCode::BadSetting, "target Bob setting out of range");
  if (!opt.eve_labels.empty()) {
    auto sorted = opt.eve_labels;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t k = 0; k < sorted.size(); ++k)
      if (sorted[k] != k || sorted.size() != p.shape.eve_outcomes())
        throw Error(ErrorCode::ShapeMismatch, "Eve labels must permute the guesses");
  }
  p.words = word_list(p.shape, opt.profile);
  const std::size_t n = p.words.size();
  p.entries.assign(n, std::vector<EntryRef>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const auto c = canonicalize(concat(reversed(p.words[i]), p.words[j]));
      if (c) p.entries[i][j] = detail::intern(p, *c);
    }

  // Normalization.
  {
    std::map<std::size_t, double> acc;
    detail::add_terms(acc, *p.find(Word{}), 1.0, false);
    detail::push_row(p, acc, 1.0, RowKind::Normalization);
  }
  // Completeness.
  const auto reps = p.moments;
  for (const auto& w : reps) {
    for (std::size_t pos = 0; pos < w.size(); ++pos) {
      const Letter l = w[pos];
      std::vector<EntryRef> terms;
      bool ok = true;
      for (std::size_t o = 0; o < p.shape.outcome_count(l.party) && ok; ++o) {
        Word v = w;
        v[pos].outcome = static_cast<std::uint8_t>(o);
        const auto r = p.lookup(v);
        if (!r) ok = false;
        else terms.push_back(*r);
      }
      Word removed = w;
      removed.erase(removed.begin() + static_cast<long>(pos));
      const auto rr = p.lookup(removed);
      if (!ok || !rr) continue;
      for (int part = 0; part < (opt.complex_moments ? 2 : 1); ++part) {
        std::map<std::size_t, double> acc;
        for (const auto& t : terms) detail::add_terms(acc, t, 1.0, part == 1);
        detail::add_terms(acc, *rr, -1.0, part == 1);
        detail::push_row(p, acc, 0.0, RowKind::Completeness);
      }
    }
  }

  // Observed statistics.
  if (opt.include_data) {
    const Shape& s = p.shape;
    for (std::size_t x = 0; x < s.settings[0]; ++x)
      for (std::size_t y1 = 0; y1 < s.settings[1]; ++y1)
        for (std::size_t y2 = 0; y2 < s.settings[2]; ++y2)
          for (std::size_t a = 0; a < s.outcomes[0]; ++a)
            for (std::size_t b1 = 0; b1 < s.outcomes[1]; ++b1)
              for (std::size_t b2 = 0; b2 < s.outcomes[2]; ++b2) {
                const Letter la{Alice, static_cast<std::uint8_t>(x), static_cast<std::uint8_t>(a)};
                const Letter lb1{Bob1, static_cast<std::uint8_t>(y1), static_cast<std::uint8_t>(b1)};
                const Letter lb2{Bob2, static_cast<std::uint8_t>(y2), static_cast<std::uint8_t>(b2)};
                const auto r = p.lookup({la, lb1, lb2, lb1});
                if (!r || r->re < 0) throw Error(ErrorCode::ProfileTooSmall, "data moment not indexed");
                std::map<std::size_t, double> acc;
                detail::add_terms(acc, *r, 1.0, false);
                LinearRow row{{}, p_obs.at({x, y1, y2}, {a, b1, b2}), RowKind::Data};
                for (const auto& [k, v] : acc) row.terms.emplace_back(k, v);
                p.rows.push_back(std::move(row));
              }
  }

  // Objective.
  std::map<std::size_t, double> obj;
  for (std::size_t b1 = 0; b1 < p.shape.outcomes[1]; ++b1)
    for (std::size_t b2 = 0; b2 < p.shape.outcomes[2]; ++b2) {
      const Letter lb1{Bob1, static_cast<std::uint8_t>(target.y1), static_cast<std::uint8_t>(b1)};
      const Letter lb2{Bob2, static_cast<std::uint8_t>(target.y2), static_cast<std::uint8_t>(b2)};
      const Letter le{Eve, 0, static_cast<std::uint8_t>(detail::eve_label(p, b1, b2))};
      const auto r = p.lookup({lb1, lb2, lb1, le});
      if (!r || r->re < 0) throw Error(ErrorCode::ProfileTooSmall, "objective moment not indexed");
      detail::add_terms(obj, *r, 1.0, false);
    }
  for (const auto& [k, v] : obj) p.objective.emplace_back(k, v);
  return p;
}

//------------------------------------------------------------------------------
// Elimination of the linear constraints
//------------------------------------------------------------------------------

// value(var) = constant + sum coef * free[k]
struct Affine {
  double constant = 0.0;
  std::vector<std::pair<std::size_t, double>> terms;  // index into Reduction::free
};

struct Reduction {
  std::vector<std::size_t> free;  // real variables left free
  std::vector<Affine> value;      // for every real variable
  std::size_t rank = 0;
};

// Incremental sparse row reduction. Each new row is rewritten in terms of the
// variables still free, then solved for one of them: the pivot prefers
// moments with more last-outcome letters, then longer words, then larger
// coefficients, then higher ids. This keeps the Collins-Gisin moments free.
inline Reduction reduce(const MomentProblem& p, double tol = 1e-12, double consistency = 1e-8) {
  using Sparse = std::unordered_map<std::size_t, double>;
  struct Sub {
    Sparse expr;  // over free variables
    double constant = 0.0;
  };
  std::unordered_map<std::size_t, Sub> sub;
  std::vector<std::vector<std::size_t>> users(p.variables);  // free var -> deps mentioning it (may be stale)

  auto pivot_key = [&](std::size_t var, double coef) {
    const Word& w = p.moment_of(var);
    return std::make_tuple(p.last_letters(w), w.size(), std::abs(coef), var);
  };

  for (const auto& row : p.rows) {
    Sparse d;
    double c = row.rhs;
    for (const auto& [k, v] : row.terms) {
      auto it = sub.find(k);
      if (it == sub.end()) {
        d[k] += v;
      } else {
        c -= v * it->second.constant;
        for (const auto& [kk, vv] : it->second.expr) d[kk] += v * vv;
      }
    }
    for (auto it = d.begin(); it != d.end();) it = std::abs(it->second) <= tol ? d.erase(it) : std::next(it);
    if (d.empty()) {
      if (std::abs(c) > consistency)
        throw Error(ErrorCode::Infeasible, "linear moment constraints are inconsistent (residual " + std::to_string(c) + ")");
      continue;
    }
    auto best = d.begin();
    for (auto it = d.begin(); it != d.end(); ++it)
      if (pivot_key(it->first, it->second) > pivot_key(best->first, best->second)) best = it;
    const std::size_t piv = best->first;
    const double a = best->second;
    Sub s;
    s.constant = c / a;
    for (const auto& [k, v] : d)
      if (k != piv) s.expr[k] = -v / a;

    // Substitute the new pivot into earlier expressions.
    for (std::size_t dep : users[piv]) {
      auto it = sub.find(dep);
      if (it == sub.end()) continue;
      auto& e = it->second.expr;
      auto hit = e.find(piv);
      if (hit == e.end()) continue;
      const double v = hit->second;
      e.erase(hit);
      it->second.constant += v * s.constant;
      for (const auto& [kk, vv] : s.expr) {
        double& slot = e[kk];
        slot += v * vv;
        users[kk].push_back(dep);
      }
      for (auto jt = e.begin(); jt != e.end();) jt = std::abs(jt->second) <= tol ? e.erase(jt) : std::next(jt);
    }
    users[piv].clear();
    for (const auto& [kk, vv] : s.expr) users[kk].push_back(piv);
    sub.emplace(piv, std::move(s));
  }

  Reduction red;
  red.rank = sub.size();
  std::vector<long> position(p.variables, -1);
  for (std::size_t v = 0; v < p.variables; ++v)
    if (!sub.count(v)) {
      position[v] = static_cast<long>(red.free.size());
      red.free.push_back(v);
    }
  red.value.resize(p.variables);
  for (std::size_t v = 0; v < p.variables; ++v) {
    auto it = sub.find(v);
    if (it == sub.end()) {
      red.value[v].terms.emplace_back(static_cast<std::size_t>(position[v]), 1.0);
      continue;
    }
    red.value[v].constant = it->second.constant;
    for (const auto& [k, c] : it->second.expr) red.value[v].terms.emplace_back(static_cast<std::size_t>(position[k]), c);
    std::sort(red.value[v].terms.begin(), red.value[v].terms.end());
  }
  return red;
}

//------------------------------------------------------------------------------
// SDP assembly
//------------------------------------------------------------------------------

// The reduced moment matrix is Z(t) = F0 + sum_k t_k F_k over the
// Collins-Gisin rows (realified in complex mode), and the objective is
// g0 + g.t. In the solver's form we maximize <-F0, X> subject to
// <F_k, X> = -g_k, whose dual slack is Z(t); the guess is g0 - optimum.
struct Relaxation {
  sdp::Problem problem;
  double offset = 0.0;                  // g0
  std::vector<std::size_t> parameters;  // free variable behind each constraint
  std::size_t matrix_size = 0;
  std::size_t free_variables = 0;
  std::size_t nonzeros = 0;
};

inline Relaxation relax(const MomentProblem& p, const Reduction& red) {
  const auto rows = p.reduced_rows();
  const std::size_t n = rows.size();
  const bool cx = p.options.complex_moments;
  const std::size_t dim = cx ? 2 * n : n;

  // Accumulate F_k entries over the upper triangle.
  std::vector<std::map<std::pair<std::size_t, std::size_t>, double>> f(red.free.size() + 1);  // slot 0 = F0
  auto put = [&](std::size_t r, std::size_t c, const Affine& a, double scale) {
    if (r > c) std::swap(r, c);
    if (a.constant != 0.0) f[0][{r, c}] += scale * a.constant;
    for (const auto& [k, v] : a.terms) f[k + 1][{r, c}] += scale * v;
  };
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a; b < n; ++b) {
      const EntryRef& e = p.entries[rows[a]][rows[b]];
      if (e.re >= 0) {
        put(a, b, red.value[static_cast<std::size_t>(e.re)], 1.0);
        if (cx) put(n + a, n + b, red.value[static_cast<std::size_t>(e.re)], 1.0);
      }
      if (cx && e.im >= 0) {
        // [[Re, -Im], [Im, Re]]: the (n + a, b) and (n + b, a) entries.
        const Affine& im = red.value[static_cast<std::size_t>(e.im)];
        put(b, n + a, im, e.im_sign);
        if (a != b) put(a, n + b, im, -e.im_sign);
      }
    }

  std::vector<double> g(red.free.size(), 0.0);
  double g0 = 0.0;
  for (const auto& [var, coef] : p.objective) {
    const Affine& a = red.value[var];
    g0 += coef * a.constant;
    for (const auto& [k, v] : a.terms) g[k] += coef * v;
  }

  Relaxation out;
  out.offset = g0;
  out.matrix_size = dim;
  out.problem.blocks = {static_cast<long>(dim)};
  for (const auto& [rc, v] : f[0])
    if (std::abs(v) > 1e-14) out.problem.objective.push_back({0, rc.first, rc.second, -v});
  std::vector<double> rhs;
  for (std::size_t k = 0; k < red.free.size(); ++k) {
    sdp::SparseSym a;
    for (const auto& [rc, v] : f[k + 1])
      if (std::abs(v) > 1e-14) a.push_back({0, rc.first, rc.second, v});
    if (a.empty()) {
      if (std::abs(g[k]) > 1e-12)
        throw Error(ErrorCode::ProfileTooSmall, "objective depends on a moment outside the reduced matrix");
      continue;
    }
    out.nonzeros += a.size();
    out.problem.constraints.push_back(std::move(a));
    out.parameters.push_back(k);
    rhs.push_back(-g[k]);
  }
  out.free_variables = out.parameters.size();
  out.problem.rhs = Eigen::Map<const Eigen::VectorXd>(rhs.data(), static_cast<Eigen::Index>(rhs.size()));
  return out;
}

struct DiBound {
  GuessReport report;
  sdp::Solution solution;
  std::size_t matrix_size = 0;
  std::size_t free_variables = 0;
};

// Upper bound on Eve's local guessing probability of (b1, b2) at the target
// Bob settings, over all quantum realizations of p_obs.
inline DiBound di_guess_bound(const JointDistribution& p_obs, TargetBobs target, const BuildOptions& opt = {},
                              const sdp::Config& cfg = {}) {
  const auto problem = build_problem(p_obs, target, opt);
  const auto rel = relax(problem, reduce(problem));
  DiBound out;
  out.matrix_size = rel.matrix_size;
  out.free_variables = rel.free_variables;
  out.solution = sdp::solve(rel.problem, cfg);
  if (out.solution.status != sdp::Status::Optimal)
    throw Error(ErrorCode::SolverFailure, "SDP solver stopped with status " + sdp::to_string(out.solution.status));
  const double g = std::clamp(rel.offset - out.solution.primal, 1e-300, 1.0);
  out.report = make_report(g, "npa-" + to_string(opt.profile));
  return out;
}

//------------------------------------------------------------------------------
// Explicit realizations
//------------------------------------------------------------------------------

// A state and one operator per letter, all on the same space.
struct Realization {
  ComplexVector state;
  std::map<Letter, ComplexMatrix> ops;

  ComplexVector apply(const Word& w) const {
    ComplexVector v = state;
    for (auto it = w.rbegin(); it != w.rend(); ++it) v = ops.at(*it) * v;
    return v;
  }
};

struct RealizedMoments {
  ComplexMatrix matrix;        // <w_i psi | w_j psi> over the full word list
  std::vector<double> values;  // one per real variable
  double consistency = 0.0;    // spread among entries sharing a variable
};

inline RealizedMoments realize(const MomentProblem& p, const Realization& r) {
  const std::size_t n = p.size();
  std::vector<ComplexVector> kets;
  for (const auto& w : p.words) kets.push_back(r.apply(w));
  RealizedMoments out;
  out.matrix.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out.matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = kets[i].dot(kets[j]);

  std::vector<std::optional<double>> vals(p.variables);
  auto record = [&](long var, double v) {
    if (var < 0) return;
    auto& slot = vals[static_cast<std::size_t>(var)];
    if (!slot) slot = v;
    else out.consistency = std::max(out.consistency, std::abs(*slot - v));
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const Complex m = out.matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      const EntryRef& e = p.entries[i][j];
      if (e.re < 0) {
        out.consistency = std::max(out.consistency, std::abs(m));
        continue;
      }
      if (p.options.complex_moments) {
        record(e.re, m.real());
        if (e.im >= 0) record(e.im, e.im_sign * m.imag());
        else out.consistency = std::max(out.consistency, std::abs(m.imag()));
      } else {
        // Real moments identify w with its adjoint, i.e. keep the real part.
        record(e.re, m.real());
      }
    }
  out.values.resize(p.variables, 0.0);
  for (std::size_t v = 0; v < p.variables; ++v) out.values[v] = vals[v].value_or(0.0);
  return out;
}

inline double row_residual(const MomentProblem& p, const std::vector<double>& values) {
  double worst = 0.0;
  for (const auto& row : p.rows) {
    double s = -row.rhs;
    for (const auto& [k, v] : row.terms) s += v * values[k];
    worst = std::max(worst, std::abs(s));
  }
  return worst;
}

inline double objective_value(const MomentProblem& p, const std::vector<double>& values) {
  double s = 0.0;
  for (const auto& [k, v] : p.objective) s += v * values[k];
  return s;
}

// The decomposition attack as a projector model on A (x) B (x) R (x) E: Bob 1
// measures the branch PVM selected by the classical register R, Eve holds a
// copy of R and outputs the branch's most likely (b1, b2) for the target
// settings. Every Bob-1 setting must decompose with the same weight vector.
inline Realization attack_realization(const CglmpChainConfig& chain, TargetBobs target,
                                      const std::vector<std::size_t>& eve_labels = {}) {
  using cglmp::Party;
  const auto& cfg = chain.settings;
  const std::size_t d = cfg.d;
  std::vector<PvmMixture> decomps;
  for (std::size_t y = 0; y < cfg.beta.size(); ++y) decomps.push_back(first_round_decomposition(chain, y));
  const std::size_t nb = decomps.front().size();
  for (const auto& m : decomps) {
    if (m.size() != nb) throw Error(ErrorCode::NotAValidMixture, "settings decompose into different branch counts");
    for (std::size_t j = 0; j < nb; ++j)
      if (std::abs(m.branch(j).weight - decomps.front().branch(j).weight) > 1e-12)
        throw Error(ErrorCode::NotAValidMixture, "settings decompose with different weights");
  }
  const auto di = static_cast<Eigen::Index>(d), rj = static_cast<Eigen::Index>(nb);
  const StateVector psi = cglmp::canonical_state(chain.state, d);

  Realization r;
  ComplexVector reg = ComplexVector::Zero(rj * rj);
  for (Eigen::Index j = 0; j < rj; ++j) reg(j * rj + j) = std::sqrt(decomps.front().branch(static_cast<std::size_t>(j)).weight);
  r.state = kron(psi.amplitudes(), reg);

  const ComplexMatrix id_d = identity(di), id_r = identity(rj);
  auto on = [&](const ComplexMatrix& a, const ComplexMatrix& b, const ComplexMatrix& rr, const ComplexMatrix& e) {
    return kron(kron(kron(a, b), rr), e);
  };
  for (std::size_t x = 0; x < cfg.alpha.size(); ++x) {
    const Povm m = cglmp::measurement_basis(Party::Alice, x, cfg);
    for (std::size_t a = 0; a < d; ++a)
      r.ops[{Alice, static_cast<std::uint8_t>(x), static_cast<std::uint8_t>(a)}] = on(m.element(a), id_d, id_r, id_r);
  }
  for (std::size_t y = 0; y < cfg.beta.size(); ++y) {
    const Povm m = cglmp::measurement_basis(Party::Bob, y, cfg);
    for (std::size_t b = 0; b < d; ++b) {
      r.ops[{Bob2, static_cast<std::uint8_t>(y), static_cast<std::uint8_t>(b)}] = on(id_d, m.element(b), id_r, id_r);
      ComplexMatrix blockdiag = ComplexMatrix::Zero(di * rj, di * rj);
      for (Eigen::Index j = 0; j < rj; ++j) {
        ComplexMatrix sel = ComplexMatrix::Zero(rj, rj);
        sel(j, j) = 1.0;
        blockdiag += kron(decomps[y].branch(static_cast<std::size_t>(j)).pvm.element(b), sel);
      }
      r.ops[{Bob1, static_cast<std::uint8_t>(y), static_cast<std::uint8_t>(b)}] = kron(kron(id_d, blockdiag), id_r);
    }
  }
  // Eve's guess per branch: argmax over (b1, b2) of the local branch table.
  const Povm alice = cglmp::measurement_basis(Party::Alice, 0, cfg);
  const Povm bob2 = cglmp::measurement_basis(Party::Bob, target.y2, cfg);
  std::vector<ComplexMatrix> eve(d * d, ComplexMatrix::Zero(rj, rj));
  for (std::size_t j = 0; j < nb; ++j) {
    const auto t = local_table(branch_table(psi, alice, decomps[target.y1].branch(j).pvm, bob2), d);
    const std::size_t guess = static_cast<std::size_t>(std::max_element(t.begin(), t.end()) - t.begin());
    const std::size_t label = eve_labels.empty() ? guess : eve_labels.at(guess);
    eve[label](static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)) = 1.0;
  }
  for (std::size_t e = 0; e < d * d; ++e) r.ops[{Eve, 0, static_cast<std::uint8_t>(e)}] = on(id_d, id_d, id_r, eve[e]);
  return r;
}

}  // namespace seqrand::npa
