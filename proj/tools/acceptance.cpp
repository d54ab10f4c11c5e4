// Acceptance run: one PASS/FAIL line per criterion, with the numbers behind
// it. Exit status is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "seqrand/guessing.hpp"
#include "seqrand/npa.hpp"
#include "seqrand/sdp.hpp"

using namespace seqrand;
using cglmp::StateKind;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const char* name(StateKind k) { return k == StateKind::MES ? "MES" : "MVS"; }

int failures = 0;

void criterion(int id, double budget_s, const std::function<Verdict()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = secs < budget_s;
  const bool ok = v.pass && in_time;
  if (!ok) ++failures;
  std::printf("criterion %2d: %s  %s  [%.1f s of %.0f s]\n", id, ok ? "PASS" : "FAIL", v.detail.c_str(), secs, budget_s);
  std::fflush(stdout);
}

CglmpChainConfig chain(StateKind kind, double eps, InstrumentMode mode) {
  CglmpChainConfig c;
  c.state = kind;
  c.eps1 = eps;
  c.mode = mode;
  return c;
}

std::vector<double> window_grid(StateKind kind, std::size_t n) {
  const auto w = double_violation_window(kind);
  std::vector<double> out;
  for (std::size_t k = 1; k <= n; ++k) out.push_back(w.low + (w.high - w.low) * double(k) / double(n + 1));
  return out;
}

sdp::Problem sdp_problem(std::vector<long> blocks, sdp::SparseSym c, std::vector<sdp::SparseSym> a, std::vector<double> b) {
  sdp::Problem p;
  p.blocks = std::move(blocks);
  p.objective = std::move(c);
  p.constraints = std::move(a);
  p.rhs = Eigen::Map<Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
  return p;
}

Verdict cglmp_maxima() {
  const double ref[] = {2.8729, 2.915};
  const double closed[] = {4.0 / 9 * (3 + 2 * std::sqrt(3.0)), 1 + std::sqrt(11.0 / 3)};
  Verdict v{true, ""};
  for (int k = 0; k < 2; ++k) {
    const auto kind = k == 0 ? StateKind::MES : StateKind::MVS;
    const double sim = simulate_point(chain(kind, 1.0, InstrumentMode::SqrtLuders)).first;
    v.pass = v.pass && std::abs(sim - ref[k]) < 1e-3 && std::abs(sim - closed[k]) < 1e-9;
    v.detail += fmt("%s I1(1)=%.10f (ref %.4g, closed-form diff %.1e); ", name(kind), sim, ref[k], std::abs(sim - closed[k]));
  }
  return v;
}

Verdict thresholds() {
  const double ref[] = {0.69616, 0.68614};
  Verdict v{true, ""};
  for (int k = 0; k < 2; ++k) {
    const auto kind = k == 0 ? StateKind::MES : StateKind::MVS;
    const double low = double_violation_window(kind).low;
    v.pass = v.pass && std::abs(low - ref[k]) < 1e-4;
    v.detail += fmt("%s eps_low=%.7f (ref %.5f); ", name(kind), low, ref[k]);
  }
  return v;
}

Verdict second_round() {
  const double ref_high[] = {0.904, 0.902};
  Verdict v{true, ""};
  for (int k = 0; k < 2; ++k) {
    const auto kind = k == 0 ? StateKind::MES : StateKind::MVS;
    const auto w = double_violation_window(kind);
    double worst = 0.0;
    for (int i = 0; i <= 100; ++i) {
      const double e = w.low + (w.high - w.low) * i / 100.0;
      worst = std::max(worst, std::abs(simulate_point(chain(kind, e, InstrumentMode::SqrtLuders)).second -
                                       closed_form::second(kind, e)));
    }
    v.pass = v.pass && worst < 1e-3 && std::abs(w.high - ref_high[k]) < 0.015;
    v.detail += fmt("%s sqrt-mode max|I2-closed|=%.1e over 101 pts, eps_high=%.6f (ref %.3f); ", name(kind), worst,
                    w.high, ref_high[k]);
  }
  return v;
}

Verdict projective_theorem() {
  const auto r = projective_battery(7, 100);
  return {r.instances == 100 && r.max_difference < 1e-8,
          fmt("%zu instances, max|G_Q-G_C|=%.1e", r.instances, r.max_difference)};
}

Verdict dilation_theorem() {
  const auto r = dilation_battery(7, 100);
  return {r.instances == 100 && r.max_difference < 1e-8 && r.max_recovery < 1e-10,
          fmt("%zu instances, max|G_Q-G_C|=%.1e, max recovery residual=%.1e", r.instances, r.max_difference,
              r.max_recovery)};
}

Verdict chsh_warmup() {
  ComplexVector phi = ComplexVector::Zero(4);
  phi(0) = phi(3) = 1.0 / std::sqrt(2.0);
  const ComplexMatrix z = identity(2);
  ComplexMatrix flipped = z;
  flipped.col(0).swap(flipped.col(1));
  const double eps = 0.7;
  const PvmMixture round({{eps, embed_povm(basis_measurement(z), 2, 1)},
                          {1 - eps, embed_povm(basis_measurement(flipped), 2, 1)}});
  const auto ens = pure_ensemble(StateVector(phi));
  const std::vector<double> joint{eps, 0.0, 0.0, 1 - eps};
  const auto c = classical_guess(ens, {round, round}, joint);
  const auto q = quantum_guess_eval(dilated_chain(ens, {round, round}, joint));
  // "Exactly" means to double precision: 1/sqrt2 squared is not 1/2 in floating point.
  const double tol = 8 * std::numeric_limits<double>::epsilon();
  return {std::abs(c.guess - 0.5) < tol && std::abs(c.min_entropy - 1.0) < tol && std::abs(q.guess - 0.5) < tol,
          fmt("G=%.17g H=%.17g bits, dilated G=%.17g (tolerance 8 ulp)", c.guess, c.min_entropy, q.guess)};
}

Verdict trusted_curves() {
  Verdict v{true, ""};
  std::size_t checked = 0;
  for (auto kind : {StateKind::MES, StateKind::MVS}) {
    const auto grid = window_grid(kind, 21);
    for (TargetSetting s : {TargetSetting{0, 0, 1}, TargetSetting{0, 0, 0}, TargetSetting{1, 1, 0}})
      for (auto scope : {GuessScope::Local, GuessScope::Global}) {
        const double cap = std::log2(scope == GuessScope::Global ? 27.0 : 9.0);
        double prev = 2.0;
        for (double e : grid) {
          const auto cfg = chain(kind, e, InstrumentMode::ExtremalMixture);
          const auto r = guess_cglmp(cfg, s, scope);
          auto t = observed_table(sequential_distribution(cglmp_chain(cfg)), s);
          if (scope == GuessScope::Local) t = local_table(t, 3);
          const double modal = *std::max_element(t.begin(), t.end());
          // Sharper first-round measurements never help Eve here.
          const bool ok = std::isfinite(r.guess) && r.guess >= modal - 1e-12 && r.min_entropy <= cap + 1e-12 &&
                          r.guess <= prev + 1e-12;
          if (!ok && v.pass)
            v.detail += fmt("violation at %s eps=%.4f setting %zu%zu%zu %s; ", name(kind), e, s.x, s.y1, s.y2,
                            to_string(scope).c_str());
          v.pass = v.pass && ok;
          prev = r.guess;
          ++checked;
        }
      }
  }
  v.detail += fmt("%zu grid points (2 states x 3 settings x 2 scopes x 21 eps): G >= modal, H <= log2 27 / log2 9, "
                  "G non-increasing in eps",
                  checked);
  return v;
}

Verdict di_bounds() {
  bool solved = true, dominated = true, closer = true;
  std::string detail;
  double worst_gap = 0.0;
  int points = 0;
  for (auto kind : {StateKind::MES, StateKind::MVS})
    for (double e : window_grid(kind, 5)) {
      const auto cfg = chain(kind, e, InstrumentMode::ExtremalMixture);
      const auto dist = sequential_distribution(cglmp_chain(cfg));
      double h_gap[2], g_gap[2];
      int idx = 0;
      for (npa::TargetBobs t : {npa::TargetBobs{0, 1}, npa::TargetBobs{0, 0}}) {
        const auto b = npa::di_guess_bound(dist, t);
        const auto dec = guess_cglmp(cfg, {0, t.y1, t.y2}, GuessScope::Local);
        solved = solved && b.solution.status == sdp::Status::Optimal && b.solution.gap < 1e-6;
        dominated = dominated && b.report.min_entropy <= dec.min_entropy + 1e-4;
        worst_gap = std::max(worst_gap, b.solution.gap);
        h_gap[idx] = dec.min_entropy - b.report.min_entropy;
        g_gap[idx] = b.report.guess - dec.guess;
        ++idx;
      }
      closer = closer && h_gap[0] < h_gap[1];
      detail += fmt("\n    %s eps=%.4f  H-gap distinct %.4f vs repeated %.4f bits; G-gap %.4f vs %.4f", name(kind), e,
                    h_gap[0], h_gap[1], g_gap[0], g_gap[1]);
      ++points;
    }
  return {solved && dominated && closer,
          fmt("%d points x 2 settings: all Optimal with max duality gap %.1e: %s; H_npa <= H_decomp + 1e-4: %s; "
              "gap(distinct) < gap(repeated) at every eps: %s",
              points, worst_gap, solved ? "yes" : "NO", dominated ? "yes" : "NO", closer ? "yes" : "NO") +
              detail};
}

Verdict solver_validation() {
  using sdp::SparseSym;
  std::vector<std::pair<std::string, std::pair<sdp::Problem, double>>> toys;
  toys.push_back({"diag(1,2)", {sdp_problem({2}, {{0, 0, 0, 1}, {0, 1, 1, 2}}, {{{0, 0, 0, 1}, {0, 1, 1, 1}}}, {1}), 2.0}});
  {
    SparseSym j, tr;
    std::vector<SparseSym> cons;
    for (std::size_t c = 0; c < 5; ++c) {
      tr.push_back({0, c, c, 1});
      for (std::size_t r = 0; r <= c; ++r) j.push_back({0, r, c, 1});
    }
    cons.push_back(tr);
    for (std::size_t i = 0; i < 5; ++i) cons.push_back({{0, std::min(i, (i + 1) % 5), std::max(i, (i + 1) % 5), 1}});
    toys.push_back({"theta(C5)", {sdp_problem({5}, j, cons, {1, 0, 0, 0, 0, 0}), std::sqrt(5.0)}});
  }
  toys.push_back({"LP", {sdp_problem({-4}, {{0, 0, 0, 1}, {0, 1, 1, 2}, {0, 2, 2, 3}},
                                     {{{0, 0, 0, 1}, {0, 1, 1, 1}, {0, 2, 2, 1}}, {{0, 2, 2, 1}, {0, 3, 3, 1}}}, {1, 0.5}),
                         2.5}});
  toys.push_back({"face", {sdp_problem({3}, {{0, 2, 2, 1}}, {{{0, 0, 0, 1}}, {{0, 0, 1, 1}}, {{0, 2, 2, 1}}}, {1, 1, 2}),
                           2.0}});
  bool ok = true;
  std::string detail;
  // The default stopping rule is a relative gap of 1e-7, which is not
  // "exact to 1e-7" for optima near 2; ask for more.
  sdp::Config tight;
  tight.gap_tol = 1e-10;
  tight.feas_tol = 1e-10;
  for (const auto& [label, pv] : toys) {
    const auto sol = sdp::solve(pv.first, tight);
    ok = ok && sol.status == sdp::Status::Optimal;
    const double got = sol.primal;
    ok = ok && std::abs(got - pv.second) < 1e-7;
    detail += fmt("%s err %.1e; ", label.c_str(), std::abs(got - pv.second));
  }
  // One-time oracle: Clarabel 0.11.1 through cvxpy 1.7.5 on the exported
  // MVS eps=0.85 setting (0,0,1) relaxation (tools/sdpa_crosscheck.py).
  constexpr double clarabel = 0.6117511472;
  const auto cfg = chain(StateKind::MVS, 0.85, InstrumentMode::ExtremalMixture);
  const double ours = npa::di_guess_bound(sequential_distribution(cglmp_chain(cfg)), {0, 1}).report.guess;
  ok = ok && std::abs(ours - clarabel) < 1e-5;
  detail += fmt("external MVS 0.85 instance: ours %.10f vs Clarabel %.10f", ours, clarabel);
  return {ok, detail};
}

Verdict witness() {
  double worst_row = 0.0, worst_psd = 0.0, worst_obj = 0.0;
  for (auto kind : {StateKind::MES, StateKind::MVS})
    for (double e : {0.75, 0.85})
      for (npa::TargetBobs t : {npa::TargetBobs{0, 1}, npa::TargetBobs{0, 0}}) {
        const auto cfg = chain(kind, e, InstrumentMode::ExtremalMixture);
        const auto p = npa::build_problem(sequential_distribution(cglmp_chain(cfg)), t);
        const auto m = npa::realize(p, npa::attack_realization(cfg, t));
        worst_row = std::max({worst_row, npa::row_residual(p, m.values), m.consistency});
        worst_psd = std::min(worst_psd, hermitian_eigen(m.matrix).eigenvalues().minCoeff());
        worst_obj = std::max(worst_obj, std::abs(npa::objective_value(p, m.values) - guess_cglmp(cfg, {0, t.y1, t.y2}).guess));
      }
  return {worst_row < 1e-8 && worst_psd > -1e-10,
          fmt("8 realized attack models: max row residual %.1e, min eigenvalue %.1e, objective vs attack %.1e", worst_row,
              worst_psd, worst_obj)};
}

}  // namespace

int main() {
  criterion(1, 1, cglmp_maxima);
  criterion(2, 1, thresholds);
  criterion(3, 10, second_round);
  criterion(4, 30, projective_theorem);
  criterion(5, 60, dilation_theorem);
  criterion(6, 1, chsh_warmup);
  criterion(7, 60, trusted_curves);
  criterion(8, 1800, di_bounds);
  criterion(9, 600, solver_validation);
  criterion(10, 60, witness);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures;
}
