#pragma once

// Run configuration and subcommand bodies behind the seqrand executable.
// Flag parsing lives in the tool; everything here is testable in-process.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqrand/cglmp.hpp"
#include "seqrand/error.hpp"
#include "seqrand/guessing.hpp"
#include "seqrand/npa.hpp"
#include "seqrand/parallel.hpp"
#include "seqrand/sdp.hpp"
#include "seqrand/seqsim.hpp"

namespace seqrand::cli {

enum class Command { Table1, Curves, GuessDecomp, NpaBound, TheoremCheck, ExportSdp };

inline const std::vector<std::pair<std::string, Command>>& command_names() {
  static const std::vector<std::pair<std::string, Command>> names{
      {"table1", Command::Table1},           {"curves", Command::Curves},
      {"guess-decomp", Command::GuessDecomp}, {"npa-bound", Command::NpaBound},
      {"theorem-check", Command::TheoremCheck}, {"export-sdp", Command::ExportSdp}};
  return names;
}

inline std::string to_string(Command c) {
  for (const auto& [name, cmd] : command_names())
    if (cmd == c) return name;
  return "?";
}

inline Error config_error(const std::string& field, const std::string& msg) {
  return Error(ErrorCode::ConfigError, "field '" + field + "': " + msg);
}

// Either lo:hi:step, or window:N for N points strictly inside the state's
// double-violation window.
struct Grid {
  double lo = 0.0;
  double hi = 1.0;
  double step = 0.001;
  std::size_t window_points = 0;  // > 0 selects the window form

  std::vector<double> points(cglmp::StateKind kind) const {
    std::vector<double> out;
    if (window_points > 0) {
      const auto w = double_violation_window(kind);
      for (std::size_t k = 1; k <= window_points; ++k)
        out.push_back(w.low + (w.high - w.low) * static_cast<double>(k) / static_cast<double>(window_points + 1));
      return out;
    }
    const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
    for (std::size_t i = 0; i < n; ++i) out.push_back(std::min(hi, lo + static_cast<double>(i) * step));
    return out;
  }
};

inline double parse_number(const std::string& field, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size() || !std::isfinite(v)) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw config_error(field, "'" + text + "' is not a number");
  }
}

inline std::size_t parse_index(const std::string& field, const std::string& text) {
  const double v = parse_number(field, text);
  if (v < 0 || v != std::floor(v) || v > 1e9) throw config_error(field, "'" + text + "' is not a non-negative integer");
  return static_cast<std::size_t>(v);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline Grid parse_grid(const std::string& text) {
  const auto parts = split(text, ':');
  Grid g;
  if (parts.size() == 2 && parts[0] == "window") {
    g.window_points = parse_index("grid", parts[1]);
    if (g.window_points == 0) throw config_error("grid", "window needs at least one point");
    return g;
  }
  if (parts.size() != 3) throw config_error("grid", "expected lo:hi:step or window:N, got '" + text + "'");
  g.lo = parse_number("grid", parts[0]);
  g.hi = parse_number("grid", parts[1]);
  g.step = parse_number("grid", parts[2]);
  if (g.lo < 0.0 || g.hi > 1.0 || g.lo > g.hi) throw config_error("grid", "bounds must satisfy 0 <= lo <= hi <= 1");
  if (!(g.step > 0.0)) throw config_error("grid", "step must be positive");
  if ((g.hi - g.lo) / g.step > 1e6) throw config_error("grid", "more than a million points");
  return g;
}

inline TargetSetting parse_setting(const std::string& text) {
  const auto parts = split(text, ',');
  if (parts.size() != 3) throw config_error("setting", "expected x,y1,y2, got '" + text + "'");
  TargetSetting s{parse_index("setting", parts[0]), parse_index("setting", parts[1]), parse_index("setting", parts[2])};
  if (s.x > 1 || s.y1 > 1 || s.y2 > 1) throw config_error("setting", "indices must be 0 or 1");
  return s;
}

inline cglmp::StateKind parse_state(const std::string& s) {
  if (s == "mes") return cglmp::StateKind::MES;
  if (s == "mvs") return cglmp::StateKind::MVS;
  throw config_error("state", "expected mes or mvs, got '" + s + "'");
}

inline InstrumentMode parse_mode(const std::string& s) {
  if (s == "sqrt") return InstrumentMode::SqrtLuders;
  if (s == "mixture") return InstrumentMode::ExtremalMixture;
  throw config_error("mode", "expected sqrt or mixture, got '" + s + "'");
}

inline GuessScope parse_scope(const std::string& s) {
  if (s == "local") return GuessScope::Local;
  if (s == "global") return GuessScope::Global;
  throw config_error("scope", "expected local or global, got '" + s + "'");
}

inline npa::WordProfile parse_profile(const std::string& s) {
  if (s == "default") return npa::WordProfile::Default;
  if (s == "extended") return npa::WordProfile::Extended;
  throw config_error("profile", "expected default or extended, got '" + s + "'");
}

// Unset optionals take per-command defaults (see resolve()).
struct RunConfig {
  Command command = Command::Table1;
  std::optional<cglmp::StateKind> state;
  std::optional<InstrumentMode> mode;
  std::optional<Grid> grid;
  TargetSetting setting{0, 0, 1};
  GuessScope scope = GuessScope::Local;
  npa::WordProfile profile = npa::WordProfile::Default;
  std::optional<double> tol;
  std::string out;
  std::uint64_t seed = 7;
  std::size_t instances = 100;
  double epsilon = 0.85;  // export-sdp
  bool reduced = false;   // export-sdp: write the facially reduced problem
  bool complex_moments = false;
  // Basis of the cyclic branches in Bob 1's decomposition: false keeps the
  // measurement's eigenbasis, true uses the computational basis.
  bool computational_theta = false;
};

// String overrides as they come from flags or a JSON file. Every field is
// optional; apply() parses and checks each one it finds.
struct Overrides {
  std::optional<std::string> state, mode, grid, setting, scope, profile, out, theta;
  std::optional<double> tol, epsilon;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> instances;
  std::optional<bool> reduced, complex_moments;

  void apply(RunConfig& c) const {
    if (state) c.state = parse_state(*state);
    if (mode) c.mode = parse_mode(*mode);
    if (grid) c.grid = parse_grid(*grid);
    if (setting) c.setting = parse_setting(*setting);
    if (scope) c.scope = parse_scope(*scope);
    if (profile) c.profile = parse_profile(*profile);
    if (out) c.out = *out;
    if (tol) c.tol = *tol;
    if (epsilon) c.epsilon = *epsilon;
    if (seed) c.seed = *seed;
    if (instances) c.instances = *instances;
    if (reduced) c.reduced = *reduced;
    if (complex_moments) c.complex_moments = *complex_moments;
    if (theta) {
      if (*theta != "eigen" && *theta != "computational")
        throw config_error("theta", "expected eigen or computational, got '" + *theta + "'");
      c.computational_theta = *theta == "computational";
    }
  }
};

// JSON keys mirror the flag names.
inline Overrides overrides_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw config_error("config", "top level must be an object");
  Overrides o;
  auto str = [&](const std::string& key, const nlohmann::json& v) {
    if (!v.is_string()) throw config_error(key, "expected a string");
    return v.get<std::string>();
  };
  auto num = [&](const std::string& key, const nlohmann::json& v) {
    if (!v.is_number()) throw config_error(key, "expected a number");
    return v.get<double>();
  };
  auto count = [&](const std::string& key, const nlohmann::json& v) {
    if (!v.is_number_unsigned()) throw config_error(key, "expected a non-negative integer");
    return v.get<std::uint64_t>();
  };
  auto flag = [&](const std::string& key, const nlohmann::json& v) {
    if (!v.is_boolean()) throw config_error(key, "expected true or false");
    return v.get<bool>();
  };
  for (const auto& [key, v] : j.items()) {
    if (key == "state") o.state = str(key, v);
    else if (key == "mode") o.mode = str(key, v);
    else if (key == "grid") o.grid = str(key, v);
    else if (key == "scope") o.scope = str(key, v);
    else if (key == "profile") o.profile = str(key, v);
    else if (key == "out") o.out = str(key, v);
    else if (key == "theta") o.theta = str(key, v);
    else if (key == "setting") {
      if (v.is_array()) {
        std::string s;
        for (const auto& e : v) s += (s.empty() ? "" : ",") + std::to_string(count(key, e));
        o.setting = s;
      } else {
        o.setting = str(key, v);
      }
    } else if (key == "tol") o.tol = num(key, v);
    else if (key == "epsilon") o.epsilon = num(key, v);
    else if (key == "seed") o.seed = count(key, v);
    else if (key == "instances") o.instances = static_cast<std::size_t>(count(key, v));
    else if (key == "reduced") o.reduced = flag(key, v);
    else if (key == "complex") o.complex_moments = flag(key, v);
    else throw config_error(key, "unknown key");
  }
  return o;
}

inline Overrides load_overrides(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("config", "cannot read " + path.string());
  try {
    return overrides_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw config_error("config", e.what());
  }
}

// Fills per-command defaults and rejects combinations the command cannot run.
inline RunConfig resolve(RunConfig c) {
  const bool npa_like = c.command == Command::NpaBound || c.command == Command::ExportSdp;
  if (c.command != Command::Table1 && !c.state) c.state = cglmp::StateKind::MES;
  if (!c.mode) {
    // Curves follow the square-root instrument, which reproduces the
    // closed-form second-round curve; the attack-based commands need the
    // decomposition's own instrument.
    c.mode = c.command == Command::Curves ? InstrumentMode::SqrtLuders : InstrumentMode::ExtremalMixture;
  }
  if (!c.grid) {
    if (c.command == Command::Curves) c.grid = Grid{};
    else if (c.command == Command::GuessDecomp) c.grid = parse_grid("window:21");
    else if (c.command == Command::NpaBound) c.grid = parse_grid("window:5");
  }
  if (c.tol && !(*c.tol > 0.0 && *c.tol < 1.0)) throw config_error("tol", "must lie in (0, 1)");
  if (!(c.epsilon >= 0.0 && c.epsilon <= 1.0)) throw config_error("epsilon", "must lie in [0, 1]");
  if (c.command == Command::TheoremCheck && c.instances == 0) throw config_error("instances", "must be positive");
  if (npa_like && c.scope == GuessScope::Global)
    throw config_error("scope", "the NPA relaxation only bounds the local (b1, b2) guess");
  if (c.command == Command::ExportSdp && c.out.empty()) throw config_error("out", "export-sdp needs an output path");
  return c;
}

//------------------------------------------------------------------------------
// Output helpers
//------------------------------------------------------------------------------

inline std::string number(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

struct Csv {
  std::string text;

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) text += (i ? "," : "") + cells[i];
    text += "\n";
  }
};

struct Outcome {
  std::string csv;      // the artifact (CSV, or the SDPA text for export-sdp)
  std::string summary;  // human-readable lines for stderr
  int status = 0;
};

inline sdp::Config solver_config(const RunConfig& c) {
  sdp::Config cfg;
  if (c.tol) cfg.gap_tol = *c.tol;
  return cfg;
}

inline CglmpChainConfig chain_config(const RunConfig& c, double eps1) {
  CglmpChainConfig cfg;
  cfg.state = *c.state;
  cfg.mode = *c.mode;
  cfg.eps1 = eps1;
  cfg.eps2 = 1.0;
  if (c.computational_theta) cfg.theta = identity(static_cast<Eigen::Index>(cfg.settings.d));
  return cfg;
}

// Largest observed probability Eve could always reach by guessing the modal
// tuple, for the given scope.
inline double modal_probability(const JointDistribution& dist, TargetSetting s, GuessScope scope) {
  auto t = observed_table(dist, s);
  if (scope == GuessScope::Local) t = local_table(t, dist.outcomes(0));
  return *std::max_element(t.begin(), t.end());
}

//------------------------------------------------------------------------------
// Subcommands
//------------------------------------------------------------------------------

struct Table1Row {
  cglmp::StateKind state;
  std::string quantity;
  double table = 0.0;
  double closed_form = 0.0;
  double simulated = 0.0;
};

// Published values next to the closed forms and the simulated square-root
// chain: Bob 1 maximum at eps = 1, Bob 2 at the first-round threshold and
// both window ends.
inline std::vector<Table1Row> table1_rows(cglmp::StateKind kind) {
  const bool mes = kind == cglmp::StateKind::MES;
  const auto w = double_violation_window(kind);
  const auto sw = simulated_window(kind, InstrumentMode::SqrtLuders);
  CglmpChainConfig top;
  top.state = kind;
  const auto at_one = simulate_point(top);
  CglmpChainConfig low = top;
  low.eps1 = w.low;
  const auto at_low = simulate_point(low);
  return {
      {kind, "bob1_max", mes ? 2.8729 : 2.915, closed_form::first(kind, 1.0), at_one.first},
      {kind, "bob2_max", mes ? 2.4086 : 2.440, closed_form::second(kind, w.low), at_low.second},
      {kind, "eps_low", mes ? 0.696 : 0.686, w.low, sw.low},
      {kind, "eps_high", mes ? 0.904 : 0.902, w.high, sw.high},
  };
}

inline Outcome run_table1(const RunConfig& c) {
  std::vector<cglmp::StateKind> kinds;
  if (c.state) kinds = {*c.state};
  else kinds = {cglmp::StateKind::MES, cglmp::StateKind::MVS};
  Csv csv;
  csv.row({"state", "quantity", "table[1]", "closed_form[1]", "simulated[1]"});
  for (auto k : kinds)
    for (const auto& r : table1_rows(k))
      csv.row({cglmp::to_string(r.state), r.quantity, number(r.table), number(r.closed_form), number(r.simulated)});
  return {csv.text, "", 0};
}

inline Outcome run_curves(const RunConfig& c) {
  const auto grid = c.grid->points(*c.state);
  const auto pts = violation_curves(*c.state, *c.mode, grid);
  Csv csv;
  csv.row({"epsilon[1]", "I3_bob1[1]", "I3_bob2[1]", "I3_bob1_closed[1]", "I3_bob2_closed[1]"});
  for (const auto& p : pts)
    csv.row({number(p.epsilon), number(p.first), number(p.second), number(closed_form::first(*c.state, p.epsilon)),
             number(closed_form::second(*c.state, p.epsilon))});
  return {csv.text, "", 0};
}

struct GuessPoint {
  double epsilon = 0.0;
  GuessReport report;
  double modal = 0.0;
};

inline std::vector<GuessPoint> guess_points(const RunConfig& c) {
  const auto grid = c.grid->points(*c.state);
  return parallel_map<GuessPoint>(grid.size(), [&](std::size_t i) {
    const auto cfg = chain_config(c, grid[i]);
    const auto dist = sequential_distribution(cglmp_chain(cfg));
    return GuessPoint{grid[i], guess_cglmp(cfg, c.setting, c.scope), modal_probability(dist, c.setting, c.scope)};
  });
}

inline Outcome run_guess_decomp(const RunConfig& c) {
  Csv csv;
  csv.row({"epsilon[1]", "G[1]", "H_min[bits]", "p_obs_modal[1]"});
  for (const auto& p : guess_points(c))
    csv.row({number(p.epsilon), number(p.report.guess), number(p.report.min_entropy), number(p.modal)});
  return {csv.text, "", 0};
}

struct NpaPoint {
  double epsilon = 0.0;
  npa::DiBound bound;
  GuessReport attack;
};

inline npa::BuildOptions build_options(const RunConfig& c) {
  npa::BuildOptions opt;
  opt.profile = c.profile;
  opt.complex_moments = c.complex_moments;
  return opt;
}

inline NpaPoint npa_point(const RunConfig& c, double eps) {
  const auto cfg = chain_config(c, eps);
  const auto dist = sequential_distribution(cglmp_chain(cfg));
  NpaPoint p;
  p.epsilon = eps;
  p.bound = npa::di_guess_bound(dist, {c.setting.y1, c.setting.y2}, build_options(c), solver_config(c));
  p.attack = guess_cglmp(cfg, c.setting, GuessScope::Local);
  return p;
}

inline Outcome run_npa_bound(const RunConfig& c) {
  const auto grid = c.grid->points(*c.state);
  const auto pts = parallel_map<NpaPoint>(grid.size(), [&](std::size_t i) { return npa_point(c, grid[i]); });
  Csv csv;
  csv.row({"epsilon[1]", "G_npa[1]", "H_npa[bits]", "G_decomp[1]", "H_decomp[bits]", "duality_gap[1]", "iterations",
           "face_dim"});
  for (const auto& p : pts)
    csv.row({number(p.epsilon), number(p.bound.report.guess), number(p.bound.report.min_entropy), number(p.attack.guess),
             number(p.attack.min_entropy), number(p.bound.solution.gap), std::to_string(p.bound.solution.iterations),
             std::to_string(p.bound.solution.face_dim)});
  return {csv.text, "", 0};
}

inline constexpr double theorem_tolerance = 1e-8;

inline Outcome run_theorem_check(const RunConfig& c) {
  const auto t1 = projective_battery(c.seed, c.instances);
  const auto t2 = dilation_battery(c.seed, c.instances);
  Csv csv;
  csv.row({"battery", "instances", "max_abs_GQ_minus_GC[1]", "max_recovery_residual[1]"});
  csv.row({"projective", std::to_string(t1.instances), number(t1.max_difference), ""});
  csv.row({"dilation", std::to_string(t2.instances), number(t2.max_difference), number(t2.max_recovery)});
  const double worst = std::max(t1.max_difference, t2.max_difference);
  Outcome o{csv.text, "max |G_Q - G_C| = " + number(worst) + " over " + std::to_string(2 * c.instances) + " instances\n", 0};
  if (!(worst < theorem_tolerance)) o.status = 1;
  return o;
}

// The relaxation at one eps, optionally after facial reduction. The guess is
// offset minus the optimum of the written problem.
struct ExportedInstance {
  sdp::Problem problem;
  double offset = 0.0;
};

inline ExportedInstance export_instance(const RunConfig& c) {
  const auto dist = sequential_distribution(cglmp_chain(chain_config(c, c.epsilon)));
  const auto mp = npa::build_problem(dist, {c.setting.y1, c.setting.y2}, build_options(c));
  auto rel = npa::relax(mp, npa::reduce(mp));
  ExportedInstance out{std::move(rel.problem), rel.offset};
  if (c.reduced) {
    auto fr = sdp::reduce_face(out.problem, solver_config(c));
    out.problem = std::move(fr.problem);
    out.offset -= fr.offset;
  }
  return out;
}

inline Outcome run_export_sdp(const RunConfig& c) {
  const auto inst = export_instance(c);
  std::string summary = "maximize <C,X>; " + std::to_string(inst.problem.constraints.size()) + " constraints, block " +
                        std::to_string(inst.problem.dim()) + "\nG = " + number(inst.offset) + " - optimum\n";
  return {sdp::to_sdpa(inst.problem), summary, 0};
}

inline Outcome run(const RunConfig& raw) {
  const RunConfig c = resolve(raw);
  switch (c.command) {
    case Command::Table1: return run_table1(c);
    case Command::Curves: return run_curves(c);
    case Command::GuessDecomp: return run_guess_decomp(c);
    case Command::NpaBound: return run_npa_bound(c);
    case Command::TheoremCheck: return run_theorem_check(c);
    case Command::ExportSdp: return run_export_sdp(c);
  }
  throw config_error("command", "unknown");
}

// 2 for bad input, 3 when the solver gives up, 1 otherwise.
inline int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::ShapeMismatch:
    case ErrorCode::BadSetting:
    case ErrorCode::EpsilonOutOfRange:
    case ErrorCode::ParseError:
    case ErrorCode::ProfileTooSmall:
    case ErrorCode::NoWindow: return 2;
    case ErrorCode::SolverFailure:
    case ErrorCode::NumericalTrouble:
    case ErrorCode::Infeasible: return 3;
    default: return 1;
  }
}

// Runs and writes the artifact: to `out` atomically, or to stdout.
inline int execute(const RunConfig& c, std::ostream& out, std::ostream& err) {
  try {
    const Outcome o = run(c);
    if (c.out.empty()) out << o.csv;
    else sdp::write_file_atomic(c.out, o.csv);
    err << o.summary;
    return o.status;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.code());
  }
}

}  // namespace seqrand::cli
