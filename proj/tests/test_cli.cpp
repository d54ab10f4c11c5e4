#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <functional>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "seqrand/cli.hpp"

using namespace seqrand;
using namespace seqrand::cli;
namespace fs = std::filesystem;

namespace {

struct Run {
  int status = -1;
  std::string out;
};

// Runs the installed binary and captures stdout; stderr is discarded.
Run run_binary(const std::string& args) {
  const std::string cmd = std::string(SEQRAND_CLI_BINARY) + " " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  for (std::size_t n; (n = fread(buf, 1, sizeof buf, pipe)) > 0;) r.out.append(buf, n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "seqrand_cli_test";
  fs::create_directories(dir);
  return dir / name;
}

void expect_config_error(const std::function<void()>& f, const std::string& field) {
  try {
    f();
    FAIL() << "no error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
    EXPECT_NE(std::string(e.what()).find("'" + field + "'"), std::string::npos) << e.what();
  }
}

}  // namespace

TEST(Grid, RangeForm) {
  const auto pts = parse_grid("0:1:0.001").points(cglmp::StateKind::MES);
  ASSERT_EQ(pts.size(), 1001u);
  EXPECT_EQ(pts.front(), 0.0);
  EXPECT_EQ(pts.back(), 1.0);
  EXPECT_EQ(parse_grid("0.2:0.3:0.05").points(cglmp::StateKind::MES).size(), 3u);
}

TEST(Grid, WindowFormStaysInside) {
  const auto w = double_violation_window(cglmp::StateKind::MVS);
  const auto pts = parse_grid("window:7").points(cglmp::StateKind::MVS);
  ASSERT_EQ(pts.size(), 7u);
  for (double e : pts) {
    EXPECT_GT(e, w.low);
    EXPECT_LT(e, w.high);
  }
}

TEST(Grid, Rejections) {
  for (const char* bad : {"0:2:0.1", "0.5:0.1:0.1", "0:1:0", "0:1", "a:b:c", "window:0", "window:x", "0:1:1e-9"})
    expect_config_error([&] { parse_grid(bad); }, "grid");
}

TEST(Parsing, SettingsAndEnums) {
  const auto s = parse_setting("1,0,1");
  EXPECT_EQ(s.x, 1u);
  EXPECT_EQ(s.y1, 0u);
  EXPECT_EQ(s.y2, 1u);
  expect_config_error([] { parse_setting("2,0,0"); }, "setting");
  expect_config_error([] { parse_setting("0,0"); }, "setting");
  expect_config_error([] { parse_state("ghz"); }, "state");
  expect_config_error([] { parse_mode("luders"); }, "mode");
  expect_config_error([] { parse_scope("eve"); }, "scope");
  expect_config_error([] { parse_profile("huge"); }, "profile");
}

TEST(Resolve, DefaultsAndConflicts) {
  RunConfig c;
  c.command = Command::Curves;
  const auto r = resolve(c);
  EXPECT_EQ(*r.state, cglmp::StateKind::MES);
  EXPECT_EQ(*r.mode, InstrumentMode::SqrtLuders);
  EXPECT_EQ(r.grid->points(cglmp::StateKind::MES).size(), 1001u);
  c.command = Command::GuessDecomp;
  EXPECT_EQ(*resolve(c).mode, InstrumentMode::ExtremalMixture);
  c.command = Command::NpaBound;
  c.scope = GuessScope::Global;
  expect_config_error([&] { resolve(c); }, "scope");
  c.scope = GuessScope::Local;
  c.tol = 2.0;
  expect_config_error([&] { resolve(c); }, "tol");
  c.tol.reset();
  c.command = Command::ExportSdp;
  expect_config_error([&] { resolve(c); }, "out");
}

TEST(Json, OverridesAndUnknownKeys) {
  const auto o = overrides_from_json(nlohmann::json::parse(R"({"state":"mvs","setting":[1,1,0],"seed":3,"complex":true})"));
  RunConfig c;
  o.apply(c);
  EXPECT_EQ(*c.state, cglmp::StateKind::MVS);
  EXPECT_EQ(c.setting.x, 1u);
  EXPECT_EQ(c.setting.y2, 0u);
  EXPECT_EQ(c.seed, 3u);
  EXPECT_TRUE(c.complex_moments);
  expect_config_error([] { overrides_from_json(nlohmann::json::parse(R"({"sate":"mes"})")); }, "sate");
  expect_config_error([] { overrides_from_json(nlohmann::json::parse(R"({"seed":-1})")); }, "seed");
  expect_config_error([] { overrides_from_json(nlohmann::json::parse(R"({"reduced":"yes"})")); }, "reduced");
}

TEST(ExitCodes, Mapping) {
  EXPECT_EQ(exit_code(ErrorCode::ConfigError), 2);
  EXPECT_EQ(exit_code(ErrorCode::ParseError), 2);
  EXPECT_EQ(exit_code(ErrorCode::EpsilonOutOfRange), 2);
  EXPECT_EQ(exit_code(ErrorCode::SolverFailure), 3);
  EXPECT_EQ(exit_code(ErrorCode::Infeasible), 3);
  EXPECT_EQ(exit_code(ErrorCode::NotPsd), 1);
}

TEST(Execute, AtomicOutputAndNoFileOnError) {
  const auto path = scratch("table1.csv");
  fs::remove(path);
  RunConfig c;
  c.out = path.string();
  std::ostringstream out, err;
  EXPECT_EQ(execute(c, out, err), 0);
  EXPECT_TRUE(out.str().empty());
  ASSERT_TRUE(fs::exists(path));
  EXPECT_FALSE(fs::exists(path.string() + ".tmp"));

  const auto bad = scratch("bad.dat-s");
  fs::remove(bad);
  RunConfig e;
  e.command = Command::ExportSdp;
  e.out = bad.string();
  e.epsilon = 1.5;
  EXPECT_EQ(execute(e, out, err), 2);
  EXPECT_FALSE(fs::exists(bad));
  EXPECT_FALSE(fs::exists(bad.string() + ".tmp"));
}

TEST(Binary, Table1) {
  const auto r = run_binary("table1");
  ASSERT_EQ(r.status, 0);
  EXPECT_NE(r.out.find("2.8729"), std::string::npos);
  EXPECT_NE(r.out.find("eps_low"), std::string::npos);
  EXPECT_EQ(lines(r.out).size(), 9u);
}

TEST(Binary, CurvesFullGrid) {
  const auto r = run_binary("curves --state mvs --grid 0:1:0.001");
  ASSERT_EQ(r.status, 0);
  const auto ls = lines(r.out);
  ASSERT_EQ(ls.size(), 1002u);
  EXPECT_EQ(ls[1].substr(0, 2), "0,");
  EXPECT_EQ(ls.back().substr(0, 2), "1,");
}

TEST(Binary, TheoremCheckPasses) {
  const auto r = run_binary("theorem-check --seed 7 --instances 100");
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(lines(r.out).size(), 3u);
}

TEST(Binary, ConfigFileAndFlagPrecedence) {
  const auto cfg = scratch("cfg.json");
  std::ofstream(cfg) << R"({"state": "mvs", "grid": "0:1:0.5"})";
  const auto from_file = lines(run_binary("curves --config " + cfg.string()).out);
  ASSERT_EQ(from_file.size(), 4u);
  EXPECT_EQ(from_file[3].substr(0, 7), "1,2.914");
  const auto flag_wins = lines(run_binary("curves --config " + cfg.string() + " --state mes").out);
  ASSERT_EQ(flag_wins.size(), 4u);
  EXPECT_EQ(flag_wins[3].substr(0, 7), "1,2.872");
}

TEST(Binary, BadInputExitsTwo) {
  EXPECT_EQ(run_binary("curves --grid 0:2:0.1").status, 2);
  EXPECT_EQ(run_binary("curves --bogus").status, 2);
  EXPECT_EQ(run_binary("guess-decomp --setting 3,0,0").status, 2);
  const auto cfg = scratch("unknown.json");
  std::ofstream(cfg) << R"({"stat": "mes"})";
  EXPECT_EQ(run_binary("table1 --config " + cfg.string()).status, 2);
  EXPECT_EQ(run_binary("table1 --config " + scratch("missing.json").string()).status, 2);
}

TEST(Binary, Deterministic) {
  const auto a = run_binary("guess-decomp --grid window:5 --scope global");
  const auto b = run_binary("guess-decomp --grid window:5 --scope global");
  ASSERT_EQ(a.status, 0);
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(lines(a.out).size(), 6u);
}
