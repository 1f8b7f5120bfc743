#include "defectkit/cli.hpp"

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace defectkit;
namespace cli = defectkit::cli;

namespace {

const std::string kHolonomy =
    R"({"cmd":"holonomy","body":{"body":"disclination","alpha":0.25,"r0":0.5,"r1":2,"archetype":{"kind":"isotropic-distance"}},"loop":"core"})";
const std::string kHexHomogenize =
    R"({"cmd":"homogenize","metric":"sphere-cap","n":[8,16,32],"archetype":{"kind":"n-fold-discrete","n":3}})";

std::vector<cli::ConfigIssue> issues_of(const std::string& text) {
  try {
    cli::parse_config(text);
  } catch (const cli::ConfigError& e) {
    return e.issues();
  }
  return {};
}

bool has_pointer(const std::vector<cli::ConfigIssue>& issues, const std::string& pointer) {
  for (const auto& i : issues) {
    if (i.pointer == pointer) return true;
  }
  return false;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("defectkit_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

int run_binary(const std::string& args) {
  const int status = std::system((std::string(DEFECTKIT_CLI_PATH) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(ParseConfig, HolonomyExampleIsValid) {
  const cli::RunConfig cfg = cli::parse_config(kHolonomy);
  EXPECT_EQ(cfg.cmd, "holonomy");
  ASSERT_TRUE(cfg.body.has_value());
  EXPECT_EQ(cfg.body->kind, "disclination");
  EXPECT_DOUBLE_EQ(cfg.body->alpha, 0.25);
  EXPECT_DOUBLE_EQ(cfg.body->r0, 0.5);
  EXPECT_DOUBLE_EQ(cfg.body->r1, 2.0);
  EXPECT_EQ(cfg.body->archetype.kind, "isotropic-distance");
  EXPECT_EQ(cfg.loop.kind, "core");
}

TEST(ParseConfig, MissingAlphaNamesPointer) {
  const auto issues = issues_of(
      R"({"cmd":"holonomy","body":{"body":"disclination","r0":0.5,"r1":2,"archetype":{"kind":"isotropic-distance"}},"loop":"core"})");
  ASSERT_FALSE(issues.empty());
  EXPECT_TRUE(has_pointer(issues, "/body/alpha"));
}

TEST(ParseConfig, HexagonalHomogenizeIsValid) {
  const cli::RunConfig cfg = cli::parse_config(kHexHomogenize);
  EXPECT_EQ(cfg.cmd, "homogenize");
  EXPECT_EQ(cfg.metric.kind, "sphere-cap");
  EXPECT_EQ(cfg.ns, (std::vector<int>{8, 16, 32}));
  ASSERT_TRUE(cfg.archetype.has_value());
  EXPECT_EQ(cfg.archetype->kind, "n-fold-discrete");
  EXPECT_EQ(cfg.archetype->n, 3);
}

TEST(ParseConfig, UnknownKeysRejected) {
  EXPECT_TRUE(has_pointer(issues_of(R"({"cmd":"symmetry","archetype":{"kind":"isotropic-distance"},"bogus":1})"),
                          "/bogus"));
  EXPECT_TRUE(has_pointer(
      issues_of(R"({"cmd":"symmetry","archetype":{"kind":"isotropic-distance","colour":"red"}})"), "/archetype/colour"));
  // keys that exist for other commands are still unknown here
  EXPECT_TRUE(has_pointer(issues_of(R"({"cmd":"validate","body":{"body":"dislocation","eps":0.1,"r1":1},"n":[8]})"),
                          "/n"));
}

TEST(ParseConfig, AllViolationsReported) {
  const auto issues = issues_of(
      R"({"cmd":"holonomy","body":{"body":"disclination","r0":-1,"archetype":{"kind":"cubic"}},"loop":"square"})");
  EXPECT_GE(issues.size(), 3u);
  EXPECT_TRUE(has_pointer(issues, "/body/alpha"));
  EXPECT_TRUE(has_pointer(issues, "/body/archetype/kind"));
}

TEST(ParseConfig, MalformedJsonReportsLineAndColumn) {
  try {
    cli::parse_config("{\n  \"cmd\": \"validate\",\n  \"body\": ]\n}");
    FAIL() << "malformed JSON accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::parse);
    EXPECT_NE(std::string(e.what()).find("line 3, column"), std::string::npos) << e.what();
  }
}

TEST(ParseConfig, TolerancesStrictlyPositive) {
  EXPECT_TRUE(has_pointer(
      issues_of(R"({"cmd":"symmetry","archetype":{"kind":"isotropic-distance"},"tolerances":{"symmetry":0}})"),
      "/tolerances/symmetry"));
  EXPECT_FALSE(
      issues_of(R"({"cmd":"symmetry","archetype":{"kind":"isotropic-distance"},"tolerances":{"symmetry":1e-6}})")
          .size());
  Tolerances tol;
  cli::apply_tolerance_override(tol, "group=1e-4");
  EXPECT_DOUBLE_EQ(tol.group, 1e-4);
  for (const char* bad : {"group=0", "group=-1", "group", "nonsense=1", "group=abc"}) {
    EXPECT_THROW(cli::apply_tolerance_override(tol, bad), Error) << bad;
  }
}

TEST(ParseConfig, NotAnObject) {
  EXPECT_THROW(cli::parse_config("[1, 2]"), cli::ConfigError);
  EXPECT_TRUE(has_pointer(issues_of(R"({"cmd":"explode"})"), "/cmd"));
}

TEST(Run, ValidateDislocationPasses) {
  const cli::RunOutcome out = cli::run(cli::parse_config(
      R"({"cmd":"validate","body":{"body":"dislocation","eps":0.1,"r1":1,"archetype":{"kind":"isotropic-distance"}}})"));
  EXPECT_EQ(out.exit_code, 0);
  EXPECT_EQ(out.report["status"], "ok");
  EXPECT_TRUE(out.report["result"]["closed"]["pass"].get<bool>());
  EXPECT_TRUE(out.report["result"]["compatible"]["pass"].get<bool>());
}

TEST(Run, HolonomyReportsQuarterTurn) {
  const cli::RunOutcome out = cli::run(cli::parse_config(kHolonomy));
  ASSERT_EQ(out.exit_code, 0);
  EXPECT_NEAR(out.report["result"]["chart"]["angle"].get<double>(), kTwoPi * 0.25, 1e-8);
  EXPECT_NEAR(out.report["result"]["ode"]["angle"].get<double>(), kTwoPi * 0.25, 1e-5);
  EXPECT_TRUE(out.report["result"]["chart"]["pass"].get<bool>());
}

TEST(Run, HexagonalHomogenizeIsObstruction) {
  const cli::RunOutcome out = cli::run(cli::parse_config(kHexHomogenize));
  EXPECT_EQ(out.exit_code, 3);
  EXPECT_EQ(out.report["status"], "obstruction");
  EXPECT_EQ(out.report["error"]["code"], "obstruction");
  EXPECT_NE(out.report["error"]["message"].get<std::string>().find("symmetry group"), std::string::npos);
  EXPECT_TRUE(out.report["result"]["obstruction"]["rejected"].get<bool>());
  EXPECT_FALSE(out.csv.has_value());
}

TEST(Run, IncompatibleDisclinationIsExitThree) {
  const cli::RunOutcome out = cli::run(cli::parse_config(
      R"({"cmd":"validate","body":{"body":"disclination","alpha":0.25,"r0":0.5,"r1":2,"archetype":{"kind":"n-fold-discrete","n":3}}})"));
  EXPECT_EQ(out.exit_code, 3);
  EXPECT_EQ(out.report["error"]["code"], "incompatible-disclination");
  EXPECT_GT(out.report["error"]["distance"].get<double>(), 0.1);
}

TEST(Run, BurgersAcrossDisclinationIsExitThree) {
  const cli::RunOutcome out = cli::run(cli::parse_config(
      R"({"cmd":"burgers","body":{"body":"disclination","alpha":0.25,"r0":0.5,"r1":2},"loop":"core"})"));
  EXPECT_EQ(out.exit_code, 3);
  EXPECT_EQ(out.report["error"]["code"], "disclination-present");
}

TEST(Run, AnisotropyIsExitFour) {
  cli::RunConfig cfg = cli::parse_config(R"({"cmd":"homogenize","metric":"sphere-cap","n":[2]})");
  cfg.tol.theta_min = 1.2;
  const cli::RunOutcome out = cli::run(cfg);
  EXPECT_EQ(out.exit_code, 4);
  EXPECT_EQ(out.report["error"]["code"], "anisotropy");
}

TEST(Run, ExitCodeMapping) {
  EXPECT_EQ(cli::exit_code_for(ErrorCode::validation), 2);
  EXPECT_EQ(cli::exit_code_for(ErrorCode::domain), 2);
  EXPECT_EQ(cli::exit_code_for(ErrorCode::incompatible_disclination), 3);
  EXPECT_EQ(cli::exit_code_for(ErrorCode::obstruction), 3);
  EXPECT_EQ(cli::exit_code_for(ErrorCode::stalled_descent), 4);
  EXPECT_EQ(cli::exit_code_for(ErrorCode::metric_degeneracy), 4);
}

TEST(Run, HomogenizeCsvIsDeterministic) {
  const std::string text = R"({"cmd":"homogenize","metric":"sphere-cap","n":[4,8]})";
  const cli::RunOutcome a = cli::run(cli::parse_config(text));
  const cli::RunOutcome b = cli::run(cli::parse_config(text));
  ASSERT_EQ(a.exit_code, 0);
  ASSERT_TRUE(a.csv && b.csv);
  EXPECT_EQ(*a.csv, *b.csv);
  EXPECT_EQ(a.report.dump(), b.report.dump());
  EXPECT_EQ(a.csv->substr(0, a.csv->find('\n')), "n,quantity,error,observed_order");
  // one row per (n, quantity)
  EXPECT_EQ(std::count(a.csv->begin(), a.csv->end(), '\n'), 1 + 2 * 7);
}

TEST(Run, ReportsRoundTripThroughJson) {
  for (const std::string& text :
       {kHolonomy, std::string(R"({"cmd":"symmetry","archetype":{"kind":"n-fold-discrete","n":2}})"),
        std::string(R"({"cmd":"minimize","body":{"body":"trivial"},"resolution":3,"boundary":{"kind":"identity"}})")}) {
    const cli::RunOutcome out = cli::run(cli::parse_config(text));
    ASSERT_EQ(out.exit_code, 0) << out.report.dump();
    EXPECT_EQ(cli::Json::parse(out.report.dump(2)), out.report);
  }
}

TEST(Binary, ExitCodesAndArtifacts) {
  const std::string examples = std::string(DEFECTKIT_SOURCE_DIR) + "/docs/examples/";
  const auto dir = scratch_dir("binary");
  EXPECT_EQ(run_binary("validate --config " + examples + "validate_dislocation.json --out " + (dir / "v").string()), 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "v" / "report.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "v" / "meta.json"));
  EXPECT_FALSE(std::filesystem::exists(dir / "v" / "convergence.csv"));

  EXPECT_EQ(run_binary("--config " + examples + "homogenize_obstruction.json --out " + (dir / "o").string()), 3);
  const cli::Json report = cli::Json::parse(slurp(dir / "o" / "report.json"));
  EXPECT_EQ(report["exit_code"], 3);

  std::ofstream(dir / "bad.json") << R"({"cmd":"holonomy","body":{"body":"disclination","r0":0.5,"r1":2}})";
  EXPECT_EQ(run_binary("--config " + (dir / "bad.json").string() + " --out " + (dir / "b").string()), 2);
  const cli::Json bad = cli::Json::parse(slurp(dir / "b" / "report.json"));
  EXPECT_EQ(bad["error"]["issues"][0]["pointer"], "/body/alpha");

  std::ofstream(dir / "broken.json") << "{\"cmd\": ";
  EXPECT_EQ(run_binary("--config " + (dir / "broken.json").string()), 2);
  EXPECT_EQ(run_binary("--config " + examples + "symmetry_hexagonal.json --tol symmetry=-1"), 2);
  EXPECT_EQ(run_binary("--config " + (dir / "missing.json").string()), 2);
  EXPECT_EQ(run_binary("burgers --config " + examples + "validate_dislocation.json"), 2);
}

TEST(Binary, CsvByteIdenticalAcrossRuns) {
  const auto dir = scratch_dir("determinism");
  std::ofstream(dir / "cfg.json") << R"({"cmd":"homogenize","metric":"sphere-cap","n":[4,8]})";
  ASSERT_EQ(run_binary("--config " + (dir / "cfg.json").string() + " --out " + (dir / "a").string()), 0);
  ASSERT_EQ(run_binary("--config " + (dir / "cfg.json").string() + " --out " + (dir / "b").string()), 0);
  EXPECT_EQ(slurp(dir / "a" / "convergence.csv"), slurp(dir / "b" / "convergence.csv"));
  EXPECT_EQ(slurp(dir / "a" / "report.json"), slurp(dir / "b" / "report.json"));
  const cli::Json meta = cli::Json::parse(slurp(dir / "a" / "meta.json"));
  EXPECT_TRUE(meta.contains("timestamp"));
  EXPECT_EQ(meta["files"], cli::Json::array({"report.json", "convergence.csv"}));
}

TEST(Binary, SeedFlagReachesReport) {
  const auto dir = scratch_dir("seed");
  const std::string examples = std::string(DEFECTKIT_SOURCE_DIR) + "/docs/examples/";
  ASSERT_EQ(run_binary("--config " + examples + "symmetry_hexagonal.json --seed 7 --out " + dir.string()), 0);
  EXPECT_EQ(cli::Json::parse(slurp(dir / "report.json"))["result"]["seed"], 7);
}
