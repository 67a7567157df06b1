#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "runner.hpp"

using namespace calderon::runner;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("calderon_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

KeyValues parse(const std::string& text) {
  std::istringstream in(text);
  return KeyValues::parse(in, "inline");
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

// Manifest with every threshold of the shipped one, plus replacements.
fs::path manifest_with(const fs::path& dir, const std::string& extra) {
  const fs::path p = dir / "manifest.txt";
  write(p, slurp(Manifest::default_path()) + "\n" + extra + "\n");
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CALDERON_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("key-value files and overrides") {
  auto kv = parse("# comment\nexperiment = forward\nh = 1/32  # trailing\n\nh = 1/64\n");
  CHECK(kv.at("experiment") == "forward");
  CHECK(kv.at("h") == "1/64");
  kv.assign("h=1/128");
  CHECK(kv.at("h") == "1/128");
  CHECK_THROWS_AS(kv.assign("h"), UsageError);
  CHECK_THROWS_AS(kv.assign("=3"), UsageError);
  CHECK_THROWS_AS(parse("no equals sign\n"), UsageError);
  CHECK_THROWS_AS(kv.at("missing"), UsageError);
}

TEST_CASE("numbers and schedules") {
  CHECK(parse_number("1/64", "h") == 1.0 / 64);
  CHECK(parse_number("0.25", "x") == 0.25);
  CHECK(parse_number("-3e-2", "x") == -0.03);
  CHECK_THROWS_AS(parse_number("1/0", "h"), UsageError);
  CHECK_THROWS_AS(parse_number("abc", "x"), UsageError);
  CHECK_THROWS_AS(parse_number("2x", "x"), UsageError);
  CHECK(parse_list("10, 20,1/2", "taus") == std::vector<double>{10, 20, 0.5});
  CHECK_THROWS_AS(parse_list("10,,20", "taus"), UsageError);
  CHECK_THROWS_AS(parse_list("", "taus"), UsageError);
}

TEST_CASE("config validation") {
  const auto ok = ExperimentConfig::from(parse("experiment=cgo-decay\nh=1/32\ntaus=10,20\nmodel=bump\nmodel.rate=3\n"));
  CHECK(ok.h == 1.0 / 32);
  CHECK(ok.taus == std::vector<double>{10, 20});
  CHECK(ok.model_params.at("rate") == 3.0);
  CHECK_THROWS_AS(ExperimentConfig::from(parse("experiment=nope\n")), UsageError);
  CHECK_THROWS_AS(ExperimentConfig::from(parse("h=1/64\n")), UsageError);
  CHECK_THROWS_AS(ExperimentConfig::from(parse("experiment=forward\nh=1/100\n")), UsageError);
  CHECK_THROWS_AS(ExperimentConfig::from(parse("experiment=forward\ncolour=red\n")), UsageError);
  CHECK_THROWS_AS(ExperimentConfig::from(parse("experiment=forward\nm=7\n")), UsageError);
  CHECK_THROWS_AS(ExperimentConfig::from(parse("experiment=forward\nseed=1.5\n")), UsageError);
  for (const auto& name : experiment_names()) CHECK(!experiment_summary(name).empty());
  CHECK(experiment_names().size() == 7);
}

TEST_CASE("config hash follows the content, not the output location") {
  auto a = parse("experiment=forward\nh=1/64\noutput=x\n");
  auto b = parse("output=y\nh=1/64\nexperiment=forward\n");
  CHECK(ExperimentConfig::from(a).hash() == ExperimentConfig::from(b).hash());
  b.assign("seed=2");
  CHECK(ExperimentConfig::from(a).hash() != ExperimentConfig::from(b).hash());
  CHECK(ExperimentConfig::from(a).hash().size() == 16);
}

TEST_CASE("numbers are printed with 15 digits") {
  CHECK(format_number(1.0 / 3.0) == "0.333333333333333");
  CHECK(format_number(-0.0) == "0");
  CHECK(format_number(2.0) == "2");
}

TEST_CASE("empty report gives a header-only CSV") {
  const auto dir = scratch("empty");
  Report r;
  r.experiment = "forward";
  CHECK(r.passed());
  emit_report(r, Format::Csv, dir);
  CHECK(slurp(dir / "checks.csv") == "criterion,check,value,relation,threshold,status\n");
  std::ostringstream human;
  emit_report(r, Format::Human, human);
  CHECK(human.str().find("no checks") != std::string::npos);
}

TEST_CASE("a failing check names its criterion") {
  Report r;
  r.experiment = "x";
  r.add_check(3, "slope", -0.1, Relation::AtMost, -0.233);
  r.add_check(1, "ratio", 0.01, Relation::AtMost, 0.02);
  r.add_check(8, "separation", 1e-3, Relation::AtLeast, 1e-3);
  CHECK(!r.passed());
  CHECK(r.failing_criteria() == std::vector<int>{3});
  std::ostringstream human, csv;
  emit_report(r, Format::Human, human);
  emit_report(r, Format::Csv, csv);
  CHECK(human.str().find("FAIL  criterion 3: slope") != std::string::npos);
  CHECK(human.str().find("failing criteria: 3") != std::string::npos);
  CHECK(csv.str().find("3,slope,-0.1,<=,-0.233,FAIL") != std::string::npos);
  // A non-finite value never passes.
  r.checks.clear();
  r.add_check(1, "nan", std::nan(""), Relation::AtMost, 1.0);
  CHECK(!r.passed());
  r.checks.clear();
  r.failures.push_back("numerical failure: x");
  CHECK(!r.passed());
}

TEST_CASE("same config twice gives byte-identical CSVs") {
  const auto dir = scratch("determinism");
  auto kv = parse("experiment=cgo-decay\nh=1/32\ntaus=10,20,40\n");
  const auto config = ExperimentConfig::from(kv);
  const auto r1 = run_experiment(config), r2 = run_experiment(config);
  CHECK(r1.passed());
  emit_report(r1, Format::Csv, dir / "a");
  emit_report(r2, Format::Csv, dir / "b");
  int files = 0;
  for (const auto& entry : fs::directory_iterator(dir / "a")) {
    if (entry.path().extension() != ".csv") continue;
    ++files;
    CAPTURE(entry.path());
    CHECK(slurp(entry.path()) == slurp(dir / "b" / entry.path().filename()));
  }
  CHECK(files == 3);
  CHECK(slurp(dir / "a" / "run.txt").find("config_hash=" + config.hash()) != std::string::npos);
}

TEST_CASE("thresholds come from the manifest") {
  const auto dir = scratch("manifest");
  auto kv = parse("experiment=cgo-decay\nh=1/32\ntaus=10,20,40\n");
  kv.set("manifest", manifest_with(dir, "cgo.slope_max = -5").string());
  const auto r = run_experiment(ExperimentConfig::from(kv));
  CHECK(r.failing_criteria() == std::vector<int>{3});
  write(dir / "short.txt", "forward.tolerance = 0.02\n");
  kv.set("manifest", (dir / "short.txt").string());
  CHECK_THROWS_AS(run_experiment(ExperimentConfig::from(kv)), UsageError);
}

TEST_CASE("unwritable output is reported") {
  const auto dir = scratch("unwritable");
  write(dir / "file", "x");
  CHECK_THROWS_AS(emit_report(Report{}, Format::Csv, dir / "file" / "sub"), OutputError);
}

TEST_CASE("output root from the environment") {
  ::setenv("CALDERON_OUTPUT_ROOT", "/tmp/root", 1);
  CHECK(resolve_output("runs") == fs::path("/tmp/root/runs"));
  CHECK(resolve_output("/abs") == fs::path("/abs"));
  ::unsetenv("CALDERON_OUTPUT_ROOT");
  CHECK(resolve_output("runs") == fs::path("runs"));
}

TEST_CASE("exit status of the command") {
  const auto dir = scratch("exit");
  const std::string cfg = (dir / "cgo.txt").string();
  write(cfg, "experiment = cgo-decay\nh = 1/32\ntaus = 10,20,40\noutput = " + (dir / "out").string() + "\n");
  CHECK(run_cli("list") == 0);
  CHECK(run_cli("run " + cfg + " -q") == 0);
  CHECK(fs::exists(dir / "out" / "cgo-decay" / "checks.csv"));
  CHECK(run_cli("run " + cfg + " -q manifest=" + manifest_with(dir, "cgo.slope_max = -5").string()) == 1);
  CHECK(run_cli("run " + cfg + " h=1/100") == 2);
  CHECK(run_cli("run " + (dir / "missing.txt").string()) == 2);
  CHECK(run_cli("frobnicate") == 2);
  write(dir / "file", "x");
  CHECK(run_cli("run " + cfg + " -q output=" + (dir / "file" / "sub").string()) == 3);
}
