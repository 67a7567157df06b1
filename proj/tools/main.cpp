// calderon run <config> [key=value ...] | list | calibrate
//
// Exit status: 0 all checks pass, 1 a check or solve failed, 2 usage error,
// 3 output directory not writable.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "calderon/errors.hpp"
#include "runner.hpp"

namespace runner = calderon::runner;

int main(int argc, char** argv) {
  CLI::App app{"Experiment runner for the conductivity recovery library"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run the experiment described by a config file");
  std::string config_path;
  std::vector<std::string> overrides;
  bool quiet = false;
  run->add_option("config", config_path, "key = value config file")->required();
  run->add_option("overrides", overrides, "key=value assignments applied after the file");
  run->add_flag("-q,--quiet", quiet, "skip the human summary");

  auto* list = app.add_subcommand("list", "list the experiments");

  auto* cal = app.add_subcommand("calibrate", "measure the gamma0 = 1 row calibration table");
  int max_m = 2;
  std::string h_text = "1/128", taus_text = "40,50,60,70,80", out_path = "calibration.txt";
  cal->add_option("--max-m", max_m, "largest tensor rank")->check(CLI::Range(1, 3));
  cal->add_option("--spacing", h_text, "grid spacing h");
  cal->add_option("--taus", taus_text, "tau schedule");
  cal->add_option("-o,--output", out_path, "table path, relative to CALDERON_OUTPUT_ROOT");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*list) {
      for (const auto& name : runner::experiment_names())
        std::cout << name << "  " << runner::experiment_summary(name) << "\n";
      return 0;
    }
    if (*cal) {
      const auto path = runner::resolve_output(out_path);
      runner::calibrate(max_m, runner::parse_number(h_text, "h"), runner::parse_list(taus_text, "taus"), path);
      std::cout << "wrote " << path.string() << "\n";
      return 0;
    }
    auto kv = runner::KeyValues::load(config_path);
    for (const auto& o : overrides) kv.assign(o);
    const auto config = runner::ExperimentConfig::from(kv);
    const auto report = runner::run_experiment(config);
    const auto dir = runner::resolve_output(config.output) / config.experiment;
    runner::emit_report(report, runner::Format::Csv, dir);
    if (!quiet) runner::emit_report(report, runner::Format::Human, std::cout);
    if (!report.passed()) {
      std::cerr << "FAIL:";
      for (int c : report.failing_criteria()) std::cerr << " criterion " << c;
      if (!report.failures.empty()) std::cerr << " (" << report.failures.size() << " numerical failures)";
      std::cerr << "\n";
      return 1;
    }
    return 0;
  } catch (const runner::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const runner::OutputError& e) {
    std::cerr << "output error: " << e.what() << "\n";
    return 3;
  } catch (const calderon::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
