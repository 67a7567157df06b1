#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace calderon::runner {

// Bad config or command line; exit status 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Output directory cannot be written; exit status 3.
class OutputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat "key = value" text. '#' starts a comment; later assignments win.
class KeyValues {
 public:
  static KeyValues parse(std::istream& in, const std::string& source);
  static KeyValues load(const std::filesystem::path& path);

  // "key=value"; refuses anything else.
  void assign(const std::string& assignment);
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const std::string& at(const std::string& key) const;
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// "1/64" or a plain decimal.
double parse_number(const std::string& text, const std::string& key);
std::vector<double> parse_list(const std::string& text, const std::string& key);

// Acceptance thresholds, one file for the CLI and the acceptance binary.
class Manifest {
 public:
  explicit Manifest(KeyValues values) : values_(std::move(values)) {}
  static Manifest load(const std::filesystem::path& path);
  // CALDERON_MANIFEST when set, else the file installed with the sources.
  static std::filesystem::path default_path();

  double number(const std::string& key) const;

  std::filesystem::path source;

 private:
  KeyValues values_;
};

const std::vector<std::string>& experiment_names();
std::string experiment_summary(const std::string& name);

struct ExperimentConfig {
  std::string experiment;
  std::optional<double> h;                    // experiment default when absent
  std::optional<std::vector<double>> taus;    // experiment default when absent
  std::optional<std::vector<double>> sigmas;
  int m = 1;
  std::string model = "default";
  std::map<std::string, double> model_params; // "model.<name>" keys
  std::filesystem::path output = "out";
  std::uint64_t seed = 1;
  std::map<std::string, std::string> extra;   // experiment knobs, validated by the pipeline
  std::string manifest;                       // empty for Manifest::default_path()

  // Refuses unknown keys, schedules that are empty, and h outside {1/32, 1/64, 1/128, 1/256}.
  static ExperimentConfig from(const KeyValues& kv);
  // Canonical "key=value" lines, sorted; the hash is FNV-1a over them.
  std::string canonical() const;
  std::string hash() const;

  double spacing(double fallback) const { return h.value_or(fallback); }
  double number(const std::string& key, double fallback) const;
  std::string text(const std::string& key, const std::string& fallback) const;
};

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  Table(std::string name, std::vector<std::string> columns) : name(std::move(name)), columns(std::move(columns)) {}
  void add(std::vector<std::string> row);
  void write_csv(std::ostream& out) const;
};

// 15 significant digits, -0 printed as 0.
std::string format_number(double v);

enum class Relation { AtMost, AtLeast };

struct Check {
  int criterion = 0;
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  Relation relation = Relation::AtMost;
  bool timing = false;  // wall-clock values are kept out of the CSV
  bool pass = false;
};

struct Report {
  std::string experiment;
  std::string config_hash;
  double wall_seconds = 0.0;
  std::vector<Table> tables;
  std::vector<Check> checks;
  std::vector<std::string> failures;  // numerical failures, each fails the run

  Check& add_check(int criterion, std::string name, double value, Relation relation, double threshold,
                   bool timing = false);
  bool passed() const;
  // Criteria with at least one failing check, ascending.
  std::vector<int> failing_criteria() const;
};

enum class Format { Csv, Human };

// Csv writes one file per table plus checks.csv into dir and the run
// metadata into run.txt; Human writes a summary to out.
void emit_report(const Report& report, Format format, const std::filesystem::path& dir);
void emit_report(const Report& report, Format format, std::ostream& out);

// CALDERON_OUTPUT_ROOT joined with a relative config output.
std::filesystem::path resolve_output(const std::filesystem::path& output);

Report run_experiment(const ExperimentConfig& config);

// Measured gamma0 = 1 calibration for rows up to max_m, written to path.
void calibrate(int max_m, double h, const std::vector<double>& taus, const std::filesystem::path& path);

}  // namespace calderon::runner
