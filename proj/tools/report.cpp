#include "runner.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

namespace calderon::runner {

namespace {

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw OutputError("cannot write " + path.string());
  return out;
}

void close_output(std::ofstream& out, const std::filesystem::path& path) {
  out.close();
  if (!out) throw OutputError("write failed for " + path.string());
}

const char* relation_text(Relation r) { return r == Relation::AtMost ? "<=" : ">="; }

Table checks_table(const Report& report) {
  Table t("checks", {"criterion", "check", "value", "relation", "threshold", "status"});
  for (const auto& c : report.checks)
    t.add({std::to_string(c.criterion), c.name, c.timing ? "" : format_number(c.value), relation_text(c.relation),
           format_number(c.threshold), c.pass ? "PASS" : "FAIL"});
  for (const auto& f : report.failures) t.add({"", f, "", "", "", "FAIL"});
  return t;
}

std::string quoted(const std::string& cell) {
  if (cell.find_first_of(",\"\n") == std::string::npos) return cell;
  std::string out = "\"";
  for (char ch : cell) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return out + "\"";
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream out;
  out << std::setprecision(15) << v + 0.0;
  return out.str();
}

void Table::add(std::vector<std::string> row) {
  if (row.size() != columns.size()) throw std::logic_error("table " + name + ": row width does not match the header");
  rows.push_back(std::move(row));
}

void Table::write_csv(std::ostream& out) const {
  for (std::size_t k = 0; k < columns.size(); ++k) out << (k ? "," : "") << quoted(columns[k]);
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t k = 0; k < row.size(); ++k) out << (k ? "," : "") << quoted(row[k]);
    out << "\n";
  }
}

Check& Report::add_check(int criterion, std::string name, double value, Relation relation, double threshold,
                         bool timing) {
  Check c{criterion, std::move(name), value, threshold, relation, timing, false};
  c.pass = std::isfinite(value) && (relation == Relation::AtMost ? value <= threshold : value >= threshold);
  checks.push_back(std::move(c));
  return checks.back();
}

bool Report::passed() const {
  if (!failures.empty()) return false;
  for (const auto& c : checks)
    if (!c.pass) return false;
  return true;
}

std::vector<int> Report::failing_criteria() const {
  std::set<int> out;
  for (const auto& c : checks)
    if (!c.pass) out.insert(c.criterion);
  return {out.begin(), out.end()};
}

void emit_report(const Report& report, Format format, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw OutputError("cannot create " + dir.string() + ": " + ec.message());
  if (format == Format::Human) {
    const auto path = dir / "summary.txt";
    auto out = open_output(path);
    emit_report(report, Format::Human, out);
    close_output(out, path);
    return;
  }
  for (const auto& t : report.tables) {
    const auto path = dir / (t.name + ".csv");
    auto out = open_output(path);
    t.write_csv(out);
    close_output(out, path);
  }
  const auto checks = dir / "checks.csv";
  auto out = open_output(checks);
  checks_table(report).write_csv(out);
  close_output(out, checks);
  // Run metadata changes between runs; it stays out of the CSV files.
  const auto meta = dir / "run.txt";
  auto m = open_output(meta);
  m << "experiment=" << report.experiment << "\nconfig_hash=" << report.config_hash << "\nwall_seconds="
    << std::fixed << std::setprecision(3) << report.wall_seconds << "\nstatus=" << (report.passed() ? "PASS" : "FAIL")
    << "\n";
  close_output(m, meta);
}

void emit_report(const Report& report, Format format, std::ostream& out) {
  if (format == Format::Csv) {
    checks_table(report).write_csv(out);
    return;
  }
  out << report.experiment << " [" << report.config_hash << "] " << std::fixed << std::setprecision(1)
      << report.wall_seconds << " s\n";
  out.unsetf(std::ios::floatfield);
  for (const auto& c : report.checks) {
    out << "  " << (c.pass ? "PASS" : "FAIL") << "  criterion " << c.criterion << ": " << c.name << "  "
        << format_number(c.value) << " " << relation_text(c.relation) << " " << format_number(c.threshold) << "\n";
  }
  for (const auto& f : report.failures) out << "  FAIL  " << f << "\n";
  if (report.checks.empty() && report.failures.empty()) out << "  no checks\n";
  const auto failing = report.failing_criteria();
  if (!failing.empty()) {
    out << "failing criteria:";
    for (int c : failing) out << " " << c;
    out << "\n";
  }
}

}  // namespace calderon::runner
