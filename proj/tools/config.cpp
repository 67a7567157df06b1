#include "runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#ifndef CALDERON_MANIFEST_PATH
#define CALDERON_MANIFEST_PATH "config/acceptance.txt"
#endif

namespace calderon::runner {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::pair<std::string, std::string> split_assignment(const std::string& line, const std::string& where) {
  const auto eq = line.find('=');
  if (eq == std::string::npos) throw UsageError(where + ": expected key = value, got '" + line + "'");
  std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
  if (key.empty()) throw UsageError(where + ": empty key");
  if (value.empty()) throw UsageError(where + ": empty value for " + key);
  return {key, value};
}

const std::vector<std::string> kKnownKeys = {"experiment", "h", "taus", "sigmas", "m", "model", "output", "seed",
                                             "manifest"};

// Knobs an experiment may read through number() and text().
const std::vector<std::string> kExtraKeys = {"modes", "sample_h", "beta", "functions", "tuples", "points",
                                             "calibration", "rows", "rho"};

}  // namespace

KeyValues KeyValues::parse(std::istream& in, const std::string& source) {
  KeyValues kv;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto [key, value] = split_assignment(line, source + ":" + std::to_string(number));
    kv.values_[key] = value;
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read " + path.string());
  return parse(in, path.string());
}

void KeyValues::assign(const std::string& assignment) {
  auto [key, value] = split_assignment(assignment, "override");
  values_[key] = value;
}

const std::string& KeyValues::at(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("missing key " + key);
  return it->second;
}

double parse_number(const std::string& text, const std::string& key) {
  const auto slash = text.find('/');
  try {
    std::size_t used = 0;
    if (slash == std::string::npos) {
      const double v = std::stod(text, &used);
      if (used == text.size() && std::isfinite(v)) return v;
    } else {
      const std::string num = trim(text.substr(0, slash)), den = trim(text.substr(slash + 1));
      std::size_t un = 0, ud = 0;
      const double a = std::stod(num, &un), b = std::stod(den, &ud);
      if (un == num.size() && ud == den.size() && b != 0.0) return a / b;
    }
  } catch (const std::exception&) {
  }
  throw UsageError("bad number for " + key + ": '" + text + "'");
}

std::vector<double> parse_list(const std::string& text, const std::string& key) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) throw UsageError("empty entry in " + key);
    out.push_back(parse_number(item, key));
  }
  if (out.empty()) throw UsageError("empty schedule " + key);
  return out;
}

Manifest Manifest::load(const std::filesystem::path& path) {
  Manifest m(KeyValues::load(path));
  m.source = path;
  return m;
}

std::filesystem::path Manifest::default_path() {
  if (const char* env = std::getenv("CALDERON_MANIFEST"); env && *env) return env;
  return CALDERON_MANIFEST_PATH;
}

double Manifest::number(const std::string& key) const {
  if (!values_.has(key)) throw UsageError("acceptance manifest " + source.string() + " has no " + key);
  return parse_number(values_.at(key), key);
}

ExperimentConfig ExperimentConfig::from(const KeyValues& kv) {
  ExperimentConfig c;
  for (const auto& [key, value] : kv.values()) {
    if (key.rfind("model.", 0) == 0) {
      c.model_params[key.substr(6)] = parse_number(value, key);
      continue;
    }
    if (std::find(kKnownKeys.begin(), kKnownKeys.end(), key) != kKnownKeys.end()) continue;
    if (std::find(kExtraKeys.begin(), kExtraKeys.end(), key) == kExtraKeys.end())
      throw UsageError("unknown config key " + key);
    c.extra[key] = value;
  }
  c.experiment = kv.at("experiment");
  const auto& names = experiment_names();
  if (std::find(names.begin(), names.end(), c.experiment) == names.end())
    throw UsageError("unknown experiment " + c.experiment + " (see 'list')");
  if (kv.has("h")) {
    const double h = parse_number(kv.at("h"), "h");
    bool allowed = false;
    for (int n : {32, 64, 128, 256}) allowed = allowed || std::abs(h * n - 1.0) < 1e-12;
    if (!allowed) throw UsageError("h must be one of 1/32, 1/64, 1/128, 1/256");
    c.h = h;
  }
  if (kv.has("taus")) c.taus = parse_list(kv.at("taus"), "taus");
  if (kv.has("sigmas")) c.sigmas = parse_list(kv.at("sigmas"), "sigmas");
  if (kv.has("m")) {
    const double m = parse_number(kv.at("m"), "m");
    if (m != std::floor(m) || m < 1 || m > 6) throw UsageError("m must be an integer in 1..6");
    c.m = static_cast<int>(m);
  }
  if (kv.has("model")) c.model = kv.at("model");
  if (kv.has("output")) c.output = kv.at("output");
  if (kv.has("seed")) {
    const double s = parse_number(kv.at("seed"), "seed");
    if (s != std::floor(s) || s < 0) throw UsageError("seed must be a non-negative integer");
    c.seed = static_cast<std::uint64_t>(s);
  }
  if (kv.has("manifest")) c.manifest = kv.at("manifest");
  return c;
}

double ExperimentConfig::number(const std::string& key, double fallback) const {
  const auto it = extra.find(key);
  return it == extra.end() ? fallback : parse_number(it->second, key);
}

std::string ExperimentConfig::text(const std::string& key, const std::string& fallback) const {
  const auto it = extra.find(key);
  return it == extra.end() ? fallback : it->second;
}

std::string ExperimentConfig::canonical() const {
  std::map<std::string, std::string> lines;
  const auto list = [](const std::vector<double>& v) {
    std::string s;
    for (double x : v) s += (s.empty() ? "" : ",") + format_number(x);
    return s;
  };
  lines["experiment"] = experiment;
  if (h) lines["h"] = format_number(*h);
  if (taus) lines["taus"] = list(*taus);
  if (sigmas) lines["sigmas"] = list(*sigmas);
  lines["m"] = std::to_string(m);
  lines["model"] = model;
  for (const auto& [k, v] : model_params) lines["model." + k] = format_number(v);
  lines["seed"] = std::to_string(seed);
  for (const auto& [k, v] : extra) lines[k] = v;
  std::string out;
  for (const auto& [k, v] : lines) out += k + "=" + v + "\n";
  return out;
}

std::string ExperimentConfig::hash() const {
  std::uint64_t fnv = 14695981039346656037ull;
  for (unsigned char ch : canonical()) {
    fnv ^= ch;
    fnv *= 1099511628211ull;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << fnv;
  return out.str();
}

std::filesystem::path resolve_output(const std::filesystem::path& output) {
  if (output.is_absolute()) return output;
  if (const char* env = std::getenv("CALDERON_OUTPUT_ROOT"); env && *env) return std::filesystem::path(env) / output;
  return output;
}

}  // namespace calderon::runner
