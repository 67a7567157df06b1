#include "runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include "calderon/cgo.hpp"
#include "calderon/errors.hpp"
#include "calderon/forward.hpp"
#include "calderon/ops.hpp"
#include "calderon/phase.hpp"
#include "calderon/recover.hpp"

namespace calderon::runner {

namespace {

using std::numbers::pi;
using Clock = std::chrono::steady_clock;

const cplx I(0.0, 1.0);

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v) { return format_number(v); }

double param(const ExperimentConfig& c, const std::string& key, double fallback) {
  const auto it = c.model_params.find(key);
  return it == c.model_params.end() ? fallback : it->second;
}

int integer(double v, const std::string& key, int lo, int hi) {
  if (v != std::floor(v) || v < lo || v > hi)
    throw UsageError(key + " must be an integer in " + std::to_string(lo) + ".." + std::to_string(hi));
  return static_cast<int>(v);
}

std::vector<int> int_list(const ExperimentConfig& c, const std::string& key, const std::string& fallback, int lo,
                          int hi) {
  std::vector<int> out;
  for (double v : parse_list(c.text(key, fallback), key)) out.push_back(integer(v, key, lo, hi));
  return out;
}

// constant (model.c), bump (1 + model.amplitude exp(-model.rate |x|^2)) or
// rho-power (model.c0 + model.c rho^model.k).
ConductivityModel make_model(const ExperimentConfig& c, const std::string& fallback) {
  const std::string kind = c.model == "default" ? fallback : c.model;
  if (kind == "constant") return ConductivityModel::constant(param(c, "c", 1.0));
  if (kind == "bump")
    return ConductivityModel::background(
        ConductivityModel::gaussian_bump_background(param(c, "amplitude", 0.1), param(c, "rate", 4.0)),
        param(c, "lambda", 2.0), "bump");
  if (kind == "rho-power")
    return ConductivityModel::rho_power(param(c, "c0", 1.0), param(c, "c", 1.0),
                                        integer(param(c, "k", 1.0), "model.k", 1, 6));
  throw UsageError("unknown model " + kind + " (constant, bump, rho-power)");
}

bool constant_reference(const ExperimentConfig& c, const std::string& fallback) {
  return (c.model == "default" ? fallback : c.model) == "constant";
}

Manifest manifest_for(const ExperimentConfig& c) {
  return Manifest::load(c.manifest.empty() ? Manifest::default_path() : std::filesystem::path(c.manifest));
}

BoundaryFunction cosine(const GridPtr& g, int n) {
  return BoundaryFunction::from_angle(g, [n](double t) { return cplx(std::cos(n * t)); });
}

void forward(const ExperimentConfig& c, const Manifest& m, Report& r) {
  const auto g = Grid2D::unit_disk(c.spacing(1.0 / 64));
  const auto model = make_model(c, "constant");
  const bool reference = constant_reference(c, "constant");
  const double level = param(c, "c", 1.0);
  Table t("dtn", {"n", "ratio_re", "ratio_im", "expected", "relative_error"});
  for (int n : int_list(c, "modes", "1,2,3", 1, 64)) {
    const auto t0 = Clock::now();
    const auto s = dtn_apply(model, cosine(g, n));
    const double elapsed = seconds_since(t0);
    const cplx ratio = s.cosine_ratio(n);
    const double expected = reference ? level * n : std::nan("");
    const double err = std::abs(ratio - expected) / expected;
    t.add({std::to_string(n), num(ratio.real()), num(ratio.imag()), reference ? num(expected) : "",
           reference ? num(err) : ""});
    if (reference)
      r.add_check(1, "DtN coefficient n=" + std::to_string(n) + " relative error", err, Relation::AtMost,
                  m.number("forward.tolerance"));
    r.add_check(1, "solve time n=" + std::to_string(n), elapsed, Relation::AtMost, m.number("forward.max_seconds"),
                true);
  }
  r.tables.push_back(std::move(t));
}

void dtn_spectrum(const ExperimentConfig& c, const Manifest& m, Report& r) {
  const auto g = Grid2D::unit_disk(c.spacing(1.0 / 64));
  const auto model = make_model(c, "constant").linear_part();
  const bool reference = constant_reference(c, "constant");
  const double level = param(c, "c", 1.0);
  Table t("spectrum", {"n", "eigenvalue_re", "eigenvalue_im", "per_mode"});
  for (int n : int_list(c, "modes", "1,2,3,4,5,6,7,8", 1, 64)) {
    const cplx ratio = dtn_apply(model, cosine(g, n)).cosine_ratio(n);
    t.add({std::to_string(n), num(ratio.real()), num(ratio.imag()), num(ratio.real() / n)});
    if (reference && n <= 3)
      r.add_check(1, "DtN eigenvalue n=" + std::to_string(n) + " relative error",
                  std::abs(ratio - level * n) / (level * n), Relation::AtMost, m.number("forward.tolerance"));
  }
  r.tables.push_back(std::move(t));
}

void cgo_decay(const ExperimentConfig& c, const Manifest& m, Report& r) {
  const double h = c.spacing(1.0 / 64);
  const auto model = make_model(c, "bump");
  const std::vector<double> taus = c.taus.value_or(std::vector<double>{10, 20, 40, 80});
  const CGOBuilder builder(model, Grid2D::unit_disk(h));
  Table t("decay", {"tau", "w_l2", "certificate", "reference_certificate", "terms", "contraction"});
  std::vector<double> norms;
  for (double tau : taus) {
    const auto s = builder.build(tau, Branch::Plus);
    norms.push_back(s.w.l2_norm());
    t.add({num(tau), num(norms.back()), num(s.certificate), num(s.reference_certificate), std::to_string(s.terms),
           num(s.contraction)});
  }
  r.tables.push_back(std::move(t));
  if (taus.size() >= 2)
    r.add_check(3, "log-log slope of |w|", log_log_slope(taus, norms), Relation::AtMost, m.number("cgo.slope_max"));
  if (h < 1.0 / 128 - 1e-15) return;  // h/2 would leave the supported grids
  const double tau = m.number("cgo.refinement_tau");
  Table f("refinement", {"h", "certificate"});
  std::vector<double> certs;
  for (double hh : {h, h / 2}) {
    certs.push_back(CGOBuilder(model, Grid2D::unit_disk(hh)).build(tau, Branch::Plus).certificate);
    f.add({num(hh), num(certs.back())});
  }
  r.tables.push_back(std::move(f));
  r.add_check(3, "certificate ratio under h -> h/2", certs[0] / certs[1], Relation::AtLeast,
              m.number("cgo.refinement_factor"));
}

// exp(1 - 1/(1 - |x|^2)) times a random quadratic with complex coefficients.
ComplexField::Function random_compact(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  cplx k[6];
  for (auto& v : k) v = cplx(u(rng), u(rng));
  const double s1 = 0.2 * u(rng), s2 = 0.2 * u(rng);
  return [=](double x, double y) -> cplx {
    const double r2 = x * x + y * y;
    if (r2 >= 1.0) return 0.0;
    const double a = x - s1, b = y - s2;
    return std::exp(1.0 - 1.0 / (1.0 - r2)) * (k[0] + k[1] * a + k[2] * b + k[3] * a * b + k[4] * a * a + k[5] * b * b);
  };
}

void phase_consistency(const ExperimentConfig& c, const Manifest& m, Report& r) {
  const auto g = Grid2D::unit_disk(c.spacing(1.0 / 128));
  const std::vector<double> taus = c.taus.value_or(std::vector<double>{160, 240, 320, 480, 640});
  const int functions = integer(c.number("functions", 10), "functions", 1, 1000);
  const double slack = m.number("phase.slope_slack");
  std::mt19937_64 rng(c.seed);
  Table t("slopes", {"function", "N", "slope"});
  for (int f = 0; f < functions; ++f) {
    const auto field = ComplexField::from_function(g, random_compact(rng), Support::Box);
    const StationaryPhase sp(field, 3);
    std::vector<std::vector<double>> errs(3);
    for (double tau : taus) {
      const cplx q = oscillatory_quadrature(field, 1.0, tau).value;
      for (int n = 1; n <= 3; ++n) errs[n - 1].push_back(std::abs(sp.expand(1.0, tau, n).value() - q));
    }
    for (int n = 1; n <= 3; ++n) {
      const double slope = log_log_slope(taus, errs[n - 1]);
      t.add({std::to_string(f), std::to_string(n), num(slope)});
      r.add_check(4, "function " + std::to_string(f) + " N=" + std::to_string(n) + " slope + N", slope + n,
                  Relation::AtMost, slack);
    }
  }
  r.tables.push_back(std::move(t));

  // Close to 1 near 0 with an erfc fall-off around r = 0.6.
  const double tau = m.number("phase.leading_tau");
  const auto clip = cutoff_extend(ComplexField::constant(g, 1.0), 0.05);
  const auto flat =
      clip * ComplexField::from_function(
                 g, [](double x, double y) { return cplx(0.5 * std::erfc((std::hypot(x, y) - 0.6) / 0.16)); },
                 Support::Box);
  const auto xy = flat * ComplexField::from_function(g, [](double x, double y) { return cplx(x * y); }, Support::Box);
  Table l("leading", {"case", "c", "tau", "value_re", "value_im", "expected_re", "expected_im", "relative_error"});
  const auto leading = [&](const std::string& name, const ComplexField& field, double phase, cplx expected) {
    const cplx v = oscillatory_quadrature(field, phase, tau).value;
    const double err = std::abs(v - expected) / std::abs(expected);
    l.add({name, num(phase), num(tau), num(v.real()), num(v.imag()), num(expected.real()), num(expected.imag()),
           num(err)});
    r.add_check(4, name + " c=" + num(phase) + " leading term", err, Relation::AtMost,
                m.number("phase.leading_tolerance"));
  };
  leading("one", flat, 1.0, 1.0);
  leading("x1x2", xy, 1.0, I / tau);
  leading("x1x2", xy, -1.0, -I / tau);
  r.tables.push_back(std::move(l));
}

// Hidden boundary trace; the real part stays above 0.65 on the circle.
cplx boundary_truth(const MultiIndex& j, int slot, int rank, double x1, double x2) {
  if (rank == 1) {
    switch (j[0]) {
      case 0: return cplx(1.0 + 0.5 * x1, 0.2 * x2);
      case 1: return 0.8 - 0.4 * x2 + 0.1 * x1 * x2;
      default: return -0.6 + 0.3 * x1;
    }
  }
  const double n0 = std::count(j.begin(), j.end(), 0), n1 = std::count(j.begin(), j.end(), 1),
               n2 = std::count(j.begin(), j.end(), 2);
  return cplx(1.2 + 0.1 * slot + 0.3 * x1 * (n1 + 1) / (rank + 1) - 0.25 * x2 * (n2 + 1) / (rank + 1),
              0.2 * x1 * x2 * n0 / rank);
}

void boundary_recover(const ExperimentConfig& c, const Manifest& m, Report& r) {
  const auto g = Grid2D::unit_disk(c.spacing(1.0 / 64));
  const int rank = c.m;
  const int points = integer(c.number("points", 8), "points", 1, 64);
  SigmaSchedule schedule = SigmaSchedule::standard(c.number("rho", 0.5));
  if (c.sigmas) schedule.sigma = *c.sigmas;
  const auto model = ConductivityModel::constant(1.0);
  const auto indices = canonical_indices(rank);
  SymmetricTensorField hidden(g, rank), vanishing(g, rank);
  double sup = 0.0;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto& j = indices[k];
    const int slot = static_cast<int>(k);
    hidden.set(j, ComplexField::from_function(g, [&](double a, double b) { return boundary_truth(j, slot, rank, a, b); }));
    vanishing.set(j, ComplexField::from_function(g, [&](double a, double b) {
                    return (1.0 - std::hypot(a, b)) * boundary_truth(j, slot, rank, a, b);
                  }));
    sup = std::max(sup, vanishing.component(j).sup_norm());
  }
  const double tol = m.number("boundary.tolerance"), zero = m.number("boundary.zero_fraction");
  Table t("boundary", {"theta", "index", "re", "im", "truth_re", "truth_im", "relative_error"});
  Table v("vanishing", {"theta", "index", "re", "im"});
  double worst_zero = 0.0;
  for (int p = 0; p < points; ++p) {
    const double theta = 0.3 + 2.0 * pi * p / points;
    const double x1 = std::cos(theta), x2 = std::sin(theta);
    const auto est = boundary_values(tensor_oracle(hidden), model, g, rank, theta, schedule);
    double worst = 0.0;
    for (std::size_t k = 0; k < indices.size(); ++k) {
      const cplx truth = boundary_truth(indices[k], static_cast<int>(k), rank, x1, x2);
      const cplx got = est.value(indices[k]);
      const double err = std::abs(got - truth) / std::abs(truth);
      worst = std::max(worst, err);
      t.add({num(theta), index_label(indices[k]), num(got.real()), num(got.imag()), num(truth.real()),
             num(truth.imag()), num(err)});
    }
    r.add_check(6, "boundary values at theta=" + num(theta) + " worst relative error", worst, Relation::AtMost, tol);
    const auto z = boundary_values(tensor_oracle(vanishing), model, g, rank, theta, schedule);
    for (std::size_t k = 0; k < indices.size(); ++k) {
      const cplx got = z.value(indices[k]);
      worst_zero = std::max(worst_zero, std::abs(got) / sup);
      v.add({num(theta), index_label(indices[k]), num(got.real()), num(got.imag())});
    }
  }
  r.add_check(6, "vanishing tensor worst |value| / sup|T|", worst_zero, Relation::AtMost, zero);
  r.tables.push_back(std::move(t));
  r.tables.push_back(std::move(v));
}

InteriorOptions interior_options(const ExperimentConfig& c) {
  InteriorOptions o;
  if (c.taus) o.taus = *c.taus;
  if (const auto path = c.text("calibration", ""); !path.empty()) o.calibration = CalibrationTable::load(path);
  return o;
}

void interior_m1(const ExperimentConfig& c, const Manifest& m, Report& r) {
  const auto og = Grid2D::unit_disk(c.spacing(1.0 / 128));
  const auto sg = Grid2D::unit_disk(c.number("sample_h", 1.0 / 16));
  const double beta = c.number("beta", 12.0);
  const auto bump = [beta](double x1, double x2) {
    return cplx(std::exp(-beta * (x1 * x1 + x2 * x2)) * (1.0 + 0.3 * x1));
  };
  SymmetricTensorField hidden(og, 1), truth(sg, 1);
  hidden.set({0}, ComplexField::from_function(og, bump));
  truth.set({0}, ComplexField::from_function(sg, bump));
  auto options = interior_options(c);
  options.rows = int_list(c, "rows", "1", 1, 3);
  const auto rec = recover_interior(tensor_oracle(hidden), ConductivityModel::constant(1.0), og, 1, sg, options);
  for (const auto& row : rec.rows)
    for (const auto& f : row.failures) r.failures.push_back("row " + std::to_string(row.row.id) + ": " + f);
  Table t("interior", {"x1", "x2", "index", "re", "im", "truth_re", "truth_im"});
  const auto value = rec.interior.component({0});
  for (std::size_t idx : sg->interior_nodes()) {
    const cplx v = value[idx], e = truth.component({0})[idx];
    t.add({num(sg->x1(idx)), num(sg->x2(idx)), "0", num(v.real()), num(v.imag()), num(e.real()), num(e.imag())});
  }
  r.tables.push_back(std::move(t));
  r.add_check(7, "m=1 relative L2 error on |x|<=0.6", rec.relative_error(truth, {0}, 0.6), Relation::AtMost,
              m.number("interior.tolerance"));
}

// Rows whose operator is the identity are sampled pointwise; the others go
// through the grid solve of their operator.
void interior_m2(const ExperimentConfig& c, const Manifest& m, Report& r) {
  const auto og = Grid2D::unit_disk(c.spacing(1.0 / 128));
  const auto sg = Grid2D::unit_disk(c.number("sample_h", 1.0 / 16));
  const double beta = c.number("beta", 16.0);
  const auto gauss = [beta](double a, double b) { return std::exp(-beta * (a * a + b * b)); };
  const std::map<MultiIndex, std::function<cplx(double, double)>> parts = {
      {{0, 0}, [&](double a, double b) { return cplx(0.5 * gauss(a, b)); }},
      {{1, 1}, [&](double a, double b) { return cplx(gauss(a, b) * (1.0 + 0.2 * a)); }},
      {{1, 2}, [&](double a, double b) { return cplx(0.3 * a * gauss(a, b)); }},
      {{2, 2}, [&](double a, double b) { return cplx(gauss(a, b) * (0.5 - 0.3 * b)); }}};
  SymmetricTensorField hidden(og, 2);
  for (const auto& [j, f] : parts) hidden.set(j, ComplexField::from_function(og, f));
  const auto oracle = tensor_oracle(hidden);
  const auto model = ConductivityModel::constant(1.0);
  const std::vector<cplx> centres = {0.0, cplx(0.1875, 0.125), cplx(-0.25, 0.125), cplx(0.125, -0.25),
                                     cplx(-0.1875, -0.1875)};
  const auto rows = interior_rows(2);
  const auto options = interior_options(c);
  Table t("points", {"row", "x1", "x2", "re", "im", "truth_re", "truth_im", "relative_error"});
  for (int id : int_list(c, "rows", "4,5", 1, 6)) {
    const auto& row = rows[id - 1];
    std::vector<cplx> got(centres.size());
    std::vector<cplx> at = centres;
    if (row.op == RowOperator::Identity) {
      const auto d = row_data(oracle, model, og, 2, id, centres, options);
      got = d.datum;
      for (const auto& f : d.failures) r.failures.push_back("row " + std::to_string(id) + ": " + f);
    } else {
      auto o = options;
      o.rows = {id};
      const auto rec = recover_interior(oracle, model, og, 2, sg, o);
      for (const auto& f : rec.row(id).failures) r.failures.push_back("row " + std::to_string(id) + ": " + f);
      for (std::size_t k = 0; k < centres.size(); ++k) {
        const std::size_t idx = sg->nearest(centres[k].real(), centres[k].imag());
        at[k] = cplx(sg->x1(idx), sg->x2(idx));
        got[k] = rec.row(id).combination[idx];
      }
    }
    double worst = 0.0;
    for (std::size_t k = 0; k < centres.size(); ++k) {
      cplx truth = 0.0;
      for (std::size_t u = 0; u < row.unknowns.size(); ++u) {
        const auto it = parts.find(row.unknowns[u]);
        if (it != parts.end()) truth += row.coefficients[u] * it->second(at[k].real(), at[k].imag());
      }
      const double err = std::abs(got[k] - truth) / std::abs(truth);
      worst = std::max(worst, err);
      t.add({std::to_string(id), num(at[k].real()), num(at[k].imag()), num(got[k].real()), num(got[k].imag()),
             num(truth.real()), num(truth.imag()), num(err)});
    }
    r.add_check(7, "m=2 row " + std::to_string(id) + " worst relative error at 5 points", worst, Relation::AtMost,
                m.number("interior.tolerance"));
  }
  r.tables.push_back(std::move(t));
}

void interior_recover(const ExperimentConfig& c, const Manifest& m, Report& r) {
  if (c.m == 1) return interior_m1(c, m, r);
  if (c.m == 2) return interior_m2(c, m, r);
  throw UsageError("interior-recover runs m = 1 or m = 2");
}

void theorem2_consistency(const ExperimentConfig& c, const Manifest& m, Report& r) {
  const auto g = Grid2D::unit_disk(c.spacing(1.0 / 32));
  const int tuples = integer(c.number("tuples", 10), "tuples", 1, 1000);
  const int k = integer(param(c, "k", 1.0), "model.k", 1, 6);
  const auto first = ConductivityModel::rho_power(1.0, param(c, "c", 1.0), k);
  const auto second = ConductivityModel::rho_power(1.0, param(c, "c2", 1.1), k);
  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto direction = [&] {
    const double a = u(rng), b = u(rng), d = u(rng), e = u(rng);
    const int n = 1 + static_cast<int>(rng() % 3);
    return BoundaryFunction::from_angle(
        g, [=](double t) { return cplx(a * std::cos(n * t) + b * std::sin(n * t) + 0.5 * d * std::cos(t) + 0.5 * e); });
  };
  Table t("tuples", {"tuple", "equal", "unequal"});
  double equal_max = 0.0, unequal_min = std::numeric_limits<double>::infinity();
  for (int n = 0; n < tuples; ++n) {
    std::vector<BoundaryFunction> dirs;
    for (int l = 0; l <= k; ++l) dirs.push_back(direction());
    const auto test = direction();
    const double eq = linearized_difference(first, first, dirs, test);
    const double ne = linearized_difference(first, second, dirs, test);
    equal_max = std::max(equal_max, eq);
    unequal_min = std::min(unequal_min, ne);
    t.add({std::to_string(n), num(eq), num(ne)});
  }
  r.tables.push_back(std::move(t));
  const double threshold = m.number("theorem2.equal_max");
  r.add_check(8, "equal conductivities, largest difference", equal_max, Relation::AtMost, threshold);
  r.add_check(8, "unequal conductivities, smallest difference", unequal_min, Relation::AtLeast,
              m.number("theorem2.separation") * threshold);
}

using Pipeline = void (*)(const ExperimentConfig&, const Manifest&, Report&);

struct Entry {
  std::string name;
  Pipeline run;
  std::string summary;
};

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = {
      {"forward", forward, "DtN coefficients of cos(n theta) data"},
      {"dtn-spectrum", dtn_spectrum, "DtN eigenvalues of the linear part"},
      {"cgo-decay", cgo_decay, "CGO remainder decay in tau and certificate refinement"},
      {"phase-consistency", phase_consistency, "stationary phase expansion against oscillatory quadrature"},
      {"boundary-recover", boundary_recover, "boundary values of a hidden tensor by sigma extrapolation"},
      {"interior-recover", interior_recover, "interior rows of a hidden tensor from CGO data"},
      {"theorem2-consistency", theorem2_consistency, "linearized DtN separates equal and unequal conductivities"},
  };
  return entries;
}

}  // namespace

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& e : registry()) out.push_back(e.name);
    return out;
  }();
  return names;
}

std::string experiment_summary(const std::string& name) {
  for (const auto& e : registry())
    if (e.name == name) return e.summary;
  throw UsageError("unknown experiment " + name);
}

Report run_experiment(const ExperimentConfig& config) {
  const auto it = std::find_if(registry().begin(), registry().end(),
                               [&](const Entry& e) { return e.name == config.experiment; });
  if (it == registry().end()) throw UsageError("unknown experiment " + config.experiment);
  const Manifest manifest = manifest_for(config);
  Report r;
  r.experiment = config.experiment;
  r.config_hash = config.hash();
  const auto t0 = Clock::now();
  try {
    it->run(config, manifest, r);
  } catch (const RefusalError& e) {
    r.failures.push_back(std::string("refused: ") + e.what());
  } catch (const Error& e) {
    r.failures.push_back(std::string("numerical failure: ") + e.what());
  }
  r.wall_seconds = seconds_since(t0);
  return r;
}

void calibrate(int max_m, double h, const std::vector<double>& taus, const std::filesystem::path& path) {
  const auto g = Grid2D::unit_disk(h);
  CalibrationTable all;
  for (int mm = 1; mm <= max_m; ++mm)
    for (const auto& [key, entry] : measure_calibration(mm, g, taus).entries()) all.set(key.first, key.second, entry);
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw OutputError("cannot create " + path.parent_path().string());
  try {
    all.save(path);
  } catch (const std::exception& e) {
    throw OutputError(e.what());
  }
}

}  // namespace calderon::runner
