// One PASS/FAIL line per acceptance criterion. Thresholds come from the
// acceptance manifest shared with the experiment runner.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "calderon/cgo.hpp"
#include "calderon/errors.hpp"
#include "calderon/linearize.hpp"
#include "calderon/ops.hpp"
#include "calderon/recover.hpp"
#include "runner.hpp"

using namespace calderon;
namespace rn = calderon::runner;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v) { return rn::format_number(v); }

rn::Report experiment(const std::string& text) {
  std::istringstream in(text);
  return rn::run_experiment(rn::ExperimentConfig::from(rn::KeyValues::parse(in, "acceptance")));
}

// Passing reports print their tightest check, failing ones every failure.
Outcome from_reports(std::initializer_list<rn::Report> reports) {
  Outcome o{true, ""};
  const rn::Check* tight = nullptr;
  double margin = std::numeric_limits<double>::infinity();
  for (const auto& r : reports) {
    o.pass = o.pass && r.passed();
    for (const auto& c : r.checks) {
      if (!c.pass) o.detail += "[" + r.experiment + "] " + c.name + " = " + num(c.value) + "; ";
      if (c.timing) continue;
      const double gap = std::abs(c.threshold - c.value) / std::max(std::abs(c.threshold), 1e-300);
      if (gap < margin) {
        margin = gap;
        tight = &c;
      }
    }
    for (const auto& f : r.failures) o.detail += "[" + r.experiment + "] " + f + "; ";
  }
  if (o.pass && tight)
    o.detail = "tightest: " + tight->name + " = " + num(tight->value) +
               (tight->relation == rn::Relation::AtMost ? " <= " : " >= ") + num(tight->threshold);
  return o;
}

ComplexField::Function random_smooth(std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double a = u(rng), b = u(rng), c = u(rng), d = u(rng), e = u(rng);
  return [=](double x, double y) {
    return cplx(std::exp(-(x - 0.3 * a) * (x - 0.3 * a) - 2 * y * y) * std::cos(2 * b * x + c),
                d * x * y + e * std::sin(x + y));
  };
}

Outcome forward(const rn::Manifest&) {
  return from_reports({experiment("experiment=forward\nh=1/64\nmodel=constant\nmodes=1,2,3\n")});
}

Outcome cauchy(const rn::Manifest& m) {
  const auto g = Grid2D::unit_disk(1.0 / 128);
  const CauchyOperator T(g);
  const double tol = m.number("cauchy.l2_tolerance");
  const int functions = static_cast<int>(m.number("cauchy.functions"));
  std::mt19937 rng(2);
  double worst = 0.0;
  for (int k = 0; k < functions; ++k) {
    const auto f = ComplexField::from_function(g, random_smooth(rng));
    const auto d = diff_op(T.apply(f), DiffOp::DelBar);
    double num2 = 0.0, den2 = 0.0;
    for (std::size_t idx : g->interior_nodes())
      if (Grid2D::disk_distance(g->x1(idx), g->x2(idx)) > 3 * g->h()) {
        num2 += std::norm(d[idx] - f[idx]);
        den2 += std::norm(f[idx]);
      }
    worst = std::max(worst, std::sqrt(num2 / den2));
  }
  const auto t1 = T.apply(ComplexField::constant(g, 1.0));
  const auto zbar = ComplexField::from_function(g, [](double x, double y) { return cplx(x, -y); });
  const double indicator = (t1 - zbar).sup_norm() / g->h();
  const double factor = m.number("cauchy.indicator_factor");
  return {worst <= tol && indicator <= factor, "dbar(Tf) worst relative L2 " + num(worst) + " <= " + num(tol) +
                                                   ", indicator error / h " + num(indicator) + " <= " + num(factor)};
}

Outcome cgo(const rn::Manifest&) {
  return from_reports({experiment("experiment=cgo-decay\nh=1/64\nmodel=bump\ntaus=10,20,40,80\n")});
}

Outcome phase(const rn::Manifest&) {
  return from_reports({experiment("experiment=phase-consistency\nh=1/128\nfunctions=10\nseed=7\n")});
}

Eigen::MatrixXcd displayed(std::initializer_list<std::initializer_list<cplx>> rows) {
  Eigen::MatrixXcd a(rows.size(), rows.begin()->size());
  int i = 0;
  for (const auto& r : rows) {
    int j = 0;
    for (cplx v : r) a(i, j++) = v;
    ++i;
  }
  return a;
}

Outcome systems(const rn::Manifest& m) {
  const cplx i(0.0, 1.0);
  bool pass = true;
  std::string detail;
  for (int k = 1; k <= 6; ++k)
    for (const auto& s : {boundary_coefficient_system(k), interior_coefficient_system(k)})
      if (!exact_determinant(s).nonzero()) {
        pass = false;
        detail += "singular system m=" + std::to_string(k) + "; ";
      }
  const bool match = boundary_coefficient_system(2).matrix == displayed({{0, 0, 1}, {1, 2, 1}, {1, 4, 4}}) &&
                     boundary_coefficient_system(3).matrix ==
                         displayed({{0, 0, 0, 1}, {1, 3, 3, 1}, {1, 6, 12, 8}, {1, 9, 27, 27}}) &&
                     interior_coefficient_system(2).matrix ==
                         displayed({{1, 2.0 * i, -1}, {-1, 0, -1}, {1, -2.0 * i, -1}}) &&
                     interior_coefficient_system(3).matrix == displayed({{1, 3.0 * i, -3, -i},
                                                                         {-1, -i, -1, -i},
                                                                         {1, -i, 1, -i},
                                                                         {-1, 3.0 * i, 3, -i}});
  if (!match) detail += "displayed m=2/3 systems differ; ";
  pass = pass && match;
  const double tol = m.number("systems.round_trip");
  std::mt19937 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  double worst = 0.0;
  for (int k = 1; k <= 6; ++k)
    for (const auto& s : {boundary_coefficient_system(k), interior_coefficient_system(k)})
      for (int trial = 0; trial < 5; ++trial) {
        Eigen::VectorXcd t(s.matrix.cols());
        for (auto& v : t) v = cplx(n(rng), n(rng));
        // Integer matrix times t formed in long double, so only the solver is measured.
        const CoefficientSystem::ExtendedVector rhs =
            s.matrix.cast<std::complex<long double>>() * t.cast<std::complex<long double>>();
        worst = std::max(worst, (s.solve(rhs) - t).norm() / t.norm());
      }
  pass = pass && worst <= tol;
  return {pass, detail + "nonsingular m=1..6, displayed systems " + (match ? "match" : "differ") +
                    ", round trip worst " + num(worst) + " <= " + num(tol)};
}

Outcome boundary(const rn::Manifest&) {
  return from_reports({experiment("experiment=boundary-recover\nh=1/64\nm=1\npoints=8\n")});
}

Outcome interior(const rn::Manifest&) {
  return from_reports({experiment("experiment=interior-recover\nh=1/128\nm=1\nsample_h=1/16\nbeta=12\n"),
                       experiment("experiment=interior-recover\nh=1/128\nm=2\nsample_h=1/16\nbeta=16\nrows=4,5\n")});
}

Outcome theorem2(const rn::Manifest&) {
  return from_reports({experiment("experiment=theorem2-consistency\nh=1/32\ntuples=10\nseed=3\n")});
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome suites(const rn::Manifest& m, double elapsed_before) {
  const auto t0 = Clock::now();
  std::string detail;
  bool pass = true;

  // Permutation symmetry of the identity in its first m + 1 solutions.
  {
    const auto g = Grid2D::unit_disk(1.0 / 64);
    std::mt19937 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    const auto field = [&] {
      const double a = n(rng), b = n(rng), c = n(rng), d = n(rng);
      return ComplexField::from_function(
          g, [=](double x, double y) { return cplx(a * std::cos(x + c * y), b * std::sin(d * x - y) + 0.3 * a * x * y); });
    };
    double worst = 0.0;
    for (int rank = 1; rank <= 3; ++rank) {
      SymmetricTensorField t(g, rank);
      for (const auto& j : canonical_indices(rank)) t.set(j, field());
      std::vector<SolutionJet> u;
      for (int l = 0; l < rank + 2; ++l) u.push_back({0.1 * field(), field(), field(), field()});
      const cplx base = assemble_integral_identity(t, u);
      for (int trial = 0; trial < 4; ++trial) {
        std::shuffle(u.begin(), u.end() - 1, rng);
        worst = std::max(worst, std::abs(assemble_integral_identity(t, u) - base) / std::abs(base));
      }
    }
    const double tol = m.number("suites.permutation");
    pass = pass && worst <= tol;
    detail += "permutation " + num(worst) + " <= " + num(tol);
  }

  // Laplacian against four dbar d: the gap closes at second order.
  {
    std::vector<double> gaps;
    for (double h : {1.0 / 32, 1.0 / 64}) {
      const auto g = Grid2D::unit_disk(h);
      const auto f = ComplexField::from_function(
          g, [](double x, double y) { return std::exp(cplx(0.7 * x, 0.4 * y)) * std::cos(x * y); });
      const auto lap = diff_op(f, DiffOp::Laplacian);
      const auto dd = diff_op(diff_op(f, DiffOp::Del), DiffOp::DelBar);
      double gap = 0.0;
      for (std::size_t idx : g->interior_nodes())
        if (Grid2D::disk_distance(g->x1(idx), g->x2(idx)) > 0.125) gap = std::max(gap, std::abs(lap[idx] - 4.0 * dd[idx]));
      gaps.push_back(gap);
    }
    const double rate = std::log2(gaps[0] / gaps[1]), min_rate = m.number("suites.laplacian_rate");
    pass = pass && rate >= min_rate;
    detail += ", Laplacian = 4 dbar d rate " + num(rate) + " >= " + num(min_rate);
  }

  // The CLI writes byte-identical CSVs for the same config.
  {
    const fs::path dir = fs::temp_directory_path() / "calderon_acceptance_determinism";
    fs::remove_all(dir);
    const std::string cfg = "experiment=theorem2-consistency\nh=1/32\ntuples=2\nseed=11\n";
    rn::emit_report(experiment(cfg), rn::Format::Csv, dir / "a");
    rn::emit_report(experiment(cfg), rn::Format::Csv, dir / "b");
    bool same = true;
    int files = 0;
    for (const auto& e : fs::directory_iterator(dir / "a"))
      if (e.path().extension() == ".csv") {
        ++files;
        same = same && slurp(e.path()) == slurp(dir / "b" / e.path().filename());
      }
    same = same && files > 0;
    pass = pass && same;
    detail += std::string(", CLI CSVs ") + (same ? "identical" : "differ");
  }

  // Polarization of the second linearization.
  {
    const auto g = Grid2D::unit_disk(1.0 / 32);
    const auto model = ConductivityModel::rho_power(1.0, 1.0, 1);
    const auto f1 = BoundaryFunction::from_angle(g, [](double t) { return cplx(std::cos(t) + 0.3 * std::sin(2 * t)); });
    const auto f2 = BoundaryFunction::from_angle(g, [](double t) { return cplx(0.5 - std::sin(t) + 0.2 * std::cos(2 * t)); });
    const auto test = BoundaryFunction::from_angle(g, [](double t) { return cplx(0.2 + std::cos(t) - 0.4 * std::sin(t) + 0.5 * std::cos(2 * t)); });
    const auto diagonal = [&](const BoundaryFunction& v, const BoundaryFunction& w) {
      const std::vector<BoundaryFunction> dirs{v, v};
      return linearize_dtn(model, dirs, w).value;
    };
    const std::vector<BoundaryFunction> mixed{f1, f2};
    const cplx direct = linearize_dtn(model, mixed, test).value;
    const double err = std::abs(polarize(diagonal, f1, f2, test) - direct) / std::abs(direct);
    const double tol = m.number("suites.polarization");
    pass = pass && err <= tol;
    detail += ", polarization " + num(err) + " <= " + num(tol);
  }

  const double total = elapsed_before + std::chrono::duration<double>(Clock::now() - t0).count();
  const double limit = m.number("suites.max_seconds");
  pass = pass && total <= limit;
  detail += ", total runtime " + num(std::round(total)) + " s <= " + num(limit);
  return {pass, detail};
}

}  // namespace

int main() {
  rn::Manifest manifest = rn::Manifest::load(rn::Manifest::default_path());
  const std::vector<std::function<Outcome(const rn::Manifest&)>> criteria = {forward,  cauchy,   cgo,
                                                                             phase,    systems,  boundary,
                                                                             interior, theorem2};
  const auto start = Clock::now();
  int failed = 0;
  const auto report = [&](int id, const std::function<Outcome()>& run) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(Clock::now() - t0).count();
    failed += o.pass ? 0 : 1;
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << "  ("
              << std::round(s * 10) / 10 << " s)" << std::endl;
  };
  for (std::size_t k = 0; k < criteria.size(); ++k)
    report(static_cast<int>(k) + 1, [&] { return criteria[k](manifest); });
  report(9, [&] { return suites(manifest, std::chrono::duration<double>(Clock::now() - start).count()); });
  return failed == 0 ? 0 : 1;
}
