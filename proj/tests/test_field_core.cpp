#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "calderon/boundary.hpp"
#include "calderon/errors.hpp"
#include "calderon/model.hpp"
#include "calderon/ops.hpp"

using namespace calderon;
using std::numbers::pi;

namespace {

double max_error(const ComplexField& f, const ComplexField::Function& exact) {
  double e = 0.0;
  const Grid2D& g = f.grid();
  for (std::size_t idx = 0; idx < g.size(); ++idx)
    if (f.defined_at(idx)) e = std::max(e, std::abs(f[idx] - exact(g.x1(idx), g.x2(idx))));
  return e;
}

}  // namespace

TEST_CASE("grid mask agrees with the disk indicator") {
  auto g = Grid2D::unit_disk(1.0 / 32);
  CHECK(g->n() == 81);
  std::size_t inside = 0;
  for (std::size_t idx = 0; idx < g->size(); ++idx) {
    const bool in = Grid2D::disk_distance(g->x1(idx), g->x2(idx)) > 0.0;
    CHECK(g->inside(idx) == in);
    inside += in ? 1 : 0;
  }
  CHECK(inside == g->interior_nodes().size());
  for (const BoundaryNode& b : g->boundary()) {
    CHECK(std::abs(std::hypot(b.normal[0], b.normal[1]) - 1.0) < 1e-12);
    CHECK(std::abs(std::hypot(b.point[0], b.point[1]) - 1.0) < 1e-12);
  }
  CHECK_THROWS_AS(Grid2D::unit_disk(0.0), RefusalError);
  CHECK_THROWS_AS(Grid2D::unit_disk(-0.1), RefusalError);
  CHECK_THROWS_AS(Grid2D::unit_disk(0.3), RefusalError);
}

TEST_CASE("boundary-adjacent nodes have an exterior neighbour") {
  auto g = Grid2D::unit_disk(1.0 / 16);
  for (std::size_t idx : g->interior_nodes()) {
    const int i = g->col(idx), j = g->row(idx);
    const bool open = !g->inside(i + 1, j) || !g->inside(i - 1, j) || !g->inside(i, j + 1) ||
                      !g->inside(i, j - 1);
    CHECK((g->kind(idx) == NodeKind::BoundaryAdjacent) == open);
  }
}

TEST_CASE("stencils are exact on quadratics") {
  auto g = Grid2D::unit_disk(1.0 / 32);
  auto f = ComplexField::from_function(g, [](double x, double y) {
    return cplx(1.0 + 2.0 * x - 3.0 * y + 0.5 * x * x + 1.5 * x * y - 2.0 * y * y, x * y);
  });
  CHECK(max_error(diff_op(f, DiffOp::Dx1), [](double x, double y) {
          return cplx(2.0 + x + 1.5 * y, y);
        }) < 1e-10);
  CHECK(max_error(diff_op(f, DiffOp::Dx2), [](double x, double y) {
          return cplx(-3.0 + 1.5 * x - 4.0 * y, x);
        }) < 1e-10);
  CHECK(max_error(diff_op(f, DiffOp::Laplacian), [](double, double) { return cplx(-3.0); }) < 1e-8);

  auto r2 = ComplexField::from_function(g, [](double x, double y) { return cplx(x * x + y * y); });
  CHECK(max_error(diff_op(r2, DiffOp::Laplacian), [](double, double) { return cplx(4.0); }) < 1e-8);

  auto z = ComplexField::from_function(g, [](double x, double y) { return cplx(x, y); });
  CHECK(max_error(diff_op(z, DiffOp::DelBar), [](double, double) { return cplx(0.0); }) < 1e-12);
  CHECK(max_error(diff_op(z, DiffOp::Del), [](double, double) { return cplx(1.0); }) < 1e-12);
  auto zbar = z.conj();
  CHECK(max_error(diff_op(zbar, DiffOp::DelBar), [](double, double) { return cplx(1.0); }) < 1e-12);
}

TEST_CASE("Laplacian of sin converges at second order") {
  std::vector<double> errors;
  for (double h : {1.0 / 16, 1.0 / 32, 1.0 / 64}) {
    auto g = Grid2D::unit_disk(h);
    auto f = ComplexField::from_function(g, [](double x, double) { return cplx(std::sin(x)); });
    errors.push_back(max_error(diff_op(f, DiffOp::Laplacian),
                               [](double x, double) { return cplx(-std::sin(x)); }));
  }
  for (std::size_t k = 1; k < errors.size(); ++k) {
    const double slope = std::log2(errors[k - 1] / errors[k]);
    CHECK(slope > 1.8);
  }
}

TEST_CASE("Laplacian equals four del-bar del at rate h^2") {
  std::vector<double> gaps;
  for (double h : {1.0 / 32, 1.0 / 64, 1.0 / 128}) {
    auto g = Grid2D::unit_disk(h);
    auto f = ComplexField::from_function(
        g, [](double x, double y) { return std::exp(cplx(0.7 * x, 0.4 * y)) * std::cos(x * y); });
    auto lap = diff_op(f, DiffOp::Laplacian);
    auto dd = diff_op(diff_op(f, DiffOp::Del), DiffOp::DelBar);
    // Fixed core where every composed stencil is centered.
    double gap = 0.0;
    for (std::size_t idx : g->interior_nodes())
      if (Grid2D::disk_distance(g->x1(idx), g->x2(idx)) > 0.125)
        gap = std::max(gap, std::abs(lap[idx] - 4.0 * dd[idx]));
    gaps.push_back(gap);
  }
  for (std::size_t k = 1; k < gaps.size(); ++k) {
    INFO("gap ", gaps[k - 1], " -> ", gaps[k]);
    CHECK(std::log2(gaps[k - 1] / gaps[k]) > 1.7);
  }
}

TEST_CASE("coarse grids are refused") {
  auto g = Grid2D::unit_disk(0.625);
  auto f = ComplexField::constant(g, 1.0);
  CHECK_THROWS_AS(diff_op(f, DiffOp::Dx1), RefusalError);
}

TEST_CASE("disk moments") {
  auto g = Grid2D::unit_disk(1.0 / 64);
  auto one = ComplexField::constant(g, 1.0);
  CHECK(std::abs(integrate(one).real() - pi) < 0.01 * pi);
  auto x1 = ComplexField::from_function(g, [](double x, double) { return cplx(x); });
  CHECK(std::abs(integrate(x1)) < 1e-12);
  auto x1sq = ComplexField::from_function(g, [](double x, double) { return cplx(x * x); });
  CHECK(std::abs(integrate(x1sq).real() - pi / 4) < 0.01 * pi / 4);
}

TEST_CASE("integrate is linear and commutes with conjugation") {
  auto g = Grid2D::unit_disk(1.0 / 32);
  auto f = ComplexField::from_function(g, [](double x, double y) { return cplx(std::cos(x), y * y); });
  auto k = ComplexField::from_function(g, [](double x, double y) { return cplx(x * y, std::exp(x)); });
  const cplx a(0.3, -1.2), b(2.0, 0.5);
  CHECK(std::abs(integrate(a * f + b * k) - (a * integrate(f) + b * integrate(k))) < 1e-13);
  CHECK(std::abs(integrate(f.conj()) - std::conj(integrate(f))) < 1e-15);
}

TEST_CASE("non-finite integrands are rejected") {
  auto g = Grid2D::unit_disk(1.0 / 16);
  auto f = ComplexField::constant(g, 1.0);
  f[g->origin()] = cplx(std::nan(""), 0.0);
  CHECK_THROWS_AS(integrate(f), RefusalError);
  CHECK_THROWS_AS(f.require_finite(), RefusalError);
}

TEST_CASE("cutoff extension") {
  auto g = Grid2D::unit_disk(1.0 / 32);
  const double margin = 0.15;
  auto zero = cutoff_extend(ComplexField::constant(g, 0.0), margin);
  CHECK(zero.sup_norm() == 0.0);

  auto one = cutoff_extend(ComplexField::constant(g, 1.0), margin);
  CHECK(one.support() == Support::Box);
  for (std::size_t idx = 0; idx < g->size(); ++idx) {
    const double d = Grid2D::disk_distance(g->x1(idx), g->x2(idx));
    if (d > 2 * margin) CHECK(one[idx] == cplx(1.0));
    if (d <= 0.0) CHECK(one[idx] == cplx(0.0));
  }
  // Monotone along the positive x1 axis.
  const int j0 = g->row(g->origin());
  for (int i = g->col(g->origin()); i + 1 < g->n(); ++i)
    CHECK(one.at(i + 1, j0).real() <= one.at(i, j0).real() + 1e-15);

  auto f = ComplexField::from_function(g, [](double x, double y) { return cplx(1.0 + x, y); });
  auto ext = cutoff_extend(f, margin);
  const double annulus = pi * (1.0 - (1.0 - 2 * margin) * (1.0 - 2 * margin));
  CHECK(std::abs(integrate(ext) - integrate(f)) <= f.sup_norm() * annulus * 1.02);
  for (std::size_t idx : g->interior_nodes())
    if (Grid2D::disk_distance(g->x1(idx), g->x2(idx)) > 2 * margin) CHECK(ext[idx] == f[idx]);

  CHECK_THROWS_AS(cutoff_extend(f, 1.0 / 64), RefusalError);
  CHECK_THROWS_AS(cutoff_extend(f, 0.6), RefusalError);
}

TEST_CASE("boundary function norm and interpolation") {
  auto g = Grid2D::unit_disk(1.0 / 32);
  auto zero = BoundaryFunction::zero(g);
  CHECK(zero.norm() == 0.0);
  auto f = BoundaryFunction::from_angle(g, [](double t) { return cplx(std::cos(3 * t), std::sin(t)); });
  CHECK(f.norm() > 0.0);
  CHECK(std::abs(f(0.123) - cplx(std::cos(0.369), std::sin(0.123))) < 1e-12);
  CHECK(std::abs(f.derivative(0.123) - cplx(-3 * std::sin(0.369), std::cos(0.123))) < 1e-10);
  // Second-difference proxy dominates for cos(3t): about 9.
  CHECK(std::abs(f.norm() - 9.0) < 0.1);
}

TEST_CASE("tensor components are stored canonically") {
  auto g = Grid2D::unit_disk(1.0 / 16);
  SymmetricTensorField t(g, 3);
  t.set({2, 0, 1}, ComplexField::constant(g, 5.0));
  CHECK(t.has({0, 1, 2}));
  CHECK(t.has({1, 2, 0}));
  CHECK(t.component({1, 0, 2})[g->origin()] == cplx(5.0));
  CHECK_FALSE(t.has({0, 0, 1}));
  CHECK_THROWS_AS(t.set({0, 1}, ComplexField::constant(g, 1.0)), RefusalError);
  CHECK_THROWS_AS(t.set({0, 3, 1}, ComplexField::constant(g, 1.0)), RefusalError);
  CHECK(canonical_indices(3).size() == 10);
  CHECK(ordered_indices(3).size() == 27);
}

TEST_CASE("model derivatives match finite differences of the evaluator") {
  std::vector<ConductivityModel::Term> terms{
      {{0, 0, 0}, ConductivityModel::gaussian_bump_background()},
      {{1, 0, 0}, [](double x, double) { return cplx(0.3 + x); }},
      {{0, 2, 0}, [](double, double y) { return cplx(0.2, y); }},
      {{1, 0, 1}, [](double, double) { return cplx(-0.4); }},
      {{0, 1, 1}, [](double x, double y) { return cplx(x * y); }},
      {{3, 0, 0}, [](double, double) { return cplx(0.7); }},
  };
  ConductivityModel model(terms, 1.5);
  const double x = 0.3, y = -0.2;
  std::vector<double> errs;
  for (double e : {1e-2, 5e-3}) {
    double err = 0.0;
    // Second-order slots: rho-mu2 mixed, mu1-mu1, mu1-mu2.
    auto g = [&](cplx r, cplx a, cplx b) { return model.gamma(x, y, r, a, b); };
    const cplx d02 = (g(e, 0, e) - g(e, 0, -e) - g(-e, 0, e) + g(-e, 0, -e)) / (4 * e * e);
    const cplx d11 = (g(0, e, 0) - 2.0 * g(0, 0, 0) + g(0, -e, 0)) / (e * e);
    const cplx d0 = (g(e, 0, 0) - g(-e, 0, 0)) / (2 * e);
    err = std::max(err, std::abs(d02 - model.derivative(x, y, {0, 2})));
    err = std::max(err, std::abs(d11 - model.derivative(x, y, {1, 1})));
    err = std::max(err, std::abs(d0 - model.derivative(x, y, {0})));
    errs.push_back(err);
  }
  CHECK(errs[0] < 1e-3);
  CHECK(errs[0] / errs[1] > 3.5);
  const auto ev = model.evaluate(x, y, 0.01, -0.02, 0.03);
  const double e = 1e-6;
  CHECK(std::abs(ev.d_mu2 - (model.gamma(x, y, 0.01, -0.02, 0.03 + e) -
                             model.gamma(x, y, 0.01, -0.02, 0.03 - e)) / (2 * e)) < 1e-8);
  CHECK(model.derivative(x, y, {}) == model.background(x, y));
  CHECK(model.max_order() == 3);
  CHECK(std::abs(model.delta() - 0.05 / 1.5) < 1e-15);
}

TEST_CASE("ellipticity is checked on every node") {
  auto g = Grid2D::unit_disk(1.0 / 16);
  CHECK_NOTHROW(ConductivityModel::constant(2.0).check_ellipticity(*g));
  CHECK_THROWS_AS(ConductivityModel::constant(2.0, 1.5).check_ellipticity(*g), RefusalError);
  CHECK(std::isinf(ConductivityModel::constant(1.0).delta()));
}
