#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "calderon/cgo.hpp"
#include "calderon/errors.hpp"
#include "calderon/ops.hpp"

using namespace calderon;
using std::numbers::pi;

namespace {

const cplx I(0.0, 1.0);

ComplexField::Function random_smooth(std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double a = u(rng), b = u(rng), c = u(rng), d = u(rng), e = u(rng);
  return [=](double x, double y) {
    return cplx(std::exp(-(x - 0.3 * a) * (x - 0.3 * a) - 2 * y * y) * std::cos(2 * b * x + c),
                d * x * y + e * std::sin(x + y));
  };
}

double core_max(const ComplexField& f, double margin) {
  double m = 0.0;
  const Grid2D& g = f.grid();
  for (std::size_t idx : g.interior_nodes())
    if (Grid2D::disk_distance(g.x1(idx), g.x2(idx)) > margin) m = std::max(m, std::abs(f[idx]));
  return m;
}

// (1/pi) int_disk f(y) / (x - y) dy in polar coordinates about x, which
// removes the kernel singularity: y = x + r e^{i t}, 1/(x - y) dy = -e^{-i t} dr dt.
cplx polar_cauchy(const ComplexField::Function& f, cplx x) {
  constexpr int nt = 512, nr = 48;
  // Gauss-Legendre on [0, 1].
  std::vector<double> xs(nr), ws(nr);
  for (int k = 0; k < nr; ++k) {
    double z = std::cos(pi * (k + 0.75) / (nr + 0.5)), dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int j = 2; j <= nr; ++j) {
        const double p2 = ((2 * j - 1) * z * p1 - (j - 1) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      dp = nr * (z * p1 - p0) / (z * z - 1.0);
      z -= p1 / dp;
    }
    xs[k] = 0.5 * (1.0 + z);
    ws[k] = 1.0 / ((1.0 - z * z) * dp * dp);
  }
  cplx total{};
  for (int k = 0; k < nt; ++k) {
    const double t = 2.0 * pi * k / nt;
    const cplx e = std::polar(1.0, t);
    const double xe = x.real() * e.real() + x.imag() * e.imag();
    const double r_max = -xe + std::sqrt(xe * xe - std::norm(x) + 1.0);
    cplx inner{};
    for (int j = 0; j < nr; ++j) {
      const cplx y = x + r_max * xs[j] * e;
      inner += ws[j] * r_max * f(y.real(), y.imag());
    }
    total += -std::conj(e) * inner;
  }
  return total * (2.0 * pi / nt) / pi;
}

cplx weighted_inner(const ComplexField& f, const ComplexField& g) {
  const Grid2D& grid = f.grid();
  cplx s{};
  for (std::size_t idx : grid.interior_nodes()) s += grid.fraction(idx) * f[idx] * std::conj(g[idx]);
  return s * grid.h() * grid.h();
}

double log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double a = std::log(x[k]), b = std::log(y[k]);
    sx += a;
    sy += b;
    sxx += a * a;
    sxy += a * b;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

const auto bump_model = ConductivityModel::background(ConductivityModel::gaussian_bump_background(), 1.5);

}  // namespace

TEST_CASE("Schrodinger potential of simple backgrounds") {
  auto g = Grid2D::unit_disk(1.0 / 64);
  CHECK(schrodinger_potential(ConductivityModel::constant(2.5), g).q.sup_norm() == 0.0);
  const auto expo = ConductivityModel::background([](double x, double) { return cplx(std::exp(2 * x)); }, 10.0);
  const auto data = schrodinger_potential(expo, g);
  CHECK(core_max(data.q - ComplexField::constant(g, 1.0), 0.125) < 1e-4);
  CHECK(data.b == cplx(-1.0));
  CHECK((data.a + data.q).sup_norm() == 0.0);

  const auto negative = ConductivityModel::background([](double x, double) { return cplx(x); }, 10.0);
  CHECK_THROWS_AS(schrodinger_potential(negative, g), RefusalError);
}

TEST_CASE("Schrodinger potential converges at second order") {
  // sqrt(1 + 0.1 e^{-4 r^2}) has Laplacian computed symbolically below.
  const auto exact = [](double x, double y) {
    const double r2 = x * x + y * y, e = std::exp(-4 * r2);
    const double gamma = 1 + 0.1 * e;
    const double lap_gamma = 0.1 * e * (64 * r2 - 16);
    const double grad2 = std::pow(0.1 * 8 * e, 2) * r2;  // |grad gamma|^2
    // Delta sqrt(g) / sqrt(g) = Delta g / (2 g) - |grad g|^2 / (4 g^2)
    return cplx(lap_gamma / (2 * gamma) - grad2 / (4 * gamma * gamma));
  };
  std::vector<double> errs;
  for (double h : {1.0 / 16, 1.0 / 32, 1.0 / 64}) {
    auto g = Grid2D::unit_disk(h);
    const auto q = schrodinger_potential(bump_model, g).q;
    errs.push_back(core_max(q - ComplexField::from_function(g, exact), 0.125));
  }
  CHECK(std::log2(errs[0] / errs[1]) > 1.8);
  CHECK(std::log2(errs[1] / errs[2]) > 1.8);
}

TEST_CASE("Cauchy transform of the disk indicator") {
  auto g = Grid2D::unit_disk(1.0 / 128);
  const CauchyOperator T(g);
  const auto t1 = T.apply(ComplexField::constant(g, 1.0));
  const auto zbar = ComplexField::from_function(g, [](double x, double y) { return cplx(x, -y); });
  CHECK((t1 - zbar).sup_norm() <= 3 * g->h());
  CHECK(T.apply(ComplexField(g, Support::Domain)).sup_norm() == 0.0);
}

TEST_CASE("Cauchy transform converges to polar quadrature") {
  // Piecewise-constant cut cells at the circle make the transform first order.
  std::mt19937 rng(21);
  const auto f = random_smooth(rng);
  std::uniform_real_distribution<double> u(-0.7, 0.7);
  std::vector<cplx> points;
  for (int k = 0; k < 10; ++k) points.emplace_back(u(rng), u(rng));
  std::vector<double> errs;
  for (double h : {1.0 / 32, 1.0 / 64}) {
    auto g = Grid2D::unit_disk(h);
    const auto tf = CauchyOperator(g).apply(ComplexField::from_function(g, f));
    double e = 0.0;
    for (cplx p : points) {
      const std::size_t idx = g->nearest(p.real(), p.imag());
      e = std::max(e, std::abs(tf[idx] - polar_cauchy(f, cplx(g->x1(idx), g->x2(idx)))));
    }
    errs.push_back(e);
  }
  MESSAGE("polar oracle errors " << errs[0] << " " << errs[1]);
  CHECK(errs[0] / errs[1] > 1.8);
  CHECK(errs[1] < 0.2 * (1.0 / 64));
}

TEST_CASE("FFT path matches direct summation and is linear") {
  auto g = Grid2D::unit_disk(1.0 / 32);
  const CauchyOperator T(g);
  std::mt19937 rng(22);
  const auto f = ComplexField::from_function(g, random_smooth(rng));
  const auto h = ComplexField::from_function(g, random_smooth(rng));
  for (bool conj : {false, true}) {
    const auto fast = T.apply(f, conj), slow = T.apply_direct(f, conj);
    CHECK((fast - slow).sup_norm() < 1e-13 * slow.sup_norm());
  }
  const cplx a(0.4, -1.1), b(2.0, 0.3);
  const auto lhs = T.apply(a * f + b * h);
  const auto rhs = a * T.apply(f) + b * T.apply(h);
  CHECK((lhs - rhs).sup_norm() < 1e-13 * lhs.sup_norm());
}

TEST_CASE("Cauchy operators invert dbar and d") {
  std::mt19937 rng(23);
  auto g = Grid2D::unit_disk(1.0 / 128);
  const CauchyOperator T(g);
  for (int trial = 0; trial < 3; ++trial) {
    const auto f = ComplexField::from_function(g, random_smooth(rng));
    for (bool conj : {false, true}) {
      const auto d = diff_op(T.apply(f, conj), conj ? DiffOp::Del : DiffOp::DelBar);
      double num = 0.0, den = 0.0;
      for (std::size_t idx : g->interior_nodes())
        if (Grid2D::disk_distance(g->x1(idx), g->x2(idx)) > 3 * g->h()) {
          num += std::norm(d[idx] - f[idx]);
          den += std::norm(f[idx]);
        }
      CHECK(std::sqrt(num / den) < 0.05);
    }
  }
}

TEST_CASE("adjoint and operator norm") {
  auto g = Grid2D::unit_disk(1.0 / 32);
  const CauchyOperator T(g);
  std::mt19937 rng(24);
  const auto f = ComplexField::from_function(g, random_smooth(rng));
  const auto h = ComplexField::from_function(g, random_smooth(rng));
  const cplx lhs = weighted_inner(T.apply(f), h);
  const cplx rhs = -weighted_inner(f, T.apply(h, true));
  CHECK(std::abs(lhs - rhs) < 1e-12 * std::abs(lhs));
  const double norm = T.norm();
  auto l2w = [](const ComplexField& v) { return std::sqrt(weighted_inner(v, v).real()); };
  CHECK(norm > 0.5);
  CHECK(norm < 1.0);
  for (int k = 0; k < 5; ++k) {
    const auto v = ComplexField::from_function(g, random_smooth(rng));
    CHECK(l2w(T.apply(v)) <= norm * l2w(v) * (1 + 1e-9));
    CHECK(l2w(T.apply(v, true)) <= norm * l2w(v) * (1 + 1e-9));
  }
}

TEST_CASE("S vanishes for constant background and is bounded") {
  auto g = Grid2D::unit_disk(1.0 / 64);
  const CauchyOperator T(g);
  std::mt19937 rng(25);
  const auto f = ComplexField::from_function(g, random_smooth(rng));
  const auto flat = schrodinger_potential(ConductivityModel::constant(1.0), g);
  CHECK(apply_S(T, f, flat, 10.0, false).sup_norm() == 0.0);
  const auto data = schrodinger_potential(bump_model, g);
  const double bound = 0.25 * T.norm() * T.norm() * data.a.sup_norm();
  for (double tau : {1.0, 10.0, 40.0})
    for (bool tr : {false, true}) {
      const auto s = apply_S(T, f, data, tau, tr);
      double sn = 0.0, fn = 0.0;
      for (std::size_t idx : g->interior_nodes()) {
        sn += g->fraction(idx) * std::norm(s[idx]);
        fn += g->fraction(idx) * std::norm(f[idx]);
      }
      CHECK(std::sqrt(sn) <= bound * std::sqrt(fn) * (1 + 1e-9));
    }
  CHECK_THROWS_AS(apply_S(T, f, data, 0.0, false), RefusalError);
}

TEST_CASE("S applied to 1 decays in tau") {
  auto g = Grid2D::unit_disk(1.0 / 64);
  const CauchyOperator T(g);
  const auto data = schrodinger_potential(bump_model, g);
  const auto one = ComplexField::constant(g, 1.0);
  std::vector<double> taus{10, 20, 40, 80}, norms;
  for (double tau : taus) norms.push_back(apply_S(T, one, data, tau, false).l2_norm());
  const double slope = log_slope(taus, norms);
  MESSAGE("S1 slope " << slope);
  CHECK(slope <= -1.0 / 3.0 + 0.1);
}

TEST_CASE("constant background gives the pure exponential") {
  auto g = Grid2D::unit_disk(1.0 / 64);
  const auto s = build_cgo(ConductivityModel::constant(4.0), g, 15.0, Branch::Plus);
  CHECK(s.w.sup_norm() == 0.0);
  CHECK(s.terms == 0);
  const auto u = s.field();
  double err = 0.0;
  for (std::size_t idx : g->interior_nodes()) {
    const cplx z(g->x1(idx), g->x2(idx));
    const cplx exact = 0.5 * std::exp(15.0 * z * z);
    err = std::max(err, std::abs(u[idx] - exact) / std::abs(exact));
  }
  CHECK(err < 1e-14);
  CHECK(s.certificate == doctest::Approx(s.reference_certificate).epsilon(1e-12));
}

TEST_CASE("CGO parts reconstruct the field") {
  auto g = Grid2D::unit_disk(1.0 / 64);
  const CGOBuilder builder(bump_model, g);
  for (Branch br : {Branch::Plus, Branch::Minus}) {
    const auto s = builder.build(10.0, br, 2.0, cplx(0.1, -0.2));
    const auto u = s.field();
    double err = 0.0;
    for (std::size_t idx : g->interior_nodes()) {
      const double x = g->x1(idx), y = g->x2(idx);
      const cplx z(x, y), c(0.1, -0.2);
      const cplx phase = br == Branch::Plus ? 20.0 * (z - c) * (z - c)
                                            : -20.0 * std::conj(z - c) * std::conj(z - c);
      const cplx exact = std::exp(phase) * (1.0 + s.w[idx]) / std::sqrt(bump_model.background(x, y));
      err = std::max(err, std::abs(u[idx] - exact) / std::abs(exact));
    }
    CHECK(err < 1e-13);
    CHECK(s.certificate < 10 * s.reference_certificate);
  }
}

TEST_CASE("CGO remainder decays like tau^-1/3 or faster") {
  auto g = Grid2D::unit_disk(1.0 / 64);
  const CGOBuilder builder(bump_model, g);
  std::vector<double> taus{10, 20, 40, 80}, norms;
  for (double tau : taus) norms.push_back(builder.build(tau, Branch::Plus).w.l2_norm());
  const double slope = log_slope(taus, norms);
  MESSAGE("|w| slope " << slope);
  CHECK(slope <= -1.0 / 3.0 + 0.1);
}

TEST_CASE("CGO certificate converges under refinement") {
  const auto coarse = CGOBuilder(bump_model, Grid2D::unit_disk(1.0 / 64)).build(20.0, Branch::Plus);
  const auto fine = CGOBuilder(bump_model, Grid2D::unit_disk(1.0 / 128)).build(20.0, Branch::Plus);
  MESSAGE("certificates " << coarse.certificate << " " << fine.certificate);
  CHECK(coarse.certificate / fine.certificate >= 3.5);
}

TEST_CASE("Neumann series terms obey the measured contraction") {
  auto g = Grid2D::unit_disk(1.0 / 64);
  const CGOBuilder builder(bump_model, g);
  const auto s = builder.build(5.0, Branch::Plus);
  const auto one = ComplexField::constant(g, 1.0);
  const double unit = one.l2_norm();
  ComplexField term = one;
  ComplexField sum(g, Support::Domain);
  for (int n = 1; n <= s.terms; ++n) {
    term = apply_S(builder.cauchy(), term, builder.data(), 5.0, false);
    CHECK(term.l2_norm() <= std::pow(s.contraction, n) * unit * (1 + 1e-9));
    sum += term;
  }
  CHECK((sum - s.w).sup_norm() < 1e-15 + 1e-12 * s.w.sup_norm());
  CHECK(s.tail_bound == doctest::Approx(std::pow(s.contraction, s.terms + 1) / (1 - s.contraction)));
}

TEST_CASE("MINUS branch is the conjugate of the rotated PLUS branch") {
  auto g = Grid2D::unit_disk(1.0 / 64);
  const CGOBuilder builder(bump_model, g);
  const auto plus = builder.build(12.0, Branch::Plus);
  const auto minus = builder.build(12.0, Branch::Minus, 1.0);
  double err = 0.0, scale = 0.0;
  const int n = g->n();
  for (std::size_t idx : g->interior_nodes()) {
    // z -> i z maps node (i, j) to (n - 1 - j, i).
    const std::size_t rot = g->index(n - 1 - g->row(idx), g->col(idx));
    REQUIRE(g->inside(rot));
    err = std::max(err, std::abs(minus.jet.value[idx] - std::conj(plus.jet.value[rot])));
    err = std::max(err, std::abs(minus.jet.exponent[idx] - std::conj(plus.jet.exponent[rot])));
    scale = std::max(scale, std::abs(minus.w[idx]));
  }
  CHECK(err < 1e-12);
  CHECK(scale > 1e-4);
}

TEST_CASE("non-contracting series is reported") {
  auto g = Grid2D::unit_disk(1.0 / 32);
  const auto steep = ConductivityModel::background([](double x, double) { return cplx(std::exp(8 * x)); }, 4000.0);
  CHECK_THROWS_AS(build_cgo(steep, g, 0.05, Branch::Plus), ConvergenceError);
  CHECK_THROWS_AS(build_cgo(bump_model, g, -1.0, Branch::Plus), RefusalError);
}
