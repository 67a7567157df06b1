#include "calderon/ops.hpp"

#include <cmath>
#include <sstream>

#include "calderon/errors.hpp"

namespace calderon {

namespace {

constexpr int kMinNodesAcross = 5;

struct AxisStencil {
  // Values along one axis through the node: f(k) reads offset k or reports absence.
  const ComplexField& f;
  int i, j, di, dj;

  bool has(int k) const {
    const Grid2D& g = f.grid();
    const int a = i + k * di, b = j + k * dj;
    return g.in_box(a, b) && f.defined_at(g.index(a, b));
  }
  cplx at(int k) const { return f.at(i + k * di, j + k * dj); }
};

[[noreturn]] void stencil_failure(const Grid2D& g, int i, int j) {
  std::ostringstream msg;
  msg << "stencil leaves the field support at node (" << g.coord(i) << ", " << g.coord(j)
      << "); grid too coarse";
  throw RefusalError(msg.str());
}

cplx first_derivative(const AxisStencil& s, double h) {
  if (s.has(1) && s.has(-1)) return (s.at(1) - s.at(-1)) / (2.0 * h);
  if (s.has(1) && s.has(2)) return (-3.0 * s.at(0) + 4.0 * s.at(1) - s.at(2)) / (2.0 * h);
  if (s.has(-1) && s.has(-2)) return (3.0 * s.at(0) - 4.0 * s.at(-1) + s.at(-2)) / (2.0 * h);
  stencil_failure(s.f.grid(), s.i, s.j);
}

cplx second_derivative(const AxisStencil& s, double h) {
  const double h2 = h * h;
  if (s.has(1) && s.has(-1)) return (s.at(1) - 2.0 * s.at(0) + s.at(-1)) / h2;
  if (s.has(1) && s.has(2) && s.has(3))
    return (2.0 * s.at(0) - 5.0 * s.at(1) + 4.0 * s.at(2) - s.at(3)) / h2;
  if (s.has(-1) && s.has(-2) && s.has(-3))
    return (2.0 * s.at(0) - 5.0 * s.at(-1) + 4.0 * s.at(-2) - s.at(-3)) / h2;
  stencil_failure(s.f.grid(), s.i, s.j);
}

void require_resolution(const Grid2D& g) {
  if (g.nodes_across() < kMinNodesAcross) {
    std::ostringstream msg;
    msg << "grid too coarse: " << g.nodes_across() << " interior nodes across the domain, need "
        << kMinNodesAcross;
    throw RefusalError(msg.str());
  }
}

}  // namespace

ComplexField diff_op(const ComplexField& f, DiffOp which) {
  const Grid2D& g = f.grid();
  require_resolution(g);
  const double h = g.h();
  const cplx I(0.0, 1.0);
  ComplexField out(f.grid_ptr(), f.support(), f.tag());
  for (std::size_t idx = 0; idx < g.size(); ++idx) {
    if (!f.defined_at(idx)) continue;
    const int i = g.col(idx), j = g.row(idx);
    const AxisStencil sx{f, i, j, 1, 0};
    const AxisStencil sy{f, i, j, 0, 1};
    cplx v;
    switch (which) {
      case DiffOp::Dx1: v = first_derivative(sx, h); break;
      case DiffOp::Dx2: v = first_derivative(sy, h); break;
      case DiffOp::Del: v = 0.5 * (first_derivative(sx, h) - I * first_derivative(sy, h)); break;
      case DiffOp::DelBar: v = 0.5 * (first_derivative(sx, h) + I * first_derivative(sy, h)); break;
      case DiffOp::Laplacian: v = second_derivative(sx, h) + second_derivative(sy, h); break;
    }
    out[idx] = v;
  }
  return out;
}

std::pair<ComplexField, ComplexField> gradient(const ComplexField& f) {
  return {diff_op(f, DiffOp::Dx1), diff_op(f, DiffOp::Dx2)};
}

cplx integrate(const ComplexField& f) {
  const Grid2D& g = f.grid();
  cplx sum{};
  if (f.support() == Support::Domain) {
    for (std::size_t idx : g.interior_nodes()) sum += g.weight(idx) * f[idx];
  } else {
    for (std::size_t idx = 0; idx < g.size(); ++idx) sum += f[idx];
    sum *= g.h() * g.h();
  }
  if (!std::isfinite(sum.real()) || !std::isfinite(sum.imag()))
    throw RefusalError("integrand '" + f.tag() + "' holds a non-finite value");
  return sum;
}

double smooth_step(double t) noexcept {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  // Mollifier profile exp(-1/(1-s^2)) shifted so it vanishes flatly at t = 0.
  auto g = [](double s) {
    const double u = s - 1.0;
    return std::exp(-1.0 / (1.0 - u * u));
  };
  const double a = g(t), b = g(1.0 - t);
  return a / (a + b);
}

ComplexField cutoff_extend(const ComplexField& f, double margin) {
  const Grid2D& g = f.grid();
  if (margin < 2.0 * g.h() * (1.0 - 1e-12)) throw RefusalError("cutoff margin must be at least 2h");
  if (2.0 * margin >= 1.0) throw RefusalError("cutoff margin exceeds the inradius of the domain");
  ComplexField out(f.grid_ptr(), Support::Box, f.tag());
  for (std::size_t idx : g.interior_nodes()) {
    const double d = Grid2D::disk_distance(g.x1(idx), g.x2(idx));
    out[idx] = f[idx] * smooth_step(d / (2.0 * margin));
  }
  return out;
}

}  // namespace calderon
