#include "calderon/forward.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <cmath>
#include <algorithm>
#include <array>
#include <sstream>

#include "calderon/errors.hpp"
#include "calderon/ops.hpp"

namespace calderon {

namespace {

// Rows whose shortest arm is below kShortArm h are scaled by arm / (kShortArm h)
// so the roundoff floor of the residual stays below the Newton tolerance.
constexpr double kShortArm = 0.05;
// Below this arm length the three-point derivative is dominated by roundoff
// and the axis derivative falls back to the opposite side.
constexpr double kDegenerateArm = 1e-6;

enum Direction { East = 0, West = 1, North = 2, South = 3 };

// Weights of the three-point derivative at 0 through -a, 0, b.
struct ThreePoint {
  double left, centre, right;
};

ThreePoint derivative_weights(double a, double b) {
  return {-b / (a * (a + b)), (b - a) / (a * b), a / (b * (a + b))};
}

ThreePoint axis_weights(double a, double b, double h) {
  if (a < kDegenerateArm * h) return {0.0, -1.0 / b, 1.0 / b};
  if (b < kDegenerateArm * h) return {-1.0 / a, 1.0 / a, 0.0};
  return derivative_weights(a, b);
}

struct Arm {
  int neighbour = -1;
  double length = 0.0;
  double x1 = 0.0, x2 = 0.0, theta = 0.0;
};

struct NodeStencil {
  std::size_t node = 0;
  double row_scale = 1.0;
  Arm arm[4];
  ThreePoint wx{}, wy{};
};

using SparseMatrix = Eigen::SparseMatrix<cplx>;
using Vector = Eigen::VectorXcd;

}  // namespace

class Discretization {
 public:
  explicit Discretization(GridPtr grid) : grid_(std::move(grid)) {
    const Grid2D& g = *grid_;
    const double h = g.h();
    unknown_.assign(g.size(), -1);
    for (std::size_t idx : g.interior_nodes()) {
      unknown_[idx] = static_cast<int>(nodes_.size());
      NodeStencil s;
      s.node = idx;
      nodes_.push_back(s);
    }
    const int di[4] = {1, -1, 0, 0};
    const int dj[4] = {0, 0, 1, -1};
    for (NodeStencil& s : nodes_) {
      const int i = g.col(s.node), j = g.row(s.node);
      const double x = g.x1(s.node), y = g.x2(s.node);
      for (int d = 0; d < 4; ++d) {
        Arm& a = s.arm[d];
        if (g.inside(i + di[d], j + dj[d])) {
          a.neighbour = unknown_[g.index(i + di[d], j + dj[d])];
          a.length = h;
          continue;
        }
        double t = 0.0;
        switch (d) {
          case East: t = std::sqrt(1.0 - y * y) - x; break;
          case West: t = x + std::sqrt(1.0 - y * y); break;
          case North: t = std::sqrt(1.0 - x * x) - y; break;
          case South: t = y + std::sqrt(1.0 - x * x); break;
        }
        a.length = std::clamp(t, 1e-14, h);
        a.x1 = x + di[d] * a.length;
        a.x2 = y + dj[d] * a.length;
        a.theta = std::atan2(a.x2, a.x1);
      }
      double shortest = h;
      for (const Arm& a : s.arm) shortest = std::min(shortest, a.length);
      s.row_scale = std::min(1.0, shortest / (kShortArm * h));
      s.wx = axis_weights(s.arm[West].length, s.arm[East].length, h);
      s.wy = axis_weights(s.arm[South].length, s.arm[North].length, h);
    }
  }

  const GridPtr& grid_ptr() const noexcept { return grid_; }
  std::size_t unknowns() const noexcept { return nodes_.size(); }
  const std::vector<NodeStencil>& nodes() const noexcept { return nodes_; }

  std::vector<cplx> boundary_values(const BoundaryFunction& f) const {
    if (f.grid_ptr() != grid_) throw RefusalError("boundary data on a different grid");
    std::vector<cplx> b(4 * nodes_.size());
    for (std::size_t p = 0; p < nodes_.size(); ++p) {
      const NodeStencil& s = nodes_[p];
      for (int d = 0; d < 4; ++d)
        if (s.arm[d].neighbour < 0) b[4 * p + d] = f(s.arm[d].theta);
    }
    return b;
  }

  Vector to_vector(const ComplexField& u) const {
    Vector v(static_cast<Eigen::Index>(nodes_.size()));
    for (std::size_t p = 0; p < nodes_.size(); ++p) v[p] = u[nodes_[p].node];
    return v;
  }

  ComplexField to_field(const Vector& v, std::string tag) const {
    ComplexField u(grid_, Support::Domain, std::move(tag));
    for (std::size_t p = 0; p < nodes_.size(); ++p) u[nodes_[p].node] = v[p];
    return u;
  }

  // Residual of div(gamma grad u) - source; Jacobian when requested.
  Vector residual(const ConductivityModel& model, const Vector& u, const std::vector<cplx>& bvals,
                  const ComplexField* source, SparseMatrix* jacobian) const;

 private:
  GridPtr grid_;
  std::vector<NodeStencil> nodes_;
  std::vector<int> unknown_;
};

Vector Discretization::residual(const ConductivityModel& model, const Vector& u,
                                const std::vector<cplx>& bvals, const ComplexField* source,
                                SparseMatrix* jacobian) const {
  const Grid2D& g = *grid_;
  const std::size_t n = nodes_.size();

  auto arm_value = [&](std::size_t p, int d) {
    const Arm& a = nodes_[p].arm[d];
    return a.neighbour >= 0 ? u[a.neighbour] : bvals[4 * p + d];
  };

  // Gradient stencils and gamma at every node and boundary crossing.
  std::vector<cplx> gx(n), gy(n);
  std::vector<ConductivityModel::Evaluation> gp(n);
  std::vector<ConductivityModel::Evaluation> gb(4 * n);
  for (std::size_t p = 0; p < n; ++p) {
    const NodeStencil& s = nodes_[p];
    const double x = g.x1(s.node), y = g.x2(s.node);
    gx[p] = s.wx.left * arm_value(p, West) + s.wx.centre * u[p] + s.wx.right * arm_value(p, East);
    gy[p] = s.wy.left * arm_value(p, South) + s.wy.centre * u[p] + s.wy.right * arm_value(p, North);
    gp[p] = model.evaluate(x, y, u[p], gx[p], gy[p]);
    for (int d = 0; d < 4; ++d)
      if (s.arm[d].neighbour < 0)
        gb[4 * p + d] = model.evaluate(s.arm[d].x1, s.arm[d].x2, bvals[4 * p + d], gx[p], gy[p]);
  }

  Vector r(static_cast<Eigen::Index>(n));
  std::vector<Eigen::Triplet<cplx>> trips;
  if (jacobian) trips.reserve(n * 16);

  // d gamma_q / d u_k for node q's gradient stencil, pushed into row `row` with factor `c`.
  auto push_gamma_derivative = [&](int row, std::size_t q, const ConductivityModel::Evaluation& e,
                                   bool include_rho, cplx c) {
    const NodeStencil& s = nodes_[q];
    const cplx centre = c * (e.d_mu1 * s.wx.centre + e.d_mu2 * s.wy.centre +
                             (include_rho ? e.d_rho : cplx{}));
    trips.emplace_back(row, static_cast<int>(q), centre);
    const int dirs[4] = {West, East, South, North};
    for (int d : dirs) {
      const Arm& a = s.arm[d];
      if (a.neighbour < 0) continue;
      const double w = d == West    ? s.wx.left
                       : d == East  ? s.wx.right
                       : d == South ? s.wy.left
                                    : s.wy.right;
      const cplx der = (d == West || d == East) ? e.d_mu1 : e.d_mu2;
      trips.emplace_back(row, a.neighbour, c * der * w);
    }
  };

  for (std::size_t p = 0; p < n; ++p) {
    const NodeStencil& s = nodes_[p];
    const int row = static_cast<int>(p);
    const std::size_t first = trips.size();
    const double cx = 2.0 / (s.arm[East].length + s.arm[West].length);
    const double cy = 2.0 / (s.arm[North].length + s.arm[South].length);
    cplx acc{};
    for (int d = 0; d < 4; ++d) {
      const Arm& a = s.arm[d];
      const double c = (d == East || d == West) ? cx : cy;
      const bool interior = a.neighbour >= 0;
      const ConductivityModel::Evaluation& en = interior ? gp[a.neighbour] : gb[4 * p + d];
      const cplx ge = 0.5 * (gp[p].value + en.value);
      const cplx diff = arm_value(p, d) - u[p];
      const double coef = c / a.length;
      acc += coef * ge * diff;
      if (!jacobian) continue;
      if (interior) trips.emplace_back(row, a.neighbour, coef * ge);
      trips.emplace_back(row, row, -coef * ge);
      const cplx half = 0.5 * coef * diff;
      push_gamma_derivative(row, p, gp[p], true, half);
      if (interior)
        push_gamma_derivative(row, a.neighbour, en, true, half);
      else
        push_gamma_derivative(row, p, en, false, half);
    }
    if (source) acc -= (*source)[s.node];
    r[p] = s.row_scale * acc;
    if (s.row_scale < 1.0)
      for (std::size_t t = first; t < trips.size(); ++t)
        trips[t] = {trips[t].row(), trips[t].col(), s.row_scale * trips[t].value()};
  }
  if (jacobian) {
    jacobian->resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    jacobian->setFromTriplets(trips.begin(), trips.end());
  }
  return r;
}

namespace {

double l2(const Vector& r, double h) { return h * r.norm(); }

void factorize(Eigen::SparseLU<SparseMatrix>& lu, SparseMatrix& a) {
  a.makeCompressed();
  lu.analyzePattern(a);
  lu.factorize(a);
  if (lu.info() != Eigen::Success)
    throw Error("sparse LU factorization failed: " + lu.lastErrorMessage());
}

Vector checked_solve(const Eigen::SparseLU<SparseMatrix>& lu, const SparseMatrix& a, const Vector& rhs) {
  Vector x = lu.solve(rhs);
  const double scale = rhs.norm();
  const double rel = scale > 0.0 ? (a * x - rhs).norm() / scale : (a * x).norm();
  if (!x.allFinite() || rel > 1e-8) {
    std::ostringstream msg;
    msg << "linear solver breakdown: relative residual " << rel
        << " (operator is near singular or badly conditioned)";
    throw Error(msg.str());
  }
  return x;
}

}  // namespace

struct BackgroundSolver::Impl {
  Impl(const ConductivityModel& m, GridPtr grid) : model(m.linear_part()), disc(std::move(grid)) {
    model.check_ellipticity(*disc.grid_ptr());
    const Vector zero = Vector::Zero(static_cast<Eigen::Index>(disc.unknowns()));
    const std::vector<cplx> bzero(4 * disc.unknowns());
    disc.residual(model, zero, bzero, nullptr, &matrix);
    factorize(lu, matrix);
  }

  ComplexField solve(const BoundaryFunction& f, const ComplexField* source) const {
    const Vector zero = Vector::Zero(static_cast<Eigen::Index>(disc.unknowns()));
    const Vector r0 = disc.residual(model, zero, disc.boundary_values(f), source, nullptr);
    return disc.to_field(checked_solve(lu, matrix, -r0), "solution");
  }

  ConductivityModel model;
  Discretization disc;
  SparseMatrix matrix;
  Eigen::SparseLU<SparseMatrix> lu;
};

BackgroundSolver::BackgroundSolver(const ConductivityModel& model, GridPtr grid)
    : impl_(std::make_unique<Impl>(model, std::move(grid))) {}
BackgroundSolver::~BackgroundSolver() = default;
BackgroundSolver::BackgroundSolver(BackgroundSolver&&) noexcept = default;
BackgroundSolver& BackgroundSolver::operator=(BackgroundSolver&&) noexcept = default;

const GridPtr& BackgroundSolver::grid_ptr() const noexcept { return impl_->disc.grid_ptr(); }

ComplexField BackgroundSolver::solve(const BoundaryFunction& f) const { return impl_->solve(f, nullptr); }

ComplexField BackgroundSolver::solve(const BoundaryFunction& f, const ComplexField& source) const {
  if (source.grid_ptr() != grid_ptr()) throw RefusalError("source on a different grid");
  return impl_->solve(f, &source);
}

double BackgroundSolver::residual(const ComplexField& u, const BoundaryFunction& f,
                                  const ComplexField* source) const {
  const Discretization& d = impl_->disc;
  return l2(d.residual(impl_->model, d.to_vector(u), d.boundary_values(f), source, nullptr),
            d.grid_ptr()->h());
}

namespace {

void require_grid(const ComplexField& u, const GridPtr& grid) {
  if (u.grid_ptr() != grid) throw RefusalError("field and boundary data live on different grids");
}

// Derivative at 0 of the Lagrange interpolant through the nodes s.
std::vector<double> derivative_at_zero(const std::vector<double>& s) {
  const std::size_t n = s.size();
  std::vector<double> w(n, 0.0);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t m = 0; m < n; ++m) {
      if (m == k) continue;
      double term = 1.0 / (s[k] - s[m]);
      for (std::size_t l = 0; l < n; ++l)
        if (l != k && l != m) term *= -s[l] / (s[k] - s[l]);
      w[k] += term;
    }
  return w;
}

std::array<double, 4> cubic_weights(double t) {
  return {-t * (t - 1.0) * (t - 2.0) / 6.0, (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
          -(t + 1.0) * t * (t - 2.0) / 2.0, (t + 1.0) * t * (t - 1.0) / 6.0};
}

// Bicubic Lagrange interpolation from the 4x4 inside nodes around (x1, x2).
cplx interpolate(const ComplexField& u, double x1, double x2) {
  const Grid2D& g = u.grid();
  const double h = g.h();
  const int i0 = static_cast<int>(std::floor((x1 + g.half_width()) / h));
  const int j0 = static_cast<int>(std::floor((x2 + g.half_width()) / h));
  const auto wx = cubic_weights((x1 - g.coord(i0)) / h);
  const auto wy = cubic_weights((x2 - g.coord(j0)) / h);
  cplx sum{};
  for (int b = 0; b < 4; ++b)
    for (int a = 0; a < 4; ++a) {
      const int i = i0 - 1 + a, j = j0 - 1 + b;
      if (!g.inside(i, j)) throw RefusalError("interpolation stencil leaves the domain; grid too coarse");
      sum += wx[a] * wy[b] * u.at(i, j);
    }
  return sum;
}

}  // namespace

DirichletSolve solve_dirichlet(const ConductivityModel& model, const BoundaryFunction& f,
                               const SolverOptions& options, const BackgroundSolver* background) {
  const double norm = f.norm();
  if (!(norm < model.delta())) {
    std::ostringstream msg;
    msg << "boundary data outside the well-posedness ball: |f| = " << norm
        << " >= delta = " << model.delta();
    throw RefusalError(msg.str());
  }
  const GridPtr& grid = f.grid_ptr();
  const double h = grid->h();
  model.check_ellipticity(*grid);
  const Discretization disc(grid);
  const std::vector<cplx> bvals = disc.boundary_values(f);
  const Eigen::Index n = static_cast<Eigen::Index>(disc.unknowns());

  // Initial guess from the gamma0 problem.
  // gamma0 factorization, used for the initial guess and for chord steps.
  SparseMatrix local_matrix;
  Eigen::SparseLU<SparseMatrix> local_lu;
  const SparseMatrix* chord_matrix = &local_matrix;
  const Eigen::SparseLU<SparseMatrix>* chord_lu = &local_lu;
  Vector u;
  if (background) {
    if (background->grid_ptr() != grid) throw RefusalError("background solver on a different grid");
    chord_matrix = &background->impl_->matrix;
    chord_lu = &background->impl_->lu;
    u = disc.to_vector(background->solve(f));
  } else {
    const ConductivityModel linear = model.linear_part();
    const Vector r0 = disc.residual(linear, Vector::Zero(n), bvals, nullptr, &local_matrix);
    factorize(local_lu, local_matrix);
    u = checked_solve(local_lu, local_matrix, -r0);
  }

  // Chord steps with the gamma0 operator while they contract by kChordRate
  // or better, full Newton steps after that.
  constexpr double kChordRate = 0.25;
  SparseMatrix jac;
  Eigen::SparseLU<SparseMatrix> lu;
  bool chord = !model.is_linear();
  Vector r = disc.residual(model, u, bvals, nullptr, nullptr);
  double res = l2(r, h);
  int iterations = 0;
  bool polished = false;
  while (true) {
    if (res < options.tolerance) {
      if (polished) break;
      polished = true;
    } else if (iterations >= options.max_iterations) {
      throw ConvergenceError("Newton iteration did not converge within the iteration limit", res);
    } else {
      ++iterations;
    }
    Vector step;
    if (chord) {
      step = checked_solve(*chord_lu, *chord_matrix, -r);
    } else {
      disc.residual(model, u, bvals, nullptr, &jac);
      factorize(lu, jac);
      step = checked_solve(lu, jac, -r);
    }
    bool accepted = false;
    const double before = res;
    double t = 1.0;
    for (int b = 0; b <= options.max_backtracks; ++b, t *= 0.5) {
      Vector cand = u + t * step;
      Vector rc = disc.residual(model, cand, bvals, nullptr, nullptr);
      const double rn = l2(rc, h);
      if (rn < res) {
        u = std::move(cand);
        r = std::move(rc);
        res = rn;
        accepted = true;
        break;
      }
    }
    if (chord) {
      if (!accepted || res > kChordRate * before) chord = false;
      if (!accepted && res < options.tolerance) break;
      continue;
    }
    if (!accepted) {
      if (res < options.tolerance) break;  // polish step at the roundoff floor
      throw ConvergenceError("Newton iteration stagnated: no backtracked step reduces the residual", res);
    }
  }
  return {f, disc.to_field(u, "solution"), res, iterations};
}

ComplexField solve_linear_background(const ConductivityModel& model, const BoundaryFunction& f) {
  return BackgroundSolver(model, f.grid_ptr()).solve(f);
}

double dirichlet_residual(const ConductivityModel& model, const ComplexField& u, const BoundaryFunction& f) {
  require_grid(u, f.grid_ptr());
  const Discretization disc(f.grid_ptr());
  return l2(disc.residual(model, disc.to_vector(u), disc.boundary_values(f), nullptr, nullptr),
            f.grid_ptr()->h());
}

DtNSample dtn_apply(const ConductivityModel& model, const BoundaryFunction& f, const SolverOptions& options) {
  const DirichletSolve solved = solve_dirichlet(model, f, options);
  const Grid2D& g = *f.grid_ptr();
  const double h = g.h();
  const std::vector<double> depth = {0.0, 3.0 * h, 4.0 * h, 5.0 * h, 6.0 * h};
  const std::vector<double> w = derivative_at_zero(depth);
  DtNSample out{f, {}};
  out.g.reserve(g.boundary().size());
  for (std::size_t k = 0; k < g.boundary().size(); ++k) {
    const BoundaryNode& b = g.boundary()[k];
    const double c = b.normal[0], s = b.normal[1];
    cplx du = w[0] * f.values()[k];
    for (std::size_t d = 1; d < depth.size(); ++d)
      du += w[d] * interpolate(solved.u, (1.0 - depth[d]) * c, (1.0 - depth[d]) * s);
    const cplx dn = -du;
    const cplx dt = f.derivative(b.theta);
    const cplx mu1 = c * dn - s * dt;
    const cplx mu2 = s * dn + c * dt;
    out.g.push_back(model.gamma(b.point[0], b.point[1], f.values()[k], mu1, mu2) * dn);
  }
  return out;
}

cplx DtNSample::cosine_ratio(int n) const {
  const auto& nodes = f.grid_ptr()->boundary();
  cplx num{}, den{};
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const double c = std::cos(n * nodes[k].theta);
    num += g[k] * c;
    den += f.values()[k] * c;
  }
  if (std::abs(den) == 0.0) throw RefusalError("boundary data has no cos(n theta) component");
  return num / den;
}

cplx dtn_pairing(const ConductivityModel& model, const BackgroundSolver& background, const DirichletSolve& solved,
                 const ComplexField& v) {
  require_grid(v, solved.u.grid_ptr());
  if (background.grid_ptr() != solved.u.grid_ptr()) throw RefusalError("background solver on a different grid");
  const Grid2D& g = solved.u.grid();
  const ComplexField u0 = background.solve(solved.f);
  const auto [u1, u2] = gradient(solved.u);
  const auto [w1, w2] = gradient(u0);
  const auto [v1, v2] = gradient(v);
  ComplexField integrand(solved.u.grid_ptr(), Support::Domain, "pairing");
  for (std::size_t idx : g.interior_nodes()) {
    const double x = g.x1(idx), y = g.x2(idx);
    const cplx g0 = model.background(x, y);
    const cplx excess = model.gamma(x, y, solved.u[idx], u1[idx], u2[idx]) - g0;
    integrand[idx] = excess * (u1[idx] * v1[idx] + u2[idx] * v2[idx]) + g0 * (w1[idx] * v1[idx] + w2[idx] * v2[idx]);
  }
  return integrate(integrand);
}

cplx dtn_pairing(const ConductivityModel& model, const DirichletSolve& solved, const ComplexField& v) {
  return dtn_pairing(model, BackgroundSolver(model, solved.u.grid_ptr()), solved, v);
}

cplx dtn_pairing(const ConductivityModel& model, const BoundaryFunction& f, const BoundaryFunction& phi,
                 const SolverOptions& options) {
  if (phi.grid_ptr() != f.grid_ptr()) throw RefusalError("boundary data on different grids");
  const BackgroundSolver background(model, f.grid_ptr());
  const DirichletSolve solved = solve_dirichlet(model, f, options, &background);
  return dtn_pairing(model, background, solved, background.solve(phi));
}

}  // namespace calderon
