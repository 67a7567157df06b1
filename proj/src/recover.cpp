#include "calderon/recover.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>

#include <boost/multiprecision/cpp_int.hpp>

#include "calderon/errors.hpp"
#include "calderon/ops.hpp"

namespace calderon {

namespace {

using lcplx = std::complex<long double>;

constexpr cplx I{0.0, 1.0};

double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double out = 1.0;
  for (int i = 1; i <= k; ++i) out = out * (n - k + i) / i;
  return out;
}

double factorial(int n) {
  double out = 1.0;
  for (int i = 2; i <= n; ++i) out *= i;
  return out;
}

// Coefficients of a^j b^{deg - j}, j = deg..0, in prod_l (alpha_l a + beta_l b).
std::vector<cplx> expand_linear_product(const std::vector<std::pair<cplx, cplx>>& factors) {
  std::vector<cplx> poly{1.0};  // poly[i] multiplies b^i a^{deg - i}
  for (const auto& [alpha, beta] : factors) {
    std::vector<cplx> next(poly.size() + 1, 0.0);
    for (std::size_t i = 0; i < poly.size(); ++i) {
      next[i] += alpha * poly[i];
      next[i + 1] += beta * poly[i];
    }
    poly = std::move(next);
  }
  return poly;  // index = number of twos
}

SymmetricTensorField unit_tensor(const GridPtr& grid, int m, const MultiIndex& j, const ComplexField* profile) {
  SymmetricTensorField t(grid, m);
  t.set(j, profile ? *profile : ComplexField::constant(grid, 1.0));
  return t;
}

}  // namespace

IdentityOracle tensor_oracle(SymmetricTensorField t) {
  return [t = std::move(t)](std::span<const SolutionJet> u) { return assemble_integral_identity(t, u); };
}

cplx SingularSolutionSpec::anchor() const { return std::polar(1.0, theta); }
cplx SingularSolutionSpec::normal() const { return anchor(); }

cplx SingularSolutionSpec::nu() const {
  const cplx n = normal();
  const cplx t = I * n;
  return direction == 0 ? n : t + static_cast<double>(direction) * n;
}

cplx SingularSolutionSpec::pole() const { return anchor() + sigma * nu(); }

void SingularSolutionSpec::validate() const {
  if (direction < 0) throw RefusalError("singular-solution direction index must be nonnegative");
  if (degree < 0) throw RefusalError("singular-solution degree must be nonnegative");
  if (!(sigma > 0.0)) throw RefusalError("singular-solution offset must be positive");
  if (!(rho > 0.0) || sigma > 0.5 * rho) throw RefusalError("singular-solution offset exceeds half the working radius");
  if (!(std::abs(pole()) > 1.0)) throw RefusalError("singular-solution pole lies in the closed disk");
}

SolutionJet singular_part(const GridPtr& grid, const SingularSolutionSpec& spec) {
  spec.validate();
  const Grid2D& g = *grid;
  const cplx z = spec.pole();
  const cplx inward = -spec.normal();
  const cplx phase = std::polar(1.0, spec.rotation);
  SolutionJet out{ComplexField(grid, Support::Domain, "exponent"), ComplexField(grid, Support::Domain, "singular"),
                  ComplexField(grid, Support::Domain), ComplexField(grid, Support::Domain)};
  for (std::size_t idx : g.interior_nodes()) {
    const cplx w = cplx(g.x1(idx), g.x2(idx)) - z;
    cplx f, df;
    if (spec.degree == 0) {
      f = std::log(w / inward);
      df = 1.0 / w;
    } else {
      f = std::pow(w, -spec.degree);
      df = -static_cast<double>(spec.degree) * f / w;
    }
    f *= phase;
    df *= phase;
    out.value[idx] = f.real();
    out.d1[idx] = df.real();
    out.d2[idx] = -df.imag();
  }
  return out;
}

SolutionJet singular_solution(const ConductivityModel& gamma0, const GridPtr& grid, const SingularSolutionSpec& spec,
                              const BackgroundSolver* background) {
  SolutionJet exact = singular_part(grid, spec);
  if (gamma0.has_constant_background()) return exact;
  std::optional<BackgroundSolver> own;
  if (!background) background = &own.emplace(gamma0.linear_part(), grid);
  const cplx z = spec.pole();
  const cplx inward = -spec.normal();
  const cplx phase = std::polar(1.0, spec.rotation);
  const auto trace = BoundaryFunction::from_function(grid, [&](double x1, double x2) {
    const cplx w = cplx(x1, x2) - z;
    const cplx f = spec.degree == 0 ? std::log(w / inward) : std::pow(w, -spec.degree);
    return cplx((phase * f).real(), 0.0);
  });
  ComplexField u = background->solve(trace);
  ComplexField correction = u - exact.value;
  auto [c1, c2] = gradient(correction);
  return {std::move(exact.exponent), u.restricted(), exact.d1 + c1.restricted(), exact.d2 + c2.restricted()};
}

Eigen::VectorXcd CoefficientSystem::solve(const Eigen::VectorXcd& rhs) const { return solve(ExtendedVector(rhs.cast<lcplx>())); }

Eigen::VectorXcd CoefficientSystem::solve(const ExtendedVector& rhs) const {
  if (rhs.size() != matrix.rows()) throw RefusalError("right-hand side does not match the coefficient system");
  // Entries grow like m^m; an extended-precision LU on equilibrated columns,
  // refined against the exact integer matrix, keeps the solve at rhs accuracy.
  using LMat = Eigen::Matrix<lcplx, Eigen::Dynamic, Eigen::Dynamic>;
  const LMat a = matrix.cast<lcplx>();
  Eigen::Matrix<long double, Eigen::Dynamic, 1> scale(a.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j) scale(j) = a.col(j).cwiseAbs().maxCoeff();
  const LMat scaled = a * scale.cwiseInverse().asDiagonal();
  const Eigen::FullPivLU<LMat> lu(scaled);
  ExtendedVector y = lu.solve(rhs);
  for (int step = 0; step < 3; ++step) y += lu.solve(ExtendedVector(rhs - scaled * y));
  return (scale.cwiseInverse().asDiagonal() * y).cast<cplx>();
}

CoefficientSystem boundary_coefficient_system(int m) {
  if (m < 1) throw RefusalError("coefficient systems start at order 1");
  CoefficientSystem s;
  s.order = m;
  s.kind = SystemKind::Boundary;
  s.unknowns = gradient_indices(m);
  s.matrix = Eigen::MatrixXcd::Zero(m + 1, m + 1);
  s.matrix(0, m) = 1.0;
  s.rows.push_back("nu=e2");
  for (int j = 1; j <= m; ++j) {
    for (int i = 0; i <= m; ++i) s.matrix(j, i) = std::pow(static_cast<double>(j), i) * binomial(m, i);
    s.rows.push_back(j == 1 ? "nu=e1+e2" : "nu=e1+" + std::to_string(j) + "e2");
  }
  return s;
}

CoefficientSystem interior_coefficient_system(int m) {
  if (m < 1) throw RefusalError("coefficient systems start at order 1");
  CoefficientSystem s;
  s.order = m;
  s.kind = SystemKind::Interior;
  s.unknowns = gradient_indices(m);
  s.matrix = Eigen::MatrixXcd::Zero(m + 1, m + 1);
  for (int k = 1; k <= m + 1; ++k) {
    std::vector<std::pair<cplx, cplx>> factors(m + 1 - k, {1.0, I});
    factors.insert(factors.end(), k - 1, {-1.0, I});
    const auto row = expand_linear_product(factors);
    for (int i = 0; i <= m; ++i) s.matrix(k - 1, i) = row[i];
    s.rows.push_back("k=" + std::to_string(k));
  }
  return s;
}

ExactDeterminant exact_determinant(const CoefficientSystem& system) {
  using boost::multiprecision::cpp_int;
  struct G {
    cpp_int re, im;
  };
  auto mul = [](const G& a, const G& b) { return G{a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re}; };
  auto sub = [](const G& a, const G& b) { return G{a.re - b.re, a.im - b.im}; };
  auto is_zero = [](const G& a) { return a.re == 0 && a.im == 0; };
  // Exact division; Bareiss guarantees the quotient is a Gaussian integer.
  auto div = [&](const G& a, const G& b) {
    const cpp_int n = b.re * b.re + b.im * b.im;
    const G num = mul(a, G{b.re, -b.im});
    if (num.re % n != 0 || num.im % n != 0) throw Error("inexact Gaussian-integer division in Bareiss elimination");
    return G{num.re / n, num.im / n};
  };
  auto to_int = [](double v) {
    const double r = std::round(v);
    if (std::abs(v - r) > 1e-9 || std::abs(r) > 9e15) throw RefusalError("exact determinant needs integral entries");
    return cpp_int(static_cast<long long>(r));
  };

  const Eigen::Index n = system.matrix.rows();
  if (n != system.matrix.cols()) throw RefusalError("exact determinant needs a square matrix");
  std::vector<std::vector<G>> a(n, std::vector<G>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      a[i][j] = G{to_int(system.matrix(i, j).real()), to_int(system.matrix(i, j).imag())};

  G previous{1, 0};
  bool negate = false;
  for (Eigen::Index k = 0; k < n; ++k) {
    if (is_zero(a[k][k])) {
      Eigen::Index swap = k + 1;
      while (swap < n && is_zero(a[swap][k])) ++swap;
      if (swap == n) return {"0", "0"};
      std::swap(a[k], a[swap]);
      negate = !negate;
    }
    for (Eigen::Index i = k + 1; i < n; ++i) {
      for (Eigen::Index j = k + 1; j < n; ++j)
        a[i][j] = div(sub(mul(a[i][j], a[k][k]), mul(a[i][k], a[k][j])), previous);
      a[i][k] = G{0, 0};
    }
    previous = a[k][k];
  }
  G det = a[n - 1][n - 1];
  if (negate) det = G{-det.re, -det.im};
  return {det.re.str(), det.im.str()};
}

SigmaSchedule SigmaSchedule::standard(double rho) {
  SigmaSchedule s;
  s.rho = rho;
  for (int j = 2; j <= 7; ++j) s.sigma.push_back(rho * std::ldexp(1.0, -j));
  return s;
}

namespace {

struct BoundaryConfig {
  int constants;
  int direction;   // row label q: nu = e2 for 0, e1 + q e2 otherwise
  double rotation;
};

// Rows grouped by the number of constant solutions, largest first. The rotation
// turns the mean log gradient from -n to -nu / |nu|.
std::vector<BoundaryConfig> boundary_configs(int m) {
  std::vector<BoundaryConfig> out;
  for (int p = m; p >= 0; --p)
    for (int q = 0; q <= m - p; ++q)
      out.push_back({p, q, q == 0 ? 0.0 : -std::arg(cplx(q, 1.0))});
  return out;
}

// (-(1 - |x|))^k / k!: the normal Taylor monomial of order k at the boundary.
ComplexField normal_monomial(const GridPtr& grid, int k) {
  const double norm = factorial(k);
  return ComplexField::from_function(grid, [k, norm](double x1, double x2) {
    return cplx(std::pow(std::hypot(x1, x2) - 1.0, k) / norm, 0.0);
  });
}

enum class Settling { Moment, Power };

// The value row only sees T^{0..0}: its datum is T(x0) a(sigma) + R(sigma) with
// a the measured moment, which grows like |log sigma|, and R = R0 + R1 sigma log sigma.
std::vector<double> settling_basis(Settling kind, double sigma, double moment) {
  if (kind == Settling::Moment) return {1.0, 1.0 / moment, sigma * std::log(sigma) / moment};
  return {1.0, sigma, sigma * std::log(sigma)};
}

struct SigmaRun {
  std::vector<std::vector<cplx>> trace;
  std::vector<double> value_moment;  // |a| of the value row at each sigma
  double condition = 0.0;
};

// Per-sigma moment solve. Unknowns are D^i T^J for i <= order; the rows use
// singular solutions of degree order + i for every i <= order (logarithmic for
// order 0), and entry (c, (i, J))
// is the identity of the unit tensor E_J times the normal monomial of order i
// with the jets of row c. Only the order block is kept; lower orders are
// re-estimated at each sigma so their error does not grow like sigma^{i - order}.
SigmaRun run_sigma_schedule(const IdentityOracle& oracle, const ConductivityModel& gamma0, const GridPtr& grid, int m,
                            double theta, int order, const SigmaSchedule& schedule) {
  const auto unknowns = canonical_indices(m);
  const auto configs = boundary_configs(m);
  const Eigen::Index n = static_cast<Eigen::Index>(unknowns.size());
  const Eigen::Index size = n * (order + 1);
  std::optional<BackgroundSolver> background;
  if (!gamma0.has_constant_background()) background.emplace(gamma0.linear_part(), grid);
  const SolutionJet one = SolutionJet::constant(grid, 1.0);

  std::vector<SymmetricTensorField> units;
  for (int i = 0; i <= order; ++i) {
    const ComplexField profile = normal_monomial(grid, i);
    for (const MultiIndex& j : unknowns) units.push_back(unit_tensor(grid, m, j, &profile));
  }

  SigmaRun run;
  for (double sigma : schedule.sigma) {
    Eigen::MatrixXcd a(size, size);
    Eigen::VectorXcd v(size);
    for (int block = 0; block <= order; ++block) {
      const int degree = order + block;
      for (Eigen::Index c = 0; c < n; ++c) {
        const BoundaryConfig& cfg = configs[c];
        const Eigen::Index row = block * n + c;
        SingularSolutionSpec spec{theta, 0, sigma, degree, cfg.rotation, schedule.rho};
        const SolutionJet u = singular_solution(gamma0, grid, spec, background ? &*background : nullptr);
        std::vector<SolutionJet> jets(cfg.constants, one);
        jets.insert(jets.end(), m + 2 - cfg.constants, u);
        v[row] = oracle(jets);
        for (Eigen::Index j = 0; j < size; ++j) a(row, j) = assemble_integral_identity(units[j], jets);
        if (row == 0) run.value_moment.push_back(std::abs(a(0, 0)));
        const double scale = a.row(row).norm();
        if (!(scale > 0.0)) throw Error("boundary moment row vanishes identically");
        a.row(row) /= scale;
        v[row] /= scale;
      }
    }
    Eigen::VectorXd col(size);
    for (Eigen::Index j = 0; j < size; ++j) {
      col[j] = a.col(j).norm();
      a.col(j) /= col[j];
    }
    Eigen::VectorXcd x = a.colPivHouseholderQr().solve(v);
    for (Eigen::Index j = 0; j < size; ++j) x[j] /= col[j];
    run.trace.emplace_back(x.data() + order * n, x.data() + size);
    const Eigen::JacobiSVD<Eigen::MatrixXcd> svd(a);
    const auto& sv = svd.singularValues();
    run.condition = sv[0] / sv[sv.size() - 1];
  }
  return run;
}

BoundaryEstimate extrapolate(double theta, int m, int order, const SigmaSchedule& schedule, SigmaRun run,
                             const BoundaryOptions& options) {
  BoundaryEstimate out;
  out.theta = theta;
  out.order = order;
  out.unknowns = canonical_indices(m);
  out.sigma = schedule.sigma;
  out.trace = std::move(run.trace);
  out.condition = run.condition;
  const Eigen::Index ns = static_cast<Eigen::Index>(schedule.sigma.size());
  double scale = 0.0;
  for (const auto& row : out.trace)
    for (cplx v : row) scale = std::max(scale, std::abs(v));
  for (std::size_t j = 0; j < out.unknowns.size(); ++j) {
    const bool value_class = std::count(out.unknowns[j].begin(), out.unknowns[j].end(), 0) == m;
    const Settling kind = value_class && order == 0 ? Settling::Moment : Settling::Power;
    Eigen::MatrixXcd basis(ns, 3);
    Eigen::VectorXcd y(ns);
    for (Eigen::Index s = 0; s < ns; ++s) {
      const auto b = settling_basis(kind, schedule.sigma[s], run.value_moment[s]);
      for (int c = 0; c < 3; ++c) basis(s, c) = b[c];
      y[s] = out.trace[s][j];
    }
    const Eigen::VectorXcd coef = basis.colPivHouseholderQr().solve(y);
    out.values.push_back(coef[0]);
    const double residual = (basis * coef - y).norm() / std::sqrt(static_cast<double>(ns));
    out.fit_residual = std::max(out.fit_residual, scale > 0.0 ? residual / scale : 0.0);
  }
  if (out.fit_residual > options.settle_tolerance) {
    std::ostringstream msg;
    msg << "boundary extrapolation at theta = " << theta << " did not settle (residual " << out.fit_residual
        << "); sigma trace:";
    for (std::size_t s = 0; s < out.sigma.size(); ++s) {
      msg << " [" << out.sigma[s] << ":";
      for (cplx v : out.trace[s]) msg << ' ' << v;
      msg << ']';
    }
    throw ConvergenceError(msg.str(), out.fit_residual);
  }
  return out;
}

void check_schedule(const SigmaSchedule& schedule) {
  if (schedule.sigma.size() < 4) throw RefusalError("sigma schedule needs at least 4 offsets");
  for (std::size_t s = 0; s < schedule.sigma.size(); ++s) {
    if (!(schedule.sigma[s] > 0.0) || schedule.sigma[s] > 0.5 * schedule.rho)
      throw RefusalError("sigma schedule entries must lie in (0, rho / 2]");
    if (s > 0 && !(schedule.sigma[s] < schedule.sigma[s - 1]))
      throw RefusalError("sigma schedule must be strictly decreasing");
  }
}

}  // namespace

cplx BoundaryEstimate::value(const MultiIndex& j) const {
  const MultiIndex c = canonical(j);
  for (std::size_t i = 0; i < unknowns.size(); ++i)
    if (unknowns[i] == c) return values[i];
  throw RefusalError("multi-index " + index_label(j) + " is not part of the estimate");
}

BoundaryEstimate boundary_values(const IdentityOracle& oracle, const ConductivityModel& gamma0, const GridPtr& grid,
                                 int m, double theta, const SigmaSchedule& schedule, const BoundaryOptions& options) {
  if (m < 1) throw RefusalError("boundary determination needs a tensor of rank at least 1");
  check_schedule(schedule);
  auto run = run_sigma_schedule(oracle, gamma0, grid, m, theta, 0, schedule);
  return extrapolate(theta, m, 0, schedule, std::move(run), options);
}

BoundaryEstimate boundary_jet(const IdentityOracle& oracle, const ConductivityModel& gamma0, const GridPtr& grid,
                              int m, double theta, int k, std::span<const BoundaryEstimate> lower,
                              const SigmaSchedule& schedule, const BoundaryOptions& options) {
  if (k == 0) return boundary_values(oracle, gamma0, grid, m, theta, schedule, options);
  if (k < 0) throw RefusalError("jet order must be nonnegative");
  if (static_cast<int>(lower.size()) != k)
    throw RefusalError("jet of order " + std::to_string(k) + " needs the " + std::to_string(k) +
                       " lower orders recovered first");
  for (int i = 0; i < k; ++i)
    if (lower[i].order != i || lower[i].theta != theta || lower[i].unknowns != canonical_indices(m))
      throw RefusalError("lower-order jets do not match the anchor, rank or order sequence");
  check_schedule(schedule);
  auto run = run_sigma_schedule(oracle, gamma0, grid, m, theta, k, schedule);
  return extrapolate(theta, m, k, schedule, std::move(run), options);
}

std::vector<BoundaryEstimate> boundary_jets(const IdentityOracle& oracle, const ConductivityModel& gamma0,
                                            const GridPtr& grid, int m, double theta, int order,
                                            const SigmaSchedule& schedule, const BoundaryOptions& options) {
  std::vector<BoundaryEstimate> out;
  for (int k = 0; k <= order; ++k) out.push_back(boundary_jet(oracle, gamma0, grid, m, theta, k, out, schedule, options));
  return out;
}

ComplexField solve_poisson_dirichlet(const ComplexField& rhs, const BoundaryFunction& boundary) {
  if (rhs.grid_ptr() != boundary.grid_ptr()) throw RefusalError("right-hand side and boundary data live on different grids");
  rhs.require_finite();
  const BackgroundSolver solver(ConductivityModel::constant(1.0), rhs.grid_ptr());
  ComplexField h = solver.solve(boundary, rhs.restricted());
  h.require_finite();
  return h;
}

std::string operator_name(RowOperator op) {
  switch (op) {
    case RowOperator::Identity: return "id";
    case RowOperator::Laplacian: return "laplacian";
    case RowOperator::Del: return "del";
    case RowOperator::DelBar: return "delbar";
  }
  return "?";
}

std::vector<InteriorRow> interior_rows(int m) {
  if (m < 1) throw RefusalError("interior determination needs a tensor of rank at least 1");
  std::vector<InteriorRow> out;
  int id = 0;
  for (int p = m; p >= 0; --p) {
    const int r = m - p;
    std::vector<MultiIndex> grads = r > 0 ? gradient_indices(r) : std::vector<MultiIndex>{MultiIndex{}};
    std::optional<CoefficientSystem> system;
    if (r > 0) system = interior_coefficient_system(r);
    for (int k = 1; k <= r + 1; ++k) {
      InteriorRow row;
      row.id = ++id;
      row.constants = p;
      row.order = r;
      row.k = k;
      const int plus = r + 2 - k, minus = k;
      std::vector<double> plus_scales(plus, 1.0), minus_scales(minus, 1.0);
      minus_scales.back() = r + 3 - 2 * k;
      if (minus_scales.back() <= 0.0) {
        minus_scales.back() = 1.0;
        plus_scales.front() = 2 * k - r - 1;
      }
      for (double s : plus_scales) row.cgo.emplace_back(Branch::Plus, s);
      for (double s : minus_scales) row.cgo.emplace_back(Branch::Minus, s);
      const double total = std::accumulate(plus_scales.begin(), plus_scales.end(), 0.0);
      row.phase = 4.0 * total;

      const int lstar = (plus + 1) / 2;
      const int n = lstar + (minus + 1) / 2;
      row.stationary_order = n;
      const bool odd_p = plus % 2 == 1, odd_q = minus % 2 == 1;
      row.op = odd_p && odd_q ? RowOperator::Laplacian
               : odd_p        ? RowOperator::Del
               : odd_q        ? RowOperator::DelBar
                              : RowOperator::Identity;

      if (system)
        for (Eigen::Index i = 0; i <= r; ++i) row.coefficients.push_back(system->matrix(k - 1, i));
      else
        row.coefficients.push_back(1.0);
      for (const MultiIndex& g : grads) {
        MultiIndex j(p, 0);
        j.insert(j.end(), g.begin(), g.end());
        row.unknowns.push_back(canonical(j));
      }

      // Leading term for gamma0 = 1: the last gradient slot takes one of the
      // PLUS solutions, the m tensor slots are arranged in m! ways, PLUS . MINUS
      // = -2, and the expansion keeps the single term l* of (d^2 - dbar^2)^n.
      double product = 1.0;
      for (double s : plus_scales) product *= s;
      for (double s : minus_scales) product *= s;
      const double c = row.phase;
      const double a = factorial(2 * lstar) / factorial(2 * lstar - plus);
      const double b = factorial(2 * (n - lstar)) / factorial(2 * (n - lstar) - minus);
      const double kappa = row.op == RowOperator::Laplacian ? 0.25 : 1.0;
      const double sign = ((n - lstar) % 2 == 0 ? 1.0 : -1.0) * (n % 2 == 0 ? 1.0 : -1.0);
      const double multiple = plus * factorial(m) * std::pow(2.0, r + 2) * product * -2.0 *
                              (2.0 * std::numbers::pi / c) / factorial(n) * std::pow(c, -n) * binomial(n, lstar) *
                              sign * a * b * kappa;
      row.leading = {static_cast<double>(n - r - 1), cplx(multiple, 0.0)};
      out.push_back(std::move(row));
    }
  }
  return out;
}

CalibrationTable analytic_calibration(int max_m) {
  CalibrationTable table;
  for (int m = 1; m <= max_m; ++m)
    for (const InteriorRow& row : interior_rows(m)) table.set(m, row.id, row.leading);
  return table;
}

namespace {

double min_phase(const std::vector<InteriorRow>& rows) {
  double c = rows.front().phase;
  for (const InteriorRow& r : rows) c = std::min(c, r.phase);
  return c;
}

std::vector<SolutionJet> row_jets(const InteriorRow& row, const CGOBuilder& builder, double tau, cplx centre) {
  std::vector<SolutionJet> jets(row.constants, SolutionJet::constant(builder.grid_ptr(), 1.0));
  for (std::size_t i = 0; i < row.cgo.size(); ++i) {
    const auto same = std::find(row.cgo.begin(), row.cgo.begin() + static_cast<std::ptrdiff_t>(i), row.cgo[i]);
    if (same != row.cgo.begin() + static_cast<std::ptrdiff_t>(i))
      jets.push_back(jets[static_cast<std::size_t>(row.constants + (same - row.cgo.begin()))]);
    else
      jets.push_back(builder.build(tau, row.cgo[i].first, row.cgo[i].second, centre).jet);
  }
  return jets;
}

// gamma0^{e} on the grid's inside nodes.
ComplexField background_power(const ConductivityModel& gamma0, const GridPtr& grid, double e) {
  return ComplexField::from_function(grid, [&](double x1, double x2) {
    return cplx(std::pow(gamma0.background(x1, x2).real(), e), 0.0);
  });
}

BoundaryFunction row_boundary(const InteriorRow& row, const ConductivityModel& gamma0, const GridPtr& grid,
                              const std::map<MultiIndex, BoundaryFunction>& boundary) {
  const auto& nodes = grid->boundary();
  std::vector<cplx> values(nodes.size(), 0.0);
  for (std::size_t u = 0; u < row.unknowns.size(); ++u) {
    const auto it = boundary.find(row.unknowns[u]);
    if (it == boundary.end()) continue;
    if (it->second.grid_ptr() != grid) throw RefusalError("boundary data must live on the sample grid");
    for (std::size_t b = 0; b < nodes.size(); ++b) values[b] += row.coefficients[u] * it->second.values()[b];
  }
  for (std::size_t b = 0; b < nodes.size(); ++b)
    values[b] *= std::pow(gamma0.background(nodes[b].point[0], nodes[b].point[1]).real(), -0.5 * (row.order + 2));
  return BoundaryFunction(grid, std::move(values));
}

}  // namespace

bool RecoveredTensor::complete() const {
  return std::all_of(rows.begin(), rows.end(), [](const RowRecovery& r) { return r.failures.empty(); });
}

const RowRecovery& RecoveredTensor::row(int id) const {
  for (const RowRecovery& r : rows)
    if (r.row.id == id) return r;
  throw RefusalError("row " + std::to_string(id) + " was not recovered");
}

double RecoveredTensor::relative_error(const SymmetricTensorField& truth, const MultiIndex& j, double radius) const {
  if (truth.grid_ptr() != grid) throw RefusalError("truth must live on the sample grid");
  const ComplexField rec = interior.component(j);
  const ComplexField ref = truth.component(j);
  const Grid2D& g = *grid;
  double num = 0.0, den = 0.0;
  for (std::size_t idx : g.interior_nodes()) {
    if (std::hypot(g.x1(idx), g.x2(idx)) > radius) continue;
    num += g.weight(idx) * std::norm(rec[idx] - ref[idx]);
    den += g.weight(idx) * std::norm(ref[idx]);
  }
  if (!(den > 0.0)) throw RefusalError("truth component vanishes on the comparison disk");
  return std::sqrt(num / den);
}

void RecoveredTensor::write_csv(std::ostream& out) const {
  out << "x1,x2,index,re,im\n";
  const Grid2D& g = *grid;
  std::ostringstream line;
  line << std::setprecision(15);
  for (const auto& [j, field] : interior.components()) {
    if (j != canonical(j)) continue;
    const std::string label = index_label(j);
    for (std::size_t idx : g.interior_nodes()) {
      line.str({});
      // + 0.0 folds -0 into 0.
      line << g.x1(idx) + 0.0 << ',' << g.x2(idx) + 0.0 << ',' << label << ',' << field[idx].real() + 0.0 << ','
           << field[idx].imag() + 0.0 << '\n';
      out << line.str();
    }
  }
}

namespace {

RowData sample_row(const IdentityOracle& oracle, const CGOBuilder& builder, const InteriorRow& row, double c_min,
                   const CalibrationEntry& entry, std::span<const cplx> centres, const InteriorOptions& options) {
  std::vector<double> taus;
  for (double t : options.taus) taus.push_back(t * c_min / row.phase);
  std::vector<std::vector<cplx>> traces(centres.size());
  double peak = 0.0;
  for (std::size_t n = 0; n < centres.size(); ++n) {
    double norm = 0.0;
    for (double t : taus) {
      traces[n].push_back(oracle(row_jets(row, builder, t, centres[n])));
      norm += std::norm(traces[n].back() * std::pow(t, entry.exponent));
    }
    peak = std::max(peak, std::sqrt(norm / static_cast<double>(taus.size())));
  }
  FitOptions fit = options.fit;
  fit.scale_floor = std::max(fit.scale_floor, options.noise_floor * peak);
  RowData out{std::vector<cplx>(centres.size(), 0.0), {}};
  for (std::size_t n = 0; n < centres.size(); ++n) {
    try {
      out.datum[n] = extract_pointwise(taus, traces[n], entry.exponent, fit).limit / entry.multiple;
    } catch (const Error& e) {
      std::ostringstream msg;
      msg << "row " << row.id << " at (" << centres[n].real() << ", " << centres[n].imag() << "): " << e.what();
      out.failures.push_back(msg.str());
    }
  }
  return out;
}

const InteriorRow& find_row(const std::vector<InteriorRow>& rows, int id) {
  for (const InteriorRow& r : rows)
    if (r.id == id) return r;
  throw RefusalError("no interior row " + std::to_string(id));
}

CGOOptions recovery_cgo_options(const ConductivityModel& gamma0) {
  // Constant backgrounds give exact CGOs, so their certificate would only repeat the stencil error.
  CGOOptions o;
  o.certify = !gamma0.has_constant_background();
  return o;
}

}  // namespace

RowData row_data(const IdentityOracle& oracle, const ConductivityModel& gamma0, const GridPtr& oracle_grid, int m,
                 int row_id, std::span<const cplx> centres, const InteriorOptions& options) {
  const std::vector<InteriorRow> all = interior_rows(m);
  const InteriorRow& row = find_row(all, row_id);
  if (options.taus.size() < 4) throw RefusalError("interior recovery needs at least 4 values of tau");
  const CalibrationTable calibration = options.calibration ? *options.calibration : analytic_calibration(m);
  const CGOBuilder builder(gamma0, oracle_grid, recovery_cgo_options(gamma0));
  return sample_row(oracle, builder, row, min_phase(all), calibration.at(m, row.id), centres, options);
}

RecoveredTensor recover_interior(const IdentityOracle& oracle, const ConductivityModel& gamma0,
                                 const GridPtr& oracle_grid, int m, const GridPtr& sample_grid,
                                 const InteriorOptions& options) {
  std::vector<InteriorRow> all = interior_rows(m);
  std::vector<InteriorRow> rows;
  for (const InteriorRow& r : all)
    if (options.rows.empty() || std::count(options.rows.begin(), options.rows.end(), r.id)) rows.push_back(r);
  if (rows.empty()) throw RefusalError("no interior rows selected");
  if (options.taus.size() < 4) throw RefusalError("interior recovery needs at least 4 values of tau");
  const CalibrationTable calibration = options.calibration ? *options.calibration : analytic_calibration(m);
  const double c_min = min_phase(all);
  const CGOBuilder builder(gamma0, oracle_grid, recovery_cgo_options(gamma0));
  const Grid2D& sg = *sample_grid;

  RecoveredTensor out{m, sample_grid, {}, SymmetricTensorField(sample_grid, m), {}};
  for (const InteriorRow& row : rows) {
    RowRecovery rec{row, ComplexField(sample_grid, Support::Domain, "datum"),
                    ComplexField(sample_grid, Support::Domain, "combination"), {}};
    const auto& nodes = sg.interior_nodes();
    std::vector<cplx> centres;
    for (std::size_t idx : nodes) centres.emplace_back(sg.x1(idx), sg.x2(idx));
    RowData data = sample_row(oracle, builder, row, c_min, calibration.at(m, row.id), centres, options);
    for (std::size_t n = 0; n < nodes.size(); ++n) rec.datum[nodes[n]] = data.datum[n];
    rec.failures = std::move(data.failures);
    const BoundaryFunction trace = row_boundary(row, gamma0, sample_grid, options.boundary);
    ComplexField scaled(sample_grid, Support::Domain);
    switch (row.op) {
      case RowOperator::Identity: scaled = rec.datum; break;
      case RowOperator::Laplacian: scaled = solve_poisson_dirichlet(rec.datum, trace); break;
      case RowOperator::Del: scaled = solve_poisson_dirichlet(4.0 * diff_op(rec.datum, DiffOp::DelBar), trace); break;
      case RowOperator::DelBar: scaled = solve_poisson_dirichlet(4.0 * diff_op(rec.datum, DiffOp::Del), trace); break;
    }
    rec.combination = scaled * background_power(gamma0, sample_grid, 0.5 * (row.order + 2));
    out.rows.push_back(std::move(rec));
  }

  // Per-node solve of each class whose rows are all present.
  for (int p = m; p >= 0; --p) {
    const int r = m - p;
    std::vector<const RowRecovery*> cls;
    for (const RowRecovery& rec : out.rows)
      if (rec.row.constants == p) cls.push_back(&rec);
    if (static_cast<int>(cls.size()) != r + 1) continue;
    Eigen::MatrixXcd a(r + 1, r + 1);
    for (int k = 0; k <= r; ++k)
      for (int i = 0; i <= r; ++i) a(k, i) = cls[k]->row.coefficients[i];
    const auto qr = a.colPivHouseholderQr();
    std::vector<ComplexField> comps(r + 1, ComplexField(sample_grid, Support::Domain));
    Eigen::VectorXcd rhs(r + 1);
    for (std::size_t idx : sg.interior_nodes()) {
      for (int k = 0; k <= r; ++k) rhs[k] = cls[k]->combination[idx];
      const Eigen::VectorXcd t = qr.solve(rhs);
      for (int i = 0; i <= r; ++i) comps[i][idx] = t[i];
    }
    for (int i = 0; i <= r; ++i) out.interior.set(cls[0]->row.unknowns[i], std::move(comps[i]));
  }
  return out;
}

CalibrationTable measure_calibration(int m, const GridPtr& grid, std::span<const double> taus) {
  constexpr double beta = 16.0;
  const std::vector<InteriorRow> rows = interior_rows(m);
  const double c_min = min_phase(rows);
  CGOOptions cgo_options;
  cgo_options.certify = false;
  const CGOBuilder builder(ConductivityModel::constant(1.0), grid, cgo_options);
  // f = (1 + z + zbar + |z|^2) exp(-beta |z|^2) cut off smoothly between r = 0.7
  // and 0.95: f = del f = delbar f = 1 and Laplacian f = 4 (1 - beta) at 0. The
  // cutoff keeps boundary terms, which carry the full CGO growth, out of the fit.
  const ComplexField f = ComplexField::from_function(grid, [](double x1, double x2) {
    const double r2 = x1 * x1 + x2 * x2;
    const double cut = 1.0 - smooth_step((std::sqrt(r2) - 0.7) / 0.25);
    return cplx((1.0 + 2.0 * x1 + r2) * std::exp(-beta * r2) * cut, 0.0);
  });
  CalibrationTable table;
  for (const InteriorRow& row : rows) {
    double weight = 0.0;
    for (cplx c : row.coefficients) weight += std::norm(c);
    SymmetricTensorField t(grid, m);
    for (std::size_t u = 0; u < row.unknowns.size(); ++u)
      if (std::abs(row.coefficients[u]) > 0.0) t.set(row.unknowns[u], f * (std::conj(row.coefficients[u]) / weight));
    const IdentityOracle oracle = tensor_oracle(std::move(t));
    std::vector<double> row_taus;
    std::vector<cplx> values;
    for (double tau : taus) {
      row_taus.push_back(tau * c_min / row.phase);
      values.push_back(oracle(row_jets(row, builder, row_taus.back(), 0.0)));
    }
    const double datum = row.op == RowOperator::Laplacian ? 4.0 * (1.0 - beta) : 1.0;
    const PointwiseFit fit = extract_pointwise(row_taus, values, row.leading.exponent, {2, 0.05});
    table.set(m, row.id, {row.leading.exponent, fit.limit / datum});
  }
  return table;
}

double linearized_difference(const ConductivityModel& first, const ConductivityModel& second,
                             std::span<const BoundaryFunction> directions, const BoundaryFunction& test,
                             const SolverOptions& options) {
  const Linearization a = linearize_dtn(first, directions, test, options);
  const Linearization b = linearize_dtn(second, directions, test, options);
  return std::abs(a.value - b.value);
}

}  // namespace calderon
