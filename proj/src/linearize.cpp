#include "calderon/linearize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "calderon/errors.hpp"
#include "calderon/ops.hpp"

namespace calderon {

namespace {

// Largest |Re sum E| accepted before exp overflows or underflows to nonsense.
constexpr double kMaxExponent = 300.0;

using lcplx = std::complex<long double>;

// Plain complex product; the library operator pays for inf/nan recovery in the inner loop.
inline cplx mul(cplx a, cplx b) {
  return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

}  // namespace

SolutionJet SolutionJet::from_field(const ComplexField& u) {
  auto [d1, d2] = gradient(u);
  return {ComplexField(u.grid_ptr(), Support::Domain, "exponent"), u.restricted(), d1.restricted(),
          d2.restricted()};
}

SolutionJet SolutionJet::constant(const GridPtr& grid, cplx c) {
  return {ComplexField(grid, Support::Domain, "exponent"), ComplexField::constant(grid, c),
          ComplexField(grid, Support::Domain), ComplexField(grid, Support::Domain)};
}

SolutionJet SolutionJet::conj() const { return {exponent.conj(), value.conj(), d1.conj(), d2.conj()}; }

const ComplexField& SolutionJet::slot(int k) const {
  switch (k) {
    case 0: return value;
    case 1: return d1;
    case 2: return d2;
  }
  throw RefusalError("solution slot must be 0, 1 or 2");
}

ComplexField SolutionJet::expanded() const {
  ComplexField out = value;
  const Grid2D& g = value.grid();
  for (std::size_t idx : g.interior_nodes()) out[idx] *= std::exp(exponent[idx]);
  return out;
}

cplx assemble_integral_identity(const OrderedTensorView& t, std::span<const SolutionJet> u) {
  const int m = t.rank;
  if (static_cast<int>(u.size()) != m + 2) {
    std::ostringstream msg;
    msg << "rank-" << m << " identity needs " << m + 2 << " solutions, got " << u.size();
    throw RefusalError(msg.str());
  }
  const auto indices = ordered_indices(m);
  if (t.entries.size() != indices.size()) throw RefusalError("tensor view does not match its rank");
  const GridPtr& grid = u[0].grid_ptr();
  for (const SolutionJet& s : u)
    if (s.grid_ptr() != grid) throw RefusalError("solutions live on different grids");
  for (const ComplexField* e : t.entries)
    if (e && e->grid_ptr() != grid) throw RefusalError("tensor and solutions live on different grids");

  std::vector<std::size_t> active;
  for (std::size_t k = 0; k < indices.size(); ++k)
    if (t.entries[k]) active.push_back(k);
  if (active.empty()) return 0.0;

  std::vector<int> first(m + 1);
  std::iota(first.begin(), first.end(), 0);
  std::vector<std::vector<int>> perms;
  do perms.push_back(first);
  while (std::next_permutation(first.begin(), first.end()));

  const Grid2D& g = *grid;
  const SolutionJet& last = u[m + 1];
  lcplx total{};
  for (std::size_t idx : g.interior_nodes()) {
    cplx e_sum{};
    for (const SolutionJet& s : u) e_sum += s.exponent[idx];
    if (std::abs(e_sum.real()) > kMaxExponent) {
      std::ostringstream msg;
      msg << "combined exponent " << e_sum.real() << " out of range at (" << g.x1(idx) << ", " << g.x2(idx)
          << ")";
      throw RangeError(msg.str());
    }
    cplx node{};
    for (const auto& p : perms) {
      const SolutionJet& grad = u[p[m]];
      const cplx dot = mul(grad.d1[idx], last.d1[idx]) + mul(grad.d2[idx], last.d2[idx]);
      cplx contraction{};
      for (std::size_t k : active) {
        const MultiIndex& j = indices[k];
        cplx prod = (*t.entries[k])[idx];
        for (int s = 0; s < m; ++s) prod = mul(prod, u[p[s]].slot(j[s])[idx]);
        contraction += prod;
      }
      node += mul(contraction, dot);
    }
    total += lcplx(g.weight(idx) * mul(node, std::exp(e_sum)));
  }
  const cplx result(static_cast<double>(total.real()), static_cast<double>(total.imag()));
  if (!std::isfinite(result.real()) || !std::isfinite(result.imag()))
    throw RangeError("identity value is not finite");
  return result;
}

cplx assemble_integral_identity(const SymmetricTensorField& t, std::span<const SolutionJet> u) {
  return assemble_integral_identity(ordered_view(t), u);
}

MultilinearFormSample sample_identity(SymmetricTensorField t, std::vector<SolutionJet> u) {
  const cplx value = assemble_integral_identity(t, u);
  const int order = t.rank();
  return {order, std::move(u), std::move(t), value};
}

EpsilonSchedule EpsilonSchedule::standard(const ConductivityModel& model,
                                          std::span<const BoundaryFunction> directions) {
  if (directions.empty()) throw RefusalError("linearization needs at least one direction");
  double fmax = 0.0;
  for (const auto& f : directions) fmax = std::max(fmax, f.norm());
  if (fmax == 0.0) throw RefusalError("linearization directions are all zero");
  // A linear model has no ball; any moderate scale works.
  const double delta = std::isfinite(model.delta()) ? model.delta() : 1.0;
  EpsilonSchedule s;
  for (int k = 3; k <= 7; ++k)
    s.eps.push_back(std::ldexp(1.0, -k) * delta / (static_cast<double>(directions.size()) * fmax));
  return s;
}

Linearization linearize_dtn(const ConductivityModel& model, std::span<const BoundaryFunction> directions,
                            const BoundaryFunction& test, const EpsilonSchedule& schedule,
                            const SolverOptions& options) {
  const std::size_t n = directions.size();
  if (n == 0) throw RefusalError("linearization needs at least one direction");
  if (n > 12) throw RefusalError("too many directions for a mixed difference");
  const auto& eps = schedule.eps;
  if (eps.empty()) throw RefusalError("epsilon schedule is empty");
  for (std::size_t k = 1; k < eps.size(); ++k)
    if (!(eps[k] < eps[k - 1])) throw RefusalError("epsilon schedule must be strictly decreasing");
  if (!(eps.back() > 0.0)) throw RefusalError("epsilon values must be positive");
  double size = 0.0;
  for (const auto& f : directions) {
    if (f.grid_ptr() != test.grid_ptr()) throw RefusalError("directions and test function on different grids");
    size += f.norm();
  }
  if (!(eps.front() * size < model.delta())) {
    std::ostringstream msg;
    msg << "largest epsilon leaves the well-posedness ball: " << eps.front() * size << " >= " << model.delta();
    throw RefusalError(msg.str());
  }
  const int order = std::clamp(schedule.extrapolation_order, 0, static_cast<int>(eps.size()) - 1);

  const BackgroundSolver background(model, test.grid_ptr());
  const ComplexField v = background.solve(test);
  Linearization out;
  std::vector<cplx> raw;
  for (double e : eps) {
    cplx acc{};
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
      BoundaryFunction f = BoundaryFunction::zero(test.grid_ptr());
      double sign = 1.0;
      for (std::size_t l = 0; l < n; ++l) {
        const double s = (mask >> l) & 1u ? -1.0 : 1.0;
        sign *= s;
        f += (s * e) * directions[l];
      }
      acc += sign * dtn_pairing(model, background, solve_dirichlet(model, f, options, &background), v);
      ++out.solves;
    }
    raw.push_back(acc / (std::ldexp(1.0, static_cast<int>(n)) * std::pow(e, static_cast<double>(n))));
  }

  // Neville tableau in eps^2; pick the column-`order` entry closest to its predecessor.
  std::vector<std::vector<cplx>> r(eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i) {
    r[i].push_back(raw[i]);
    for (int k = 1; k <= std::min<int>(order, static_cast<int>(i)); ++k) {
      const double ratio = std::pow(eps[i - k] / eps[i], 2);
      r[i].push_back(r[i][k - 1] + (r[i][k - 1] - r[i - 1][k - 1]) / (ratio - 1.0));
    }
  }
  if (static_cast<std::size_t>(order) + 1 >= eps.size()) {
    out.value = r.back().back();
    out.disagreement = eps.size() > 1 ? std::abs(r.back().back() - r[eps.size() - 2].back()) : 0.0;
  } else {
    out.disagreement = std::numeric_limits<double>::infinity();
    for (std::size_t i = order + 1; i < eps.size(); ++i) {
      const double d = std::abs(r[i][order] - r[i - 1][order]);
      if (d < out.disagreement) {
        out.disagreement = d;
        out.value = r[i][order];
      }
    }
  }
  const double allowed = schedule.relative_tolerance * std::abs(out.value) + schedule.absolute_tolerance;
  if (out.disagreement > allowed) {
    std::ostringstream msg;
    msg << "epsilon extrapolation disagrees by " << out.disagreement << " (allowed " << allowed
        << "); finite-difference noise dominates";
    throw ConvergenceError(msg.str(), out.disagreement);
  }
  return out;
}

Linearization linearize_dtn(const ConductivityModel& model, std::span<const BoundaryFunction> directions,
                            const BoundaryFunction& test, const SolverOptions& options) {
  return linearize_dtn(model, directions, test, EpsilonSchedule::standard(model, directions), options);
}

}  // namespace calderon
