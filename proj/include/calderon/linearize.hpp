#pragma once

#include <span>
#include <vector>

#include "calderon/boundary.hpp"
#include "calderon/field.hpp"
#include "calderon/forward.hpp"
#include "calderon/model.hpp"
#include "calderon/tensor.hpp"

namespace calderon {

// u = exp(exponent) * value, grad u = exp(exponent) * (d1, d2). Keeping the
// exponential factored lets CGO products cancel before they overflow.
struct SolutionJet {
  ComplexField exponent;
  ComplexField value;
  ComplexField d1;
  ComplexField d2;

  // Gradient by finite differences, zero exponent.
  static SolutionJet from_field(const ComplexField& u);
  static SolutionJet constant(const GridPtr& grid, cplx c);

  const GridPtr& grid_ptr() const noexcept { return value.grid_ptr(); }
  SolutionJet conj() const;
  // Slot k of (u, grad u) without the exponential factor.
  const ComplexField& slot(int k) const;
  // exp(exponent) * value.
  ComplexField expanded() const;
};

// sum over permutations (l_1..l_{m+1}) of {1..m+1} and j in {0,1,2}^m of
//   int T^j (u_{l_1}, grad u_{l_1})_{j_1} ... (u_{l_m}, ...)_{j_m} grad u_{l_{m+1}} . grad u_{m+2}
// with u_{m+2} kept in the last slot.
cplx assemble_integral_identity(const OrderedTensorView& t, std::span<const SolutionJet> u);
cplx assemble_integral_identity(const SymmetricTensorField& t, std::span<const SolutionJet> u);

struct MultilinearFormSample {
  int order = 0;
  std::vector<SolutionJet> solutions;
  SymmetricTensorField tensor;
  cplx value;

  // Recomputes the identity from the stored fields.
  cplx reevaluate() const { return assemble_integral_identity(tensor, solutions); }
};

MultilinearFormSample sample_identity(SymmetricTensorField t, std::vector<SolutionJet> u);

struct EpsilonSchedule {
  std::vector<double> eps;       // strictly decreasing
  int extrapolation_order = 2;   // Richardson columns beyond the raw differences
  double relative_tolerance = 1e-3;
  double absolute_tolerance = 1e-9;

  // eps = 2^-3 .. 2^-7 times delta / (n max |f_l|).
  static EpsilonSchedule standard(const ConductivityModel& model, std::span<const BoundaryFunction> directions);
};

struct Linearization {
  cplx value;
  double disagreement = 0.0;  // gap between neighbouring extrapolants
  int solves = 0;
};

// Mixed derivative d^n / d eps_1 .. d eps_n of <Lambda(sum eps_l f_l), test>
// at zero, n = directions.size().
Linearization linearize_dtn(const ConductivityModel& model, std::span<const BoundaryFunction> directions,
                            const BoundaryFunction& test, const EpsilonSchedule& schedule,
                            const SolverOptions& options = {});
Linearization linearize_dtn(const ConductivityModel& model, std::span<const BoundaryFunction> directions,
                            const BoundaryFunction& test, const SolverOptions& options = {});

// B(v1, v2, w) from the diagonal D(v, w) = B(v, v, w) of a symmetric form.
template <class Diagonal, class V, class W>
cplx polarize(const Diagonal& diagonal, const V& v1, const V& v2, const W& w) {
  return 0.5 * (diagonal(v1 + v2, w) - diagonal(v1, w) - diagonal(v2, w));
}

}  // namespace calderon
