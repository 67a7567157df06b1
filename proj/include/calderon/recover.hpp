#pragma once

#include <array>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "calderon/boundary.hpp"
#include "calderon/cgo.hpp"
#include "calderon/forward.hpp"
#include "calderon/linearize.hpp"
#include "calderon/model.hpp"
#include "calderon/phase.hpp"
#include "calderon/tensor.hpp"

namespace calderon {

// Value of the integral identity for m + 2 solution jets. The tensor stays
// hidden behind the callable.
using IdentityOracle = std::function<cplx(std::span<const SolutionJet>)>;

IdentityOracle tensor_oracle(SymmetricTensorField t);

// Anchor x0 = (cos theta, sin theta). Offsets are taken in the boundary frame
// e1 = counterclockwise tangent, e2 = outward normal, so z = x0 + sigma nu.
// The singular part is Re(e^{i rotation} f(x - z)) with f = log (degree 0,
// branch cut along the outward ray from z) or f(w) = w^-degree. Its gradient
// field is the unrotated one turned by -rotation.
struct SingularSolutionSpec {
  double theta = 0.0;
  int direction = 0;      // nu = e2 for 0, e1 + direction e2 otherwise
  double sigma = 0.0;
  int degree = 0;
  double rotation = 0.0;
  double rho = 0.5;       // working radius, sigma <= rho / 2

  cplx anchor() const;
  cplx normal() const;
  cplx nu() const;
  cplx pole() const;
  // Refuses when the pole is not strictly outside the closed disk or sigma > rho / 2.
  void validate() const;
};

// Exact singular part as a jet on the inside nodes.
SolutionJet singular_part(const GridPtr& grid, const SingularSolutionSpec& spec);

// Constant gamma0: the singular part itself. Otherwise the discrete gamma0
// solution with the singular part's boundary trace; its gradient is the exact
// singular gradient plus differences of the correction.
SolutionJet singular_solution(const ConductivityModel& gamma0, const GridPtr& grid, const SingularSolutionSpec& spec,
                              const BackgroundSolver* background = nullptr);

enum class SystemKind { Boundary, Interior };

struct CoefficientSystem {
  int order = 0;
  SystemKind kind = SystemKind::Boundary;
  Eigen::MatrixXcd matrix;
  std::vector<MultiIndex> unknowns;  // gradient_indices(order)
  std::vector<std::string> rows;

  using ExtendedVector = Eigen::Matrix<std::complex<long double>, Eigen::Dynamic, 1>;

  Eigen::VectorXcd solve(const Eigen::VectorXcd& rhs) const;
  // For right-hand sides known beyond double precision.
  Eigen::VectorXcd solve(const ExtendedVector& rhs) const;
};

// Rows nu = e2, e1 + e2, ..., e1 + m e2; row j weighs the unknown with i twos by j^i C(m, i).
CoefficientSystem boundary_coefficient_system(int m);
// Row k holds the coefficients of (a + ib)^{m+1-k} (-a + ib)^{k-1}; the unknown
// with j ones takes the coefficient of a^j b^{m-j}.
CoefficientSystem interior_coefficient_system(int m);

// Determinant by fraction-free elimination over the Gaussian integers.
struct ExactDeterminant {
  std::string real;
  std::string imag;

  bool nonzero() const { return real != "0" || imag != "0"; }
};

ExactDeterminant exact_determinant(const CoefficientSystem& system);

struct SigmaSchedule {
  double rho = 0.5;
  std::vector<double> sigma;  // strictly decreasing

  // sigma = rho 2^-j, j = 2..7.
  static SigmaSchedule standard(double rho = 0.5);
};

struct BoundaryOptions {
  // Extrapolation fit residual allowed, relative to the largest estimate
  // (or 1 when every estimate is below it).
  double settle_tolerance = 0.05;
};

// D^k T^J(x0) along the outward normal for every canonical J.
struct BoundaryEstimate {
  double theta = 0.0;
  int order = 0;
  std::vector<MultiIndex> unknowns;        // canonical_indices(m)
  std::vector<cplx> values;
  std::vector<double> sigma;
  std::vector<std::vector<cplx>> trace;    // estimates per sigma
  double fit_residual = 0.0;
  double condition = 0.0;                  // of the moment system at the smallest sigma

  cplx value(const MultiIndex& j) const;
};

// Each row plugs p constant solutions and m + 2 - p rotated logarithmic
// solutions into the oracle. The same jets applied to constant unit tensors
// give the row's moments, so the per-sigma system is solved against measured
// coefficients and then extrapolated to sigma = 0.
BoundaryEstimate boundary_values(const IdentityOracle& oracle, const ConductivityModel& gamma0, const GridPtr& grid,
                                 int m, double theta, const SigmaSchedule& schedule,
                                 const BoundaryOptions& options = {});

// Order-k normal jet from degree-k singular solutions; lower holds orders 0..k-1 at the same anchor.
BoundaryEstimate boundary_jet(const IdentityOracle& oracle, const ConductivityModel& gamma0, const GridPtr& grid,
                              int m, double theta, int k, std::span<const BoundaryEstimate> lower,
                              const SigmaSchedule& schedule, const BoundaryOptions& options = {});

std::vector<BoundaryEstimate> boundary_jets(const IdentityOracle& oracle, const ConductivityModel& gamma0,
                                            const GridPtr& grid, int m, double theta, int order,
                                            const SigmaSchedule& schedule, const BoundaryOptions& options = {});

// Laplacian h = rhs in the disk, h = boundary on the circle.
ComplexField solve_poisson_dirichlet(const ComplexField& rhs, const BoundaryFunction& boundary);

enum class RowOperator { Identity, Laplacian, Del, DelBar };

std::string operator_name(RowOperator op);

// One CGO solution set. Rows are grouped by the number p of value slots
// filled with the constant solution, largest p first.
struct InteriorRow {
  int id = 0;                 // 1-based over all classes
  int constants = 0;          // p
  int order = 0;              // r = m - p gradient slots
  int k = 0;                  // set index within the class, 1..r+1
  std::vector<std::pair<Branch, double>> cgo;  // r + 2 solutions, the last one is u_{m+2}
  double phase = 0.0;         // c in exp(i c tau x1 x2)
  int stationary_order = 0;   // first nonzero term of the expansion
  RowOperator op = RowOperator::Identity;
  std::vector<cplx> coefficients;   // row k of interior_coefficient_system(r)
  std::vector<MultiIndex> unknowns; // canonical indices 0^p J'
  CalibrationEntry leading;         // gamma0 = 1: value tau^exponent -> multiple * datum
};

std::vector<InteriorRow> interior_rows(int m);

// Table keyed by (m, row id) with the closed-form leading behaviour.
CalibrationTable analytic_calibration(int max_m);

struct InteriorOptions {
  // Schedule of the row with the smallest phase constant; other rows use
  // tau c_min / c so that c tau is shared.
  std::vector<double> taus = {40.0, 50.0, 60.0, 70.0, 80.0};
  FitOptions fit{2, 0.05};
  // Fits are judged against at least this fraction of the row's largest trace,
  // so nodes where the datum nearly vanishes are not rejected for relative noise.
  double noise_floor = 0.1;
  std::optional<CalibrationTable> calibration;   // analytic when absent
  // Boundary values of T on the sample grid; missing components are zero.
  std::map<MultiIndex, BoundaryFunction> boundary;
  std::vector<int> rows;                         // subset of row ids, empty for all
};

struct RowRecovery {
  InteriorRow row;
  ComplexField datum;        // operator applied to the combination over gamma0^{(r+2)/2}
  ComplexField combination;  // coefficients . T
  std::vector<std::string> failures;
};

struct RecoveredTensor {
  int rank = 0;
  GridPtr grid;
  std::vector<RowRecovery> rows;
  // Components of every class whose rows were all recovered.
  SymmetricTensorField interior;
  std::vector<BoundaryEstimate> boundary;

  bool complete() const;
  const RowRecovery& row(int id) const;
  // Relative L2 error of component j on |x| <= radius against a truth on the same grid.
  double relative_error(const SymmetricTensorField& truth, const MultiIndex& j, double radius) const;
  // Columns x1, x2, index, re, im over the interior components.
  void write_csv(std::ostream& out) const;
};

// Row datum (operator applied to the combination over gamma0^{(r+2)/2}) at
// arbitrary centres; failed fits leave 0 and a message.
struct RowData {
  std::vector<cplx> datum;
  std::vector<std::string> failures;
};

RowData row_data(const IdentityOracle& oracle, const ConductivityModel& gamma0, const GridPtr& oracle_grid, int m,
                 int row_id, std::span<const cplx> centres, const InteriorOptions& options = {});

RecoveredTensor recover_interior(const IdentityOracle& oracle, const ConductivityModel& gamma0,
                                 const GridPtr& oracle_grid, int m, const GridPtr& sample_grid,
                                 const InteriorOptions& options = {});

// gamma0 = 1 calibration from a synthetic tensor whose row data are known.
CalibrationTable measure_calibration(int m, const GridPtr& grid, std::span<const double> taus);

// |d^n Lambda_1 - d^n Lambda_2| for the same directions and test function.
double linearized_difference(const ConductivityModel& first, const ConductivityModel& second,
                             std::span<const BoundaryFunction> directions, const BoundaryFunction& test,
                             const SolverOptions& options = {});

}  // namespace calderon
