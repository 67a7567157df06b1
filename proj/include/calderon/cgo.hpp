#pragma once

#include <complex>
#include <memory>

#include "calderon/field.hpp"
#include "calderon/linearize.hpp"
#include "calderon/model.hpp"

namespace calderon {

// q = Delta sqrt(gamma0) / sqrt(gamma0). With a = -q and b = -1 the Neumann
// series w = S(1 + w) solves (-Delta + q) e^{tau z^2}(1 + w) = 0.
struct SchrodingerData {
  ComplexField q;
  ComplexField a;
  cplx b = -1.0;
};

SchrodingerData schrodinger_potential(const ConductivityModel& model, const GridPtr& grid);

// Discrete solid Cauchy transform (1/pi) int_Omega f(y) / (x - y) dy on one
// grid. Kernel entries are cell integrals of 1/(x - y); sources carry their
// cut-cell area fraction.
class CauchyOperator {
 public:
  explicit CauchyOperator(GridPtr grid);
  ~CauchyOperator();
  CauchyOperator(CauchyOperator&&) noexcept;
  CauchyOperator& operator=(CauchyOperator&&) noexcept;

  const GridPtr& grid_ptr() const noexcept { return grid_; }

  // conjugated: kernel 1 / conj(x - y), the inverse of d instead of dbar.
  ComplexField apply(const ComplexField& f, bool conjugated = false) const;
  // Direct O(N^2) summation of the same discrete operator.
  ComplexField apply_direct(const ComplexField& f, bool conjugated = false) const;

  // L2(Omega) operator norm by power iteration, computed once.
  double norm() const;

 private:
  struct Fft;
  GridPtr grid_;
  int n_;
  std::vector<cplx> kernel_;  // (2n - 1)^2 entries, offset (di, dj) at (di + n - 1) + (dj + n - 1)(2n - 1)
  std::unique_ptr<Fft> fft_;
  mutable double norm_ = -1.0;

  cplx kernel(int di, int dj) const { return kernel_[(di + n_ - 1) + (dj + n_ - 1) * (2 * n_ - 1)]; }
};

ComplexField cauchy_transform(const ComplexField& f, bool conjugated = false);

// S f = 1/4 T(b e^{-i tau phi} Tbar(e^{i tau phi} a f)) with phi = 4 (x1 - c1)(x2 - c2);
// transposed swaps T and Tbar.
ComplexField apply_S(const CauchyOperator& cauchy, const ComplexField& f, const SchrodingerData& data, double tau,
                     bool transposed, cplx centre = 0.0);

enum class Branch { Plus, Minus };

struct CGOOptions {
  int max_terms = 60;
  double tail_tolerance = 1e-13;    // relative to the first term
  double contraction_limit = 0.9;
  double residual_factor = 10.0;    // certificate bound relative to the gamma0 = 1 stencil error
  bool certify = true;              // false leaves both certificates at 0
};

// PLUS:  u = gamma0^{-1/2} exp(s tau (z - c)^2) (1 + w)
// MINUS: u = gamma0^{-1/2} exp(-s tau (conj z - conj c)^2) (1 + w)
struct CGOSolution {
  double tau = 0.0;
  Branch branch = Branch::Plus;
  double scale = 1.0;
  cplx centre;
  ComplexField w;
  SolutionJet jet;  // exponent = branch phase, value = gamma0^{-1/2} (1 + w)
  double certificate = 0.0;
  double reference_certificate = 0.0;
  int terms = 0;
  double contraction = 0.0;
  double tail_bound = 0.0;

  // exp(phase) gamma0^{-1/2} (1 + w) with the exponential applied; range error
  // where it would overflow.
  ComplexField field() const;
};

// Discrete L2 norm of div(gamma0 grad u) over nodes whose four neighbours are
// inside, divided by the L2 norm of gamma0 u there. u is given as a jet so large
// exponents can be shifted out.
double background_certificate(const ConductivityModel& model, const SolutionJet& u);

// Reusable per (model, grid): potential, Cauchy operator and its norm.
class CGOBuilder {
 public:
  CGOBuilder(const ConductivityModel& model, GridPtr grid, CGOOptions options = {});

  const SchrodingerData& data() const noexcept { return data_; }
  const CauchyOperator& cauchy() const noexcept { return cauchy_; }
  const GridPtr& grid_ptr() const noexcept { return grid_; }

  CGOSolution build(double tau, Branch branch, double scale = 1.0, cplx centre = 0.0) const;

 private:
  ConductivityModel model_;
  GridPtr grid_;
  CGOOptions options_;
  SchrodingerData data_;
  CauchyOperator cauchy_;
  ComplexField inv_sqrt_gamma_;
  bool trivial_;
};

CGOSolution build_cgo(const ConductivityModel& model, const GridPtr& grid, double tau, Branch branch,
                      double scale = 1.0, const CGOOptions& options = {});

}  // namespace calderon
