#pragma once

#include <memory>
#include <vector>

#include "calderon/boundary.hpp"
#include "calderon/field.hpp"
#include "calderon/model.hpp"

namespace calderon {

struct SolverOptions {
  double tolerance = 1e-10;
  int max_iterations = 40;
  int max_backtracks = 8;
};

struct DirichletSolve {
  BoundaryFunction f;
  ComplexField u;
  double residual = 0.0;
  int iterations = 0;
};

struct DtNSample {
  BoundaryFunction f;
  std::vector<cplx> g;

  // Ratio of the cos(n theta) coefficients of g and f.
  cplx cosine_ratio(int n) const;
};

// Shortley-Weller flux-form discretization of div(gamma grad u) on the disk.
class Discretization;

// Factorized gamma0 operator on one grid, reusable across right-hand sides.
class BackgroundSolver {
 public:
  BackgroundSolver(const ConductivityModel& model, GridPtr grid);
  ~BackgroundSolver();
  BackgroundSolver(BackgroundSolver&&) noexcept;
  BackgroundSolver& operator=(BackgroundSolver&&) noexcept;

  const GridPtr& grid_ptr() const noexcept;

  ComplexField solve(const BoundaryFunction& f) const;
  // div(gamma0 grad u) = source in the domain, u = f on the boundary.
  ComplexField solve(const BoundaryFunction& f, const ComplexField& source) const;
  // Discrete L2 norm of div(gamma0 grad u) - source.
  double residual(const ComplexField& u, const BoundaryFunction& f, const ComplexField* source) const;

 private:
  friend DirichletSolve solve_dirichlet(const ConductivityModel&, const BoundaryFunction&, const SolverOptions&,
                                        const BackgroundSolver*);
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// The optional background solver supplies the initial guess without a new factorization.
DirichletSolve solve_dirichlet(const ConductivityModel& model, const BoundaryFunction& f,
                               const SolverOptions& options = {}, const BackgroundSolver* background = nullptr);

DtNSample dtn_apply(const ConductivityModel& model, const BoundaryFunction& f,
                    const SolverOptions& options = {});

ComplexField solve_linear_background(const ConductivityModel& model, const BoundaryFunction& f);

// <Lambda(f), phi> in weak form with v the gamma0 extension of phi:
//   int (gamma(x, u, grad u) - gamma0) grad u . grad v + int gamma0 grad u0 . grad v
// where u0 is the gamma0 solution with data f. The second term equals
// int gamma0 grad u . grad v in the continuum; splitting it off keeps every
// higher linearization consistent with the quadrature of the integral identity.
cplx dtn_pairing(const ConductivityModel& model, const BackgroundSolver& background, const DirichletSolve& solved,
                 const ComplexField& v);
cplx dtn_pairing(const ConductivityModel& model, const DirichletSolve& solved, const ComplexField& v);
cplx dtn_pairing(const ConductivityModel& model, const BoundaryFunction& f, const BoundaryFunction& phi,
                 const SolverOptions& options = {});

// Discrete L2 norm of div(gamma(x, u, grad u) grad u).
double dirichlet_residual(const ConductivityModel& model, const ComplexField& u,
                          const BoundaryFunction& f);

}  // namespace calderon
