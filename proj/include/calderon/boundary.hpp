#pragma once

#include <complex>
#include <functional>
#include <vector>

#include "calderon/grid.hpp"

namespace calderon {

// Dirichlet data sampled on the boundary polyline. Off-node values come
// from the trigonometric interpolant of the samples.
class BoundaryFunction {
 public:
  using cplx = std::complex<double>;

  BoundaryFunction(GridPtr grid, std::vector<cplx> values);
  static BoundaryFunction zero(GridPtr grid);
  static BoundaryFunction from_function(GridPtr grid, const std::function<cplx(double, double)>& f);
  static BoundaryFunction from_angle(GridPtr grid, const std::function<cplx(double)>& f);

  const GridPtr& grid_ptr() const noexcept { return grid_; }
  const std::vector<cplx>& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }

  cplx operator()(double theta) const;
  cplx derivative(double theta) const;

  // max(sup|f|, sup|f'|, sup|f''|) with arclength differences on the nodes.
  double norm() const;

  BoundaryFunction& operator+=(const BoundaryFunction& other);
  BoundaryFunction& operator*=(cplx s);
  friend BoundaryFunction operator+(BoundaryFunction a, const BoundaryFunction& b) { return a += b; }
  friend BoundaryFunction operator*(cplx s, BoundaryFunction a) { return a *= s; }
  friend BoundaryFunction operator*(BoundaryFunction a, cplx s) { return a *= s; }

 private:
  void build_coefficients();

  GridPtr grid_;
  std::vector<cplx> values_;
  std::vector<cplx> coefficients_;  // index k + K for frequency k in [-K, K]
};

}  // namespace calderon
