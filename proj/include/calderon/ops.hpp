#pragma once

#include <utility>

#include "calderon/field.hpp"

namespace calderon {

enum class DiffOp { Dx1, Dx2, Del, DelBar, Laplacian };

// Second-order finite differences on the field's support; one-sided
// stencils at nodes whose neighbour falls outside it.
ComplexField diff_op(const ComplexField& f, DiffOp which);
std::pair<ComplexField, ComplexField> gradient(const ComplexField& f);

// Cut-cell quadrature for Domain fields, plain h^2 sum for Box fields.
cplx integrate(const ComplexField& f);

// Smooth step from 0 at t <= 0 to 1 at t >= 1.
double smooth_step(double t) noexcept;

// Product with a bump that is 1 where dist(x, boundary) > 2 margin and 0
// off the disk. The result is a Box field.
ComplexField cutoff_extend(const ComplexField& f, double margin);

}  // namespace calderon
