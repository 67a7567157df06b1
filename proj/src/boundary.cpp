#include "calderon/boundary.hpp"

#include <cmath>
#include <numbers>

#include "calderon/errors.hpp"

namespace calderon {

BoundaryFunction::BoundaryFunction(GridPtr grid, std::vector<cplx> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (!grid_) throw RefusalError("boundary function needs a grid");
  if (values_.size() != grid_->boundary().size())
    throw RefusalError("boundary sample count does not match the polyline");
  for (const cplx& v : values_)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
      throw RefusalError("boundary data holds a non-finite value");
  build_coefficients();
}

BoundaryFunction BoundaryFunction::zero(GridPtr grid) {
  std::vector<cplx> v(grid->boundary().size());
  return BoundaryFunction(std::move(grid), std::move(v));
}

BoundaryFunction BoundaryFunction::from_function(GridPtr grid,
                                                 const std::function<cplx(double, double)>& f) {
  std::vector<cplx> v;
  v.reserve(grid->boundary().size());
  for (const BoundaryNode& b : grid->boundary()) v.push_back(f(b.point[0], b.point[1]));
  return BoundaryFunction(std::move(grid), std::move(v));
}

BoundaryFunction BoundaryFunction::from_angle(GridPtr grid, const std::function<cplx(double)>& f) {
  std::vector<cplx> v;
  v.reserve(grid->boundary().size());
  for (const BoundaryNode& b : grid->boundary()) v.push_back(f(b.theta));
  return BoundaryFunction(std::move(grid), std::move(v));
}

void BoundaryFunction::build_coefficients() {
  const int m = static_cast<int>(values_.size());
  const int big_k = (m - 1) / 2;
  coefficients_.assign(2 * big_k + 1, cplx{});
  std::vector<cplx> twiddle(m);
  for (int j = 0; j < m; ++j) twiddle[j] = std::polar(1.0, -2.0 * std::numbers::pi * j / m);
  for (int k = -big_k; k <= big_k; ++k) {
    const long kk = ((k % m) + m) % m;
    cplx c{};
    for (int j = 0; j < m; ++j) c += values_[j] * twiddle[(kk * j) % m];
    coefficients_[k + big_k] = c / static_cast<double>(m);
  }
}

BoundaryFunction::cplx BoundaryFunction::operator()(double theta) const {
  const int big_k = static_cast<int>(coefficients_.size() / 2);
  const cplx step = std::polar(1.0, theta);
  cplx phase = std::polar(1.0, -big_k * theta);
  cplx s{};
  for (int k = -big_k; k <= big_k; ++k, phase *= step) s += coefficients_[k + big_k] * phase;
  return s;
}

BoundaryFunction::cplx BoundaryFunction::derivative(double theta) const {
  const int big_k = static_cast<int>(coefficients_.size() / 2);
  const cplx I(0.0, 1.0);
  const cplx step = std::polar(1.0, theta);
  cplx phase = std::polar(1.0, -big_k * theta);
  cplx s{};
  for (int k = -big_k; k <= big_k; ++k, phase *= step)
    s += static_cast<double>(k) * coefficients_[k + big_k] * phase;
  return I * s;
}

double BoundaryFunction::norm() const {
  const std::size_t m = values_.size();
  const double ds = 2.0 * std::numbers::pi / static_cast<double>(m);
  double sup0 = 0.0, sup1 = 0.0, sup2 = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const cplx prev = values_[(j + m - 1) % m], cur = values_[j], next = values_[(j + 1) % m];
    sup0 = std::max(sup0, std::abs(cur));
    sup1 = std::max(sup1, std::abs(next - cur) / ds);
    sup2 = std::max(sup2, std::abs(next - 2.0 * cur + prev) / (ds * ds));
  }
  return std::max({sup0, sup1, sup2});
}

BoundaryFunction& BoundaryFunction::operator+=(const BoundaryFunction& other) {
  if (grid_ != other.grid_) throw RefusalError("boundary arithmetic across different grids");
  for (std::size_t j = 0; j < values_.size(); ++j) values_[j] += other.values_[j];
  for (std::size_t k = 0; k < coefficients_.size(); ++k) coefficients_[k] += other.coefficients_[k];
  return *this;
}

BoundaryFunction& BoundaryFunction::operator*=(cplx s) {
  for (auto& v : values_) v *= s;
  for (auto& c : coefficients_) c *= s;
  return *this;
}

}  // namespace calderon
