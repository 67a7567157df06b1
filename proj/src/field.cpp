#include "calderon/field.hpp"

#include <cmath>

#include "calderon/errors.hpp"
#include "calderon/ops.hpp"

namespace calderon {

ComplexField::ComplexField(GridPtr grid, Support support, std::string tag)
    : grid_(std::move(grid)), support_(support), tag_(std::move(tag)) {
  if (!grid_) throw RefusalError("field needs a grid");
  values_.assign(grid_->size(), cplx{});
}

ComplexField::ComplexField(GridPtr grid, Support support, std::vector<cplx> values, std::string tag)
    : grid_(std::move(grid)), support_(support), values_(std::move(values)), tag_(std::move(tag)) {
  if (!grid_) throw RefusalError("field needs a grid");
  if (values_.size() != grid_->size()) throw RefusalError("field value count does not match grid");
  if (support_ == Support::Domain)
    for (std::size_t k = 0; k < values_.size(); ++k)
      if (!grid_->inside(k)) values_[k] = cplx{};
}

ComplexField ComplexField::from_function(GridPtr grid, const Function& f, Support support,
                                         std::string tag) {
  ComplexField out(grid, support, std::move(tag));
  for (std::size_t k = 0; k < grid->size(); ++k)
    if (out.defined_at(k)) out.values_[k] = f(grid->x1(k), grid->x2(k));
  return out;
}

ComplexField ComplexField::constant(GridPtr grid, cplx c, Support support, std::string tag) {
  return from_function(std::move(grid), [c](double, double) { return c; }, support, std::move(tag));
}

void ComplexField::require_finite() const {
  for (std::size_t k = 0; k < values_.size(); ++k) {
    if (!defined_at(k)) continue;
    if (!std::isfinite(values_[k].real()) || !std::isfinite(values_[k].imag()))
      throw RefusalError("field '" + tag_ + "' holds a non-finite value");
  }
}

ComplexField ComplexField::restricted() const {
  return ComplexField(grid_, Support::Domain, values_, tag_);
}

ComplexField ComplexField::conj() const {
  ComplexField out(*this);
  for (auto& v : out.values_) v = std::conj(v);
  return out;
}

ComplexField ComplexField::map(const std::function<cplx(cplx)>& f) const {
  ComplexField out(*this);
  for (std::size_t k = 0; k < values_.size(); ++k)
    if (defined_at(k)) out.values_[k] = f(values_[k]);
  return out;
}

void ComplexField::require_compatible(const ComplexField& other) const {
  if (grid_ != other.grid_) throw RefusalError("field arithmetic across different grids");
}

ComplexField& ComplexField::operator+=(const ComplexField& other) {
  require_compatible(other);
  for (std::size_t k = 0; k < values_.size(); ++k)
    if (defined_at(k)) values_[k] += other.values_[k];
  return *this;
}

ComplexField& ComplexField::operator-=(const ComplexField& other) {
  require_compatible(other);
  for (std::size_t k = 0; k < values_.size(); ++k)
    if (defined_at(k)) values_[k] -= other.values_[k];
  return *this;
}

ComplexField& ComplexField::operator*=(const ComplexField& other) {
  require_compatible(other);
  for (std::size_t k = 0; k < values_.size(); ++k) values_[k] *= other.values_[k];
  return *this;
}

ComplexField& ComplexField::operator*=(cplx s) {
  for (auto& v : values_) v *= s;
  return *this;
}

double ComplexField::sup_norm() const noexcept {
  double m = 0.0;
  for (std::size_t k = 0; k < values_.size(); ++k)
    if (defined_at(k)) m = std::max(m, std::abs(values_[k]));
  return m;
}

double ComplexField::l2_norm() const {
  return std::sqrt(integrate(map([](cplx v) { return cplx(std::norm(v)); })).real());
}

}  // namespace calderon
