#pragma once

#include <complex>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "calderon/grid.hpp"

namespace calderon {

using cplx = std::complex<double>;

// Domain fields live on the inside nodes; Box fields on every node of the
// bounding box. Values outside the support are held at zero.
enum class Support { Domain, Box };

class ComplexField {
 public:
  using Function = std::function<cplx(double, double)>;

  ComplexField(GridPtr grid, Support support, std::string tag = {});
  ComplexField(GridPtr grid, Support support, std::vector<cplx> values, std::string tag = {});

  static ComplexField from_function(GridPtr grid, const Function& f, Support support = Support::Domain,
                                    std::string tag = {});
  static ComplexField constant(GridPtr grid, cplx c, Support support = Support::Domain,
                               std::string tag = {});

  const Grid2D& grid() const noexcept { return *grid_; }
  const GridPtr& grid_ptr() const noexcept { return grid_; }
  Support support() const noexcept { return support_; }
  const std::string& tag() const noexcept { return tag_; }
  void set_tag(std::string tag) { tag_ = std::move(tag); }

  bool defined_at(std::size_t idx) const noexcept {
    return support_ == Support::Box || grid_->inside(idx);
  }

  cplx operator[](std::size_t idx) const noexcept { return values_[idx]; }
  cplx& operator[](std::size_t idx) noexcept { return values_[idx]; }
  cplx at(int i, int j) const noexcept { return values_[grid_->index(i, j)]; }
  const std::vector<cplx>& values() const noexcept { return values_; }
  std::vector<cplx>& values() noexcept { return values_; }

  // Throws if any supported value is NaN or infinite.
  void require_finite() const;

  // Domain-restricted copy: Box values off the disk are dropped.
  ComplexField restricted() const;

  ComplexField conj() const;
  ComplexField map(const std::function<cplx(cplx)>& f) const;

  ComplexField& operator+=(const ComplexField& other);
  ComplexField& operator-=(const ComplexField& other);
  ComplexField& operator*=(const ComplexField& other);
  ComplexField& operator*=(cplx s);

  friend ComplexField operator+(ComplexField a, const ComplexField& b) { return a += b; }
  friend ComplexField operator-(ComplexField a, const ComplexField& b) { return a -= b; }
  friend ComplexField operator*(ComplexField a, const ComplexField& b) { return a *= b; }
  friend ComplexField operator*(ComplexField a, cplx s) { return a *= s; }
  friend ComplexField operator*(cplx s, ComplexField a) { return a *= s; }

  // Max of |value| over the support.
  double sup_norm() const noexcept;
  // sqrt of the integral of |f|^2 with the grid quadrature.
  double l2_norm() const;

 private:
  void require_compatible(const ComplexField& other) const;

  GridPtr grid_;
  Support support_;
  std::vector<cplx> values_;
  std::string tag_;
};

}  // namespace calderon
