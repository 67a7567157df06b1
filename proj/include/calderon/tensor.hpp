#pragma once

#include <map>
#include <string>
#include <vector>

#include "calderon/field.hpp"

namespace calderon {

// Multi-index with entries in {0, 1, 2}; slot 0 pairs with u, slots 1 and 2
// with the gradient components.
using MultiIndex = std::vector<int>;

// All ordered multi-indices of length m, lexicographic.
std::vector<MultiIndex> ordered_indices(int m);
// Sorted representatives, lexicographic.
std::vector<MultiIndex> canonical_indices(int m);
// Sorted representatives with entries in {1, 2} only, ordered by the number
// of twos (0 twos first).
std::vector<MultiIndex> gradient_indices(int m);
MultiIndex canonical(MultiIndex j);
std::string index_label(const MultiIndex& j);

class SymmetricTensorField {
 public:
  SymmetricTensorField(GridPtr grid, int rank);

  int rank() const noexcept { return rank_; }
  const GridPtr& grid_ptr() const noexcept { return grid_; }

  // Sets the component for j and all of its permutations.
  void set(const MultiIndex& j, ComplexField field);
  bool has(const MultiIndex& j) const;
  // Zero field when the component is absent.
  ComplexField component(const MultiIndex& j) const;
  const ComplexField* find(const MultiIndex& j) const;
  const std::map<MultiIndex, ComplexField>& components() const noexcept { return components_; }

  SymmetricTensorField conj() const;
  SymmetricTensorField& operator+=(const SymmetricTensorField& other);
  SymmetricTensorField& operator*=(cplx s);
  friend SymmetricTensorField operator+(SymmetricTensorField a, const SymmetricTensorField& b) {
    return a += b;
  }
  friend SymmetricTensorField operator*(cplx s, SymmetricTensorField a) { return a *= s; }

 private:
  void check_index(const MultiIndex& j) const;

  GridPtr grid_;
  int rank_;
  std::map<MultiIndex, ComplexField> components_;
};

// Tensor data indexed by ordered multi-index, without symmetry. Entry k
// matches ordered_indices(rank)[k]; null entries are zero.
struct OrderedTensorView {
  int rank = 0;
  std::vector<const ComplexField*> entries;
};

OrderedTensorView ordered_view(const SymmetricTensorField& t);

}  // namespace calderon
