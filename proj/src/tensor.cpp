#include "calderon/tensor.hpp"

#include <algorithm>

#include "calderon/errors.hpp"

namespace calderon {

std::vector<MultiIndex> ordered_indices(int m) {
  std::vector<MultiIndex> out;
  MultiIndex j(m, 0);
  while (true) {
    out.push_back(j);
    int pos = m - 1;
    while (pos >= 0 && j[pos] == 2) j[pos--] = 0;
    if (pos < 0) break;
    ++j[pos];
  }
  return out;
}

std::vector<MultiIndex> canonical_indices(int m) {
  std::vector<MultiIndex> out;
  for (auto& j : ordered_indices(m))
    if (std::is_sorted(j.begin(), j.end())) out.push_back(j);
  return out;
}

std::vector<MultiIndex> gradient_indices(int m) {
  std::vector<MultiIndex> out;
  for (int twos = 0; twos <= m; ++twos) {
    MultiIndex j(m - twos, 1);
    j.insert(j.end(), twos, 2);
    out.push_back(j);
  }
  return out;
}

MultiIndex canonical(MultiIndex j) {
  std::sort(j.begin(), j.end());
  return j;
}

std::string index_label(const MultiIndex& j) {
  std::string s;
  for (int v : j) s += static_cast<char>('0' + v);
  return s;
}

SymmetricTensorField::SymmetricTensorField(GridPtr grid, int rank)
    : grid_(std::move(grid)), rank_(rank) {
  if (rank_ < 1) throw RefusalError("tensor rank must be at least 1");
  if (!grid_) throw RefusalError("tensor needs a grid");
}

void SymmetricTensorField::check_index(const MultiIndex& j) const {
  if (static_cast<int>(j.size()) != rank_) throw RefusalError("multi-index length differs from rank");
  for (int v : j)
    if (v < 0 || v > 2) throw RefusalError("multi-index entries must lie in {0,1,2}");
}

void SymmetricTensorField::set(const MultiIndex& j, ComplexField field) {
  check_index(j);
  if (field.grid_ptr() != grid_) throw RefusalError("tensor component on a different grid");
  components_.insert_or_assign(canonical(j), std::move(field));
}

bool SymmetricTensorField::has(const MultiIndex& j) const {
  check_index(j);
  return components_.count(canonical(j)) > 0;
}

const ComplexField* SymmetricTensorField::find(const MultiIndex& j) const {
  check_index(j);
  auto it = components_.find(canonical(j));
  return it == components_.end() ? nullptr : &it->second;
}

ComplexField SymmetricTensorField::component(const MultiIndex& j) const {
  if (const ComplexField* f = find(j)) return *f;
  return ComplexField(grid_, Support::Domain);
}

SymmetricTensorField SymmetricTensorField::conj() const {
  SymmetricTensorField out(grid_, rank_);
  for (const auto& [j, f] : components_) out.components_.emplace(j, f.conj());
  return out;
}

SymmetricTensorField& SymmetricTensorField::operator+=(const SymmetricTensorField& other) {
  if (other.rank_ != rank_ || other.grid_ != grid_) throw RefusalError("tensor sum shape mismatch");
  for (const auto& [j, f] : other.components_) {
    auto it = components_.find(j);
    if (it == components_.end())
      components_.emplace(j, f);
    else
      it->second += f;
  }
  return *this;
}

SymmetricTensorField& SymmetricTensorField::operator*=(cplx s) {
  for (auto& [j, f] : components_) f *= s;
  return *this;
}

OrderedTensorView ordered_view(const SymmetricTensorField& t) {
  OrderedTensorView view;
  view.rank = t.rank();
  for (const auto& j : ordered_indices(t.rank())) view.entries.push_back(t.find(j));
  return view;
}

}  // namespace calderon
