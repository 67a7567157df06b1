#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

namespace calderon {

enum class NodeKind : std::uint8_t { Exterior, Interior, BoundaryAdjacent };

struct BoundaryNode {
  double theta;
  std::array<double, 2> point;
  std::array<double, 2> normal;
};

// Uniform node lattice on [-L, L]^2 with the unit disk as the domain.
// Node (i, j) sits at (-L + i h, -L + j h); i runs along x1.
class Grid2D {
 public:
  static std::shared_ptr<const Grid2D> unit_disk(double h, double half_width = 1.25);

  double h() const noexcept { return h_; }
  double half_width() const noexcept { return half_width_; }
  int n() const noexcept { return n_; }
  std::size_t size() const noexcept { return kind_.size(); }

  double coord(int i) const noexcept { return -half_width_ + i * h_; }
  double x1(std::size_t idx) const noexcept { return coord(static_cast<int>(idx % n_)); }
  double x2(std::size_t idx) const noexcept { return coord(static_cast<int>(idx / n_)); }
  int col(std::size_t idx) const noexcept { return static_cast<int>(idx % n_); }
  int row(std::size_t idx) const noexcept { return static_cast<int>(idx / n_); }
  std::size_t index(int i, int j) const noexcept {
    return static_cast<std::size_t>(j) * n_ + static_cast<std::size_t>(i);
  }
  bool in_box(int i, int j) const noexcept { return i >= 0 && j >= 0 && i < n_ && j < n_; }

  NodeKind kind(std::size_t idx) const noexcept { return kind_[idx]; }
  bool inside(std::size_t idx) const noexcept { return kind_[idx] != NodeKind::Exterior; }
  bool inside(int i, int j) const noexcept { return in_box(i, j) && inside(index(i, j)); }

  // Signed distance to the circle, positive inside.
  static double disk_distance(double x1, double x2) noexcept;

  // Area weight of an inside node: cut-cell fraction times h^2, plus
  // partial cells of exterior neighbours folded in.
  double weight(std::size_t idx) const noexcept { return weight_[idx]; }
  double fraction(std::size_t idx) const noexcept { return fraction_[idx]; }

  const std::vector<std::size_t>& interior_nodes() const noexcept { return interior_; }
  const std::vector<BoundaryNode>& boundary() const noexcept { return boundary_; }

  // Index of the node nearest to (x1, x2).
  std::size_t nearest(double x1, double x2) const noexcept;
  std::size_t origin() const noexcept { return nearest(0.0, 0.0); }

  // Number of inside nodes on the x1 axis row through the origin.
  int nodes_across() const noexcept;

  // Node set of spacing h/2 contains this grid's nodes at even positions.
  bool refines(const Grid2D& coarse) const noexcept;

 private:
  Grid2D(double h, double half_width);

  double h_;
  double half_width_;
  int n_;
  std::vector<NodeKind> kind_;
  std::vector<double> fraction_;
  std::vector<double> weight_;
  std::vector<std::size_t> interior_;
  std::vector<BoundaryNode> boundary_;
};

using GridPtr = std::shared_ptr<const Grid2D>;

}  // namespace calderon
