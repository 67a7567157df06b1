#include "calderon/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "calderon/errors.hpp"

namespace calderon {

namespace {

constexpr int kSubsamples = 4;

}  // namespace

double Grid2D::disk_distance(double x1, double x2) noexcept {
  return 1.0 - std::hypot(x1, x2);
}

std::shared_ptr<const Grid2D> Grid2D::unit_disk(double h, double half_width) {
  if (!(h > 0.0) || !std::isfinite(h)) throw RefusalError("grid spacing must be positive");
  if (!(half_width > 1.0)) throw RefusalError("bounding box must contain the closed disk");
  return std::shared_ptr<const Grid2D>(new Grid2D(h, half_width));
}

Grid2D::Grid2D(double h, double half_width) : h_(h), half_width_(half_width) {
  const double cells = 2.0 * half_width / h;
  const double rounded = std::round(cells);
  if (std::abs(cells - rounded) > 1e-9 * cells) {
    std::ostringstream msg;
    msg << "box width " << 2.0 * half_width << " is not a multiple of h = " << h;
    throw RefusalError(msg.str());
  }
  n_ = static_cast<int>(rounded) + 1;
  const std::size_t total = static_cast<std::size_t>(n_) * n_;
  kind_.assign(total, NodeKind::Exterior);
  fraction_.assign(total, 0.0);
  weight_.assign(total, 0.0);

  for (int j = 0; j < n_; ++j)
    for (int i = 0; i < n_; ++i)
      if (disk_distance(coord(i), coord(j)) > 1e-12) kind_[index(i, j)] = NodeKind::Interior;

  for (int j = 0; j < n_; ++j) {
    for (int i = 0; i < n_; ++i) {
      const std::size_t idx = index(i, j);
      if (kind_[idx] == NodeKind::Exterior) continue;
      interior_.push_back(idx);
      const int di[4] = {1, -1, 0, 0};
      const int dj[4] = {0, 0, 1, -1};
      for (int d = 0; d < 4; ++d) {
        if (!inside(i + di[d], j + dj[d])) {
          kind_[idx] = NodeKind::BoundaryAdjacent;
          break;
        }
      }
    }
  }

  // Cut-cell fractions over every node whose cell may touch the disk.
  for (int j = 0; j < n_; ++j) {
    for (int i = 0; i < n_; ++i) {
      const double cx = coord(i), cy = coord(j);
      if (std::hypot(cx, cy) > 1.0 + h) continue;
      int hits = 0;
      for (int b = 0; b < kSubsamples; ++b)
        for (int a = 0; a < kSubsamples; ++a) {
          const double sx = cx + h * ((a + 0.5) / kSubsamples - 0.5);
          const double sy = cy + h * ((b + 0.5) / kSubsamples - 0.5);
          if (sx * sx + sy * sy < 1.0) ++hits;
        }
      fraction_[index(i, j)] = static_cast<double>(hits) / (kSubsamples * kSubsamples);
    }
  }

  const double area = h * h;
  for (std::size_t idx : interior_) weight_[idx] = fraction_[idx] * area;
  for (int j = 0; j < n_; ++j) {
    for (int i = 0; i < n_; ++i) {
      const std::size_t idx = index(i, j);
      if (kind_[idx] != NodeKind::Exterior || fraction_[idx] == 0.0) continue;
      std::size_t best = total;
      double best_d = 1e300;
      for (int dj = -1; dj <= 1; ++dj)
        for (int di = -1; di <= 1; ++di) {
          if ((di == 0 && dj == 0) || !inside(i + di, j + dj)) continue;
          const double d = std::hypot(di, dj);
          if (d < best_d) {
            best_d = d;
            best = index(i + di, j + dj);
          }
        }
      if (best < total) weight_[best] += fraction_[idx] * area;
    }
  }

  const int m = 2 * static_cast<int>(std::round(std::numbers::pi / h)) + 1;
  boundary_.reserve(m);
  for (int k = 0; k < m; ++k) {
    const double t = 2.0 * std::numbers::pi * k / m;
    const double c = std::cos(t), s = std::sin(t);
    boundary_.push_back(BoundaryNode{t, {c, s}, {c, s}});
  }
}

std::size_t Grid2D::nearest(double x1, double x2) const noexcept {
  auto snap = [&](double x) {
    const int i = static_cast<int>(std::lround((x + half_width_) / h_));
    return std::clamp(i, 0, n_ - 1);
  };
  return index(snap(x1), snap(x2));
}

int Grid2D::nodes_across() const noexcept {
  const int j = static_cast<int>(origin() / n_);
  int count = 0;
  for (int i = 0; i < n_; ++i) count += inside(i, j) ? 1 : 0;
  return count;
}

bool Grid2D::refines(const Grid2D& coarse) const noexcept {
  return std::abs(coarse.h_ - 2.0 * h_) < 1e-14 && coarse.half_width_ == half_width_;
}

}  // namespace calderon
