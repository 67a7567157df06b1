#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "calderon/field.hpp"

namespace calderon {

// (|c| tau / 2 pi) sum h^2 g(x) exp(i c tau (x1 - c1)(x2 - c2)) over the box.
struct OscillatoryQuadrature {
  cplx value;
  cplx coarse;                  // same sum on the 2h subgrid
  double resolution = 0.0;      // |c| tau h^2
  bool under_resolved = false;  // resolution above 0.5

  double refinement_gap() const { return std::abs(value - coarse); }
};

OscillatoryQuadrature oscillatory_quadrature(const ComplexField& g, double c, double tau, cplx centre = 0.0);

// Terms t_k = (1 / k!) (i / (c tau))^k (d1 d2)^k g(centre), k < order, of the
// normalised integral above.
struct PhaseExpansion {
  double c = 1.0;
  double tau = 0.0;
  int order = 0;
  std::vector<cplx> terms;
  double remainder_bound = 0.0;

  cplx value() const { return partial(order); }
  cplx partial(int n) const;
};

// Origin derivatives and remainder norms of one integrand, reusable across tau.
class StationaryPhase {
 public:
  StationaryPhase(const ComplexField& g, int max_order, cplx centre = 0.0);

  int max_order() const noexcept { return static_cast<int>(remainder_norms_.size()); }
  PhaseExpansion expand(double c, double tau, int order) const;

 private:
  std::vector<cplx> derivatives_;       // (d1 d2)^k g(centre), k < max_order
  std::vector<double> remainder_norms_; // sum_{a + b <= 3} |d1^a d2^b (d1 d2)^N g|_L1, N = 1..max_order
};

PhaseExpansion stationary_phase_expand(const ComplexField& g, double c, double tau, int order, cplx centre = 0.0);

// Mixed derivative d1^a d2^b g at the node nearest to centre, by separable
// central stencils of sixth order on a multiple of h chosen per order.
cplx mixed_derivative(const ComplexField& g, int a, int b, cplx centre = 0.0);

struct PointwiseFit {
  cplx limit;                      // leading coefficient L
  std::vector<cplx> corrections;   // c1, c2, ...
  double relative_residual = 0.0;
};

struct FitOptions {
  int corrections = 1;            // number of 1/tau^j terms
  double tolerance = 1e-2;        // on the relative fit residual
  double scale_floor = 0.0;       // residual is relative to max(|value tau^p|, scale_floor)
};

// Least squares of value(tau) tau^p = L + c1 / tau + ... .
PointwiseFit extract_pointwise(std::span<const double> taus, std::span<const cplx> values, double p,
                               const FitOptions& options = {});
PointwiseFit extract_pointwise(const std::function<cplx(double)>& oracle, std::span<const double> taus, double p,
                               const FitOptions& options = {});

// Least-squares slope of log |value| against log tau.
double log_log_slope(std::span<const double> taus, std::span<const double> values);

// Calibrated leading behaviour per (m, set index k): value ~ multiple * datum / tau^exponent.
struct CalibrationEntry {
  double exponent = 0.0;
  cplx multiple;
};

class CalibrationTable {
 public:
  using Key = std::pair<int, int>;

  void set(int m, int k, CalibrationEntry entry) { entries_[{m, k}] = entry; }
  const CalibrationEntry& at(int m, int k) const;
  bool contains(int m, int k) const { return entries_.count({m, k}) > 0; }
  const std::map<Key, CalibrationEntry>& entries() const noexcept { return entries_; }

  // Lines "m=<m> k=<k> exponent=<p> re=<x> im=<y>"; '#' starts a comment.
  static CalibrationTable load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  std::map<Key, CalibrationEntry> entries_;
};

}  // namespace calderon
