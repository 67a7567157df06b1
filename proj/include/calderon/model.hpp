#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "calderon/field.hpp"
#include "calderon/tensor.hpp"

namespace calderon {

// gamma(x, rho, mu) = sum over terms of c(x) rho^p0 mu1^p1 mu2^p2.
class ConductivityModel {
 public:
  using Coefficient = std::function<cplx(double, double)>;

  struct Term {
    std::array<int, 3> power;
    Coefficient coefficient;
  };

  struct Evaluation {
    cplx value;
    cplx d_rho;
    cplx d_mu1;
    cplx d_mu2;
  };

  // constant_background marks gamma0 as spatially constant, which lets the
  // CGO and singular-solution builders skip their correction solves.
  ConductivityModel(std::vector<Term> terms, double lambda, std::optional<double> delta = {},
                    std::string name = {}, bool constant_background = false);

  // lambda = 0 picks 1.25 max(c, 1/c).
  static ConductivityModel constant(double c, double lambda = 0.0);
  static ConductivityModel background(Coefficient gamma0, double lambda, std::string name = {});
  // c0 + c rho^k with constant c0.
  static ConductivityModel rho_power(double c0, cplx c, int k, double lambda = 0.0);
  // gamma0(x) + c rho^k.
  static ConductivityModel rho_power(Coefficient gamma0, cplx c, int k, double lambda,
                                     std::string name = {});
  // The background 1 + 0.1 exp(-4|x|^2) used across the experiments.
  static Coefficient gaussian_bump_background(double amplitude = 0.1, double rate = 4.0);

  cplx gamma(double x1, double x2, cplx rho, cplx mu1, cplx mu2) const;
  Evaluation evaluate(double x1, double x2, cplx rho, cplx mu1, cplx mu2) const;
  cplx background(double x1, double x2) const;

  // Partial derivative of gamma at (rho, mu) = 0 along the slots in j.
  cplx derivative(double x1, double x2, const MultiIndex& j) const;
  // Rank-m tensor of the m-th Taylor coefficients: derivative / m!.
  SymmetricTensorField taylor_tensor(const GridPtr& grid, int m) const;

  int max_order() const noexcept;
  bool is_linear() const noexcept { return max_order() == 0; }
  bool has_constant_background() const noexcept { return constant_background_; }

  double lambda() const noexcept { return lambda_; }
  // Supplied radius, else 0.05 / lambda, infinite for linear models.
  double delta() const noexcept;
  const std::string& name() const noexcept { return name_; }
  const std::vector<Term>& terms() const noexcept { return terms_; }

  // Refuses unless 1/lambda < gamma0 < lambda (real, positive) on every inside node.
  void check_ellipticity(const Grid2D& grid) const;

  // Same spatial coefficients with the nonlinear terms removed.
  ConductivityModel linear_part() const;

 private:
  std::vector<Term> terms_;
  double lambda_;
  std::optional<double> delta_;
  std::string name_;
  bool constant_background_ = false;
};

}  // namespace calderon
