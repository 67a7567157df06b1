#include "calderon/model.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "calderon/errors.hpp"

namespace calderon {

namespace {

cplx ipow(cplx z, int p) {
  cplx r(1.0, 0.0);
  for (int k = 0; k < p; ++k) r *= z;
  return r;
}

double factorial(int n) {
  double r = 1.0;
  for (int k = 2; k <= n; ++k) r *= k;
  return r;
}

double default_lambda(double c) { return 1.25 * std::max(c, 1.0 / c); }

}  // namespace

ConductivityModel::ConductivityModel(std::vector<Term> terms, double lambda,
                                     std::optional<double> delta, std::string name,
                                     bool constant_background)
    : terms_(std::move(terms)),
      lambda_(lambda),
      delta_(delta),
      name_(std::move(name)),
      constant_background_(constant_background) {
  if (!(lambda_ > 0.0)) throw RefusalError("ellipticity bound lambda must be positive");
  if (delta_ && !(*delta_ > 0.0)) throw RefusalError("smallness radius delta must be positive");
  bool has_background = false;
  for (const Term& t : terms_) {
    for (int p : t.power)
      if (p < 0) throw RefusalError("negative power in conductivity model");
    if (!t.coefficient) throw RefusalError("conductivity term without coefficient");
    if (t.power == std::array<int, 3>{0, 0, 0}) has_background = true;
  }
  if (!has_background) throw RefusalError("conductivity model needs a background term");
}

ConductivityModel ConductivityModel::constant(double c, double lambda) {
  if (!(c > 0.0)) throw RefusalError("constant conductivity must be positive");
  if (lambda == 0.0) lambda = default_lambda(c);
  std::ostringstream name;
  name << "constant " << c;
  return ConductivityModel({Term{{0, 0, 0}, [c](double, double) { return cplx(c); }}}, lambda, {},
                           name.str(), true);
}

ConductivityModel ConductivityModel::background(Coefficient gamma0, double lambda, std::string name) {
  return ConductivityModel({Term{{0, 0, 0}, std::move(gamma0)}}, lambda, {}, std::move(name));
}

ConductivityModel ConductivityModel::rho_power(double c0, cplx c, int k, double lambda) {
  if (!(c0 > 0.0)) throw RefusalError("constant conductivity must be positive");
  if (lambda == 0.0) lambda = default_lambda(c0);
  std::ostringstream name;
  name << c0 << " + " << c << " rho^" << k;
  return ConductivityModel({Term{{0, 0, 0}, [c0](double, double) { return cplx(c0); }},
                            Term{{k, 0, 0}, [c](double, double) { return c; }}},
                           lambda, {}, name.str(), true);
}

ConductivityModel ConductivityModel::rho_power(Coefficient gamma0, cplx c, int k, double lambda,
                                               std::string name) {
  return ConductivityModel(
      {Term{{0, 0, 0}, std::move(gamma0)}, Term{{k, 0, 0}, [c](double, double) { return c; }}},
      lambda, {}, std::move(name));
}

ConductivityModel::Coefficient ConductivityModel::gaussian_bump_background(double amplitude,
                                                                           double rate) {
  return [amplitude, rate](double x1, double x2) {
    return cplx(1.0 + amplitude * std::exp(-rate * (x1 * x1 + x2 * x2)));
  };
}

cplx ConductivityModel::gamma(double x1, double x2, cplx rho, cplx mu1, cplx mu2) const {
  cplx s{};
  for (const Term& t : terms_)
    s += t.coefficient(x1, x2) * ipow(rho, t.power[0]) * ipow(mu1, t.power[1]) *
         ipow(mu2, t.power[2]);
  return s;
}

ConductivityModel::Evaluation ConductivityModel::evaluate(double x1, double x2, cplx rho, cplx mu1,
                                                          cplx mu2) const {
  Evaluation e{};
  const cplx args[3] = {rho, mu1, mu2};
  for (const Term& t : terms_) {
    const cplx c = t.coefficient(x1, x2);
    cplx pw[3], dpw[3];
    for (int a = 0; a < 3; ++a) {
      const int p = t.power[a];
      pw[a] = ipow(args[a], p);
      dpw[a] = p == 0 ? cplx{} : static_cast<double>(p) * ipow(args[a], p - 1);
    }
    e.value += c * pw[0] * pw[1] * pw[2];
    e.d_rho += c * dpw[0] * pw[1] * pw[2];
    e.d_mu1 += c * pw[0] * dpw[1] * pw[2];
    e.d_mu2 += c * pw[0] * pw[1] * dpw[2];
  }
  return e;
}

cplx ConductivityModel::background(double x1, double x2) const {
  cplx s{};
  for (const Term& t : terms_)
    if (t.power == std::array<int, 3>{0, 0, 0}) s += t.coefficient(x1, x2);
  return s;
}

cplx ConductivityModel::derivative(double x1, double x2, const MultiIndex& j) const {
  std::array<int, 3> alpha{0, 0, 0};
  for (int v : j) {
    if (v < 0 || v > 2) throw RefusalError("multi-index entries must lie in {0,1,2}");
    ++alpha[v];
  }
  cplx s{};
  for (const Term& t : terms_)
    if (t.power == alpha) s += t.coefficient(x1, x2);
  return s * factorial(alpha[0]) * factorial(alpha[1]) * factorial(alpha[2]);
}

SymmetricTensorField ConductivityModel::taylor_tensor(const GridPtr& grid, int m) const {
  SymmetricTensorField t(grid, m);
  const double scale = 1.0 / factorial(m);
  for (const MultiIndex& j : canonical_indices(m)) {
    std::array<int, 3> alpha{0, 0, 0};
    for (int v : j) ++alpha[v];
    bool present = false;
    for (const Term& term : terms_) present = present || term.power == alpha;
    if (!present) continue;
    t.set(j, ComplexField::from_function(
                 grid, [&](double x1, double x2) { return scale * derivative(x1, x2, j); },
                 Support::Domain, "tensor " + index_label(j)));
  }
  return t;
}

int ConductivityModel::max_order() const noexcept {
  int m = 0;
  for (const Term& t : terms_) m = std::max(m, t.power[0] + t.power[1] + t.power[2]);
  return m;
}

double ConductivityModel::delta() const noexcept {
  if (delta_) return *delta_;
  if (is_linear()) return std::numeric_limits<double>::infinity();
  return 0.05 / lambda_;
}

void ConductivityModel::check_ellipticity(const Grid2D& grid) const {
  for (std::size_t idx : grid.interior_nodes()) {
    const cplx g = background(grid.x1(idx), grid.x2(idx));
    if (std::abs(g.imag()) > 1e-12 * std::abs(g.real()) || !(g.real() > 1.0 / lambda_) ||
        !(g.real() < lambda_)) {
      std::ostringstream msg;
      msg << "ellipticity violated: gamma0 = " << g << " at (" << grid.x1(idx) << ", "
          << grid.x2(idx) << ") with lambda = " << lambda_;
      throw RefusalError(msg.str());
    }
  }
}

ConductivityModel ConductivityModel::linear_part() const {
  std::vector<Term> kept;
  for (const Term& t : terms_)
    if (t.power == std::array<int, 3>{0, 0, 0}) kept.push_back(t);
  return ConductivityModel(std::move(kept), lambda_, {}, name_ + " (background)",
                           constant_background_);
}

}  // namespace calderon
