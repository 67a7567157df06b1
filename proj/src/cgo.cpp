#include "calderon/cgo.hpp"

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <sstream>

#include "calderon/errors.hpp"
#include "calderon/ops.hpp"

namespace calderon {

namespace {

constexpr double kMaxExponent = 700.0;

// Gauss-Legendre nodes and weights on [-1/2, 1/2].
std::vector<std::array<double, 2>> gauss_legendre(int n) {
  std::vector<std::array<double, 2>> out;
  for (int k = 0; k < n; ++k) {
    double x = std::cos(std::numbers::pi * (k + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int j = 2; j <= n; ++j) {
        const double p2 = ((2 * j - 1) * x * p1 - (j - 1) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    out.push_back({0.5 * x, 1.0 / ((1.0 - x * x) * dp * dp)});
  }
  return out;
}

// int over the unit cell t in [-1/2, 1/2]^2 of 1 / (d - t).
cplx cell_integral(int di, int dj, const std::vector<std::array<double, 2>>& rule) {
  const cplx d(di, dj);
  cplx s{};
  for (const auto& a : rule)
    for (const auto& b : rule) s += a[1] * b[1] / (d - cplx(a[0], b[0]));
  return s;
}

}  // namespace

SchrodingerData schrodinger_potential(const ConductivityModel& model, const GridPtr& grid) {
  const Grid2D& g = *grid;
  ComplexField root(grid, Support::Domain, "sqrt gamma0");
  for (std::size_t idx : g.interior_nodes()) {
    const cplx v = model.background(g.x1(idx), g.x2(idx));
    if (!(v.real() > 0.0) || v.imag() != 0.0) {
      std::ostringstream msg;
      msg << "background conductivity " << v << " is not positive at (" << g.x1(idx) << ", " << g.x2(idx)
          << "); ellipticity violated";
      throw RefusalError(msg.str());
    }
    root[idx] = std::sqrt(v.real());
  }
  ComplexField q(grid, Support::Domain, "q");
  if (!model.has_constant_background()) {
    const ComplexField lap = diff_op(root, DiffOp::Laplacian);
    for (std::size_t idx : g.interior_nodes()) q[idx] = lap[idx] / root[idx];
  }
  ComplexField a = cplx(-1.0) * q;
  a.set_tag("a");
  return {std::move(q), std::move(a), -1.0};
}

struct CauchyOperator::Fft {
  int p;
  fftw_complex* buffer;
  fftw_plan forward;
  fftw_plan backward;
  std::vector<cplx> spectrum;       // transform of the kernel
  std::vector<cplx> spectrum_conj;  // transform of the conjugate kernel

  explicit Fft(int size) : p(size) {
    buffer = fftw_alloc_complex(static_cast<std::size_t>(p) * p);
    if (!buffer) throw Error("FFTW buffer allocation failed");
    forward = fftw_plan_dft_2d(p, p, buffer, buffer, FFTW_FORWARD, FFTW_ESTIMATE);
    backward = fftw_plan_dft_2d(p, p, buffer, buffer, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  ~Fft() {
    fftw_destroy_plan(forward);
    fftw_destroy_plan(backward);
    fftw_free(buffer);
  }
  Fft(const Fft&) = delete;
  Fft& operator=(const Fft&) = delete;

  cplx* data() { return reinterpret_cast<cplx*>(buffer); }
};

CauchyOperator::CauchyOperator(GridPtr grid) : grid_(std::move(grid)), n_(grid_->n()) {
  const int width = 2 * n_ - 1;
  const double h = grid_->h();
  const auto fine = gauss_legendre(16);
  const auto medium = gauss_legendre(8);
  kernel_.resize(static_cast<std::size_t>(width) * width);
  for (int dj = -(n_ - 1); dj <= n_ - 1; ++dj)
    for (int di = -(n_ - 1); di <= n_ - 1; ++di) {
      const int r = std::max(std::abs(di), std::abs(dj));
      cplx k;
      if (r == 0)
        k = 0.0;  // principal value over the own cell
      else if (r <= 2)
        k = cell_integral(di, dj, fine);
      else if (r <= 8)
        k = cell_integral(di, dj, medium);
      else
        k = 1.0 / cplx(di, dj);
      kernel_[(di + n_ - 1) + (dj + n_ - 1) * width] = h / std::numbers::pi * k;
    }

  fft_ = std::make_unique<Fft>(2 * n_);
  const int p = fft_->p;
  auto transform_kernel = [&](bool conj) {
    cplx* buf = fft_->data();
    std::fill(buf, buf + static_cast<std::size_t>(p) * p, cplx{});
    for (int dj = -(n_ - 1); dj <= n_ - 1; ++dj)
      for (int di = -(n_ - 1); di <= n_ - 1; ++di) {
        const cplx k = kernel(di, dj);
        buf[((di + p) % p) + static_cast<std::size_t>((dj + p) % p) * p] = conj ? std::conj(k) : k;
      }
    fftw_execute(fft_->forward);
    return std::vector<cplx>(buf, buf + static_cast<std::size_t>(p) * p);
  };
  fft_->spectrum = transform_kernel(false);
  fft_->spectrum_conj = transform_kernel(true);
}

CauchyOperator::~CauchyOperator() = default;
CauchyOperator::CauchyOperator(CauchyOperator&&) noexcept = default;
CauchyOperator& CauchyOperator::operator=(CauchyOperator&&) noexcept = default;

ComplexField CauchyOperator::apply(const ComplexField& f, bool conjugated) const {
  if (f.grid_ptr() != grid_) throw RefusalError("Cauchy transform on a different grid");
  f.require_finite();
  const Grid2D& g = *grid_;
  const int p = fft_->p;
  cplx* buf = fft_->data();
  std::fill(buf, buf + static_cast<std::size_t>(p) * p, cplx{});
  for (std::size_t idx : g.interior_nodes())
    buf[g.col(idx) + static_cast<std::size_t>(g.row(idx)) * p] = g.fraction(idx) * f[idx];
  fftw_execute(fft_->forward);
  const auto& spec = conjugated ? fft_->spectrum_conj : fft_->spectrum;
  for (std::size_t k = 0; k < spec.size(); ++k) buf[k] *= spec[k];
  fftw_execute(fft_->backward);
  const double scale = 1.0 / (static_cast<double>(p) * p);
  ComplexField out(grid_, Support::Domain, conjugated ? "Tbar f" : "T f");
  for (std::size_t idx : g.interior_nodes())
    out[idx] = scale * buf[g.col(idx) + static_cast<std::size_t>(g.row(idx)) * p];
  return out;
}

ComplexField CauchyOperator::apply_direct(const ComplexField& f, bool conjugated) const {
  if (f.grid_ptr() != grid_) throw RefusalError("Cauchy transform on a different grid");
  f.require_finite();
  const Grid2D& g = *grid_;
  ComplexField out(grid_, Support::Domain, conjugated ? "Tbar f" : "T f");
  for (std::size_t i : g.interior_nodes()) {
    cplx s{};
    for (std::size_t j : g.interior_nodes()) {
      const cplx k = kernel(g.col(i) - g.col(j), g.row(i) - g.row(j));
      s += (conjugated ? std::conj(k) : k) * (g.fraction(j) * f[j]);
    }
    out[i] = s;
  }
  return out;
}

double CauchyOperator::norm() const {
  if (norm_ >= 0.0) return norm_;
  const Grid2D& g = *grid_;
  // T* = -Tbar in the area-weighted inner product, so -Tbar T is T*T.
  ComplexField v = ComplexField::from_function(grid_, [](double x, double y) { return cplx(1.0 + 0.3 * x, 0.2 * y); });
  double lambda = 0.0;
  auto weighted_norm = [&](const ComplexField& f) {
    double s = 0.0;
    for (std::size_t idx : g.interior_nodes()) s += g.fraction(idx) * std::norm(f[idx]);
    return std::sqrt(s * g.h() * g.h());
  };
  for (int it = 0; it < 60; ++it) {
    v *= cplx(1.0 / weighted_norm(v));
    ComplexField next = cplx(-1.0) * apply(apply(v), true);
    const double updated = weighted_norm(next);
    const bool done = it > 5 && std::abs(updated - lambda) < 1e-10 * updated;
    lambda = updated;
    v = std::move(next);
    if (done) break;
  }
  norm_ = std::sqrt(lambda);
  return norm_;
}

ComplexField cauchy_transform(const ComplexField& f, bool conjugated) {
  return CauchyOperator(f.grid_ptr()).apply(f, conjugated);
}

namespace {

ComplexField oscillation(const GridPtr& grid, double tau, cplx centre, double sign) {
  return ComplexField::from_function(grid, [=](double x, double y) {
    const double phi = 4.0 * (x - centre.real()) * (y - centre.imag());
    return std::polar(1.0, sign * tau * phi);
  });
}

}  // namespace

ComplexField apply_S(const CauchyOperator& cauchy, const ComplexField& f, const SchrodingerData& data, double tau,
                     bool transposed, cplx centre) {
  if (!(tau > 0.0)) throw RefusalError("tau must be positive");
  const GridPtr& grid = cauchy.grid_ptr();
  const ComplexField up = oscillation(grid, tau, centre, 1.0);
  const ComplexField down = oscillation(grid, tau, centre, -1.0);
  ComplexField inner = cauchy.apply(up * data.a * f, !transposed);
  ComplexField outer = cauchy.apply(data.b * (down * inner), transposed);
  return cplx(0.25) * outer;
}

ComplexField CGOSolution::field() const {
  const Grid2D& g = jet.value.grid();
  ComplexField out(jet.value.grid_ptr(), Support::Domain, "cgo");
  for (std::size_t idx : g.interior_nodes()) {
    const cplx e = jet.exponent[idx];
    if (e.real() > kMaxExponent) throw RangeError("CGO exponent overflows; use the factored jet");
    out[idx] = std::exp(e) * jet.value[idx];
  }
  return out;
}

double background_certificate(const ConductivityModel& model, const SolutionJet& u) {
  const GridPtr& grid = u.grid_ptr();
  const Grid2D& g = *grid;
  double shift = -std::numeric_limits<double>::infinity();
  for (std::size_t idx : g.interior_nodes()) shift = std::max(shift, u.exponent[idx].real());
  std::vector<cplx> scaled(g.size());
  std::vector<double> gamma(g.size(), 0.0);
  for (std::size_t idx : g.interior_nodes()) {
    scaled[idx] = std::exp(u.exponent[idx] - shift) * u.value[idx];
    gamma[idx] = model.background(g.x1(idx), g.x2(idx)).real();
  }
  const double inv_h2 = 1.0 / (g.h() * g.h());
  double res = 0.0, mass = 0.0;
  const int di[4] = {1, -1, 0, 0}, dj[4] = {0, 0, 1, -1};
  for (std::size_t idx : g.interior_nodes()) {
    const int i = g.col(idx), j = g.row(idx);
    bool full = true;
    for (int d = 0; d < 4; ++d) full = full && g.inside(i + di[d], j + dj[d]);
    if (!full) continue;
    cplx r{};
    for (int d = 0; d < 4; ++d) {
      const std::size_t nb = g.index(i + di[d], j + dj[d]);
      r += 0.5 * (gamma[idx] + gamma[nb]) * (scaled[nb] - scaled[idx]);
    }
    res += std::norm(r * inv_h2);
    mass += std::norm(gamma[idx] * scaled[idx]);
  }
  if (!(mass > 0.0)) throw RangeError("certificate undefined for a vanishing solution");
  return std::sqrt(res / mass);
}

CGOBuilder::CGOBuilder(const ConductivityModel& model, GridPtr grid, CGOOptions options)
    : model_(model.linear_part()),
      grid_(std::move(grid)),
      options_(options),
      data_(schrodinger_potential(model_, grid_)),
      cauchy_(grid_),
      inv_sqrt_gamma_(grid_, Support::Domain, "gamma0^-1/2"),
      trivial_(data_.q.sup_norm() == 0.0) {
  const Grid2D& g = *grid_;
  for (std::size_t idx : g.interior_nodes())
    inv_sqrt_gamma_[idx] = 1.0 / std::sqrt(model_.background(g.x1(idx), g.x2(idx)).real());
}

CGOSolution CGOBuilder::build(double tau, Branch branch, double scale, cplx centre) const {
  if (!(tau > 0.0)) throw RefusalError("tau must be positive");
  if (!(scale > 0.0)) throw RefusalError("CGO scale must be positive");
  const Grid2D& g = *grid_;
  const bool minus = branch == Branch::Minus;
  const double sigma = scale * tau;

  ComplexField w(grid_, Support::Domain, "w");
  int terms = 0;
  double contraction = 0.0, tail_bound = 0.0;

  if (!trivial_) {
    const ComplexField one = ComplexField::constant(grid_, 1.0);
    auto norm = [](const ComplexField& f) { return f.l2_norm(); };
    const double unit = norm(one);
    ComplexField term = apply_S(cauchy_, one, data_, sigma, minus, centre);
    double first = norm(term);
    double previous = unit;
    double rho = 0.0;
    for (int n = 1;; ++n) {
      const double current = norm(term);
      rho = std::max(rho, current / previous);
      if (rho >= options_.contraction_limit) {
        std::ostringstream msg;
        msg << "Neumann series does not contract (term ratio " << rho << " at term " << n
            << "); increase tau";
        throw ConvergenceError(msg.str(), rho);
      }
      w += term;
      terms = n;
      if (current <= options_.tail_tolerance * std::max(first, 1e-300) || current == 0.0) break;
      if (n >= options_.max_terms) {
        std::ostringstream msg;
        msg << "Neumann series not converged after " << n << " terms; last term norm " << current;
        throw ConvergenceError(msg.str(), current);
      }
      previous = current;
      term = apply_S(cauchy_, term, data_, sigma, minus, centre);
    }
    contraction = rho;
    tail_bound = std::pow(rho, terms + 1) / (1.0 - rho);
  }

  // Jet: exponent and gamma0^{-1/2}(1 + w) with the phase gradient folded in.
  ComplexField exponent(grid_, Support::Domain, "phase");
  ComplexField e1(grid_, Support::Domain), e2(grid_, Support::Domain);
  const cplx I(0.0, 1.0);
  for (std::size_t idx : g.interior_nodes()) {
    const cplx z(g.x1(idx), g.x2(idx));
    if (minus) {
      const cplx zb = std::conj(z - centre);
      exponent[idx] = -sigma * zb * zb;
      e1[idx] = -2.0 * sigma * zb;
      e2[idx] = 2.0 * I * sigma * zb;
    } else {
      const cplx zc = z - centre;
      exponent[idx] = sigma * zc * zc;
      e1[idx] = 2.0 * sigma * zc;
      e2[idx] = 2.0 * I * sigma * zc;
    }
  }
  ComplexField value = inv_sqrt_gamma_ * (ComplexField::constant(grid_, 1.0) + w);
  ComplexField d1 = value * e1;
  ComplexField d2 = value * e2;
  if (!model_.has_constant_background()) {
    auto [v1, v2] = gradient(value);
    d1 += v1.restricted();
    d2 += v2.restricted();
  }
  value.set_tag("cgo amplitude");
  CGOSolution out{tau,
                  branch,
                  scale,
                  centre,
                  std::move(w),
                  SolutionJet{std::move(exponent), std::move(value), std::move(d1), std::move(d2)},
                  0.0,
                  0.0,
                  terms,
                  contraction,
                  tail_bound};

  if (!options_.certify) return out;
  const SolutionJet reference{out.jet.exponent, ComplexField::constant(grid_, 1.0), out.jet.d1, out.jet.d2};
  out.reference_certificate = background_certificate(ConductivityModel::constant(1.0), reference);
  const bool unit = model_.has_constant_background() && model_.background(0.0, 0.0) == cplx(1.0);
  out.certificate = unit ? out.reference_certificate : background_certificate(model_, out.jet);
  if (out.certificate > options_.residual_factor * out.reference_certificate) {
    std::ostringstream msg;
    msg << "CGO residual certificate " << out.certificate << " exceeds " << options_.residual_factor
        << " x the exp(phase) stencil error " << out.reference_certificate;
    throw ConvergenceError(msg.str(), out.certificate);
  }
  return out;
}

CGOSolution build_cgo(const ConductivityModel& model, const GridPtr& grid, double tau, Branch branch, double scale,
                      const CGOOptions& options) {
  return CGOBuilder(model, grid, options).build(tau, branch, scale);
}

}  // namespace calderon
