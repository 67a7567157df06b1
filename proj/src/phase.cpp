#include "calderon/phase.hpp"

#include <fftw3.h>

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

#include "calderon/errors.hpp"

namespace calderon {

namespace {

constexpr double kFlagResolution = 0.5;
constexpr double kMaxResolution = 2.0;
constexpr int kStencilAccuracy = 6;

void require_box(const ComplexField& g) {
  if (g.support() != Support::Box)
    throw RefusalError("oscillatory integrand must be a box field (use cutoff_extend)");
  g.require_finite();
}

// Fornberg weights for the k-th derivative at 0 from nodes -p..p (unit spacing).
std::vector<double> central_weights(int k, int p) {
  const int n = 2 * p + 1;
  std::vector<double> x(n);
  for (int i = 0; i < n; ++i) x[i] = i - p;
  std::vector<std::vector<double>> c(n, std::vector<double>(k + 1, 0.0));
  c[0][0] = 1.0;
  double c1 = 1.0;
  for (int i = 1; i < n; ++i) {
    double c2 = 1.0;
    for (int j = 0; j < i; ++j) {
      const double c3 = x[i] - x[j];
      c2 *= c3;
      for (int d = std::min(i, k); d >= 0; --d) {
        if (j == i - 1) {
          const double prev = d > 0 ? c[i - 1][d - 1] : 0.0;
          c[i][d] = c1 * (d * prev - x[i - 1] * c[i - 1][d]) / c2;
        }
        c[j][d] = (x[i] * c[j][d] - (d > 0 ? d * c[j][d - 1] : 0.0)) / c3;
      }
    }
    c1 = c2;
  }
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = c[i][k];
  return w;
}

// Central stencils of sixth order: 2 ceil(k/2) + 5 points.
int stencil_half_width(int k) { return k == 0 ? 0 : (k + 1) / 2 + kStencilAccuracy / 2 - 1; }

double factorial(int k) { return std::tgamma(k + 1.0); }

// L1 norms of d1^a d2^b g by spectral differentiation of the periodised box field.
class SpectralDerivatives {
 public:
  explicit SpectralDerivatives(const ComplexField& g) : grid_(g.grid_ptr()), n_(g.grid().n()) {
    spectrum_.resize(static_cast<std::size_t>(n_) * n_);
    buffer_ = fftw_alloc_complex(spectrum_.size());
    if (!buffer_) throw Error("FFTW buffer allocation failed");
    forward_ = fftw_plan_dft_2d(n_, n_, buffer_, buffer_, FFTW_FORWARD, FFTW_ESTIMATE);
    backward_ = fftw_plan_dft_2d(n_, n_, buffer_, buffer_, FFTW_BACKWARD, FFTW_ESTIMATE);
    for (std::size_t k = 0; k < spectrum_.size(); ++k) data()[k] = g[k];
    fftw_execute(forward_);
    std::copy(data(), data() + spectrum_.size(), spectrum_.begin());
  }
  ~SpectralDerivatives() {
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
    fftw_free(buffer_);
  }
  SpectralDerivatives(const SpectralDerivatives&) = delete;
  SpectralDerivatives& operator=(const SpectralDerivatives&) = delete;

  double l1_norm(int a, int b) {
    const double h = grid_->h();
    const double period = n_ * h;
    auto waves = [&](int power) {
      std::vector<cplx> w(n_);
      for (int m = 0; m < n_; ++m) {
        const int s = m <= n_ / 2 ? m : m - n_;
        const bool nyquist = n_ % 2 == 0 && m == n_ / 2;
        w[m] = nyquist && power % 2 == 1 ? cplx{} : std::pow(cplx(0.0, 2.0 * std::numbers::pi * s / period), power);
      }
      return w;
    };
    const auto wx = waves(a), wy = waves(b);
    for (int j = 0; j < n_; ++j)
      for (int i = 0; i < n_; ++i) {
        const std::size_t k = static_cast<std::size_t>(j) * n_ + i;
        data()[k] = spectrum_[k] * wx[i] * wy[j];
      }
    fftw_execute(backward_);
    double s = 0.0;
    for (std::size_t k = 0; k < spectrum_.size(); ++k) s += std::abs(data()[k]);
    return s * h * h / static_cast<double>(spectrum_.size());
  }

 private:
  cplx* data() { return reinterpret_cast<cplx*>(buffer_); }
  GridPtr grid_;
  int n_;
  std::vector<cplx> spectrum_;
  fftw_complex* buffer_;
  fftw_plan forward_;
  fftw_plan backward_;
};

cplx box_sum(const ComplexField& g, double c, double tau, cplx centre, int stride) {
  const Grid2D& grid = g.grid();
  const double h = grid.h() * stride;
  // Keep the subgrid aligned with the node nearest the centre.
  const std::size_t o = grid.nearest(centre.real(), centre.imag());
  const int oi = grid.col(o) % stride, oj = grid.row(o) % stride;
  cplx s{};
  for (int j = oj; j < grid.n(); j += stride)
    for (int i = oi; i < grid.n(); i += stride) {
      const std::size_t idx = grid.index(i, j);
      if (g[idx] == cplx{}) continue;
      const double phase = c * tau * (grid.x1(idx) - centre.real()) * (grid.x2(idx) - centre.imag());
      s += g[idx] * std::polar(1.0, phase);
    }
  return s * h * h * std::abs(c) * tau / (2.0 * std::numbers::pi);
}

}  // namespace

OscillatoryQuadrature oscillatory_quadrature(const ComplexField& g, double c, double tau, cplx centre) {
  require_box(g);
  if (!(tau > 0.0) || c == 0.0) throw RefusalError("phase coefficient and tau must be nonzero, tau positive");
  const double h = g.grid().h();
  OscillatoryQuadrature out;
  out.resolution = std::abs(c) * tau * h * h;
  if (out.resolution > kMaxResolution) {
    std::ostringstream msg;
    msg << "oscillation unresolved: |c| tau h^2 = " << out.resolution << " > " << kMaxResolution;
    throw RangeError(msg.str());
  }
  out.under_resolved = out.resolution > kFlagResolution;
  out.value = box_sum(g, c, tau, centre, 1);
  out.coarse = box_sum(g, c, tau, centre, 2);
  return out;
}

cplx mixed_derivative(const ComplexField& g, int a, int b, cplx centre) {
  require_box(g);
  if (a < 0 || b < 0) throw RefusalError("derivative orders must be nonnegative");
  const Grid2D& grid = g.grid();
  const std::size_t o = grid.nearest(centre.real(), centre.imag());
  const int i0 = grid.col(o), j0 = grid.row(o);
  const int pa = stencil_half_width(a), pb = stencil_half_width(b);
  // Stencil spacing balances truncation (H^6) against roundoff (eps / H^(a+b)).
  const double spacing = std::pow(std::numeric_limits<double>::epsilon(), 1.0 / (a + b + kStencilAccuracy));
  const int stride = std::max(1, static_cast<int>(std::lround(spacing / grid.h())));
  const int da = pa * stride, db = pb * stride;
  if (!grid.in_box(i0 - da, j0 - db) || !grid.in_box(i0 + da, j0 + db)) {
    std::ostringstream msg;
    msg << "derivative stencil of depth " << std::max(da, db) << " nodes leaves the grid";
    throw RefusalError(msg.str());
  }
  const auto wa = central_weights(a, pa), wb = central_weights(b, pb);
  const double step = grid.h() * stride;
  cplx s{};
  for (int q = -pb; q <= pb; ++q) {
    if (wb[q + pb] == 0.0) continue;
    cplx row{};
    for (int p = -pa; p <= pa; ++p) row += wa[p + pa] * g.at(i0 + p * stride, j0 + q * stride);
    s += wb[q + pb] * row;
  }
  return s / (std::pow(step, a) * std::pow(step, b));
}

cplx PhaseExpansion::partial(int n) const {
  if (n < 0 || n > static_cast<int>(terms.size())) throw RefusalError("partial sum index out of range");
  cplx s{};
  for (int k = 0; k < n; ++k) s += terms[k];
  return s;
}

StationaryPhase::StationaryPhase(const ComplexField& g, int max_order, cplx centre) {
  require_box(g);
  if (max_order < 1) throw RefusalError("expansion order must be at least 1");
  for (int k = 0; k < max_order; ++k) derivatives_.push_back(mixed_derivative(g, k, k, centre));
  // Derivatives about the shifted origin have the same norms, so no recentring is needed.
  SpectralDerivatives spectral(g);
  for (int n = 1; n <= max_order; ++n) {
    double sum = 0.0;
    for (int a = 0; a <= 3; ++a)
      for (int b = 0; a + b <= 3; ++b) sum += spectral.l1_norm(a + n, b + n);
    remainder_norms_.push_back(sum);
  }
}

PhaseExpansion StationaryPhase::expand(double c, double tau, int order) const {
  if (order < 1 || order > max_order()) throw RefusalError("expansion order outside the prepared range");
  if (!(tau > 0.0) || c == 0.0) throw RefusalError("phase coefficient and tau must be nonzero, tau positive");
  PhaseExpansion out;
  out.c = c;
  out.tau = tau;
  out.order = order;
  const cplx step = cplx(0.0, 1.0) / (c * tau);
  for (int k = 0; k < order; ++k) out.terms.push_back(std::pow(step, k) * derivatives_[k] / factorial(k));
  // Remainder estimate with constant 1.
  out.remainder_bound = remainder_norms_[order - 1] / (factorial(order) * std::pow(std::abs(c) * tau, order));
  return out;
}

PhaseExpansion stationary_phase_expand(const ComplexField& g, double c, double tau, int order, cplx centre) {
  if (order < 1) throw RefusalError("expansion order must be at least 1");
  return StationaryPhase(g, order, centre).expand(c, tau, order);
}

PointwiseFit extract_pointwise(std::span<const double> taus, std::span<const cplx> values, double p,
                               const FitOptions& options) {
  const int nc = options.corrections;
  if (taus.size() != values.size()) throw RefusalError("tau schedule and values differ in length");
  if (taus.size() < 4) throw RefusalError("pointwise extraction needs at least 4 values of tau");
  if (static_cast<int>(taus.size()) < nc + 2) throw RefusalError("too few tau values for the correction terms");
  const Eigen::Index rows = static_cast<Eigen::Index>(taus.size());
  Eigen::MatrixXd a(rows, nc + 1);
  Eigen::VectorXcd y(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double t = taus[r];
    if (!(t > 0.0)) throw RefusalError("tau values must be positive");
    for (int j = 0; j <= nc; ++j) a(r, j) = std::pow(t, -j);
    y[r] = values[r] * std::pow(t, p);
  }
  const Eigen::MatrixXcd ac = a.cast<cplx>();
  const Eigen::VectorXcd x = ac.colPivHouseholderQr().solve(y);
  PointwiseFit out;
  out.limit = x[0];
  for (int j = 1; j <= nc; ++j) out.corrections.push_back(x[j]);
  const double scale = std::max(y.norm(), options.scale_floor * std::sqrt(static_cast<double>(rows)));
  out.relative_residual = scale > 0.0 ? (ac * x - y).norm() / scale : 0.0;
  if (out.relative_residual > options.tolerance) {
    std::ostringstream msg;
    msg << "pointwise fit residual " << out.relative_residual << " above " << options.tolerance
        << " (wrong exponent p = " << p << " or unresolved oscillation)";
    throw ConvergenceError(msg.str(), out.relative_residual);
  }
  return out;
}

PointwiseFit extract_pointwise(const std::function<cplx(double)>& oracle, std::span<const double> taus, double p,
                               const FitOptions& options) {
  std::vector<cplx> values;
  for (double t : taus) values.push_back(oracle(t));
  return extract_pointwise(taus, values, p, options);
}

double log_log_slope(std::span<const double> taus, std::span<const double> values) {
  if (taus.size() != values.size() || taus.size() < 2) throw RefusalError("slope fit needs matching samples");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(taus.size());
  for (std::size_t k = 0; k < taus.size(); ++k) {
    if (!(taus[k] > 0.0) || !(values[k] > 0.0)) throw RefusalError("slope fit needs positive samples");
    const double a = std::log(taus[k]), b = std::log(values[k]);
    sx += a;
    sy += b;
    sxx += a * a;
    sxy += a * b;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

const CalibrationEntry& CalibrationTable::at(int m, int k) const {
  const auto it = entries_.find({m, k});
  if (it == entries_.end()) {
    std::ostringstream msg;
    msg << "no calibration entry for m = " << m << ", set " << k;
    throw RefusalError(msg.str());
  }
  return it->second;
}

CalibrationTable CalibrationTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw RefusalError("cannot open calibration file " + path.string());
  CalibrationTable table;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string token;
    std::map<std::string, std::string> kv;
    while (fields >> token) {
      const auto eq = token.find('=');
      if (eq == std::string::npos) throw RefusalError("calibration line " + std::to_string(lineno) + ": expected key=value");
      kv[token.substr(0, eq)] = token.substr(eq + 1);
    }
    if (kv.empty()) continue;
    for (const char* key : {"m", "k", "exponent", "re", "im"})
      if (!kv.count(key))
        throw RefusalError("calibration line " + std::to_string(lineno) + ": missing key '" + key + "'");
    try {
      table.set(std::stoi(kv["m"]), std::stoi(kv["k"]),
                {std::stod(kv["exponent"]), cplx(std::stod(kv["re"]), std::stod(kv["im"]))});
    } catch (const std::logic_error&) {
      throw RefusalError("calibration line " + std::to_string(lineno) + ": malformed number");
    }
  }
  return table;
}

void CalibrationTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw RefusalError("cannot write calibration file " + path.string());
  out << "# leading-term calibration: value * tau^exponent -> multiple * datum\n";
  out << std::setprecision(15);
  for (const auto& [key, e] : entries_)
    out << "m=" << key.first << " k=" << key.second << " exponent=" << e.exponent << " re=" << e.multiple.real()
        << " im=" << e.multiple.imag() << '\n';
}

}  // namespace calderon
