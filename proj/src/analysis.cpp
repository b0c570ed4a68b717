#include "analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "codec.hpp"
#include "error.hpp"
#include "rng.hpp"
#include "rotation.hpp"

namespace qamw {

namespace {

constexpr std::size_t kDenseEigenDim = 64;

// Cyclic Jacobi sweeps; returns all eigenvalues of a symmetric matrix.
std::vector<double> jacobi_eigenvalues(std::vector<double> a, std::size_t n) {
  auto off = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += a[i * n + j] * a[i * n + j];
    return s;
  };
  double scale = 0.0;
  for (double v : a) scale = std::max(scale, std::abs(v));
  if (scale == 0.0) return std::vector<double>(n, 0.0);
  const double tol = 1e-28 * scale * scale * static_cast<double>(n * n);
  for (int sweep = 0; sweep < 100 && off() > tol; ++sweep) {
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double apq = a[p * n + q];
        if (apq == 0.0) continue;
        double app = a[p * n + p];
        double aqq = a[q * n + q];
        double tau = (aqq - app) / (2.0 * apq);
        double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        double c = 1.0 / std::sqrt(1.0 + t * t);
        double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          double akp = a[k * n + p];
          double akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          double apk = a[p * n + k];
          double aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a[i * n + i];
  return ev;
}

double power_iteration_lambda_max(const std::vector<double>& m, std::size_t n) {
  SplitMix64 rng(0x9e3779b97f4a7c15ull);
  std::vector<double> v(n), mv(n);
  for (auto& x : v) x = rng.gaussian();
  double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  for (auto& x : v) x /= norm;
  double lambda = 0.0;
  for (int it = 0; it < 20000; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      const double* row = m.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) s += row[j] * v[j];
      mv[i] = s;
    }
    double next = std::inner_product(v.begin(), v.end(), mv.begin(), 0.0);
    double mv_norm = std::sqrt(std::inner_product(mv.begin(), mv.end(), mv.begin(), 0.0));
    if (mv_norm == 0.0) return 0.0;
    for (std::size_t i = 0; i < n; ++i) v[i] = mv[i] / mv_norm;
    if (it > 0 && std::abs(next - lambda) <= 1e-8 * std::max(1.0, std::abs(next))) return next;
    lambda = next;
  }
  return lambda;
}

double symmetric_lambda_min(const std::vector<double>& m, std::size_t n) {
  if (n < kDenseEigenDim) {
    auto ev = jacobi_eigenvalues(m, n);
    return *std::min_element(ev.begin(), ev.end());
  }
  // lambda_min(M) = c - lambda_max(cI - M) for any c >= lambda_max(M);
  // a Gershgorin row bound supplies c.
  double c = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) row_sum += std::abs(m[i * n + j]);
    c = std::max(c, row_sum);
  }
  std::vector<double> shifted(m.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      shifted[i * n + j] = (i == j ? c : 0.0) - m[i * n + j];
  return c - power_iteration_lambda_max(shifted, n);
}

double frob_norm_sq(const WeightMatrix& w) {
  return std::inner_product(w.values.begin(), w.values.end(), w.values.begin(), 0.0);
}

// Tr(A M A^T) for dW-style rows of A against a moment operator.
double weighted_trace(const WeightMatrix& a, const ActivationMoments& m) {
  double total = 0.0;
  if (m.mode == ActivationMoments::Mode::diagonal) {
    for (std::size_t i = 0; i < a.d_out; ++i)
      for (std::size_t j = 0; j < a.d_in; ++j) total += m.diag[j] * a.at(i, j) * a.at(i, j);
    return total;
  }
  std::vector<double> mv(a.d_in);
  for (std::size_t i = 0; i < a.d_out; ++i) {
    const double* row = a.values.data() + i * a.d_in;
    for (std::size_t j = 0; j < a.d_in; ++j) {
      double s = 0.0;
      const double* mrow = m.full.data() + j * a.d_in;
      for (std::size_t k = 0; k < a.d_in; ++k) s += mrow[k] * row[k];
      mv[j] = s;
    }
    total += std::inner_product(row, row + a.d_in, mv.begin(), 0.0);
  }
  return total;
}

QqTable fit_qq(std::vector<double> samples, bool rayleigh) {
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  double second = 0.0, first = 0.0;
  for (double v : samples) {
    first += std::abs(v);
    second += v * v;
  }
  QqTable t;
  if (rayleigh) {
    t.scale = (first / static_cast<double>(n)) / std::sqrt(std::acos(-1.0) / 2.0);
  } else {
    t.scale = std::sqrt(second / static_cast<double>(n));
  }
  if (!(t.scale > 0.0) || !std::isfinite(t.scale))
    throw Error(Errc::domain, "degenerate distribution fit");
  t.levels.resize(n);
  t.empirical = std::move(samples);
  t.theoretical.resize(n);
  t.body_deviation = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double q = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    t.levels[i] = q;
    t.theoretical[i] =
        rayleigh ? t.scale * std::sqrt(-2.0 * std::log1p(-q)) : t.scale * normal_quantile(q);
    if (q >= 0.01 && q <= 0.99)
      t.body_deviation = std::max(t.body_deviation, std::abs(t.empirical[i] - t.theoretical[i]));
  }
  return t;
}

}  // namespace

double symmetric_lambda_max(const std::vector<double>& m, std::size_t dim) {
  if (m.size() != dim * dim) throw Error(Errc::dimension, "matrix size does not match dimension");
  if (dim < kDenseEigenDim) {
    auto ev = jacobi_eigenvalues(m, dim);
    return *std::max_element(ev.begin(), ev.end());
  }
  return power_iteration_lambda_max(m, dim);
}

double ActivationMoments::lambda_max() const {
  if (mode == Mode::diagonal) {
    double best = 0.0;
    for (double v : diag) best = std::max(best, v);
    return best;
  }
  return symmetric_lambda_max(full, dim);
}

void ActivationMoments::validate() const {
  if (mode == Mode::diagonal) {
    if (diag.size() != dim) throw Error(Errc::dimension, "diagonal length does not match dim");
    for (double v : diag) {
      if (!std::isfinite(v) || v < 0.0)
        throw Error(Errc::domain, "diagonal moment entries must be finite and nonnegative");
    }
    return;
  }
  if (full.size() != dim * dim) throw Error(Errc::dimension, "moment matrix size mismatch");
  double scale = 1.0;
  for (double v : full) {
    if (!std::isfinite(v)) throw Error(Errc::domain, "non-finite moment entry");
    scale = std::max(scale, std::abs(v));
  }
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = i + 1; j < dim; ++j) {
      if (std::abs(full[i * dim + j] - full[j * dim + i]) > 1e-10 * scale)
        throw Error(Errc::domain, "moment matrix is not symmetric");
    }
  }
  double lmin = symmetric_lambda_min(full, dim);
  if (lmin < -1e-10 * std::max(1.0, scale))
    throw Error(Errc::domain, "moment matrix is not positive semidefinite");
}

ActivationMoments diagonal_moments(std::vector<double> r_squared, std::size_t n_samples) {
  ActivationMoments m;
  m.mode = ActivationMoments::Mode::diagonal;
  m.dim = r_squared.size();
  m.n = n_samples;
  m.diag = std::move(r_squared);
  m.validate();
  return m;
}

ActivationMoments full_moments(std::vector<double> mat, std::size_t dim, std::size_t n_samples) {
  ActivationMoments m;
  m.mode = ActivationMoments::Mode::full;
  m.dim = dim;
  m.n = n_samples;
  m.full = std::move(mat);
  m.validate();
  return m;
}

PairwiseDecomposition pairwise_decomposition(std::complex<double> z, std::complex<double> z_hat) {
  if (!std::isfinite(z.real()) || !std::isfinite(z.imag()) || !std::isfinite(z_hat.real()) ||
      !std::isfinite(z_hat.imag()))
    throw Error(Errc::domain, "non-finite pair");
  PairwiseDecomposition d;
  d.total = std::norm(z - z_hat);
  double a = std::abs(z);
  double a_hat = std::abs(z_hat);
  d.amplitude_term = (a - a_hat) * (a - a_hat);
  double delta = std::arg(z) - std::arg(z_hat);
  d.phase_term = 2.0 * a * a_hat * (1.0 - std::cos(delta));
  double residual = std::abs(d.total - d.amplitude_term - d.phase_term);
  if (residual > 1e-12 * std::max(1.0, d.total))
    throw Error(Errc::domain, "pairwise decomposition identity violated");
  return d;
}

LayerOutputError layer_output_error(const WeightMatrix& x, const WeightMatrix& w,
                                    const WeightMatrix& w_hat) {
  if (w.d_out != w_hat.d_out || w.d_in != w_hat.d_in || x.d_in != w.d_in)
    throw Error(Errc::dimension, "layer output error shape mismatch");
  const std::size_t n = x.d_out;
  LayerOutputError r;
  double base = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t i = 0; i < w.d_out; ++i) {
      double y = 0.0, y_hat = 0.0;
      for (std::size_t j = 0; j < w.d_in; ++j) {
        y += x.at(t, j) * w.at(i, j);
        y_hat += x.at(t, j) * w_hat.at(i, j);
      }
      double e = y - y_hat;
      r.frob_direct += e * e;
      base += y * y;
    }
  }
  // Tr(dW X^T X dW^T) via G = X^T X once.
  std::vector<double> gram(w.d_in * w.d_in, 0.0);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t j = 0; j < w.d_in; ++j)
      for (std::size_t k = 0; k < w.d_in; ++k) gram[j * w.d_in + k] += x.at(t, j) * x.at(t, k);
  for (std::size_t i = 0; i < w.d_out; ++i) {
    for (std::size_t j = 0; j < w.d_in; ++j) {
      double dj = w.at(i, j) - w_hat.at(i, j);
      if (dj == 0.0) continue;
      for (std::size_t k = 0; k < w.d_in; ++k)
        r.trace_form += dj * gram[j * w.d_in + k] * (w.at(i, k) - w_hat.at(i, k));
    }
  }
  if (std::abs(r.frob_direct - r.trace_form) > 1e-8 * std::max(1.0, r.frob_direct))
    throw Error(Errc::domain, "trace identity violated");
  r.relative_rmse = base > 0.0 ? std::sqrt(r.frob_direct / base) : 0.0;
  return r;
}

double amplification_ratio(const WeightMatrix& w, const WeightMatrix& w_hat,
                           const ActivationMoments& m) {
  if (w.d_out != w_hat.d_out || w.d_in != w_hat.d_in || m.dim != w.d_in)
    throw Error(Errc::dimension, "amplification ratio shape mismatch");
  WeightMatrix dw = w;
  for (std::size_t i = 0; i < dw.values.size(); ++i) dw.values[i] -= w_hat.values[i];
  double dw_sq = frob_norm_sq(dw);
  double w_sq = frob_norm_sq(w);
  if (dw_sq == 0.0) throw Error(Errc::domain, "amplification ratio undefined for zero residual");
  if (w_sq == 0.0) throw Error(Errc::domain, "zero weight matrix");
  double num = weighted_trace(dw, m);
  double den = weighted_trace(w, m);
  if (den <= 0.0) throw Error(Errc::domain, "degenerate output energy");
  double rho_w = std::sqrt(dw_sq / w_sq);
  double rho_o = std::sqrt(num / den);
  return rho_o / rho_w;
}

KlBridgeResult kl_bridge(const std::vector<double>& p, const std::vector<double>& delta) {
  if (p.size() != delta.size() || p.size() < 2)
    throw Error(Errc::dimension, "probability and perturbation sizes mismatch");
  double sum = 0.0;
  for (double v : p) {
    if (!std::isfinite(v) || v <= 0.0)
      throw Error(Errc::domain, "probabilities must be strictly positive");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error(Errc::domain, "probabilities must sum to one");
  for (double v : delta) {
    if (!std::isfinite(v)) throw Error(Errc::domain, "non-finite perturbation");
  }

  const std::size_t n = p.size();
  std::vector<double> g(n);
  double g_max = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    g[i] = std::log(p[i]) + delta[i];
    g_max = std::max(g_max, g[i]);
  }
  double lse = 0.0;
  for (double v : g) lse += std::exp(v - g_max);
  lse = g_max + std::log(lse);

  KlBridgeResult r;
  double mean_delta = 0.0, mean_delta_sq = 0.0, norm_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double log_q = g[i] - lse;
    r.exact_kl += p[i] * (std::log(p[i]) - log_q);
    mean_delta += p[i] * delta[i];
    mean_delta_sq += p[i] * delta[i] * delta[i];
    norm_sq += delta[i] * delta[i];
  }
  r.exact_kl = std::max(r.exact_kl, 0.0);
  r.quadratic_term = 0.5 * (mean_delta_sq - mean_delta * mean_delta);
  r.cubic_bound = std::pow(norm_sq, 1.5) / 3.0;
  r.residual = std::abs(r.exact_kl - r.quadratic_term);
  return r;
}

double composite_bound(const CompositeBoundInputs& inputs) {
  if (!(inputs.d_b >= 0.0) || !(inputs.c_w >= 0.0) || !(inputs.lipschitz >= 0.0) ||
      !std::isfinite(inputs.d_b) || !std::isfinite(inputs.c_w) || !std::isfinite(inputs.lipschitz))
    throw Error(Errc::domain, "composite bound inputs must be finite and nonnegative");
  return inputs.lipschitz * inputs.lipschitz * static_cast<double>(inputs.quantized_layers) / 8.0 *
         inputs.c_w * inputs.d_b;
}

double compute_C_W(const std::vector<Layer>& layers) {
  double total = 0.0;
  for (const Layer& l : layers) {
    if (l.w == nullptr || l.moments == nullptr)
      throw Error(Errc::domain, "null layer entry");
    if (l.moments->dim != l.w->d_in) throw Error(Errc::dimension, "layer moment dim mismatch");
    l.moments->validate();
    total += l.moments->lambda_max() * frob_norm_sq(*l.w);
  }
  return total;
}

DistortionReport distortion_report(const WeightMatrix& w, const WeightMatrix& w_hat,
                                   const ActivationMoments& m, const EncodeTrace* trace,
                                   double predicted_distortion) {
  if (w.d_out != w_hat.d_out || w.d_in != w_hat.d_in || m.dim != w.d_in)
    throw Error(Errc::dimension, "distortion report shape mismatch");
  WeightMatrix dw = w;
  for (std::size_t i = 0; i < dw.values.size(); ++i) dw.values[i] -= w_hat.values[i];
  double w_sq = frob_norm_sq(w);
  double dw_sq = frob_norm_sq(dw);
  if (w_sq == 0.0) throw Error(Errc::domain, "zero weight matrix");

  DistortionReport r;
  r.predicted_distortion = predicted_distortion;
  r.rho_w = std::sqrt(dw_sq / w_sq);
  double den = weighted_trace(w, m);
  if (den > 0.0) r.rho_o = std::sqrt(weighted_trace(dw, m) / den);
  r.amplification = r.rho_w > 0.0 ? r.rho_o / r.rho_w : 0.0;

  r.accounting_identity.tolerance = 1e-9;
  if (trace != nullptr && !trace->pair_error_sums.empty()) {
    double sum = 0.0, worst = 0.0, max_pe = 0.0;
    for (std::size_t i = 0; i < trace->pair_error_sums.size(); ++i) {
      sum += trace->pair_error_sums[i];
      max_pe = std::max(max_pe, trace->pair_error_sums[i]);
      if (i < trace->direction_errors.size()) {
        double diff = std::abs(trace->pair_error_sums[i] - trace->direction_errors[i]);
        worst = std::max(worst, diff / std::max(1.0, trace->direction_errors[i]));
      }
    }
    r.pair_error_mean = sum / static_cast<double>(trace->pair_error_sums.size());
    r.pair_error_max = max_pe;
    r.accounting_identity.residual = worst;
    r.accounting_identity.pass = worst <= r.accounting_identity.tolerance;
  }
  r.pairwise_identity.tolerance = 1e-12;
  r.trace_identity.tolerance = 1e-8;
  return r;
}

QqResult qq_diagnostic(const WeightMatrix& w, const RotationPlan& plan,
                       std::size_t sample_pairs) {
  if (w.d_in != plan.d_in) throw Error(Errc::dimension, "rotation plan does not match matrix");
  const std::size_t pairs_per_row = w.d_in / 2;
  if (sample_pairs == 0 || sample_pairs > w.d_out * pairs_per_row)
    throw Error(Errc::domain, "not enough pairs available for the requested sample size");

  std::vector<double> amp, re;
  amp.reserve(sample_pairs);
  re.reserve(sample_pairs);
  std::vector<double> u(w.d_in);
  for (std::size_t i = 0; i < w.d_out && amp.size() < sample_pairs; ++i) {
    const double* row = w.values.data() + i * w.d_in;
    double norm_sq = std::inner_product(row, row + w.d_in, row, 0.0);
    if (norm_sq == 0.0) continue;
    double inv = 1.0 / std::sqrt(norm_sq);
    for (std::size_t j = 0; j < w.d_in; ++j) u[j] = row[j] * inv;
    std::vector<double> y = forward_rotate(plan, u);
    for (std::size_t k = 0; k < pairs_per_row && amp.size() < sample_pairs; ++k) {
      double zr = y[2 * k];
      double zi = y[2 * k + 1];
      amp.push_back(std::hypot(zr, zi));
      re.push_back(zr);
    }
  }
  if (amp.size() < sample_pairs)
    throw Error(Errc::domain, "not enough pairs available for the requested sample size");

  QqResult r;
  r.sample_pairs = sample_pairs;
  r.amplitude = fit_qq(std::move(amp), true);
  r.real_part = fit_qq(std::move(re), false);
  return r;
}

double rate_slope(const std::vector<LadderPoint>& ladder) {
  if (ladder.size() < 3) throw Error(Errc::domain, "rate slope needs at least three points");
  double mean_b = 0.0, mean_y = 0.0;
  for (const auto& p : ladder) {
    if (!(p.distortion > 0.0)) throw Error(Errc::domain, "distortion must be positive");
    mean_b += p.bits;
    mean_y += std::log(p.distortion);
  }
  mean_b /= static_cast<double>(ladder.size());
  mean_y /= static_cast<double>(ladder.size());
  double cov = 0.0, var = 0.0;
  for (const auto& p : ladder) {
    double db = p.bits - mean_b;
    cov += db * (std::log(p.distortion) - mean_y);
    var += db * db;
  }
  if (var == 0.0) throw Error(Errc::domain, "degenerate bit ladder");
  return cov / var;
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error(Errc::domain, "quantile level must be in (0, 1)");
  // Acklam's rational approximation with one Halley refinement step.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    double q = p - 0.5;
    double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  double u = e * std::sqrt(2.0 * std::acos(-1.0)) * std::exp(x * x / 2.0);
  return x - u / (1.0 + x * u / 2.0);
}

}  // namespace qamw
