#include "codebooks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "error.hpp"
#include "rng.hpp"

namespace qamw {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;
constexpr int kQuadPanelsTotal = 1 << 14;  // composite Simpson budget over [0, r_max]

double rayleigh_pdf(double r) { return r * std::exp(-0.5 * r * r); }

// Simpson moments of the Rayleigh density over [a, b]:
// m[k] = integral of r^k * f(r) dr for k = 0, 1, 2.
struct CellMoments {
  double m0 = 0.0, m1 = 0.0, m2 = 0.0;
};

CellMoments rayleigh_moments(double a, double b, int panels) {
  CellMoments m;
  if (b <= a) return m;
  if (panels % 2 != 0) ++panels;
  const double h = (b - a) / panels;
  double s0 = 0.0, s1 = 0.0, s2 = 0.0;
  for (int i = 0; i <= panels; ++i) {
    double r = a + h * i;
    double w = (i == 0 || i == panels) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    double f = w * rayleigh_pdf(r);
    s0 += f;
    s1 += f * r;
    s2 += f * r * r;
  }
  m.m0 = s0 * h / 3.0;
  m.m1 = s1 * h / 3.0;
  m.m2 = s2 * h / 3.0;
  return m;
}

double rayleigh_quantile(double p) { return std::sqrt(-2.0 * std::log1p(-p)); }

}  // namespace

std::size_t AmplitudeCodebook::quantize(double r) const {
  auto it = std::upper_bound(boundaries.begin(), boundaries.end(), r);
  return static_cast<std::size_t>(it - boundaries.begin());
}

void refresh_amplitude_stats(AmplitudeCodebook& cb) {
  const std::size_t n = cb.levels.size();
  cb.boundaries.resize(n > 0 ? n - 1 : 0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    cb.boundaries[i] = 0.5 * (cb.levels[i] + cb.levels[i + 1]);
  }
  // Project each level onto the exact centroid of its cell before
  // computing the statistics. With centroid levels, C_LM + M_a equals
  // the second moment of the truncated density, so the identity
  // M_a = 2 - C_LM holds to quadrature precision regardless of how
  // tightly the Lloyd loop converged.
  // a higher per-cell floor than the training loop: the reported statistics
  // must resolve the truncated second moment to well below 1e-6 even when
  // 2^11 cells split the budget
  int panels = std::max<int>(256, kQuadPanelsTotal / static_cast<int>(n));
  double c = 0.0, ma = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double lo = i == 0 ? 0.0 : cb.boundaries[i - 1];
    double hi = i + 1 == n ? cb.r_max : cb.boundaries[i];
    CellMoments m = rayleigh_moments(lo, hi, panels);
    if (m.m0 > 1e-300) cb.levels[i] = m.m1 / m.m0;
    double l = cb.levels[i];
    c += m.m2 - 2.0 * l * m.m1 + l * l * m.m0;
    ma += l * m.m1;
  }
  cb.c_lm = c;
  cb.m_a = ma;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    cb.boundaries[i] = 0.5 * (cb.levels[i] + cb.levels[i + 1]);
  }
}

AmplitudeCodebook train_rayleigh_lloyd(int bits, double r_max, double tol, int max_iter) {
  if (bits < 0 || bits > 11) {
    throw Error(Errc::domain, "amplitude bits out of range [0, 11]");
  }
  if (tol <= 0.0 || r_max <= 0.0 || max_iter < 1) {
    throw Error(Errc::domain, "invalid Lloyd training parameters");
  }
  const std::size_t n = std::size_t{1} << bits;
  AmplitudeCodebook cb;
  cb.bits = bits;
  cb.r_max = r_max;
  cb.levels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double q = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    cb.levels[i] = std::min(rayleigh_quantile(q), r_max * (1.0 - 1e-9));
  }

  const int panels = std::max<int>(8, kQuadPanelsTotal / static_cast<int>(n));
  double prev = std::numeric_limits<double>::infinity();
  cb.meta.converged = false;
  for (int iter = 0; iter < max_iter; ++iter) {
    cb.boundaries.resize(n - 1 > 0 ? n - 1 : 0);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      cb.boundaries[i] = 0.5 * (cb.levels[i] + cb.levels[i + 1]);
    }
    double dist = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double lo = i == 0 ? 0.0 : cb.boundaries[i - 1];
      double hi = i + 1 == n ? r_max : cb.boundaries[i];
      CellMoments m = rayleigh_moments(lo, hi, panels);
      double l = cb.levels[i];
      dist += m.m2 - 2.0 * l * m.m1 + l * l * m.m0;
      if (m.m0 > 1e-300) cb.levels[i] = m.m1 / m.m0;
    }
    cb.meta.iterations = iter + 1;
    double rel = std::isfinite(prev) ? (prev - dist) / std::max(dist, 1e-300) : 1.0;
    cb.meta.final_rel_improvement = rel;
    if (std::isfinite(prev) && std::abs(rel) < tol) {
      cb.meta.converged = true;
      break;
    }
    prev = dist;
  }
  refresh_amplitude_stats(cb);
  return cb;
}

double phase_eta(long n_p) {
  if (n_p < 1) throw Error(Errc::domain, "phase level count must be >= 1");
  if (n_p == 1) return 1.0;  // sin(pi)/pi = 0
  double h = kPi / static_cast<double>(n_p);
  return 1.0 - std::sin(h) / h;
}

long PhaseQuantizer::quantize(double theta) const {
  double two_h = 2.0 * kPi / static_cast<double>(bins);
  double t = std::fmod(theta, 2.0 * kPi);
  if (t < 0.0) t += 2.0 * kPi;
  long k = static_cast<long>(std::floor(t / two_h));
  if (k >= bins) k = bins - 1;
  if (k < 0) k = 0;
  return k;
}

double PhaseQuantizer::center(long idx) const {
  double h = kPi / static_cast<double>(bins);
  return (2.0 * static_cast<double>(idx) + 1.0) * h;
}

PhaseQuantizer make_phase_quantizer(int bits) {
  if (bits < 0 || bits > 16) throw Error(Errc::domain, "phase bits out of range [0, 16]");
  PhaseQuantizer q;
  q.bits = bits;
  q.bins = 1l << bits;
  q.eta = phase_eta(q.bins);
  return q;
}

double polar_pair_distortion(const AmplitudeCodebook& amp, const PhaseQuantizer& phase,
                             double sigma) {
  if (!(sigma > 0.0)) throw Error(Errc::domain, "sigma must be positive");
  return sigma * sigma * (amp.c_lm + 2.0 * (2.0 - amp.c_lm) * phase.eta);
}

// ---------------------------------------------------------------------------
// Planar codebook
// ---------------------------------------------------------------------------

PlanarGrid::PlanarGrid(const std::vector<std::array<float, 2>>& centroids) {
  const std::size_t k = centroids.size();
  pts_.resize(k);
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (std::size_t i = 0; i < k; ++i) {
    pts_[i] = {static_cast<double>(centroids[i][0]), static_cast<double>(centroids[i][1])};
    xmin = std::min(xmin, pts_[i][0]);
    xmax = std::max(xmax, pts_[i][0]);
    ymin = std::min(ymin, pts_[i][1]);
    ymax = std::max(ymax, pts_[i][1]);
  }
  if (k == 0) throw Error(Errc::domain, "empty centroid set");
  double span_x = std::max(xmax - xmin, 1e-12);
  double span_y = std::max(ymax - ymin, 1e-12);
  h_ = std::sqrt(span_x * span_y / static_cast<double>(k));
  if (!(h_ > 0.0)) h_ = 1.0;
  nx_ = std::max<long>(1, static_cast<long>(span_x / h_) + 1);
  ny_ = std::max<long>(1, static_cast<long>(span_y / h_) + 1);
  x0_ = xmin;
  y0_ = ymin;

  std::vector<std::uint32_t> counts(static_cast<std::size_t>(nx_ * ny_) + 1, 0);
  auto cell_of = [&](double x, double y) {
    long cx = std::clamp(static_cast<long>((x - x0_) / h_), 0l, nx_ - 1);
    long cy = std::clamp(static_cast<long>((y - y0_) / h_), 0l, ny_ - 1);
    return static_cast<std::size_t>(cy * nx_ + cx);
  };
  for (std::size_t i = 0; i < k; ++i) counts[cell_of(pts_[i][0], pts_[i][1]) + 1]++;
  for (std::size_t c = 1; c < counts.size(); ++c) counts[c] += counts[c - 1];
  cell_start_ = counts;
  order_.resize(k);
  std::vector<std::uint32_t> cursor(cell_start_.begin(), cell_start_.end() - 1);
  for (std::size_t i = 0; i < k; ++i) {
    order_[cursor[cell_of(pts_[i][0], pts_[i][1])]++] = static_cast<std::uint32_t>(i);
  }
}

std::size_t PlanarGrid::nearest(double x, double y) const {
  long cx = std::clamp(static_cast<long>(std::floor((x - x0_) / h_)), 0l, nx_ - 1);
  long cy = std::clamp(static_cast<long>(std::floor((y - y0_) / h_)), 0l, ny_ - 1);
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_idx = 0;
  bool found = false;
  const long max_ring = nx_ + ny_;

  auto scan_cell = [&](long gx, long gy) {
    if (gx < 0 || gy < 0 || gx >= nx_ || gy >= ny_) return;
    std::size_t c = static_cast<std::size_t>(gy * nx_ + gx);
    for (std::uint32_t o = cell_start_[c]; o < cell_start_[c + 1]; ++o) {
      std::size_t i = order_[o];
      double dx = pts_[i][0] - x;
      double dy = pts_[i][1] - y;
      double d2 = dx * dx + dy * dy;
      if (!found || d2 < best) {
        best = d2;
        best_idx = i;
        found = true;
      } else if (d2 == best && i < best_idx) {
        best_idx = i;
      }
    }
  };

  for (long ring = 0; ring <= max_ring; ++ring) {
    if (ring == 0) {
      scan_cell(cx, cy);
    } else {
      for (long gx = cx - ring; gx <= cx + ring; ++gx) {
        scan_cell(gx, cy - ring);
        scan_cell(gx, cy + ring);
      }
      for (long gy = cy - ring + 1; gy <= cy + ring - 1; ++gy) {
        scan_cell(cx - ring, gy);
        scan_cell(cx + ring, gy);
      }
    }
    if (found) {
      // Explored square in real coordinates; anything unexplored lies
      // outside it, at distance >= dmin from the query point.
      double sx_lo = x0_ + (cx - ring) * h_;
      double sx_hi = x0_ + (cx + ring + 1) * h_;
      double sy_lo = y0_ + (cy - ring) * h_;
      double sy_hi = y0_ + (cy + ring + 1) * h_;
      double dmin = std::min(std::min(x - sx_lo, sx_hi - x), std::min(y - sy_lo, sy_hi - y));
      bool covers_grid = (cx - ring <= 0 && cy - ring <= 0 && cx + ring >= nx_ - 1 &&
                          cy + ring >= ny_ - 1);
      if (covers_grid || (dmin > 0.0 && best <= dmin * dmin)) break;
    }
  }
  return best_idx;
}

std::size_t nearest_centroid(const PlanarCodebook& cb, double x, double y) {
  if (!std::isfinite(x) || !std::isfinite(y)) {
    throw Error(Errc::encoding, "non-finite point in nearest_centroid");
  }
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_idx = 0;
  for (std::size_t i = 0; i < cb.centroids.size(); ++i) {
    double dx = static_cast<double>(cb.centroids[i][0]) - x;
    double dy = static_cast<double>(cb.centroids[i][1]) - y;
    double d2 = dx * dx + dy * dy;
    if (d2 < best) {
      best = d2;
      best_idx = i;
    }
  }
  return best_idx;
}

namespace {

std::vector<std::array<double, 2>> sample_circular_gaussian(std::size_t n, std::uint64_t seed) {
  std::vector<std::array<double, 2>> pts(n);
  SplitMix64 g(seed);
  for (std::size_t i = 0; i < n; ++i) {
    double gx = g.gaussian();
    double gy = g.gaussian();
    pts[i] = {gx, gy};
  }
  return pts;
}

}  // namespace

PlanarCodebook train_planar_lloyd(int bits, std::size_t sample_count, std::uint64_t seed,
                                  double tol, int max_iter) {
  if (bits < 2 || bits > 12) throw Error(Errc::domain, "planar bits out of range [2, 12]");
  const std::size_t k = std::size_t{1} << bits;
  if (sample_count == 0) sample_count = k * 256;
  if (sample_count < k * 256) {
    throw Error(Errc::domain, "sample_count must be >= 2^B * 256");
  }
  if (tol <= 0.0 || max_iter < 1) throw Error(Errc::domain, "invalid Lloyd training parameters");

  auto pts = sample_circular_gaussian(sample_count, seed);
  SplitMix64 g(derive_seed(seed, 0));

  // k-means++ greedy seeding from the training sample.
  std::vector<std::array<double, 2>> cent(k);
  std::vector<double> d2(sample_count, std::numeric_limits<double>::infinity());
  cent[0] = pts[g.next() % sample_count];
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < sample_count; ++i) {
      double dx = pts[i][0] - cent[c - 1][0];
      double dy = pts[i][1] - cent[c - 1][1];
      double d = dx * dx + dy * dy;
      if (d < d2[i]) d2[i] = d;
      total += d2[i];
    }
    double u = g.uniform() * total;
    double acc = 0.0;
    std::size_t pick = sample_count - 1;
    for (std::size_t i = 0; i < sample_count; ++i) {
      acc += d2[i];
      if (acc >= u) {
        pick = i;
        break;
      }
    }
    cent[c] = pts[pick];
  }

  PlanarCodebook cb;
  cb.bits = bits;
  cb.train_seed = seed;
  cb.meta.converged = false;

  std::vector<double> sum_x(k), sum_y(k);
  std::vector<std::size_t> count(k);
  std::vector<double> point_err(sample_count);
  std::vector<std::array<float, 2>> cent_f(k);

  double prev_obj = std::numeric_limits<double>::infinity();
  bool reseeded_last = false;
  for (int iter = 0; iter < max_iter; ++iter) {
    for (std::size_t c = 0; c < k; ++c) cent_f[c] = {static_cast<float>(cent[c][0]),
                                                     static_cast<float>(cent[c][1])};
    PlanarGrid grid(cent_f);
    std::fill(sum_x.begin(), sum_x.end(), 0.0);
    std::fill(sum_y.begin(), sum_y.end(), 0.0);
    std::fill(count.begin(), count.end(), 0);
    double obj = 0.0;
    for (std::size_t i = 0; i < sample_count; ++i) {
      std::size_t c = grid.nearest(pts[i][0], pts[i][1]);
      double dx = pts[i][0] - cent[c][0];
      double dy = pts[i][1] - cent[c][1];
      double e = dx * dx + dy * dy;
      point_err[i] = e;
      obj += e;
      sum_x[c] += pts[i][0];
      sum_y[c] += pts[i][1];
      count[c]++;
    }
    obj /= static_cast<double>(sample_count);

    // Lloyd monotonicity: the assignment + centroid steps are both
    // non-increasing; a violation beyond float noise is a bug.
    if (!reseeded_last && std::isfinite(prev_obj) && obj > prev_obj * (1.0 + 1e-9)) {
      throw Error(Errc::domain, "Lloyd objective increased between iterations");
    }

    cb.meta.iterations = iter + 1;
    double rel = std::isfinite(prev_obj) ? (prev_obj - obj) / std::max(obj, 1e-300) : 1.0;
    cb.meta.final_rel_improvement = rel;
    bool can_stop = std::isfinite(prev_obj) && !reseeded_last && std::abs(rel) < tol;
    prev_obj = obj;

    // Centroid update
    reseeded_last = false;
    std::vector<std::size_t> empty;
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] > 0) {
        cent[c] = {sum_x[c] / count[c], sum_y[c] / count[c]};
      } else {
        empty.push_back(c);
      }
    }
    if (!empty.empty()) {
      // re-seed each empty cell to the worst-quantized sample point
      std::vector<std::size_t> idx(sample_count);
      for (std::size_t i = 0; i < sample_count; ++i) idx[i] = i;
      std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(empty.size()), idx.end(),
                        [&](std::size_t a, std::size_t b) { return point_err[a] > point_err[b]; });
      for (std::size_t e = 0; e < empty.size(); ++e) {
        cent[empty[e]] = pts[idx[e]];
      }
      reseeded_last = true;
    }
    if (can_stop) {
      cb.meta.converged = true;
      break;
    }
  }

  cb.centroids.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    cb.centroids[c] = {static_cast<float>(cent[c][0]), static_cast<float>(cent[c][1])};
  }
  cb.d_b = estimate_planar_distortion(cb);
  return cb;
}

double estimate_planar_distortion(const PlanarCodebook& cb, std::size_t sample_count) {
  const std::size_t k = cb.centroids.size();
  if (k == 0) throw Error(Errc::domain, "empty codebook");
  if (sample_count == 0) sample_count = k * 256;
  auto pts = sample_circular_gaussian(sample_count, derive_seed(cb.train_seed, 1));
  PlanarGrid grid(cb.centroids);
  double obj = 0.0;
  for (const auto& p : pts) {
    std::size_t c = grid.nearest(p[0], p[1]);
    double dx = p[0] - static_cast<double>(cb.centroids[c][0]);
    double dy = p[1] - static_cast<double>(cb.centroids[c][1]);
    obj += dx * dx + dy * dy;
  }
  return obj / static_cast<double>(sample_count);
}

}  // namespace qamw
