#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace qamw {

struct TrainMeta {
  int iterations = 0;
  double final_rel_improvement = 0.0;
  bool converged = false;
};

// 1D Lloyd-Max codebook for the unit Rayleigh amplitude source.
// levels strictly ascending; boundaries are the level midpoints.
// c_lm = E(U - Q(U))^2, m_a = E[U Q(U)]; for a centroid codebook
// m_a == 2 - c_lm (Rayleigh second moment is 2).
struct AmplitudeCodebook {
  int bits = 0;  // N_a = 2^bits levels
  std::vector<double> levels;
  std::vector<double> boundaries;
  double c_lm = 0.0;
  double m_a = 0.0;
  double r_max = 8.0;
  TrainMeta meta;

  std::size_t quantize(double r) const;
};

AmplitudeCodebook train_rayleigh_lloyd(int bits, double r_max = 8.0, double tol = 1e-10,
                                       int max_iter = 500);

// Rebuild the distortion statistics (boundaries, c_lm, m_a) for a given
// level set, e.g. after loading f32 levels from a codebook file.
void refresh_amplitude_stats(AmplitudeCodebook& cb);

// eta(N_p) = 1 - sin(pi/N_p)/(pi/N_p); expected phase-coding loss factor.
double phase_eta(long n_p);

// Uniform phase quantizer with bin centers at odd multiples of pi/N_p.
struct PhaseQuantizer {
  int bits = 0;  // N_p = 2^bits bins
  long bins = 1;
  double eta = 1.0;

  long quantize(double theta) const;   // bin index in [0, bins)
  double center(long idx) const;       // reconstruction angle
};

PhaseQuantizer make_phase_quantizer(int bits);

// Closed-form expected per-pair MSE of the polar quantizer on the
// circular-Gaussian source: sigma^2 [C_LM + 2 (2 - C_LM) eta].
double polar_pair_distortion(const AmplitudeCodebook& amp, const PhaseQuantizer& phase,
                             double sigma);

// Joint 2D codebook trained by Lloyd iterations on the unit circular
// Gaussian. Centroids stored as f32; d_b is the held-out Monte-Carlo
// per-pair MSE.
struct PlanarCodebook {
  int bits = 0;
  std::vector<std::array<float, 2>> centroids;
  double d_b = 0.0;
  std::uint64_t train_seed = 0;
  TrainMeta meta;
};

// sample_count == 0 selects the default 2^bits * 256.
PlanarCodebook train_planar_lloyd(int bits, std::size_t sample_count, std::uint64_t seed,
                                  double tol = 1e-6, int max_iter = 200);

// Held-out D_B estimate; deterministic given the codebook's train_seed.
double estimate_planar_distortion(const PlanarCodebook& cb, std::size_t sample_count = 0);

// Nearest centroid by Euclidean distance, ties to the lowest index.
std::size_t nearest_centroid(const PlanarCodebook& cb, double x, double y);

// Bucket-grid accelerator for repeated nearest-centroid queries.
// Exact: returns the same index as the linear scan, including tie rule.
class PlanarGrid {
public:
  explicit PlanarGrid(const std::vector<std::array<float, 2>>& centroids);
  std::size_t nearest(double x, double y) const;

private:
  std::vector<std::array<double, 2>> pts_;
  std::vector<std::uint32_t> cell_start_;
  std::vector<std::uint32_t> order_;
  double x0_ = 0.0, y0_ = 0.0, h_ = 1.0;
  long nx_ = 1, ny_ = 1;
};

}  // namespace qamw
