#pragma once

#include <cstdint>
#include <vector>

namespace qamw {

struct WeightMatrix;
struct PlanarCodebook;

// Per-input-channel RMS of an activation matrix X (n x d_in):
// r_j = sqrt(mean_t X_tj^2).
struct ChannelRms {
  std::vector<double> r;
  std::size_t n_samples = 0;
};

ChannelRms compute_channel_rms(const WeightMatrix& x);

// Activation-aware per-channel scales s_j ~ r_j^alpha, geometric mean
// normalized to one before clamping to [clamp_lo, clamp_hi].
// Zero-RMS channels get s_j = 1 and are excluded from the geometric mean.
struct ScaleVector {
  std::vector<double> s;
  double alpha = 0.0;
  double clamp_lo = 1.0 / 16.0;
  double clamp_hi = 16.0;
  std::size_t clamp_hits = 0;
};

ScaleVector build_scales(const ChannelRms& rms, double alpha, double clamp_lo = 1.0 / 16.0,
                         double clamp_hi = 16.0);

// Assumption-(A1) probe: per-channel mean-squared scaled-domain residual
// c_j(alpha) = mean_i (E_s)_ij^2 from a full encode/decode in the scaled
// domain, for each alpha in the grid.
struct A1Summary {
  double alpha = 0.0;
  double median = 0.0;
  double p99 = 0.0;
  double max = 0.0;
  double clamp_rate = 0.0;
};

struct A1ProbeResult {
  std::vector<double> alphas;
  // table[a][j] = c_j(alphas[a])
  std::vector<std::vector<double>> table;
  std::vector<A1Summary> summaries;
};

A1ProbeResult a1_probe(const WeightMatrix& w, const ChannelRms& rms,
                       const std::vector<double>& alphas, const PlanarCodebook& codebook,
                       std::uint64_t rotation_seed);

}  // namespace qamw
