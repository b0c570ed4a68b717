#include "scaling.hpp"

#include <algorithm>
#include <cmath>

#include "codec.hpp"
#include "error.hpp"

namespace qamw {

ChannelRms compute_channel_rms(const WeightMatrix& x) {
  if (x.d_out == 0 || x.d_in == 0) throw Error(Errc::domain, "empty activation matrix");
  for (double v : x.values) {
    if (!std::isfinite(v)) throw Error(Errc::domain, "non-finite activation");
  }
  ChannelRms out;
  out.n_samples = x.d_out;
  out.r.assign(x.d_in, 0.0);
  for (std::size_t t = 0; t < x.d_out; ++t) {
    const double* row = x.values.data() + t * x.d_in;
    for (std::size_t j = 0; j < x.d_in; ++j) out.r[j] += row[j] * row[j];
  }
  for (auto& v : out.r) v = std::sqrt(v / static_cast<double>(x.d_out));
  return out;
}

ScaleVector build_scales(const ChannelRms& rms, double alpha, double clamp_lo, double clamp_hi) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(Errc::domain, "alpha must be in [0, 1]");
  ScaleVector out;
  out.alpha = alpha;
  out.clamp_lo = clamp_lo;
  out.clamp_hi = clamp_hi;
  out.s.assign(rms.r.size(), 1.0);

  double log_sum = 0.0;
  std::size_t positive = 0;
  for (double r : rms.r) {
    if (r > 0.0) {
      log_sum += std::log(r);
      ++positive;
    }
  }
  if (positive == 0) throw Error(Errc::domain, "all channel RMS values are zero");
  double log_g = log_sum / static_cast<double>(positive);

  // s_j = (r_j / g)^alpha has geometric mean one over the positive channels
  // by construction; zero-RMS channels stay at 1 and are excluded.
  out.clamp_hits = 0;
  for (std::size_t j = 0; j < rms.r.size(); ++j) {
    if (rms.r[j] > 0.0) {
      double s = std::exp(alpha * (std::log(rms.r[j]) - log_g));
      if (s < clamp_lo) {
        s = clamp_lo;
        ++out.clamp_hits;
      } else if (s > clamp_hi) {
        s = clamp_hi;
        ++out.clamp_hits;
      }
      out.s[j] = s;
    }
  }
  return out;
}

A1ProbeResult a1_probe(const WeightMatrix& w, const ChannelRms& rms,
                       const std::vector<double>& alphas, const PlanarCodebook& codebook,
                       std::uint64_t rotation_seed) {
  if (rms.r.size() != w.d_in) throw Error(Errc::dimension, "RMS length does not match d_in");
  A1ProbeResult res;
  res.alphas = alphas;
  res.table.resize(alphas.size());
  res.summaries.resize(alphas.size());

  RotationPlan plan = plan_rotation(w.d_in, rotation_seed);
  Quantizer q = make_joint_quantizer(codebook);

  for (std::size_t a = 0; a < alphas.size(); ++a) {
    ScaleVector sv = build_scales(rms, alphas[a]);
    WeightMatrix ws = w;
    for (std::size_t i = 0; i < w.d_out; ++i) {
      for (std::size_t j = 0; j < w.d_in; ++j) ws.at(i, j) *= sv.s[j];
    }
    PairScales scales = calibrate_pair_scales(ws, plan);
    EncodedMatrix enc = encode_matrix(ws, plan, scales, q);
    WeightMatrix ws_hat = decode_matrix(enc, plan, q, scales);

    std::vector<double>& c = res.table[a];
    c.assign(w.d_in, 0.0);
    for (std::size_t i = 0; i < w.d_out; ++i) {
      for (std::size_t j = 0; j < w.d_in; ++j) {
        double e = ws.at(i, j) - ws_hat.at(i, j);
        c[j] += e * e;
      }
    }
    for (auto& v : c) v /= static_cast<double>(w.d_out);

    std::vector<double> sorted = c;
    std::sort(sorted.begin(), sorted.end());
    A1Summary& s = res.summaries[a];
    s.alpha = alphas[a];
    s.median = sorted[sorted.size() / 2];
    s.p99 = sorted[std::min(sorted.size() - 1,
                            static_cast<std::size_t>(0.99 * static_cast<double>(sorted.size())))];
    s.max = sorted.back();
    s.clamp_rate = static_cast<double>(sv.clamp_hits) / static_cast<double>(sv.s.size());
  }
  return res;
}

}  // namespace qamw
