#include "codec.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "digest.hpp"
#include "error.hpp"
#include "scaling.hpp"

namespace qamw {

namespace {
constexpr double kSqrtHalfPi = 1.2533141373155002512078826424055;  // sqrt(pi/2)
}

int Quantizer::bits() const {
  if (mode == CodecMode::joint) return planar->bits;
  return amp->bits + phase->bits;
}

Quantizer make_joint_quantizer(const PlanarCodebook& cb) {
  Quantizer q;
  q.mode = CodecMode::joint;
  q.planar = &cb;
  return q;
}

Quantizer make_polar_quantizer(const AmplitudeCodebook& amp, const PhaseQuantizer& phase) {
  Quantizer q;
  q.mode = CodecMode::polar;
  q.amp = &amp;
  q.phase = &phase;
  return q;
}

// ---------------------------------------------------------------------------
// binary16
// ---------------------------------------------------------------------------

std::uint16_t float_to_half(float f) {
  std::uint32_t x = std::bit_cast<std::uint32_t>(f);
  std::uint16_t sign = static_cast<std::uint16_t>((x >> 16) & 0x8000u);
  std::uint32_t mant = x & 0x7fffffu;
  int exp = static_cast<int>((x >> 23) & 0xffu);
  if (exp == 255) {
    return static_cast<std::uint16_t>(sign | 0x7c00u | (mant ? 0x200u : 0u));
  }
  int e = exp - 127 + 15;
  if (e >= 31) return static_cast<std::uint16_t>(sign | 0x7c00u);  // overflow -> inf
  if (e <= 0) {
    if (e < -10) return sign;  // underflow -> signed zero
    mant |= 0x800000u;
    int shift = 14 - e;
    std::uint32_t h = mant >> shift;
    std::uint32_t rem = mant & ((1u << shift) - 1);
    std::uint32_t halfway = 1u << (shift - 1);
    if (rem > halfway || (rem == halfway && (h & 1u))) ++h;
    return static_cast<std::uint16_t>(sign | h);
  }
  std::uint32_t h = static_cast<std::uint32_t>(e << 10) | (mant >> 13);
  std::uint32_t rem = mant & 0x1fffu;
  if (rem > 0x1000u || (rem == 0x1000u && (h & 1u))) ++h;  // may carry into exponent
  return static_cast<std::uint16_t>(sign | h);
}

float half_to_float(std::uint16_t h) {
  std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
  std::uint32_t exp = (h >> 10) & 0x1fu;
  std::uint32_t mant = h & 0x3ffu;
  std::uint32_t out;
  if (exp == 0) {
    if (mant == 0) {
      out = sign;
    } else {
      int e = -1;
      do {
        mant <<= 1;
        ++e;
      } while ((mant & 0x400u) == 0);
      out = sign | static_cast<std::uint32_t>(127 - 15 - e) << 23 | ((mant & 0x3ffu) << 13);
    }
  } else if (exp == 31) {
    out = sign | 0x7f800000u | (mant << 13);
  } else {
    out = sign | ((exp - 15 + 127) << 23) | (mant << 13);
  }
  return std::bit_cast<float>(out);
}

// ---------------------------------------------------------------------------
// bit packing
// ---------------------------------------------------------------------------

std::vector<std::uint8_t> pack_indices(const std::vector<std::uint32_t>& indices, int bits) {
  if (bits < 1 || bits > 24) throw Error(Errc::encoding, "index width out of range");
  const std::uint32_t limit = 1u << bits;
  std::vector<std::uint8_t> out((indices.size() * static_cast<std::size_t>(bits) + 7) / 8, 0);
  std::size_t bitpos = 0;
  for (std::uint32_t idx : indices) {
    if (idx >= limit) throw Error(Errc::encoding, "index exceeds 2^B");
    for (int b = bits - 1; b >= 0; --b) {
      if ((idx >> b) & 1u) out[bitpos >> 3] |= static_cast<std::uint8_t>(0x80u >> (bitpos & 7));
      ++bitpos;
    }
  }
  return out;
}

std::vector<std::uint32_t> unpack_indices(const std::uint8_t* bytes, std::size_t byte_len,
                                          std::size_t count, int bits) {
  if (bits < 1 || bits > 24) throw Error(Errc::format, "index width out of range");
  if (byte_len * 8 < count * static_cast<std::size_t>(bits)) {
    throw Error(Errc::format, "truncated index payload");
  }
  std::vector<std::uint32_t> out(count, 0);
  std::size_t bitpos = 0;
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t v = 0;
    for (int b = 0; b < bits; ++b) {
      v = (v << 1) | ((bytes[bitpos >> 3] >> (7 - (bitpos & 7))) & 1u);
      ++bitpos;
    }
    out[i] = v;
  }
  return out;
}

// ---------------------------------------------------------------------------
// bitrate accounting
// ---------------------------------------------------------------------------

std::size_t row_alignment_bits(int bits, std::size_t d_in) {
  std::size_t payload_bits = (d_in / 2) * static_cast<std::size_t>(bits);
  return ((payload_bits + 7) / 8) * 8 - payload_bits;
}

double bits_per_weight(int bits, std::size_t d_in, std::size_t alignment_bits_per_row) {
  if (bits < 1 || d_in < 2 || d_in % 2 != 0) {
    throw Error(Errc::domain, "bits_per_weight requires B >= 1 and even d_in");
  }
  double d = static_cast<double>(d_in);
  return static_cast<double>(bits) / 2.0 + 16.0 / d +
         static_cast<double>(alignment_bits_per_row) / d;
}

std::size_t EncodedMatrix::bytes_per_row() const {
  return ((manifest.d_in / 2) * static_cast<std::size_t>(manifest.bits) + 7) / 8;
}

// ---------------------------------------------------------------------------
// calibration
// ---------------------------------------------------------------------------

PairScales calibrate_pair_scales(const WeightMatrix& w, const RotationPlan& plan,
                                 std::size_t max_rows) {
  if (w.d_out == 0 || w.d_in == 0) throw Error(Errc::dimension, "empty weight matrix");
  if (w.d_in != plan.d_in) throw Error(Errc::dimension, "plan/matrix dimension mismatch");
  const std::size_t pairs = w.d_in / 2;
  const std::size_t rows = std::min(w.d_out, max_rows);

  std::vector<double> acc(pairs, 0.0);
  std::vector<double> u(w.d_in), y(w.d_in);
  std::size_t used = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    const double* row = w.values.data() + i * w.d_in;
    double n2 = 0.0;
    for (std::size_t j = 0; j < w.d_in; ++j) n2 += row[j] * row[j];
    if (n2 == 0.0) continue;
    double inv = 1.0 / std::sqrt(n2);
    for (std::size_t j = 0; j < w.d_in; ++j) u[j] = row[j] * inv;
    forward_rotate(plan, u, y);
    for (std::size_t k = 0; k < pairs; ++k) {
      acc[k] += std::hypot(y[2 * k], y[2 * k + 1]);
    }
    ++used;
  }
  if (used == 0) throw Error(Errc::calibration, "all calibration rows are zero");

  PairScales out;
  out.calib_rows = used;
  out.sigmas.resize(pairs);
  double top = 0.0;
  for (std::size_t k = 0; k < pairs; ++k) {
    out.sigmas[k] = acc[k] / static_cast<double>(used) / kSqrtHalfPi;
    top = std::max(top, out.sigmas[k]);
  }
  // A pair that is zero in every calibration row still picks up float
  // noise from the rotation, so "dead" is relative to the largest scale.
  const double floor = top * 1e-9;
  std::vector<double> nonzero;
  for (double s : out.sigmas) {
    if (s > floor) nonzero.push_back(s);
  }
  if (nonzero.empty()) throw Error(Errc::calibration, "all pair-scale estimates are zero");
  if (nonzero.size() < pairs) {
    std::sort(nonzero.begin(), nonzero.end());
    double median = nonzero[nonzero.size() / 2];
    for (auto& s : out.sigmas) {
      if (!(s > floor)) s = median;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// encode / decode
// ---------------------------------------------------------------------------

namespace {

void check_quantizer(const Quantizer& q) {
  if (q.mode == CodecMode::joint) {
    if (q.planar == nullptr || q.planar->centroids.empty()) {
      throw Error(Errc::domain, "joint quantizer missing planar codebook");
    }
  } else {
    if (q.amp == nullptr || q.phase == nullptr || q.amp->levels.empty()) {
      throw Error(Errc::domain, "polar quantizer missing codebooks");
    }
  }
}

// Reconstruction of one normalized pair from its index.
void lookup_pair(const Quantizer& q, std::uint32_t idx, double* px, double* py) {
  if (q.mode == CodecMode::joint) {
    const auto& c = q.planar->centroids[idx];
    *px = static_cast<double>(c[0]);
    *py = static_cast<double>(c[1]);
  } else {
    std::uint32_t amp_idx = idx >> q.phase->bits;
    std::uint32_t ph_idx = idx & ((1u << q.phase->bits) - 1u);
    double a = q.amp->levels[amp_idx];
    double th = q.phase->center(static_cast<long>(ph_idx));
    *px = a * std::cos(th);
    *py = a * std::sin(th);
  }
}

}  // namespace

EncodedMatrix encode_matrix(const WeightMatrix& w, const RotationPlan& plan,
                            const PairScales& scales, const Quantizer& q,
                            const ScaleVector* scale_vec, EncodeTrace* trace) {
  check_quantizer(q);
  if (w.d_in != plan.d_in) throw Error(Errc::dimension, "plan/matrix dimension mismatch");
  const std::size_t pairs = w.d_in / 2;
  if (scales.sigmas.size() != pairs) throw Error(Errc::calibration, "pair-scale length mismatch");
  for (double s : scales.sigmas) {
    if (!(s > 0.0)) throw Error(Errc::calibration, "non-positive pair scale");
  }
  if (scale_vec != nullptr && scale_vec->s.size() != w.d_in) {
    throw Error(Errc::dimension, "scale vector length mismatch");
  }
  for (double v : w.values) {
    if (!std::isfinite(v)) throw Error(Errc::encoding, "non-finite weight");
  }

  const int bits = q.bits();
  EncodedMatrix enc;
  enc.manifest.d_out = w.d_out;
  enc.manifest.d_in = w.d_in;
  enc.manifest.mode = q.mode;
  enc.manifest.bits = bits;
  if (q.mode == CodecMode::polar) {
    enc.manifest.amp_bits = q.amp->bits;
    enc.manifest.phase_bits = q.phase->bits;
  }
  enc.manifest.rotation_seed = plan.mask.seed;
  enc.manifest.block = plan.block;
  enc.manifest.sigmas = scales.sigmas;
  enc.manifest.calib_rows = scales.calib_rows;
  if (scale_vec != nullptr) {
    enc.manifest.scale_vec = scale_vec->s;
    enc.manifest.scale_alpha = scale_vec->alpha;
  }
  enc.manifest.bpw = bits_per_weight(bits, w.d_in, row_alignment_bits(bits, w.d_in));

  const std::size_t bpr = ((pairs * static_cast<std::size_t>(bits)) + 7) / 8;
  enc.row_norms.resize(w.d_out);
  enc.payload.resize(w.d_out * bpr, 0);
  enc.manifest.row_crc32.resize(w.d_out);
  if (trace != nullptr) {
    trace->pair_error_sums.assign(w.d_out, 0.0);
    trace->direction_errors.assign(w.d_out, 0.0);
  }

  std::optional<PlanarGrid> grid;
  if (q.mode == CodecMode::joint) grid.emplace(q.planar->centroids);

  std::vector<double> row(w.d_in), u(w.d_in), y(w.d_in), y_hat(w.d_in), u_tilde(w.d_in);
  std::vector<std::uint32_t> indices(pairs);
  for (std::size_t i = 0; i < w.d_out; ++i) {
    for (std::size_t j = 0; j < w.d_in; ++j) {
      double v = w.at(i, j);
      row[j] = scale_vec != nullptr ? v * scale_vec->s[j] : v;
    }
    double n2 = 0.0;
    for (double v : row) n2 += v * v;
    double r = std::sqrt(n2);
    enc.row_norms[i] = float_to_half(static_cast<float>(r));
    if (r == 0.0) {
      std::fill(indices.begin(), indices.end(), 0u);
    } else {
      double inv = 1.0 / r;
      for (std::size_t j = 0; j < w.d_in; ++j) u[j] = row[j] * inv;
      forward_rotate(plan, u, y);
      for (std::size_t k = 0; k < pairs; ++k) {
        double zx = y[2 * k] / scales.sigmas[k];
        double zy = y[2 * k + 1] / scales.sigmas[k];
        std::uint32_t idx;
        if (q.mode == CodecMode::joint) {
          idx = static_cast<std::uint32_t>(grid->nearest(zx, zy));
        } else {
          double a = std::hypot(zx, zy);
          double th = std::atan2(zy, zx);
          std::uint32_t amp_idx = static_cast<std::uint32_t>(q.amp->quantize(a));
          std::uint32_t ph_idx = static_cast<std::uint32_t>(q.phase->quantize(th));
          idx = (amp_idx << q.phase->bits) | ph_idx;
        }
        indices[k] = idx;
        if (trace != nullptr) {
          double cx, cy;
          lookup_pair(q, idx, &cx, &cy);
          double ex = y[2 * k] - cx * scales.sigmas[k];
          double ey = y[2 * k + 1] - cy * scales.sigmas[k];
          trace->pair_error_sums[i] += ex * ex + ey * ey;
          y_hat[2 * k] = cx * scales.sigmas[k];
          y_hat[2 * k + 1] = cy * scales.sigmas[k];
        }
      }
      if (trace != nullptr) {
        inverse_rotate(plan, y_hat, u_tilde);
        double e = 0.0;
        for (std::size_t j = 0; j < w.d_in; ++j) {
          double d = u[j] - u_tilde[j];
          e += d * d;
        }
        trace->direction_errors[i] = e;
      }
    }
    auto packed = pack_indices(indices, bits);
    std::memcpy(enc.payload.data() + i * bpr, packed.data(), bpr);
    enc.manifest.row_crc32[i] = crc32_of(enc.payload.data() + i * bpr, bpr);
  }
  enc.manifest.payload_sha256 = sha256_hex(enc.payload.data(), enc.payload.size());
  return enc;
}

WeightMatrix decode_matrix(const EncodedMatrix& enc, const RotationPlan& plan, const Quantizer& q,
                           const PairScales& scales) {
  check_quantizer(q);
  const EncodedManifest& m = enc.manifest;
  if (plan.d_in != m.d_in || plan.block != m.block || plan.mask.seed != m.rotation_seed) {
    throw Error(Errc::dimension, "rotation plan does not match manifest");
  }
  if (q.bits() != m.bits || q.mode != m.mode) {
    throw Error(Errc::format, "quantizer does not match manifest");
  }
  if (scales.sigmas != m.sigmas) {
    throw Error(Errc::calibration, "pair scales do not match manifest");
  }
  const std::size_t pairs = m.d_in / 2;
  const std::size_t bpr = enc.bytes_per_row();
  if (enc.payload.size() != m.d_out * bpr || enc.row_norms.size() != m.d_out) {
    throw Error(Errc::format, "truncated payload");
  }
  if (sha256_hex(enc.payload.data(), enc.payload.size()) != m.payload_sha256) {
    // locate the damaged row for the error message
    std::size_t bad_row = m.d_out;
    if (m.row_crc32.size() == m.d_out) {
      for (std::size_t i = 0; i < m.d_out; ++i) {
        if (crc32_of(enc.payload.data() + i * bpr, bpr) != m.row_crc32[i]) {
          bad_row = i;
          break;
        }
      }
    }
    throw Error(Errc::integrity, bad_row < m.d_out
                                     ? "payload digest mismatch at row " + std::to_string(bad_row)
                                     : "payload digest mismatch");
  }

  WeightMatrix out;
  out.d_out = m.d_out;
  out.d_in = m.d_in;
  out.values.resize(m.d_out * m.d_in, 0.0);
  std::vector<double> y_hat(m.d_in), u_tilde(m.d_in);
  for (std::size_t i = 0; i < m.d_out; ++i) {
    double r = static_cast<double>(half_to_float(enc.row_norms[i]));
    if (r == 0.0) continue;
    auto indices = unpack_indices(enc.payload.data() + i * bpr, bpr, pairs, m.bits);
    for (std::size_t k = 0; k < pairs; ++k) {
      double cx, cy;
      if (indices[k] >= (1u << m.bits)) throw Error(Errc::format, "index out of range");
      lookup_pair(q, indices[k], &cx, &cy);
      y_hat[2 * k] = cx * scales.sigmas[k];
      y_hat[2 * k + 1] = cy * scales.sigmas[k];
    }
    inverse_rotate(plan, y_hat, u_tilde);
    double* dst = out.values.data() + i * m.d_in;
    for (std::size_t j = 0; j < m.d_in; ++j) dst[j] = u_tilde[j] * r;
    if (!m.scale_vec.empty()) {
      for (std::size_t j = 0; j < m.d_in; ++j) dst[j] /= m.scale_vec[j];
    }
  }
  return out;
}

}  // namespace qamw
