#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "codebooks.hpp"
#include "rotation.hpp"

namespace qamw {

struct WeightMatrix {
  std::size_t d_out = 0;
  std::size_t d_in = 0;
  std::vector<double> values;  // row-major

  double& at(std::size_t i, std::size_t j) { return values[i * d_in + j]; }
  double at(std::size_t i, std::size_t j) const { return values[i * d_in + j]; }
};

struct PairScales {
  std::vector<double> sigmas;  // length d_in/2, all > 0
  std::size_t calib_rows = 0;
};

enum class CodecMode : int { polar = 0, joint = 1 };

// Either a joint 2D codebook or a (amplitude, phase) polar pair.
// References are non-owning; the codebook objects must outlive encode/decode.
struct Quantizer {
  CodecMode mode = CodecMode::joint;
  const PlanarCodebook* planar = nullptr;
  const AmplitudeCodebook* amp = nullptr;
  const PhaseQuantizer* phase = nullptr;

  int bits() const;
};

Quantizer make_joint_quantizer(const PlanarCodebook& cb);
Quantizer make_polar_quantizer(const AmplitudeCodebook& amp, const PhaseQuantizer& phase);

struct ScaleVector;  // scaling.hpp

struct EncodedManifest {
  std::size_t d_out = 0;
  std::size_t d_in = 0;
  CodecMode mode = CodecMode::joint;
  int bits = 0;       // bits per pair
  int amp_bits = 0;   // polar split (amp_bits + phase_bits == bits)
  int phase_bits = 0;
  std::uint64_t rotation_seed = 0;
  std::size_t block = 0;
  std::vector<double> sigmas;
  std::size_t calib_rows = 0;
  std::vector<double> scale_vec;  // empty when no activation-aware scaling
  double scale_alpha = 0.0;
  double bpw = 0.0;
  std::string payload_sha256;
  std::vector<std::uint32_t> row_crc32;
};

struct EncodedMatrix {
  EncodedManifest manifest;
  std::vector<std::uint16_t> row_norms;  // IEEE binary16 bit patterns
  std::vector<std::uint8_t> payload;     // bit-packed indices, rows byte-aligned

  std::size_t bytes_per_row() const;
};

// Optional per-encode instrumentation for the error-accounting identities.
struct EncodeTrace {
  // per row: sum over pairs of ||z_k - z_hat_k||^2 (rotated domain)
  std::vector<double> pair_error_sums;
  // per row: ||u - u_tilde||^2 measured after the inverse rotation,
  // before the stored-norm multiply
  std::vector<double> direction_errors;
};

// sigma_hat_k = mean(|z_k|)/sqrt(pi/2) over the first min(d_out, max_rows)
// unit-normalized rotated rows; zero rows skipped; an all-zero pair gets
// the median of the nonzero estimates.
PairScales calibrate_pair_scales(const WeightMatrix& w, const RotationPlan& plan,
                                 std::size_t max_rows = 1024);

EncodedMatrix encode_matrix(const WeightMatrix& w, const RotationPlan& plan,
                            const PairScales& scales, const Quantizer& q,
                            const ScaleVector* scale_vec = nullptr,
                            EncodeTrace* trace = nullptr);

WeightMatrix decode_matrix(const EncodedMatrix& enc, const RotationPlan& plan, const Quantizer& q,
                           const PairScales& scales);

// bpw = B/2 + 16/d_in + alignment_bits_per_row/d_in
double bits_per_weight(int bits, std::size_t d_in, std::size_t alignment_bits_per_row);

// Byte-alignment overhead per row implied by the packing rule.
std::size_t row_alignment_bits(int bits, std::size_t d_in);

// MSB-first bit packing; the byte stream is padded to a whole byte.
std::vector<std::uint8_t> pack_indices(const std::vector<std::uint32_t>& indices, int bits);
std::vector<std::uint32_t> unpack_indices(const std::uint8_t* bytes, std::size_t byte_len,
                                          std::size_t count, int bits);

// IEEE 754 binary16 conversions (round to nearest even).
std::uint16_t float_to_half(float f);
float half_to_float(std::uint16_t h);

}  // namespace qamw
