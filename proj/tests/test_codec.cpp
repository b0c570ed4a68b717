#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numeric>
#include <vector>

#include "codebooks.hpp"
#include "codec.hpp"
#include "error.hpp"
#include "io.hpp"
#include "rng.hpp"
#include "rotation.hpp"
#include "scaling.hpp"

using namespace qamw;

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;
constexpr double kSqrtHalfPi = 1.2533141373155002512;

double rel_frob(const WeightMatrix& a, const WeightMatrix& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    double d = a.values[i] - b.values[i];
    num += d * d;
    den += a.values[i] * a.values[i];
  }
  return std::sqrt(num / den);
}

}  // namespace

TEST_CASE("binary16 known values") {
  CHECK(float_to_half(1.0f) == 0x3c00);
  CHECK(float_to_half(0.5f) == 0x3800);
  CHECK(float_to_half(-2.0f) == 0xc000);
  CHECK(float_to_half(0.0f) == 0x0000);
  CHECK(float_to_half(65504.0f) == 0x7bff);
  CHECK(float_to_half(100000.0f) == 0x7c00);  // overflow to inf
  CHECK(float_to_half(5.960464477539063e-08f) == 0x0001);  // smallest subnormal
  // tie rounds to even mantissa
  CHECK(float_to_half(1.00048828125f) == 0x3c00);
  CHECK(half_to_float(0x3c00) == 1.0f);
  CHECK(half_to_float(0x0001) == 5.960464477539063e-08f);
}

TEST_CASE("binary16 round trip over every finite pattern") {
  for (std::uint32_t h = 0; h < 0x10000; ++h) {
    std::uint16_t bits = static_cast<std::uint16_t>(h);
    if (((bits >> 10) & 0x1f) == 0x1f) continue;  // inf/nan
    float f = half_to_float(bits);
    CHECK(float_to_half(f) == bits);
  }
}

TEST_CASE("bit packing examples") {
  auto rt = [](const std::vector<std::uint32_t>& v, int bits) {
    auto bytes = pack_indices(v, bits);
    auto back = unpack_indices(bytes.data(), bytes.size(), v.size(), bits);
    CHECK(back == v);
    return bytes;
  };
  rt({0, 2047, 1}, 11);
  // byte-per-index at B=8, MSB-first means the byte equals the index
  auto bytes = rt({0xab, 0x01, 0xff}, 8);
  CHECK(bytes == std::vector<std::uint8_t>{0xab, 0x01, 0xff});
  // two 4-bit indices share one byte, first in the high nibble
  bytes = rt({0x1, 0x2}, 4);
  CHECK(bytes == std::vector<std::uint8_t>{0x12});
  CHECK_THROWS_AS(pack_indices({2048}, 11), Error);
  CHECK_THROWS_AS(unpack_indices(bytes.data(), 1, 3, 4), Error);
}

TEST_CASE("bit packing fuzz") {
  SplitMix64 rng(42);
  for (int bits : {7, 8, 11}) {
    for (int t = 0; t < 300; ++t) {
      std::size_t n = 1 + rng.next() % 64;
      std::vector<std::uint32_t> v(n);
      for (auto& x : v) x = static_cast<std::uint32_t>(rng.next() & ((1u << bits) - 1));
      auto bytes = pack_indices(v, bits);
      CHECK(bytes.size() == (n * bits + 7) / 8);
      CHECK(unpack_indices(bytes.data(), bytes.size(), n, bits) == v);
    }
  }
}

TEST_CASE("bitrate accounting points") {
  CHECK(row_alignment_bits(11, 2048) == 0);
  CHECK(bits_per_weight(11, 2048, 0) == doctest::Approx(5.5078125).epsilon(1e-12));
  CHECK(bits_per_weight(7, 2048, row_alignment_bits(7, 2048)) == doctest::Approx(3.51).epsilon(0.002));
  CHECK(bits_per_weight(8, 2048, row_alignment_bits(8, 2048)) == doctest::Approx(4.0078).epsilon(0.0001));
  // odd bit totals leave alignment slack
  CHECK(row_alignment_bits(3, 10) == 1);
  CHECK_THROWS_AS(bits_per_weight(0, 2048, 0), Error);
  CHECK_THROWS_AS(bits_per_weight(8, 11, 0), Error);
}

TEST_CASE("pair-scale calibration on constructed pairs") {
  const std::size_t d = 16;
  RotationPlan plan = plan_rotation(d, 7);
  // build the row as the inverse rotation of a target with known pair radii
  std::vector<double> radii = {0.5, 0.1, 0.3, 0.2, 0.25, 0.15, 0.4, 0.35};
  std::vector<double> y(d);
  double n2 = 0.0;
  for (std::size_t k = 0; k < 8; ++k) {
    double th = 0.3 * static_cast<double>(k);
    y[2 * k] = radii[k] * std::cos(th);
    y[2 * k + 1] = radii[k] * std::sin(th);
    n2 += radii[k] * radii[k];
  }
  double inv = 1.0 / std::sqrt(n2);
  for (auto& v : y) v *= inv;  // unit norm so the row normalization is a no-op
  std::vector<double> u = inverse_rotate(plan, y);
  WeightMatrix w{1, d, u};
  PairScales s = calibrate_pair_scales(w, plan);
  REQUIRE(s.sigmas.size() == 8);
  CHECK(s.calib_rows == 1);
  for (std::size_t k = 0; k < 8; ++k) {
    CHECK(s.sigmas[k] == doctest::Approx(radii[k] * inv / kSqrtHalfPi).epsilon(1e-10));
  }
}

TEST_CASE("pair-scale calibration statistics on gaussian rows") {
  WeightMatrix w = synth_gaussian(1200, 2048, 99);
  RotationPlan plan = plan_rotation(2048, 5);
  PairScales s = calibrate_pair_scales(w, plan);
  CHECK(s.calib_rows == 1024);  // capped
  double expect = 1.0 / std::sqrt(2048.0);
  double mean = 0.0, var = 0.0;
  for (double sig : s.sigmas) mean += sig;
  mean /= static_cast<double>(s.sigmas.size());
  for (double sig : s.sigmas) var += (sig - mean) * (sig - mean);
  var /= static_cast<double>(s.sigmas.size());
  CHECK(std::abs(mean - expect) / expect < 0.02);
  CHECK(std::sqrt(var) / mean < 0.05);
}

TEST_CASE("calibration rejects zero input and repairs dead pairs") {
  RotationPlan plan = plan_rotation(8, 3);
  WeightMatrix zeros{4, 8, std::vector<double>(32, 0.0)};
  CHECK_THROWS_AS(calibrate_pair_scales(zeros, plan), Error);

  // rows whose rotated image has pair 1 identically zero
  WeightMatrix w{3, 8, {}};
  SplitMix64 rng(1);
  for (int i = 0; i < 3; ++i) {
    std::vector<double> y(8);
    for (auto& v : y) v = rng.gaussian();
    y[2] = 0.0;
    y[3] = 0.0;
    std::vector<double> u = inverse_rotate(plan, y);
    w.values.insert(w.values.end(), u.begin(), u.end());
  }
  PairScales s = calibrate_pair_scales(w, plan);
  std::vector<double> nonzero = {s.sigmas[0], s.sigmas[2], s.sigmas[3]};
  std::sort(nonzero.begin(), nonzero.end());
  CHECK(s.sigmas[1] == doctest::Approx(nonzero[1]).epsilon(1e-12));  // median substitution
}

TEST_CASE("zero rows decode to exact zeros") {
  PlanarCodebook cb = train_planar_lloyd(4, 0, 1);
  WeightMatrix w = synth_gaussian(6, 32, 2);
  for (std::size_t j = 0; j < 32; ++j) w.at(2, j) = 0.0;
  RotationPlan plan = plan_rotation(32, 9);
  PairScales s = calibrate_pair_scales(w, plan);
  Quantizer q = make_joint_quantizer(cb);
  WeightMatrix out = decode_matrix(encode_matrix(w, plan, s, q), plan, q, s);
  CHECK(out.d_out == 6);
  CHECK(out.d_in == 32);
  for (std::size_t j = 0; j < 32; ++j) CHECK(out.at(2, j) == 0.0);
}

TEST_CASE("centroid-aligned input reproduces to binary16 precision") {
  PlanarCodebook cb = train_planar_lloyd(4, 0, 11);
  const std::size_t d = 32;
  RotationPlan plan = plan_rotation(d, 13);
  SplitMix64 rng(3);
  std::vector<double> y(d);
  for (std::size_t k = 0; k < d / 2; ++k) {
    const auto& c = cb.centroids[rng.next() % cb.centroids.size()];
    y[2 * k] = static_cast<double>(c[0]);
    y[2 * k + 1] = static_cast<double>(c[1]);
  }
  double norm_y = std::sqrt(std::inner_product(y.begin(), y.end(), y.begin(), 0.0));
  // after row normalization each pair lands at centroid / ||y||, so a
  // uniform sigma of 1/||y|| puts the quantizer input exactly on the grid
  PairScales s;
  s.sigmas.assign(d / 2, 1.0 / norm_y);
  s.calib_rows = 1;
  std::vector<double> u = inverse_rotate(plan, y);
  for (auto& v : u) v *= 2.5;  // arbitrary row norm
  WeightMatrix w{1, d, u};
  Quantizer q = make_joint_quantizer(cb);
  WeightMatrix out = decode_matrix(encode_matrix(w, plan, s, q), plan, q, s);
  CHECK(rel_frob(w, out) < 2e-3);  // binary16 norm rounding only
}

TEST_CASE("error accounting and cosine identity on instrumented encode") {
  PlanarCodebook cb = train_planar_lloyd(5, 0, 21);
  WeightMatrix w = synth_gaussian(40, 64, 31);
  RotationPlan plan = plan_rotation(64, 17);
  PairScales s = calibrate_pair_scales(w, plan);
  Quantizer q = make_joint_quantizer(cb);
  EncodeTrace trace;
  EncodedMatrix enc = encode_matrix(w, plan, s, q, nullptr, &trace);
  WeightMatrix out = decode_matrix(enc, plan, q, s);
  for (std::size_t i = 0; i < 40; ++i) {
    CHECK(std::abs(trace.pair_error_sums[i] - trace.direction_errors[i]) <= 1e-10);

    // reconstruct u and u_tilde from the pipeline definitions
    double n2 = 0.0;
    for (std::size_t j = 0; j < 64; ++j) n2 += w.at(i, j) * w.at(i, j);
    double r = std::sqrt(n2);
    double r16 = static_cast<double>(half_to_float(float_to_half(static_cast<float>(r))));
    std::vector<double> u(64), ut(64);
    for (std::size_t j = 0; j < 64; ++j) {
      u[j] = w.at(i, j) / r;
      ut[j] = out.at(i, j) / r16;
    }
    // cosine identity for the normalized reconstruction
    double utn = std::sqrt(std::inner_product(ut.begin(), ut.end(), ut.begin(), 0.0));
    double dot = 0.0, dist2 = 0.0;
    for (std::size_t j = 0; j < 64; ++j) {
      double hat = ut[j] / utn;
      dot += u[j] * hat;
      double d = u[j] - hat;
      dist2 += d * d;
    }
    CHECK(std::abs((1.0 - dot) - 0.5 * dist2) <= 1e-10);
  }
  // per-coordinate MSE is half the mean pair error
  double mean_pair = 0.0;
  for (double v : trace.pair_error_sums) mean_pair += v / (64.0 / 2.0);
  mean_pair /= 40.0;
  double mse_coord = 0.0;
  for (std::size_t i = 0; i < 40; ++i) {
    double n2 = 0.0;
    for (std::size_t j = 0; j < 64; ++j) n2 += w.at(i, j) * w.at(i, j);
    double r16 = static_cast<double>(half_to_float(float_to_half(static_cast<float>(std::sqrt(n2)))));
    for (std::size_t j = 0; j < 64; ++j) {
      double d = w.at(i, j) / std::sqrt(n2) - out.at(i, j) / r16;
      mse_coord += d * d;
    }
  }
  mse_coord /= 40.0 * 64.0;
  CHECK(mse_coord == doctest::Approx(0.5 * mean_pair).epsilon(1e-9));
}

TEST_CASE("linear codec response under global rescale") {
  PlanarCodebook cb = train_planar_lloyd(5, 0, 77);
  WeightMatrix w = synth_gaussian(24, 64, 5);
  WeightMatrix cw = w;
  const double c = 37.5;
  for (auto& v : cw.values) v *= c;
  RotationPlan plan = plan_rotation(64, 123);
  Quantizer q = make_joint_quantizer(cb);
  PairScales s1 = calibrate_pair_scales(w, plan);
  PairScales s2 = calibrate_pair_scales(cw, plan);
  // unit normalization makes the calibration scale-invariant
  for (std::size_t k = 0; k < s1.sigmas.size(); ++k)
    CHECK(s2.sigmas[k] == doctest::Approx(s1.sigmas[k]).epsilon(1e-12));
  EncodedMatrix e1 = encode_matrix(w, plan, s1, q);
  EncodedMatrix e2 = encode_matrix(cw, plan, s2, q);
  CHECK(e1.manifest.payload_sha256 == e2.manifest.payload_sha256);
  WeightMatrix d1 = decode_matrix(e1, plan, q, s1);
  WeightMatrix d2 = decode_matrix(e2, plan, q, s2);
  for (std::size_t i = 0; i < d1.values.size(); ++i) {
    CHECK(d2.values[i] == doctest::Approx(c * d1.values[i]).epsilon(1e-3));
  }
}

TEST_CASE("gaussian round trip meets the weight-MSE envelope") {
  PlanarCodebook cb = train_planar_lloyd(11, 0, 42);
  WeightMatrix w = synth_gaussian(128, 256, 77);
  RotationPlan plan = plan_rotation(256, 3);
  PairScales s = calibrate_pair_scales(w, plan);
  Quantizer q = make_joint_quantizer(cb);
  WeightMatrix out = decode_matrix(encode_matrix(w, plan, s, q), plan, q, s);
  CHECK(rel_frob(w, out) <= std::sqrt(cb.d_b / 2.0) * 1.2);
}

TEST_CASE("polar mode round trip and index layout") {
  AmplitudeCodebook amp = train_rayleigh_lloyd(3);
  PhaseQuantizer ph = make_phase_quantizer(4);
  Quantizer q = make_polar_quantizer(amp, ph);
  CHECK(q.bits() == 7);
  WeightMatrix w = synth_gaussian(16, 32, 8);
  RotationPlan plan = plan_rotation(32, 21);
  PairScales s = calibrate_pair_scales(w, plan);
  EncodedMatrix enc = encode_matrix(w, plan, s, q);
  CHECK(enc.manifest.mode == CodecMode::polar);
  CHECK(enc.manifest.amp_bits == 3);
  CHECK(enc.manifest.phase_bits == 4);
  // amplitude occupies the high bits of each 7-bit field
  auto indices = unpack_indices(enc.payload.data(), enc.bytes_per_row(), 16, 7);
  for (auto idx : indices) {
    CHECK((idx >> 4) < 8u);
    CHECK((idx & 0xfu) < 16u);
  }
  WeightMatrix out = decode_matrix(enc, plan, q, s);
  CHECK(rel_frob(w, out) < 0.5);
}

TEST_CASE("decode integrity and consistency failures") {
  PlanarCodebook cb = train_planar_lloyd(4, 0, 31);
  WeightMatrix w = synth_gaussian(8, 32, 6);
  RotationPlan plan = plan_rotation(32, 44);
  PairScales s = calibrate_pair_scales(w, plan);
  Quantizer q = make_joint_quantizer(cb);
  EncodedMatrix enc = encode_matrix(w, plan, s, q);

  // manifest bpw self-consistency
  CHECK(enc.manifest.bpw ==
        bits_per_weight(enc.manifest.bits, enc.manifest.d_in,
                        row_alignment_bits(enc.manifest.bits, enc.manifest.d_in)));

  SUBCASE("corrupted payload byte names the row") {
    EncodedMatrix bad = enc;
    std::size_t bpr = bad.bytes_per_row();
    bad.payload[3 * bpr] ^= 0x40;
    try {
      decode_matrix(bad, plan, q, s);
      FAIL("expected integrity error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::integrity);
      CHECK(std::string(e.what()).find("row 3") != std::string::npos);
    }
  }
  SUBCASE("truncated payload") {
    EncodedMatrix bad = enc;
    bad.payload.resize(bad.payload.size() - 1);
    CHECK_THROWS_AS(decode_matrix(bad, plan, q, s), Error);
  }
  SUBCASE("mismatched scales") {
    PairScales other = s;
    other.sigmas[0] *= 1.5;
    CHECK_THROWS_AS(decode_matrix(enc, plan, q, other), Error);
  }
  SUBCASE("mismatched plan") {
    RotationPlan other = plan_rotation(32, 45);
    CHECK_THROWS_AS(decode_matrix(enc, other, q, s), Error);
  }
  SUBCASE("non-finite weight rejected at encode") {
    WeightMatrix bad = w;
    bad.values[5] = std::nan("");
    CHECK_THROWS_AS(encode_matrix(bad, plan, s, q), Error);
  }
}
