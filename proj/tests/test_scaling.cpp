#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "codebooks.hpp"
#include "codec.hpp"
#include "error.hpp"
#include "io.hpp"
#include "rng.hpp"
#include "rotation.hpp"
#include "scaling.hpp"

using namespace qamw;

TEST_CASE("channel rms basics") {
  // identity activation matrix: each column has a single 1 among d rows
  const std::size_t d = 8;
  WeightMatrix x{d, d, std::vector<double>(d * d, 0.0)};
  for (std::size_t i = 0; i < d; ++i) x.at(i, i) = 1.0;
  ChannelRms r = compute_channel_rms(x);
  CHECK(r.n_samples == d);
  for (double v : r.r) CHECK(v == doctest::Approx(1.0 / std::sqrt(8.0)).epsilon(1e-14));

  WeightMatrix c{5, 3, {}};
  c.values.assign(15, 0.0);
  for (std::size_t i = 0; i < 5; ++i) {
    c.at(i, 0) = -2.5;
    c.at(i, 1) = 0.0;
    c.at(i, 2) = (i % 2) ? 1.0 : -1.0;
  }
  ChannelRms rc = compute_channel_rms(c);
  CHECK(rc.r[0] == doctest::Approx(2.5).epsilon(1e-14));
  CHECK(rc.r[1] == 0.0);
  CHECK(rc.r[2] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("channel rms against brute force") {
  WeightMatrix x = synth_gaussian(37, 19, 5);
  ChannelRms r = compute_channel_rms(x);
  for (std::size_t j = 0; j < 19; ++j) {
    double acc = 0.0;
    for (std::size_t t = 0; t < 37; ++t) acc += x.at(t, j) * x.at(t, j);
    CHECK(r.r[j] == doctest::Approx(std::sqrt(acc / 37.0)).epsilon(1e-12));
  }
  WeightMatrix empty{0, 4, {}};
  CHECK_THROWS_AS(compute_channel_rms(empty), Error);
  WeightMatrix bad = x;
  bad.values[3] = std::nan("");
  CHECK_THROWS_AS(compute_channel_rms(bad), Error);
}

TEST_CASE("scale construction hand cases") {
  ChannelRms rms;
  rms.r = {4.0, 1.0};
  rms.n_samples = 1;
  ScaleVector s = build_scales(rms, 0.5);
  CHECK(s.s[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  CHECK(s.s[1] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(s.clamp_hits == 0);

  // alpha 0 gives exact ones
  ScaleVector z = build_scales(rms, 0.0);
  for (double v : z.s) CHECK(v == 1.0);

  // uniform rms gives ones at any alpha
  rms.r = {3.0, 3.0, 3.0};
  ScaleVector u = build_scales(rms, 0.7);
  for (double v : u.s) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(build_scales(rms, -0.1), Error);
  CHECK_THROWS_AS(build_scales(rms, 1.5), Error);
  rms.r = {0.0, 0.0};
  CHECK_THROWS_AS(build_scales(rms, 0.5), Error);
}

TEST_CASE("geometric mean one and monotone ordering") {
  SplitMix64 rng(9);
  ChannelRms rms;
  rms.r.resize(64);
  for (auto& v : rms.r) v = std::exp(0.4 * rng.gaussian());
  ScaleVector s = build_scales(rms, 0.6);
  double log_sum = 0.0;
  for (double v : s.s) log_sum += std::log(v);
  CHECK(std::abs(log_sum / 64.0) <= 1e-9);
  for (std::size_t a = 0; a < 64; ++a) {
    for (std::size_t b = 0; b < 64; ++b) {
      if (rms.r[a] > rms.r[b]) CHECK(s.s[a] >= s.s[b]);
    }
  }
}

TEST_CASE("clamping and zero channels") {
  ChannelRms rms;
  rms.r = {1e-9, 1.0, 1e9, 0.0};
  ScaleVector s = build_scales(rms, 1.0);
  CHECK(s.s[0] == 1.0 / 16.0);
  CHECK(s.s[2] == 16.0);
  CHECK(s.clamp_hits == 2);
  CHECK(s.s[3] == 1.0);  // dead channel stays neutral
  for (double v : s.s) {
    CHECK(v >= 1.0 / 16.0);
    CHECK(v <= 16.0);
  }
}

TEST_CASE("pure scaling round trip without quantization") {
  WeightMatrix w = synth_gaussian(10, 24, 3);
  ChannelRms rms = compute_channel_rms(synth_lognormal_channels(50, 24, 0.7, 4));
  ScaleVector s = build_scales(rms, 0.5);
  WeightMatrix ws = w;
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = 0; j < 24; ++j) ws.at(i, j) *= s.s[j];
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = 0; j < 24; ++j)
      CHECK(ws.at(i, j) / s.s[j] == doctest::Approx(w.at(i, j)).epsilon(1e-12));
}

TEST_CASE("de-scaled error law through the codec") {
  PlanarCodebook cb = train_planar_lloyd(5, 0, 12);
  WeightMatrix w = synth_gaussian(20, 64, 8);
  ChannelRms rms = compute_channel_rms(synth_lognormal_channels(64, 64, 0.5, 2));
  ScaleVector sv = build_scales(rms, 0.5);
  RotationPlan plan = plan_rotation(64, 77);
  Quantizer q = make_joint_quantizer(cb);

  // scaled-domain encode by hand
  WeightMatrix ws = w;
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t j = 0; j < 64; ++j) ws.at(i, j) *= sv.s[j];
  PairScales scales = calibrate_pair_scales(ws, plan);
  EncodedMatrix enc_s = encode_matrix(ws, plan, scales, q);
  WeightMatrix ws_hat = decode_matrix(enc_s, plan, q, scales);

  // codec-managed scale vector path produces the same index stream
  EncodedMatrix enc = encode_matrix(w, plan, scales, q, &sv);
  CHECK(enc.manifest.payload_sha256 == enc_s.manifest.payload_sha256);
  CHECK(enc.manifest.scale_alpha == 0.5);
  WeightMatrix w_hat = decode_matrix(enc, plan, q, scales);

  // delta W in the original domain is the scaled-domain residual / s_j
  for (std::size_t i = 0; i < 20; ++i) {
    for (std::size_t j = 0; j < 64; ++j) {
      double es = ws.at(i, j) - ws_hat.at(i, j);
      double dw = w.at(i, j) - w_hat.at(i, j);
      CHECK(dw == doctest::Approx(es / sv.s[j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("a1 probe columns and qualitative pattern") {
  // one dominant channel, several rotation blocks (d_in = 16 * 5)
  const std::size_t d = 80;
  WeightMatrix w = synth_gaussian(96, d, 21);
  ChannelRms rms;
  rms.r.assign(d, 1.0);
  rms.r[37] = 20.0;
  rms.n_samples = 96;
  PlanarCodebook cb = train_planar_lloyd(6, 0, 33);
  REQUIRE(plan_rotation(d, 1).block == 16);

  A1ProbeResult res = a1_probe(w, rms, {0.0, 0.5, 0.8}, cb, 55);
  REQUIRE(res.table.size() == 3);

  // alpha 0 equals the plain codec's per-channel residuals
  RotationPlan plan = plan_rotation(d, 55);
  PairScales scales = calibrate_pair_scales(w, plan);
  Quantizer q = make_joint_quantizer(cb);
  WeightMatrix w_hat = decode_matrix(encode_matrix(w, plan, scales, q), plan, q, scales);
  for (std::size_t j = 0; j < d; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < 96; ++i) {
      double e = w.at(i, j) - w_hat.at(i, j);
      acc += e * e;
    }
    CHECK(res.table[0][j] == doctest::Approx(acc / 96.0).epsilon(1e-10));
  }

  CHECK(res.summaries[0].clamp_rate == 0.0);
  double max0 = res.summaries[0].max;
  double med0 = res.summaries[0].median;
  CHECK(res.summaries[2].max > 2.0 * max0);           // hot block grows
  CHECK(res.summaries[1].median <= 1.5 * med0);       // median stays put
  CHECK(res.summaries[2].median <= 1.5 * med0);
}

TEST_CASE("activation-weighted error improves at alpha 0.3") {
  PlanarCodebook cb = train_planar_lloyd(6, 0, 101);
  Quantizer q = make_joint_quantizer(cb);
  int improved = 0;
  const int trials = 50;
  for (int t = 0; t < trials; ++t) {
    std::uint64_t seed = 1000 + static_cast<std::uint64_t>(t);
    WeightMatrix w = synth_gaussian(48, 96, seed);
    ChannelRms rms = compute_channel_rms(synth_lognormal_channels(64, 96, 1.0, seed + 7));
    RotationPlan plan = plan_rotation(96, seed + 13);

    auto weighted_err = [&](double alpha) {
      WeightMatrix ws = w;
      ScaleVector sv = build_scales(rms, alpha);
      for (std::size_t i = 0; i < 48; ++i)
        for (std::size_t j = 0; j < 96; ++j) ws.at(i, j) *= sv.s[j];
      PairScales scales = calibrate_pair_scales(ws, plan);
      EncodedMatrix enc = encode_matrix(w, plan, scales, q, &sv);
      WeightMatrix w_hat = decode_matrix(enc, plan, q, scales);
      double acc = 0.0;
      for (std::size_t i = 0; i < 48; ++i)
        for (std::size_t j = 0; j < 96; ++j) {
          double e = w.at(i, j) - w_hat.at(i, j);
          acc += rms.r[j] * rms.r[j] * e * e;
        }
      return acc;
    };
    if (weighted_err(0.3) <= weighted_err(0.0)) ++improved;
  }
  CHECK(improved >= 45);  // 90% of trials
}
