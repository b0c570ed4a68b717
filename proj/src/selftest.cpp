#include "selftest.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

#include "analysis.hpp"
#include "codebooks.hpp"
#include "codec.hpp"
#include "error.hpp"
#include "io.hpp"
#include "rng.hpp"
#include "rotation.hpp"

namespace qamw {

namespace {

SelfTestResult rotation_check(std::uint64_t seed) {
  SelfTestResult r{"rotation-isometry", true, 0.0, 1e-12, ""};
  SplitMix64 rng(derive_seed(seed, 1));
  for (std::size_t d : {std::size_t{2}, std::size_t{16}, std::size_t{64}, std::size_t{2048}}) {
    RotationPlan plan = plan_rotation(d, rng.next());
    for (int t = 0; t < 50; ++t) {
      std::vector<double> v(d);
      for (auto& x : v) x = rng.gaussian();
      std::vector<double> y = forward_rotate(plan, v);
      std::vector<double> back = inverse_rotate(plan, y);
      double nv = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
      double ny = std::sqrt(std::inner_product(y.begin(), y.end(), y.begin(), 0.0));
      r.worst = std::max(r.worst, std::abs(ny - nv) / nv);
      for (std::size_t j = 0; j < d; ++j)
        r.worst = std::max(r.worst, std::abs(back[j] - v[j]) / std::max(1.0, std::abs(v[j])));
    }
  }
  r.pass = r.worst <= r.tolerance;
  return r;
}

SelfTestResult pairwise_check(std::uint64_t seed) {
  SelfTestResult r{"pairwise-decomposition", true, 0.0, 1e-12, ""};
  SplitMix64 rng(derive_seed(seed, 2));
  for (int t = 0; t < 2000; ++t) {
    std::complex<double> z(rng.gaussian(), rng.gaussian());
    std::complex<double> zh(rng.gaussian(), rng.gaussian());
    PairwiseDecomposition d = pairwise_decomposition(z, zh);
    double res = std::abs(d.total - d.amplitude_term - d.phase_term) / std::max(1.0, d.total);
    r.worst = std::max(r.worst, res);
  }
  r.pass = r.worst <= r.tolerance;
  return r;
}

SelfTestResult trace_check(std::uint64_t seed) {
  SelfTestResult r{"trace-identity", true, 0.0, 1e-8, ""};
  SplitMix64 rng(derive_seed(seed, 3));
  for (int t = 0; t < 10; ++t) {
    std::size_t n = 2 + rng.next() % 32;
    std::size_t d_in = 2 + rng.next() % 32;
    std::size_t d_out = 1 + rng.next() % 32;
    WeightMatrix x{n, d_in, {}}, w{d_out, d_in, {}}, wh{d_out, d_in, {}};
    x.values.resize(n * d_in);
    w.values.resize(d_out * d_in);
    wh.values.resize(d_out * d_in);
    for (auto& v : x.values) v = rng.gaussian();
    for (auto& v : w.values) v = rng.gaussian();
    for (std::size_t i = 0; i < wh.values.size(); ++i)
      wh.values[i] = w.values[i] + 0.01 * rng.gaussian();
    LayerOutputError e = layer_output_error(x, w, wh);
    double res = std::abs(e.frob_direct - e.trace_form) / std::max(1.0, e.frob_direct);
    r.worst = std::max(r.worst, res);
  }
  r.pass = r.worst <= r.tolerance;
  return r;
}

SelfTestResult kl_check(std::uint64_t seed) {
  SelfTestResult r{"kl-bridge-remainder", true, 0.0, 1.0, "residual over cubic bound"};
  SplitMix64 rng(derive_seed(seed, 4));
  for (std::size_t vocab : {std::size_t{2}, std::size_t{10}, std::size_t{100}}) {
    for (int t = 0; t < 200; ++t) {
      std::vector<double> p(vocab), delta(vocab);
      double sum = 0.0;
      for (auto& v : p) {
        v = -std::log(rng.uniform());
        sum += v;
      }
      for (auto& v : p) v /= sum;
      double norm = 0.0;
      for (auto& v : delta) {
        v = rng.gaussian();
        norm += v * v;
      }
      double target = 0.01 + 0.98 * rng.uniform();
      for (auto& v : delta) v *= target / std::sqrt(norm);
      KlBridgeResult k = kl_bridge(p, delta);
      if (k.cubic_bound > 0.0) r.worst = std::max(r.worst, k.residual / k.cubic_bound);
    }
  }
  r.pass = r.worst <= r.tolerance;
  return r;
}

SelfTestResult accounting_check(std::uint64_t seed) {
  SelfTestResult r{"codec-error-accounting", true, 0.0, 1e-9, ""};
  PlanarCodebook cb = train_planar_lloyd(4, 0, derive_seed(seed, 5));
  WeightMatrix w = synth_gaussian(32, 64, derive_seed(seed, 6));
  RotationPlan plan = plan_rotation(w.d_in, derive_seed(seed, 7));
  PairScales scales = calibrate_pair_scales(w, plan);
  Quantizer q = make_joint_quantizer(cb);
  EncodeTrace trace;
  EncodedMatrix enc = encode_matrix(w, plan, scales, q, nullptr, &trace);
  for (std::size_t i = 0; i < trace.pair_error_sums.size(); ++i) {
    double diff = std::abs(trace.pair_error_sums[i] - trace.direction_errors[i]);
    r.worst = std::max(r.worst, diff / std::max(1.0, trace.direction_errors[i]));
  }
  EncodedMatrix again = encode_matrix(w, plan, scales, q);
  if (again.manifest.payload_sha256 != enc.manifest.payload_sha256) {
    r.pass = false;
    r.detail = "re-encode payload digest changed";
    return r;
  }
  WeightMatrix w_hat = decode_matrix(enc, plan, q, scales);
  if (w_hat.d_out != w.d_out || w_hat.d_in != w.d_in) {
    r.pass = false;
    r.detail = "decode shape mismatch";
    return r;
  }
  r.pass = r.worst <= r.tolerance;
  return r;
}

}  // namespace

std::vector<SelfTestResult> run_selftest(std::uint64_t seed) {
  std::vector<SelfTestResult> out;
  auto run = [&](SelfTestResult (*fn)(std::uint64_t), const char* name) {
    try {
      out.push_back(fn(seed));
    } catch (const std::exception& e) {
      out.push_back({name, false, 0.0, 0.0, e.what()});
    }
  };
  run(rotation_check, "rotation-isometry");
  run(pairwise_check, "pairwise-decomposition");
  run(trace_check, "trace-identity");
  run(kl_check, "kl-bridge-remainder");
  run(accounting_check, "codec-error-accounting");
  return out;
}

bool all_passed(const std::vector<SelfTestResult>& results) {
  return std::all_of(results.begin(), results.end(),
                     [](const SelfTestResult& r) { return r.pass; });
}

}  // namespace qamw
