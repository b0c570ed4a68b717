#include "rotation.hpp"

#include <cmath>
#include <cstring>

#include "error.hpp"
#include "rng.hpp"

namespace qamw {

SignMask make_sign_mask(std::uint64_t seed, std::size_t d_in) {
  SignMask m;
  m.seed = seed;
  m.signs.resize(d_in);
  SplitMix64 g(seed);
  for (std::size_t i = 0; i < d_in; ++i) {
    m.signs[i] = (g.next() >> 63) ? -1 : 1;
  }
  return m;
}

RotationPlan plan_rotation(std::size_t d_in, std::uint64_t seed, std::size_t max_block) {
  if (d_in < 2 || d_in % 2 != 0) {
    throw Error(Errc::dimension, "rotation plan requires even d_in >= 2, got " + std::to_string(d_in));
  }
  std::size_t b = d_in & (~d_in + 1);  // largest power of two dividing d_in
  if (b > max_block) b = max_block;
  RotationPlan plan;
  plan.d_in = d_in;
  plan.block = b;
  plan.mask = make_sign_mask(seed, d_in);
  return plan;
}

namespace {

// In-place unnormalized fast Walsh-Hadamard butterfly on one block.
void fwht_block(double* x, std::size_t b) {
  for (std::size_t h = 1; h < b; h <<= 1) {
    for (std::size_t i = 0; i < b; i += 2 * h) {
      for (std::size_t j = i; j < i + h; ++j) {
        double a = x[j];
        double c = x[j + h];
        x[j] = a + c;
        x[j + h] = a - c;
      }
    }
  }
}

void check_len(const RotationPlan& plan, std::size_t n) {
  if (n != plan.d_in) {
    throw Error(Errc::dimension, "rotation input length " + std::to_string(n) +
                                     " does not match plan d_in " + std::to_string(plan.d_in));
  }
}

}  // namespace

void forward_rotate(const RotationPlan& plan, std::span<const double> v, std::span<double> out) {
  check_len(plan, v.size());
  check_len(plan, out.size());
  const double inv_sqrt_b = 1.0 / std::sqrt(static_cast<double>(plan.block));
  for (std::size_t i = 0; i < plan.d_in; ++i) {
    out[i] = plan.mask.signs[i] < 0 ? -v[i] : v[i];
  }
  for (std::size_t off = 0; off < plan.d_in; off += plan.block) {
    fwht_block(out.data() + off, plan.block);
  }
  for (std::size_t i = 0; i < plan.d_in; ++i) out[i] *= inv_sqrt_b;
}

void inverse_rotate(const RotationPlan& plan, std::span<const double> y, std::span<double> out) {
  check_len(plan, y.size());
  check_len(plan, out.size());
  const double inv_sqrt_b = 1.0 / std::sqrt(static_cast<double>(plan.block));
  std::memcpy(out.data(), y.data(), plan.d_in * sizeof(double));
  for (std::size_t off = 0; off < plan.d_in; off += plan.block) {
    fwht_block(out.data() + off, plan.block);
  }
  for (std::size_t i = 0; i < plan.d_in; ++i) {
    double s = out[i] * inv_sqrt_b;
    out[i] = plan.mask.signs[i] < 0 ? -s : s;
  }
}

std::vector<double> forward_rotate(const RotationPlan& plan, std::span<const double> v) {
  std::vector<double> out(v.size());
  forward_rotate(plan, v, out);
  return out;
}

std::vector<double> inverse_rotate(const RotationPlan& plan, std::span<const double> y) {
  std::vector<double> out(y.size());
  inverse_rotate(plan, y, out);
  return out;
}

}  // namespace qamw
