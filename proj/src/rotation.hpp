#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace qamw {

// Per-coordinate +-1 mask regenerated bit-for-bit from a 64-bit seed.
// Generator is splitmix64; sign is +1 iff the top bit of the draw is 0.
struct SignMask {
  std::uint64_t seed = 0;
  std::vector<std::int8_t> signs;
};

SignMask make_sign_mask(std::uint64_t seed, std::size_t d_in);

// Deterministic sign-masked block-Hadamard rotation. Forward is F*S,
// inverse is S*F; the composition is the identity in exact arithmetic
// (the masked transform itself is not an involution).
struct RotationPlan {
  std::size_t d_in = 0;
  std::size_t block = 0;
  SignMask mask;
};

// b = min(largest power of two dividing d_in, max_block). d_in must be
// even and >= 2 (coordinate pairing downstream needs even length).
RotationPlan plan_rotation(std::size_t d_in, std::uint64_t seed, std::size_t max_block = 1024);

void forward_rotate(const RotationPlan& plan, std::span<const double> v, std::span<double> out);
void inverse_rotate(const RotationPlan& plan, std::span<const double> y, std::span<double> out);

std::vector<double> forward_rotate(const RotationPlan& plan, std::span<const double> v);
std::vector<double> inverse_rotate(const RotationPlan& plan, std::span<const double> y);

}  // namespace qamw
