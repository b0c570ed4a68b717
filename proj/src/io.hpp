#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "codebooks.hpp"
#include "codec.hpp"

namespace qamw {

// Raw file helpers. Writes go to a temp file in the same directory and
// are renamed into place.
void atomic_write(const std::string& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_bytes(const std::string& path);
std::string file_sha256(const std::string& path);

// Canonical JSON: sorted keys, shortest round-trip number formatting.
std::string manifest_to_json(const EncodedManifest& m);
EncodedManifest manifest_from_json(const std::string& text);

// "QWMX" matrix container: f64 row-major payload with a digest header.
void save_matrix(const WeightMatrix& w, const std::string& path);
WeightMatrix load_matrix(const std::string& path);

// "QAMC" codebook container: joint planar codebook or polar pair.
struct CodebookFile {
  CodecMode mode = CodecMode::joint;
  std::optional<PlanarCodebook> planar;
  std::optional<AmplitudeCodebook> amp;
  std::optional<PhaseQuantizer> phase;
};

void save_planar_codebook(const PlanarCodebook& cb, const std::string& path);
void save_polar_codebook(const AmplitudeCodebook& amp, const PhaseQuantizer& phase,
                         const std::string& path);
CodebookFile load_codebook(const std::string& path);

// "QAMW" encoded stream: manifest JSON + binary16 row norms + packed payload.
void save_encoded(const EncodedMatrix& enc, const std::string& path);
EncodedMatrix load_encoded(const std::string& path);

// Seeded synthetic sources. student-t uses integer dof (sum of squared
// normals for the chi-square); lognormal_channels draws a per-column
// scale exp(sigma_log * g_j) and fills i.i.d. normals times that scale.
WeightMatrix synth_gaussian(std::size_t d_out, std::size_t d_in, std::uint64_t seed);
WeightMatrix synth_student_t(std::size_t d_out, std::size_t d_in, int dof, std::uint64_t seed);
WeightMatrix synth_lognormal_channels(std::size_t d_out, std::size_t d_in, double sigma_log,
                                      std::uint64_t seed);

}  // namespace qamw
