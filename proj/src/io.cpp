#include "io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <openssl/evp.h>
#include <zlib.h>

#include <json.hpp>

#include "digest.hpp"
#include "error.hpp"
#include "rng.hpp"

namespace qamw {

namespace {

using nlohmann::json;

void append_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void append_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void append_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void append_f64(std::vector<std::uint8_t>& out, double v) {
  append_u64(out, std::bit_cast<std::uint64_t>(v));
}

struct Cursor {
  const std::uint8_t* p;
  std::size_t left;

  void need(std::size_t n) const {
    if (left < n) throw Error(Errc::format, "truncated file");
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    p += 2;
    left -= 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    p += 4;
    left -= 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    p += 8;
    left -= 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  void bytes(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, p, n);
    p += n;
    left -= n;
  }
};

void expect_magic(Cursor& c, const char* magic) {
  char got[4];
  c.bytes(got, 4);
  if (std::memcmp(got, magic, 4) != 0) throw Error(Errc::format, "bad file magic");
}

std::string canonical_dump(const json& j) { return j.dump(); }

json meta_to_json(const TrainMeta& m) {
  return json{{"converged", m.converged},
              {"final_rel_improvement", m.final_rel_improvement},
              {"iterations", m.iterations}};
}

TrainMeta meta_from_json(const json& j) {
  TrainMeta m;
  m.converged = j.at("converged").get<bool>();
  m.final_rel_improvement = j.at("final_rel_improvement").get<double>();
  m.iterations = j.at("iterations").get<int>();
  return m;
}

}  // namespace

std::string sha256_hex(const std::uint8_t* data, std::size_t len) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int md_len = 0;
  if (EVP_Digest(data, len, md, &md_len, EVP_sha256(), nullptr) != 1)
    throw Error(Errc::io, "digest computation failed");
  static const char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * md_len);
  for (unsigned int i = 0; i < md_len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xf]);
  }
  return out;
}

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t len) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(len)));
}

void atomic_write(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  namespace fs = std::filesystem;
  fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(Errc::io, "cannot open " + tmp.string() + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error(Errc::io, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw Error(Errc::io, "rename failed: " + ec.message());
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw Error(Errc::io, "cannot open " + path);
  std::streamsize size = f.tellg();
  f.seekg(0);
  std::vector<std::uint8_t> out(static_cast<std::size_t>(size));
  if (size > 0) f.read(reinterpret_cast<char*>(out.data()), size);
  if (!f) throw Error(Errc::io, "short read from " + path);
  return out;
}

std::string file_sha256(const std::string& path) {
  auto bytes = read_bytes(path);
  return sha256_hex(bytes.data(), bytes.size());
}

std::string manifest_to_json(const EncodedManifest& m) {
  json j;
  j["amp_bits"] = m.amp_bits;
  j["bits"] = m.bits;
  j["block"] = m.block;
  j["bpw"] = m.bpw;
  j["calib_rows"] = m.calib_rows;
  j["d_in"] = m.d_in;
  j["d_out"] = m.d_out;
  j["mode"] = m.mode == CodecMode::joint ? "joint" : "polar";
  j["payload_sha256"] = m.payload_sha256;
  j["phase_bits"] = m.phase_bits;
  j["rotation_seed"] = m.rotation_seed;
  j["row_crc32"] = m.row_crc32;
  j["scale_alpha"] = m.scale_alpha;
  j["scale_vec"] = m.scale_vec;
  j["sigmas"] = m.sigmas;
  return canonical_dump(j);
}

EncodedManifest manifest_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(Errc::format, std::string("manifest parse error: ") + e.what());
  }
  try {
    EncodedManifest m;
    m.amp_bits = j.at("amp_bits").get<int>();
    m.bits = j.at("bits").get<int>();
    m.block = j.at("block").get<std::size_t>();
    m.bpw = j.at("bpw").get<double>();
    m.calib_rows = j.at("calib_rows").get<std::size_t>();
    m.d_in = j.at("d_in").get<std::size_t>();
    m.d_out = j.at("d_out").get<std::size_t>();
    std::string mode = j.at("mode").get<std::string>();
    if (mode == "joint") {
      m.mode = CodecMode::joint;
    } else if (mode == "polar") {
      m.mode = CodecMode::polar;
    } else {
      throw Error(Errc::format, "unknown codec mode: " + mode);
    }
    m.payload_sha256 = j.at("payload_sha256").get<std::string>();
    m.phase_bits = j.at("phase_bits").get<int>();
    m.rotation_seed = j.at("rotation_seed").get<std::uint64_t>();
    m.row_crc32 = j.at("row_crc32").get<std::vector<std::uint32_t>>();
    m.scale_alpha = j.at("scale_alpha").get<double>();
    m.scale_vec = j.at("scale_vec").get<std::vector<double>>();
    m.sigmas = j.at("sigmas").get<std::vector<double>>();
    return m;
  } catch (const json::exception& e) {
    throw Error(Errc::format, std::string("manifest field error: ") + e.what());
  }
}

void save_matrix(const WeightMatrix& w, const std::string& path) {
  std::vector<std::uint8_t> payload;
  payload.reserve(8 * w.values.size());
  for (double v : w.values) append_f64(payload, v);
  std::string digest = sha256_hex(payload.data(), payload.size());

  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'Q', 'W', 'M', 'X'});
  append_u32(out, 1);
  append_u64(out, w.d_out);
  append_u64(out, w.d_in);
  out.insert(out.end(), digest.begin(), digest.end());
  out.insert(out.end(), payload.begin(), payload.end());
  atomic_write(path, out);
}

WeightMatrix load_matrix(const std::string& path) {
  auto bytes = read_bytes(path);
  Cursor c{bytes.data(), bytes.size()};
  expect_magic(c, "QWMX");
  if (c.u32() != 1) throw Error(Errc::format, "unsupported matrix container version");
  WeightMatrix w;
  w.d_out = c.u64();
  w.d_in = c.u64();
  char digest[64];
  c.bytes(digest, 64);
  std::size_t count = w.d_out * w.d_in;
  c.need(8 * count);
  if (sha256_hex(c.p, 8 * count) != std::string(digest, 64))
    throw Error(Errc::integrity, "matrix payload digest mismatch");
  w.values.resize(count);
  for (auto& v : w.values) v = c.f64();
  return w;
}

namespace {

void save_codebook_json(const json& body, const std::string& path) {
  std::string text = canonical_dump(body);
  std::string digest = sha256_hex(reinterpret_cast<const std::uint8_t*>(text.data()), text.size());
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'Q', 'A', 'M', 'C'});
  append_u32(out, 1);
  append_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), digest.begin(), digest.end());
  atomic_write(path, out);
}

}  // namespace

void save_planar_codebook(const PlanarCodebook& cb, const std::string& path) {
  json centroids = json::array();
  for (const auto& c : cb.centroids)
    centroids.push_back(json::array({static_cast<double>(c[0]), static_cast<double>(c[1])}));
  json j;
  j["bits"] = cb.bits;
  j["centroids"] = centroids;
  j["d_b"] = cb.d_b;
  j["kind"] = "planar";
  j["meta"] = meta_to_json(cb.meta);
  j["train_seed"] = cb.train_seed;
  save_codebook_json(j, path);
}

void save_polar_codebook(const AmplitudeCodebook& amp, const PhaseQuantizer& phase,
                         const std::string& path) {
  json j;
  j["amp"] = json{{"bits", amp.bits},
                  {"boundaries", amp.boundaries},
                  {"c_lm", amp.c_lm},
                  {"levels", amp.levels},
                  {"m_a", amp.m_a},
                  {"meta", meta_to_json(amp.meta)},
                  {"r_max", amp.r_max}};
  j["kind"] = "polar";
  j["phase"] = json{{"bits", phase.bits}};
  save_codebook_json(j, path);
}

CodebookFile load_codebook(const std::string& path) {
  auto bytes = read_bytes(path);
  Cursor c{bytes.data(), bytes.size()};
  expect_magic(c, "QAMC");
  if (c.u32() != 1) throw Error(Errc::format, "unsupported codebook container version");
  std::uint64_t len = c.u64();
  c.need(len);
  std::string text(reinterpret_cast<const char*>(c.p), len);
  c.p += len;
  c.left -= len;
  char digest[64];
  c.bytes(digest, 64);
  if (sha256_hex(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()) !=
      std::string(digest, 64))
    throw Error(Errc::integrity, "codebook digest mismatch");

  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(Errc::format, std::string("codebook parse error: ") + e.what());
  }
  try {
    CodebookFile out;
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "planar") {
      out.mode = CodecMode::joint;
      PlanarCodebook cb;
      cb.bits = j.at("bits").get<int>();
      for (const auto& c2 : j.at("centroids"))
        cb.centroids.push_back({c2.at(0).get<float>(), c2.at(1).get<float>()});
      if (cb.centroids.size() != (std::size_t{1} << cb.bits))
        throw Error(Errc::format, "centroid count does not match bits");
      cb.d_b = j.at("d_b").get<double>();
      cb.meta = meta_from_json(j.at("meta"));
      cb.train_seed = j.at("train_seed").get<std::uint64_t>();
      out.planar = std::move(cb);
    } else if (kind == "polar") {
      out.mode = CodecMode::polar;
      AmplitudeCodebook amp;
      const json& ja = j.at("amp");
      amp.bits = ja.at("bits").get<int>();
      amp.boundaries = ja.at("boundaries").get<std::vector<double>>();
      amp.c_lm = ja.at("c_lm").get<double>();
      amp.levels = ja.at("levels").get<std::vector<double>>();
      amp.m_a = ja.at("m_a").get<double>();
      amp.meta = meta_from_json(ja.at("meta"));
      amp.r_max = ja.at("r_max").get<double>();
      if (amp.levels.size() != (std::size_t{1} << amp.bits) ||
          amp.boundaries.size() + 1 != amp.levels.size())
        throw Error(Errc::format, "amplitude level count does not match bits");
      out.amp = std::move(amp);
      out.phase = make_phase_quantizer(j.at("phase").at("bits").get<int>());
    } else {
      throw Error(Errc::format, "unknown codebook kind: " + kind);
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(Errc::format, std::string("codebook field error: ") + e.what());
  }
}

void save_encoded(const EncodedMatrix& enc, const std::string& path) {
  std::string manifest = manifest_to_json(enc.manifest);
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'Q', 'A', 'M', 'W'});
  append_u32(out, 1);
  append_u64(out, manifest.size());
  out.insert(out.end(), manifest.begin(), manifest.end());
  append_u64(out, enc.row_norms.size());
  for (std::uint16_t h : enc.row_norms) append_u16(out, h);
  append_u64(out, enc.payload.size());
  out.insert(out.end(), enc.payload.begin(), enc.payload.end());
  atomic_write(path, out);
}

EncodedMatrix load_encoded(const std::string& path) {
  auto bytes = read_bytes(path);
  Cursor c{bytes.data(), bytes.size()};
  expect_magic(c, "QAMW");
  if (c.u32() != 1) throw Error(Errc::format, "unsupported encoded container version");
  std::uint64_t mlen = c.u64();
  c.need(mlen);
  std::string manifest(reinterpret_cast<const char*>(c.p), mlen);
  c.p += mlen;
  c.left -= mlen;

  EncodedMatrix enc;
  enc.manifest = manifest_from_json(manifest);
  std::uint64_t norms = c.u64();
  if (norms != enc.manifest.d_out) throw Error(Errc::format, "row norm count mismatch");
  enc.row_norms.resize(norms);
  for (auto& h : enc.row_norms) h = c.u16();
  std::uint64_t plen = c.u64();
  c.need(plen);
  enc.payload.assign(c.p, c.p + plen);
  c.p += plen;
  c.left -= plen;
  if (c.left != 0) throw Error(Errc::format, "trailing bytes in encoded file");
  if (plen != enc.bytes_per_row() * enc.manifest.d_out)
    throw Error(Errc::format, "payload size does not match accounting");
  return enc;
}

WeightMatrix synth_gaussian(std::size_t d_out, std::size_t d_in, std::uint64_t seed) {
  if (d_out == 0 || d_in == 0) throw Error(Errc::dimension, "empty synthetic matrix");
  WeightMatrix w;
  w.d_out = d_out;
  w.d_in = d_in;
  w.values.resize(d_out * d_in);
  SplitMix64 rng(seed);
  for (auto& v : w.values) v = rng.gaussian();
  return w;
}

WeightMatrix synth_student_t(std::size_t d_out, std::size_t d_in, int dof, std::uint64_t seed) {
  if (d_out == 0 || d_in == 0) throw Error(Errc::dimension, "empty synthetic matrix");
  if (dof < 1) throw Error(Errc::domain, "degrees of freedom must be >= 1");
  WeightMatrix w;
  w.d_out = d_out;
  w.d_in = d_in;
  w.values.resize(d_out * d_in);
  SplitMix64 rng(seed);
  for (auto& v : w.values) {
    double z = rng.gaussian();
    double chi2 = 0.0;
    for (int k = 0; k < dof; ++k) {
      double g = rng.gaussian();
      chi2 += g * g;
    }
    v = z / std::sqrt(chi2 / static_cast<double>(dof));
  }
  return w;
}

WeightMatrix synth_lognormal_channels(std::size_t d_out, std::size_t d_in, double sigma_log,
                                      std::uint64_t seed) {
  if (d_out == 0 || d_in == 0) throw Error(Errc::dimension, "empty synthetic matrix");
  if (!(sigma_log >= 0.0)) throw Error(Errc::domain, "sigma_log must be nonnegative");
  WeightMatrix w;
  w.d_out = d_out;
  w.d_in = d_in;
  w.values.resize(d_out * d_in);
  SplitMix64 scale_rng(derive_seed(seed, 0));
  std::vector<double> scale(d_in);
  for (auto& s : scale) s = std::exp(sigma_log * scale_rng.gaussian());
  SplitMix64 rng(derive_seed(seed, 1));
  for (std::size_t i = 0; i < d_out; ++i)
    for (std::size_t j = 0; j < d_in; ++j) w.values[i * d_in + j] = scale[j] * rng.gaussian();
  return w;
}

}  // namespace qamw
