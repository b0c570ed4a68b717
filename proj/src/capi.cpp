#include "qamw/qamw.h"

#include <cstring>
#include <new>
#include <string>

#include <json.hpp>

#include "analysis.hpp"
#include "codebooks.hpp"
#include "codec.hpp"
#include "error.hpp"
#include "io.hpp"
#include "rotation.hpp"
#include "scaling.hpp"
#include "selftest.hpp"

using nlohmann::json;

struct qamw_matrix {
  qamw::WeightMatrix m;
};

struct qamw_codebook {
  qamw::CodebookFile cb;
};

struct qamw_encoded {
  qamw::EncodedMatrix enc;
};

namespace {

thread_local std::string g_last_error;

qamw_status set_error(const std::exception& e) {
  g_last_error = e.what();
  if (const auto* err = dynamic_cast<const qamw::Error*>(&e))
    return static_cast<qamw_status>(static_cast<int>(err->code()));
  return QAMW_ERR_DOMAIN;
}

template <typename Fn>
qamw_status guarded(Fn&& fn) {
  try {
    fn();
    return QAMW_OK;
  } catch (const std::bad_alloc& e) {
    g_last_error = "out of memory";
    return QAMW_ERR_IO;
  } catch (const std::exception& e) {
    return set_error(e);
  }
}

qamw_status require(bool ok, const char* msg) {
  if (ok) return QAMW_OK;
  g_last_error = msg;
  return QAMW_ERR_DOMAIN;
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

qamw::Quantizer make_quantizer(const qamw::CodebookFile& cb) {
  if (cb.mode == qamw::CodecMode::joint) return qamw::make_joint_quantizer(*cb.planar);
  return qamw::make_polar_quantizer(*cb.amp, *cb.phase);
}

}  // namespace

extern "C" {

const char* qamw_last_error(void) { return g_last_error.c_str(); }

void qamw_string_free(char* s) { delete[] s; }

qamw_status qamw_matrix_create(size_t d_out, size_t d_in, const double* data, qamw_matrix** out) {
  if (auto st = require(data != nullptr && out != nullptr, "null argument")) return st;
  return guarded([&] {
    if (d_out == 0 || d_in == 0)
      throw qamw::Error(qamw::Errc::dimension, "matrix dimensions must be positive");
    auto* m = new qamw_matrix;
    m->m.d_out = d_out;
    m->m.d_in = d_in;
    m->m.values.assign(data, data + d_out * d_in);
    *out = m;
  });
}

qamw_status qamw_matrix_load(const char* path, qamw_matrix** out) {
  if (auto st = require(path != nullptr && out != nullptr, "null argument")) return st;
  return guarded([&] { *out = new qamw_matrix{qamw::load_matrix(path)}; });
}

qamw_status qamw_matrix_save(const qamw_matrix* m, const char* path) {
  if (auto st = require(m != nullptr && path != nullptr, "null argument")) return st;
  return guarded([&] { qamw::save_matrix(m->m, path); });
}

qamw_status qamw_matrix_dims(const qamw_matrix* m, size_t* d_out, size_t* d_in) {
  if (auto st = require(m != nullptr && d_out != nullptr && d_in != nullptr, "null argument"))
    return st;
  *d_out = m->m.d_out;
  *d_in = m->m.d_in;
  return QAMW_OK;
}

const double* qamw_matrix_data(const qamw_matrix* m) {
  return m != nullptr ? m->m.values.data() : nullptr;
}

void qamw_matrix_free(qamw_matrix* m) { delete m; }

qamw_status qamw_synth_gaussian(size_t d_out, size_t d_in, uint64_t seed, qamw_matrix** out) {
  if (auto st = require(out != nullptr, "null argument")) return st;
  return guarded([&] { *out = new qamw_matrix{qamw::synth_gaussian(d_out, d_in, seed)}; });
}

qamw_status qamw_synth_student_t(size_t d_out, size_t d_in, int dof, uint64_t seed,
                                 qamw_matrix** out) {
  if (auto st = require(out != nullptr, "null argument")) return st;
  return guarded([&] { *out = new qamw_matrix{qamw::synth_student_t(d_out, d_in, dof, seed)}; });
}

qamw_status qamw_synth_lognormal_channels(size_t d_out, size_t d_in, double sigma_log,
                                          uint64_t seed, qamw_matrix** out) {
  if (auto st = require(out != nullptr, "null argument")) return st;
  return guarded(
      [&] { *out = new qamw_matrix{qamw::synth_lognormal_channels(d_out, d_in, sigma_log, seed)}; });
}

qamw_status qamw_codebook_train_joint(int bits, size_t sample_count, uint64_t seed,
                                      qamw_codebook** out) {
  if (auto st = require(out != nullptr, "null argument")) return st;
  return guarded([&] {
    auto* cb = new qamw_codebook;
    cb->cb.mode = qamw::CodecMode::joint;
    cb->cb.planar = qamw::train_planar_lloyd(bits, sample_count, seed);
    *out = cb;
  });
}

qamw_status qamw_codebook_train_polar(int amp_bits, int phase_bits, qamw_codebook** out) {
  if (auto st = require(out != nullptr, "null argument")) return st;
  return guarded([&] {
    auto* cb = new qamw_codebook;
    cb->cb.mode = qamw::CodecMode::polar;
    cb->cb.amp = qamw::train_rayleigh_lloyd(amp_bits);
    cb->cb.phase = qamw::make_phase_quantizer(phase_bits);
    *out = cb;
  });
}

qamw_status qamw_codebook_save(const qamw_codebook* cb, const char* path) {
  if (auto st = require(cb != nullptr && path != nullptr, "null argument")) return st;
  return guarded([&] {
    if (cb->cb.mode == qamw::CodecMode::joint) {
      qamw::save_planar_codebook(*cb->cb.planar, path);
    } else {
      qamw::save_polar_codebook(*cb->cb.amp, *cb->cb.phase, path);
    }
  });
}

qamw_status qamw_codebook_load(const char* path, qamw_codebook** out) {
  if (auto st = require(path != nullptr && out != nullptr, "null argument")) return st;
  return guarded([&] { *out = new qamw_codebook{qamw::load_codebook(path)}; });
}

qamw_status qamw_codebook_mode(const qamw_codebook* cb, qamw_mode* mode) {
  if (auto st = require(cb != nullptr && mode != nullptr, "null argument")) return st;
  *mode = cb->cb.mode == qamw::CodecMode::joint ? QAMW_MODE_JOINT : QAMW_MODE_POLAR;
  return QAMW_OK;
}

qamw_status qamw_codebook_bits(const qamw_codebook* cb, int* bits) {
  if (auto st = require(cb != nullptr && bits != nullptr, "null argument")) return st;
  return guarded([&] { *bits = make_quantizer(cb->cb).bits(); });
}

qamw_status qamw_codebook_distortion(const qamw_codebook* cb, double* d_b) {
  if (auto st = require(cb != nullptr && d_b != nullptr, "null argument")) return st;
  return guarded([&] {
    if (cb->cb.mode == qamw::CodecMode::joint) {
      *d_b = cb->cb.planar->d_b;
    } else {
      *d_b = qamw::polar_pair_distortion(*cb->cb.amp, *cb->cb.phase, 1.0);
    }
  });
}

void qamw_codebook_free(qamw_codebook* cb) { delete cb; }

qamw_status qamw_encode(const qamw_matrix* w, const qamw_codebook* cb, uint64_t rotation_seed,
                        double alpha, const qamw_matrix* activations, qamw_encoded** out) {
  if (auto st = require(w != nullptr && cb != nullptr && out != nullptr, "null argument"))
    return st;
  return guarded([&] {
    qamw::RotationPlan plan = qamw::plan_rotation(w->m.d_in, rotation_seed);
    qamw::Quantizer q = make_quantizer(cb->cb);
    qamw::ScaleVector sv;
    const qamw::ScaleVector* sv_ptr = nullptr;
    const qamw::WeightMatrix* calib_src = &w->m;
    qamw::WeightMatrix scaled;
    if (alpha > 0.0 && activations == nullptr)
      throw qamw::Error(qamw::Errc::domain, "alpha > 0 requires an activation matrix");
    if (activations != nullptr && alpha > 0.0) {
      qamw::ChannelRms rms = qamw::compute_channel_rms(activations->m);
      if (rms.r.size() != w->m.d_in)
        throw qamw::Error(qamw::Errc::dimension, "activation width does not match d_in");
      sv = qamw::build_scales(rms, alpha);
      sv_ptr = &sv;
      scaled = w->m;
      for (std::size_t i = 0; i < scaled.d_out; ++i)
        for (std::size_t j = 0; j < scaled.d_in; ++j) scaled.at(i, j) *= sv.s[j];
      calib_src = &scaled;
    }
    qamw::PairScales scales = qamw::calibrate_pair_scales(*calib_src, plan);
    *out = new qamw_encoded{qamw::encode_matrix(w->m, plan, scales, q, sv_ptr)};
  });
}

qamw_status qamw_decode(const qamw_encoded* enc, const qamw_codebook* cb, qamw_matrix** out) {
  if (auto st = require(enc != nullptr && cb != nullptr && out != nullptr, "null argument"))
    return st;
  return guarded([&] {
    const qamw::EncodedManifest& m = enc->enc.manifest;
    qamw::RotationPlan plan = qamw::plan_rotation(m.d_in, m.rotation_seed);
    qamw::Quantizer q = make_quantizer(cb->cb);
    qamw::PairScales scales{m.sigmas, m.calib_rows};
    *out = new qamw_matrix{qamw::decode_matrix(enc->enc, plan, q, scales)};
  });
}

qamw_status qamw_encoded_save(const qamw_encoded* enc, const char* path) {
  if (auto st = require(enc != nullptr && path != nullptr, "null argument")) return st;
  return guarded([&] { qamw::save_encoded(enc->enc, path); });
}

qamw_status qamw_encoded_load(const char* path, qamw_encoded** out) {
  if (auto st = require(path != nullptr && out != nullptr, "null argument")) return st;
  return guarded([&] { *out = new qamw_encoded{qamw::load_encoded(path)}; });
}

qamw_status qamw_encoded_manifest_json(const qamw_encoded* enc, char** json_out) {
  if (auto st = require(enc != nullptr && json_out != nullptr, "null argument")) return st;
  return guarded([&] { *json_out = dup_string(qamw::manifest_to_json(enc->enc.manifest)); });
}

qamw_status qamw_encoded_bpw(const qamw_encoded* enc, double* bpw) {
  if (auto st = require(enc != nullptr && bpw != nullptr, "null argument")) return st;
  *bpw = enc->enc.manifest.bpw;
  return QAMW_OK;
}

void qamw_encoded_free(qamw_encoded* enc) { delete enc; }

qamw_status qamw_bits_per_weight(int bits, size_t d_in, double* bpw) {
  if (auto st = require(bpw != nullptr, "null argument")) return st;
  return guarded([&] {
    *bpw = qamw::bits_per_weight(bits, d_in, qamw::row_alignment_bits(bits, d_in));
  });
}

qamw_status qamw_selftest(uint64_t seed, char** report_json, int* pass) {
  if (auto st = require(pass != nullptr, "null argument")) return st;
  return guarded([&] {
    auto results = qamw::run_selftest(seed);
    *pass = qamw::all_passed(results) ? 1 : 0;
    if (report_json != nullptr) {
      json arr = json::array();
      for (const auto& r : results) {
        arr.push_back(json{{"detail", r.detail},
                           {"name", r.name},
                           {"pass", r.pass},
                           {"tolerance", r.tolerance},
                           {"worst", r.worst}});
      }
      *report_json = dup_string(arr.dump());
    }
  });
}

qamw_status qamw_a1_probe(const qamw_matrix* w, const qamw_matrix* activations,
                          const double* alphas, size_t n_alphas, const qamw_codebook* cb,
                          uint64_t rotation_seed, char** json_out) {
  if (auto st = require(w != nullptr && activations != nullptr && alphas != nullptr &&
                            n_alphas > 0 && cb != nullptr && json_out != nullptr,
                        "null argument"))
    return st;
  return guarded([&] {
    if (cb->cb.mode != qamw::CodecMode::joint)
      throw qamw::Error(qamw::Errc::domain, "a1 probe requires a joint codebook");
    qamw::ChannelRms rms = qamw::compute_channel_rms(activations->m);
    std::vector<double> grid(alphas, alphas + n_alphas);
    qamw::A1ProbeResult res = qamw::a1_probe(w->m, rms, grid, *cb->cb.planar, rotation_seed);
    json j;
    j["alphas"] = res.alphas;
    json summaries = json::array();
    for (const auto& s : res.summaries) {
      summaries.push_back(json{{"alpha", s.alpha},
                               {"clamp_rate", s.clamp_rate},
                               {"max", s.max},
                               {"median", s.median},
                               {"p99", s.p99}});
    }
    j["summaries"] = summaries;
    j["table"] = res.table;
    *json_out = dup_string(j.dump());
  });
}

qamw_status qamw_qq(const qamw_matrix* w, uint64_t rotation_seed, size_t sample_pairs,
                    char** csv) {
  if (auto st = require(w != nullptr && csv != nullptr, "null argument")) return st;
  return guarded([&] {
    qamw::RotationPlan plan = qamw::plan_rotation(w->m.d_in, rotation_seed);
    qamw::QqResult r = qamw::qq_diagnostic(w->m, plan, sample_pairs);
    std::string out = "table,level,empirical,theoretical\n";
    char line[128];
    for (std::size_t i = 0; i < r.amplitude.levels.size(); ++i) {
      std::snprintf(line, sizeof(line), "amplitude,%.17g,%.17g,%.17g\n", r.amplitude.levels[i],
                    r.amplitude.empirical[i], r.amplitude.theoretical[i]);
      out += line;
    }
    for (std::size_t i = 0; i < r.real_part.levels.size(); ++i) {
      std::snprintf(line, sizeof(line), "real,%.17g,%.17g,%.17g\n", r.real_part.levels[i],
                    r.real_part.empirical[i], r.real_part.theoretical[i]);
      out += line;
    }
    std::snprintf(line, sizeof(line), "# amplitude_body_deviation=%.17g scale=%.17g\n",
                  r.amplitude.body_deviation, r.amplitude.scale);
    out += line;
    std::snprintf(line, sizeof(line), "# real_body_deviation=%.17g scale=%.17g\n",
                  r.real_part.body_deviation, r.real_part.scale);
    out += line;
    *csv = dup_string(out);
  });
}

qamw_status qamw_file_sha256(const char* path, char** hex) {
  if (auto st = require(path != nullptr && hex != nullptr, "null argument")) return st;
  return guarded([&] { *hex = dup_string(qamw::file_sha256(path)); });
}

}  // extern "C"
