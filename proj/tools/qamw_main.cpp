#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qamw/qamw.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFormat = 2;
constexpr int kExitIdentity = 3;
constexpr int kExitUsage = 4;

int exit_code_for(qamw_status st) {
  switch (st) {
    case QAMW_OK:
      return kExitOk;
    case QAMW_ERR_FORMAT:
    case QAMW_ERR_INTEGRITY:
    case QAMW_ERR_IO:
      return kExitFormat;
    default:
      return kExitUsage;
  }
}

int fail(qamw_status st) {
  std::cerr << "error: " << qamw_last_error() << "\n";
  return exit_code_for(st);
}

// check() bails out of main on the first failing library call.
#define CHECK(call)                       \
  do {                                    \
    qamw_status st_ = (call);             \
    if (st_ != QAMW_OK) return fail(st_); \
  } while (0)

void write_text_atomic(const std::string& path, const std::string& text) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw std::runtime_error("cannot write " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

struct StringOut {
  char* s = nullptr;
  ~StringOut() { qamw_string_free(s); }
};

double relative_frobenius(const qamw_matrix* a, const qamw_matrix* b) {
  size_t ro, co, rb, cb;
  qamw_matrix_dims(a, &ro, &co);
  qamw_matrix_dims(b, &rb, &cb);
  if (ro != rb || co != cb) throw std::runtime_error("shape mismatch");
  const double* pa = qamw_matrix_data(a);
  const double* pb = qamw_matrix_data(b);
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < ro * co; ++i) {
    double d = pa[i] - pb[i];
    num += d * d;
    den += pa[i] * pa[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : 0.0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"QAM-style weight compression toolkit"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a seeded synthetic matrix");
  std::string synth_kind = "gaussian";
  size_t synth_rows = 128, synth_cols = 2048;
  std::uint64_t synth_seed = 0;
  int synth_dof = 4;
  double synth_sigma_log = 1.0;
  std::string synth_out;
  synth->add_option("--kind", synth_kind)
      ->check(CLI::IsMember({"gaussian", "studentt", "activations"}));
  synth->add_option("--rows", synth_rows)->required();
  synth->add_option("--cols", synth_cols)->required();
  synth->add_option("--seed", synth_seed)->required();
  synth->add_option("--dof", synth_dof);
  synth->add_option("--sigma-log", synth_sigma_log);
  synth->add_option("--out", synth_out)->required();

  // train-codebook
  auto* train = app.add_subcommand("train-codebook", "train a joint or polar codebook");
  bool train_joint = false, train_polar = false;
  int train_bits = 11, train_amp_bits = 5, train_phase_bits = 6;
  size_t train_samples = 0;
  std::uint64_t train_seed = 0;
  std::string train_out;
  train->add_flag("--joint", train_joint);
  train->add_flag("--polar", train_polar);
  train->add_option("--bits", train_bits);
  train->add_option("--amp-bits", train_amp_bits);
  train->add_option("--phase-bits", train_phase_bits);
  train->add_option("--samples", train_samples);
  train->add_option("--seed", train_seed);
  train->add_option("--out", train_out)->required();

  // encode
  auto* encode = app.add_subcommand("encode", "encode a matrix with a codebook");
  std::string enc_matrix, enc_codebook, enc_out, enc_manifest_out, enc_activations;
  std::uint64_t enc_seed = 0;
  double enc_alpha = 0.0;
  encode->add_option("--matrix", enc_matrix)->required();
  encode->add_option("--codebook", enc_codebook)->required();
  encode->add_option("--seed", enc_seed)->required();
  encode->add_option("--alpha", enc_alpha);
  encode->add_option("--activations", enc_activations);
  encode->add_option("--out", enc_out)->required();
  encode->add_option("--manifest-out", enc_manifest_out);

  // decode
  auto* decode = app.add_subcommand("decode", "decode an encoded stream");
  std::string dec_input, dec_codebook, dec_out, dec_reference;
  decode->add_option("--input", dec_input)->required();
  decode->add_option("--codebook", dec_codebook)->required();
  decode->add_option("--out", dec_out)->required();
  decode->add_option("--reference", dec_reference);

  // verify
  auto* verify = app.add_subcommand("verify", "run the identity suite and check files");
  std::uint64_t verify_seed = 42;
  std::vector<std::string> verify_paths;
  verify->add_option("--seed", verify_seed);
  verify->add_option("paths", verify_paths);

  // report
  auto* report = app.add_subcommand("report", "aggregate run artifacts into tables");
  std::vector<std::string> report_dirs;
  std::string report_out;
  size_t report_d_in = 2048;
  report->add_option("dirs", report_dirs)->required();
  report->add_option("--out", report_out)->required();
  report->add_option("--d-in", report_d_in);

  // a1-probe
  auto* a1 = app.add_subcommand("a1-probe", "channel scaling error probe over alphas");
  std::string a1_matrix, a1_activations, a1_codebook, a1_out;
  std::vector<double> a1_alphas{0.0, 0.3, 0.5, 0.8};
  std::uint64_t a1_seed = 0;
  a1->add_option("--matrix", a1_matrix)->required();
  a1->add_option("--activations", a1_activations)->required();
  a1->add_option("--codebook", a1_codebook)->required();
  a1->add_option("--alphas", a1_alphas);
  a1->add_option("--seed", a1_seed)->required();
  a1->add_option("--out", a1_out)->required();

  // qq
  auto* qq = app.add_subcommand("qq", "quantile tables of rotated pairs");
  std::string qq_matrix, qq_out;
  std::uint64_t qq_seed = 0;
  size_t qq_pairs = 50000;
  qq->add_option("--matrix", qq_matrix)->required();
  qq->add_option("--seed", qq_seed)->required();
  qq->add_option("--pairs", qq_pairs);
  qq->add_option("--out", qq_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (synth->parsed()) {
      qamw_matrix* m = nullptr;
      if (synth_kind == "gaussian") {
        CHECK(qamw_synth_gaussian(synth_rows, synth_cols, synth_seed, &m));
      } else if (synth_kind == "studentt") {
        CHECK(qamw_synth_student_t(synth_rows, synth_cols, synth_dof, synth_seed, &m));
      } else {
        CHECK(qamw_synth_lognormal_channels(synth_rows, synth_cols, synth_sigma_log, synth_seed,
                                            &m));
      }
      qamw_status st = qamw_matrix_save(m, synth_out.c_str());
      qamw_matrix_free(m);
      if (st != QAMW_OK) return fail(st);
      return kExitOk;
    }

    if (train->parsed()) {
      if (train_joint == train_polar) {
        std::cerr << "error: pass exactly one of --joint or --polar\n";
        return kExitUsage;
      }
      qamw_codebook* cb = nullptr;
      if (train_joint) {
        CHECK(qamw_codebook_train_joint(train_bits, train_samples, train_seed, &cb));
      } else {
        CHECK(qamw_codebook_train_polar(train_amp_bits, train_phase_bits, &cb));
      }
      double d_b = 0.0;
      qamw_codebook_distortion(cb, &d_b);
      qamw_status st = qamw_codebook_save(cb, train_out.c_str());
      if (st == QAMW_OK) std::cout << "distortion " << d_b << "\n";
      if (st != QAMW_OK) return fail(st);
      return kExitOk;
    }

    if (encode->parsed()) {
      qamw_matrix* w = nullptr;
      qamw_codebook* cb = nullptr;
      qamw_matrix* acts = nullptr;
      CHECK(qamw_matrix_load(enc_matrix.c_str(), &w));
      CHECK(qamw_codebook_load(enc_codebook.c_str(), &cb));
      if (!enc_activations.empty()) CHECK(qamw_matrix_load(enc_activations.c_str(), &acts));
      qamw_encoded* enc = nullptr;
      CHECK(qamw_encode(w, cb, enc_seed, enc_alpha, acts, &enc));
      CHECK(qamw_encoded_save(enc, enc_out.c_str()));
      if (!enc_manifest_out.empty()) {
        StringOut json;
        CHECK(qamw_encoded_manifest_json(enc, &json.s));
        write_text_atomic(enc_manifest_out, std::string(json.s) + "\n");
      }
      double bpw = 0.0;
      qamw_encoded_bpw(enc, &bpw);
      std::cout << "bpw " << bpw << "\n";
      return kExitOk;
    }

    if (decode->parsed()) {
      qamw_encoded* enc = nullptr;
      qamw_codebook* cb = nullptr;
      CHECK(qamw_encoded_load(dec_input.c_str(), &enc));
      CHECK(qamw_codebook_load(dec_codebook.c_str(), &cb));
      qamw_matrix* m = nullptr;
      CHECK(qamw_decode(enc, cb, &m));
      CHECK(qamw_matrix_save(m, dec_out.c_str()));
      if (!dec_reference.empty()) {
        qamw_matrix* ref = nullptr;
        CHECK(qamw_matrix_load(dec_reference.c_str(), &ref));
        std::cout << "relative_frobenius_error " << relative_frobenius(ref, m) << "\n";
      }
      return kExitOk;
    }

    if (verify->parsed()) {
      StringOut report_json;
      int pass = 0;
      CHECK(qamw_selftest(verify_seed, &report_json.s, &pass));
      std::cout << report_json.s << "\n";
      for (const std::string& path : verify_paths) {
        qamw_encoded* enc = nullptr;
        qamw_status st = qamw_encoded_load(path.c_str(), &enc);
        if (st != QAMW_OK) {
          std::cerr << path << ": " << qamw_last_error() << "\n";
          return exit_code_for(st);
        }
        StringOut manifest;
        qamw_encoded_manifest_json(enc, &manifest.s);
        std::cout << path << " ok\n";
        qamw_encoded_free(enc);
      }
      if (!pass) {
        std::cerr << "identity suite failed\n";
        return kExitIdentity;
      }
      return kExitOk;
    }

    if (report->parsed()) {
      std::vector<std::filesystem::path> codebooks, encodes;
      for (const std::string& dir : report_dirs) {
        if (!std::filesystem::is_directory(dir)) {
          std::cerr << "error: not a directory: " << dir << "\n";
          return kExitUsage;
        }
        for (const auto& e : std::filesystem::directory_iterator(dir)) {
          if (!e.is_regular_file()) continue;
          auto ext = e.path().extension();
          if (ext == ".qamc") codebooks.push_back(e.path());
          if (ext == ".qamw") encodes.push_back(e.path());
        }
      }
      std::sort(codebooks.begin(), codebooks.end());
      std::sort(encodes.begin(), encodes.end());
      if (codebooks.empty() && encodes.empty()) {
        std::cerr << "error: no artifacts found in the given run dirs\n";
        return kExitUsage;
      }
      std::filesystem::create_directories(report_out);

      std::string ladder = "file,mode,bits,distortion,bpw\n";
      char line[512];
      for (const auto& p : codebooks) {
        qamw_codebook* cb = nullptr;
        CHECK(qamw_codebook_load(p.string().c_str(), &cb));
        qamw_mode mode;
        int bits = 0;
        double d_b = 0.0, bpw = 0.0;
        qamw_codebook_mode(cb, &mode);
        qamw_codebook_bits(cb, &bits);
        qamw_codebook_distortion(cb, &d_b);
        CHECK(qamw_bits_per_weight(bits, report_d_in, &bpw));
        std::snprintf(line, sizeof(line), "%s,%s,%d,%.17g,%.17g\n",
                      p.filename().string().c_str(),
                      mode == QAMW_MODE_JOINT ? "joint" : "polar", bits, d_b, bpw);
        ladder += line;
        qamw_codebook_free(cb);
      }
      write_text_atomic((std::filesystem::path(report_out) / "ladder.csv").string(), ladder);

      std::string manifests = "[";
      for (size_t i = 0; i < encodes.size(); ++i) {
        qamw_encoded* enc = nullptr;
        CHECK(qamw_encoded_load(encodes[i].string().c_str(), &enc));
        StringOut json;
        CHECK(qamw_encoded_manifest_json(enc, &json.s));
        if (i > 0) manifests += ",";
        manifests += json.s;
        qamw_encoded_free(enc);
      }
      manifests += "]\n";
      write_text_atomic((std::filesystem::path(report_out) / "manifests.json").string(),
                        manifests);
      return kExitOk;
    }

    if (a1->parsed()) {
      qamw_matrix* w = nullptr;
      qamw_matrix* acts = nullptr;
      qamw_codebook* cb = nullptr;
      CHECK(qamw_matrix_load(a1_matrix.c_str(), &w));
      CHECK(qamw_matrix_load(a1_activations.c_str(), &acts));
      CHECK(qamw_codebook_load(a1_codebook.c_str(), &cb));
      StringOut json;
      CHECK(qamw_a1_probe(w, acts, a1_alphas.data(), a1_alphas.size(), cb, a1_seed, &json.s));
      write_text_atomic(a1_out, std::string(json.s) + "\n");
      return kExitOk;
    }

    if (qq->parsed()) {
      qamw_matrix* w = nullptr;
      CHECK(qamw_matrix_load(qq_matrix.c_str(), &w));
      StringOut csv;
      CHECK(qamw_qq(w, qq_seed, qq_pairs, &csv.s));
      write_text_atomic(qq_out, csv.s);
      return kExitOk;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFormat;
  }

  return kExitUsage;
}
