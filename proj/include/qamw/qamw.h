#ifndef QAMW_H
#define QAMW_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes returned by every fallible call. On failure,
 * qamw_last_error() returns a thread-local message for the last
 * failing call on the current thread. */
typedef enum qamw_status {
  QAMW_OK = 0,
  QAMW_ERR_DIMENSION = 1,
  QAMW_ERR_FORMAT = 2,
  QAMW_ERR_INTEGRITY = 3,
  QAMW_ERR_CALIBRATION = 4,
  QAMW_ERR_DOMAIN = 5,
  QAMW_ERR_ENCODING = 6,
  QAMW_ERR_IO = 7
} qamw_status;

typedef enum qamw_mode { QAMW_MODE_POLAR = 0, QAMW_MODE_JOINT = 1 } qamw_mode;

typedef struct qamw_matrix qamw_matrix;
typedef struct qamw_codebook qamw_codebook;
typedef struct qamw_encoded qamw_encoded;

const char* qamw_last_error(void);
void qamw_string_free(char* s);

/* Matrices (row-major f64). */
qamw_status qamw_matrix_create(size_t d_out, size_t d_in, const double* data, qamw_matrix** out);
qamw_status qamw_matrix_load(const char* path, qamw_matrix** out);
qamw_status qamw_matrix_save(const qamw_matrix* m, const char* path);
qamw_status qamw_matrix_dims(const qamw_matrix* m, size_t* d_out, size_t* d_in);
const double* qamw_matrix_data(const qamw_matrix* m);
void qamw_matrix_free(qamw_matrix* m);

/* Seeded synthetic sources. */
qamw_status qamw_synth_gaussian(size_t d_out, size_t d_in, uint64_t seed, qamw_matrix** out);
qamw_status qamw_synth_student_t(size_t d_out, size_t d_in, int dof, uint64_t seed,
                                 qamw_matrix** out);
qamw_status qamw_synth_lognormal_channels(size_t d_out, size_t d_in, double sigma_log,
                                          uint64_t seed, qamw_matrix** out);

/* Codebooks. sample_count 0 selects the default 2^bits * 256. */
qamw_status qamw_codebook_train_joint(int bits, size_t sample_count, uint64_t seed,
                                      qamw_codebook** out);
qamw_status qamw_codebook_train_polar(int amp_bits, int phase_bits, qamw_codebook** out);
qamw_status qamw_codebook_save(const qamw_codebook* cb, const char* path);
qamw_status qamw_codebook_load(const char* path, qamw_codebook** out);
qamw_status qamw_codebook_mode(const qamw_codebook* cb, qamw_mode* mode);
qamw_status qamw_codebook_bits(const qamw_codebook* cb, int* bits);
/* Per-pair MSE on the unit circular Gaussian: held-out estimate for
 * joint codebooks, closed form for polar pairs. */
qamw_status qamw_codebook_distortion(const qamw_codebook* cb, double* d_b);
void qamw_codebook_free(qamw_codebook* cb);

/* Encode/decode. activations may be NULL (no channel scaling); with
 * activations, per-channel scales r_j^alpha are applied before coding
 * and recorded in the manifest. */
qamw_status qamw_encode(const qamw_matrix* w, const qamw_codebook* cb, uint64_t rotation_seed,
                        double alpha, const qamw_matrix* activations, qamw_encoded** out);
qamw_status qamw_decode(const qamw_encoded* enc, const qamw_codebook* cb, qamw_matrix** out);
qamw_status qamw_encoded_save(const qamw_encoded* enc, const char* path);
qamw_status qamw_encoded_load(const char* path, qamw_encoded** out);
qamw_status qamw_encoded_manifest_json(const qamw_encoded* enc, char** json);
qamw_status qamw_encoded_bpw(const qamw_encoded* enc, double* bpw);
void qamw_encoded_free(qamw_encoded* enc);

/* bpw accounting for a hypothetical (bits, d_in) configuration. */
qamw_status qamw_bits_per_weight(int bits, size_t d_in, double* bpw);

/* Identity suite. Returns QAMW_OK with *pass = 0 when a check fails;
 * a nonzero status means the suite itself could not run. */
qamw_status qamw_selftest(uint64_t seed, char** report_json, int* pass);

/* Per-channel scaled-domain error probe over an alpha grid (JSON). */
qamw_status qamw_a1_probe(const qamw_matrix* w, const qamw_matrix* activations,
                          const double* alphas, size_t n_alphas, const qamw_codebook* cb,
                          uint64_t rotation_seed, char** json);

/* Quantile tables of rotated pairs against Rayleigh/Gaussian fits (CSV). */
qamw_status qamw_qq(const qamw_matrix* w, uint64_t rotation_seed, size_t sample_pairs,
                    char** csv);

qamw_status qamw_file_sha256(const char* path, char** hex);

#ifdef __cplusplus
}
#endif

#endif /* QAMW_H */
