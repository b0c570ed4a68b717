#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

namespace qamw {

struct WeightMatrix;
struct RotationPlan;
struct EncodeTrace;

// Second-moment summary of an activation matrix X (n x d): either the
// diagonal r_j^2 = mean_t X_tj^2 or the full M_x = X^T X / n.
struct ActivationMoments {
  enum class Mode { diagonal, full };

  Mode mode = Mode::diagonal;
  std::size_t dim = 0;
  std::size_t n = 0;
  std::vector<double> diag;  // length dim (diagonal mode)
  std::vector<double> full;  // dim*dim row-major (full mode)

  double lambda_max() const;
  void validate() const;  // symmetry and PSD checks
};

ActivationMoments diagonal_moments(std::vector<double> r_squared, std::size_t n_samples);
ActivationMoments full_moments(std::vector<double> m, std::size_t dim, std::size_t n_samples);

struct IdentityCheck {
  double residual = 0.0;
  double tolerance = 0.0;
  bool pass = true;
};

struct DistortionReport {
  double rho_w = 0.0;          // ||dW||_F / ||W||_F
  double rho_o = 0.0;          // sqrt(Tr(dW M dW^T) / Tr(W M W^T))
  double amplification = 0.0;  // rho_o / rho_w
  double pair_error_mean = 0.0;
  double pair_error_max = 0.0;
  double predicted_distortion = 0.0;  // closed-form or held-out D_B, caller supplied
  IdentityCheck pairwise_identity;
  IdentityCheck trace_identity;
  IdentityCheck accounting_identity;
};

DistortionReport distortion_report(const WeightMatrix& w, const WeightMatrix& w_hat,
                                   const ActivationMoments& m,
                                   const EncodeTrace* trace = nullptr,
                                   double predicted_distortion = 0.0);

struct PairwiseDecomposition {
  double total = 0.0;
  double amplitude_term = 0.0;
  double phase_term = 0.0;
};

// ||z - z_hat||^2 = (a - a_hat)^2 + 2 a a_hat (1 - cos(theta - theta_hat))
PairwiseDecomposition pairwise_decomposition(std::complex<double> z, std::complex<double> z_hat);

struct LayerOutputError {
  double frob_direct = 0.0;  // ||X W^T - X W_hat^T||_F^2
  double trace_form = 0.0;   // Tr(dW X^T X dW^T)
  double relative_rmse = 0.0;
};

LayerOutputError layer_output_error(const WeightMatrix& x, const WeightMatrix& w,
                                    const WeightMatrix& w_hat);

double amplification_ratio(const WeightMatrix& w, const WeightMatrix& w_hat,
                           const ActivationMoments& m);

struct KlBridgeResult {
  double exact_kl = 0.0;
  double quadratic_term = 0.0;  // (1/2) delta^T F_p delta
  double cubic_bound = 0.0;     // (1/3) ||delta||_2^3
  double residual = 0.0;        // |exact - quadratic|
};

KlBridgeResult kl_bridge(const std::vector<double>& p, const std::vector<double>& delta);

struct CompositeBoundInputs {
  double d_b = 0.0;
  double c_w = 0.0;
  double lipschitz = 1.0;
  std::size_t quantized_layers = 0;
};

// U = (L^2 L_q / 8) * C_W * D_B
double composite_bound(const CompositeBoundInputs& inputs);

struct Layer {
  const WeightMatrix* w = nullptr;
  const ActivationMoments* moments = nullptr;
};

// C_W = sum_l lambda_max^(l) * ||W_l||_F^2
double compute_C_W(const std::vector<Layer>& layers);

struct QqTable {
  std::vector<double> levels;       // quantile levels in (0, 1)
  std::vector<double> empirical;    // sorted sample quantiles
  std::vector<double> theoretical;  // fitted-distribution quantiles
  double scale = 0.0;               // fitted scale parameter
  double body_deviation = 0.0;      // max |emp - theo| over the central 98%
};

struct QqResult {
  QqTable amplitude;  // |z| against fitted Rayleigh
  QqTable real_part;  // Re(z) against fitted zero-mean Gaussian
  std::size_t sample_pairs = 0;
};

QqResult qq_diagnostic(const WeightMatrix& w, const RotationPlan& plan,
                       std::size_t sample_pairs = 50000);

struct LadderPoint {
  int bits = 0;
  double distortion = 0.0;
};

// Least-squares slope of ln(distortion) against bits.
double rate_slope(const std::vector<LadderPoint>& ladder);

// Standard normal inverse CDF, accurate to ~1e-15 over (0, 1).
double normal_quantile(double p);

// Largest eigenvalue of a dense symmetric matrix (row-major, dim x dim);
// dense Jacobi sweep below dimension 64, power iteration above.
double symmetric_lambda_max(const std::vector<double>& m, std::size_t dim);

}  // namespace qamw
