#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "gcnn/energy_terms.hpp"

namespace gcnn {

enum class CovarianceMode { Deterministic, IndependentDiag, CorrelatedFull };

/// "det", "indep", or "corr"; the textual form used by the CLI and model
/// files. `covariance_mode_from_tag` throws std::invalid_argument on other
/// strings.
std::string_view covariance_mode_tag(CovarianceMode mode);
CovarianceMode covariance_mode_from_tag(std::string_view tag);

/// Covariance of the normalized weights w_hat ~ N(1, Sigma) with
/// Sigma = D R D, D = diag(d). The correlation R comes from row-normalized
/// Cholesky rows, which keeps Sigma_ii = d_i^2 < 1 by construction.
///
/// Models restored from disk carry the realized correlation verbatim
/// (`pinned_correlation`) so that predictions reproduce bitwise; chol_rows is
/// then a reconstruction used for sampling and training restarts.
struct CovarianceParam {
  CovarianceMode mode = CovarianceMode::Deterministic;
  Vec14 d = Vec14::Zero();                    // normalized stddevs, in [0, 1)
  Mat14 chol_rows = Mat14::Identity();        // raw lower-triangular rows
  std::optional<Mat14> pinned_correlation;

  static CovarianceParam deterministic();
  static CovarianceParam independent(const Vec14& d);
  static CovarianceParam correlated(const Vec14& d, const Mat14& chol_rows);
  static CovarianceParam correlated_pinned(const Vec14& d, const Mat14& correlation);

  /// Throws std::invalid_argument if d is outside [0, 1).
  void validate() const;
};

/// Row-normalized copy of chol_rows (unit Euclidean norm per row).
/// Zero rows fall back to the unit diagonal entry.
Mat14 normalized_chol_rows(const CovarianceParam& cov);

/// The correlation matrix R: identity for Deterministic/IndependentDiag,
/// the pinned matrix when present, else L~ L~^T with unit diagonal forced.
Mat14 realize_correlation(const CovarianceParam& cov);

/// Sigma = D R D (exactly zero in Deterministic mode).
Mat14 realize_sigma(const CovarianceParam& cov);

/// Discovered stochastic material model: external weights are jointly
/// Gaussian, w_i = w_mu[i] * w_hat_i with w_hat ~ N(1, Sigma); w_star holds
/// the inner (exponent) weights, fixed at 1 for identity-activation terms.
struct GaussianModel {
  Vec14 w_mu = Vec14::Zero();    // [kPa], >= 0
  Vec14 w_star = Vec14::Ones();  // >= 0
  CovarianceParam covariance;
};

/// Closed-form stress distribution at one deformation state.
struct StressDistribution {
  double mu11 = 0.0;   // [kPa]
  double mu22 = 0.0;
  double var11 = 0.0;  // [kPa^2]
  double var22 = 0.0;
};

/// var = p^T Sigma p for a vector of per-term mean stress contributions.
double variance_quadratic_form(const Eigen::VectorXd& p_hat, const Eigen::MatrixXd& sigma);

/// Mean and variance of P11/P22 at `state`. The means never depend on the
/// covariance parameters.
StressDistribution predict(const GaussianModel& model, const DeformationState& state);

/// Draws n weight vectors w = w_mu .* (1 + A z), z ~ N(0, I), where
/// A A^T = Sigma. Deterministic under the seed; Deterministic mode returns
/// w_mu exactly.
std::vector<Vec14> sample_weights(const GaussianModel& model, int n, std::uint64_t seed);

/// Probability that weight `term` (0-based) is negative under the model:
/// Phi(-1/sqrt(Sigma_ii)), and 0 when Sigma_ii = 0. Stays below Phi(-1)
/// because Sigma_ii < 1.
double prob_negative_weight(const GaussianModel& model, int term);

}  // namespace gcnn
