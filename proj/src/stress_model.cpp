#include "gcnn/stress_model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace gcnn {

std::string_view covariance_mode_tag(CovarianceMode mode) {
  switch (mode) {
    case CovarianceMode::Deterministic: return "det";
    case CovarianceMode::IndependentDiag: return "indep";
    case CovarianceMode::CorrelatedFull: return "corr";
  }
  throw std::invalid_argument("covariance_mode_tag: invalid mode");
}

CovarianceMode covariance_mode_from_tag(std::string_view tag) {
  if (tag == "det") return CovarianceMode::Deterministic;
  if (tag == "indep") return CovarianceMode::IndependentDiag;
  if (tag == "corr") return CovarianceMode::CorrelatedFull;
  throw std::invalid_argument("unknown covariance mode '" + std::string(tag) +
                              "', expected det, indep, or corr");
}

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Lower-triangular A with A A^T = Sigma for the sampling path.
Mat14 sampling_factor(const CovarianceParam& cov) {
  switch (cov.mode) {
    case CovarianceMode::Deterministic:
      return Mat14::Zero();
    case CovarianceMode::IndependentDiag:
      return cov.d.asDiagonal();
    case CovarianceMode::CorrelatedFull: {
      Mat14 l;
      if (cov.pinned_correlation) {
        Eigen::LLT<Mat14> llt(*cov.pinned_correlation);
        if (llt.info() != Eigen::Success) {
          // jitter fallback for correlation matrices that round to indefinite
          Mat14 jittered = *cov.pinned_correlation;
          jittered.diagonal().array() += 1e-10;
          llt.compute(jittered);
          if (llt.info() != Eigen::Success) {
            throw std::invalid_argument(
                "sample_weights: pinned correlation is not positive definite");
          }
        }
        l = llt.matrixL();
      } else {
        l = normalized_chol_rows(cov);
      }
      return cov.d.asDiagonal() * l;
    }
  }
  return Mat14::Zero();
}

}  // namespace

CovarianceParam CovarianceParam::deterministic() { return {}; }

CovarianceParam CovarianceParam::independent(const Vec14& d) {
  CovarianceParam cov;
  cov.mode = CovarianceMode::IndependentDiag;
  cov.d = d;
  cov.validate();
  return cov;
}

CovarianceParam CovarianceParam::correlated(const Vec14& d, const Mat14& chol_rows) {
  CovarianceParam cov;
  cov.mode = CovarianceMode::CorrelatedFull;
  cov.d = d;
  cov.chol_rows = chol_rows;
  cov.validate();
  return cov;
}

CovarianceParam CovarianceParam::correlated_pinned(const Vec14& d, const Mat14& correlation) {
  CovarianceParam cov;
  cov.mode = CovarianceMode::CorrelatedFull;
  cov.d = d;
  cov.pinned_correlation = correlation;
  Eigen::LLT<Mat14> llt(correlation);
  if (llt.info() == Eigen::Success) {
    cov.chol_rows = llt.matrixL();
  } else {
    Mat14 jittered = correlation;
    jittered.diagonal().array() += 1e-10;
    llt.compute(jittered);
    if (llt.info() != Eigen::Success) {
      throw std::invalid_argument(
          "CovarianceParam: correlation matrix is not positive semi-definite");
    }
    cov.chol_rows = llt.matrixL();
  }
  cov.validate();
  return cov;
}

void CovarianceParam::validate() const {
  for (int i = 0; i < kNumTerms; ++i) {
    if (!(d[i] >= 0.0) || !(d[i] < 1.0)) {
      throw std::invalid_argument("CovarianceParam: d[" + std::to_string(i) +
                                  "] = " + std::to_string(d[i]) + " outside [0, 1)");
    }
  }
}

Mat14 normalized_chol_rows(const CovarianceParam& cov) {
  Mat14 l = Mat14::Zero();
  for (int i = 0; i < kNumTerms; ++i) {
    double norm_sq = 0.0;
    for (int j = 0; j <= i; ++j) norm_sq += cov.chol_rows(i, j) * cov.chol_rows(i, j);
    if (norm_sq <= 0.0) {
      l(i, i) = 1.0;  // degenerate row: fall back to an uncorrelated entry
      continue;
    }
    const double inv_norm = 1.0 / std::sqrt(norm_sq);
    for (int j = 0; j <= i; ++j) l(i, j) = cov.chol_rows(i, j) * inv_norm;
  }
  return l;
}

Mat14 realize_correlation(const CovarianceParam& cov) {
  if (cov.mode != CovarianceMode::CorrelatedFull) return Mat14::Identity();
  if (cov.pinned_correlation) return *cov.pinned_correlation;
  const Mat14 l = normalized_chol_rows(cov);
  Mat14 r = Mat14::Identity();
  for (int i = 0; i < kNumTerms; ++i) {
    for (int j = 0; j < i; ++j) {
      double dot = 0.0;
      for (int k = 0; k <= j; ++k) dot += l(i, k) * l(j, k);
      r(i, j) = dot;
      r(j, i) = dot;
    }
  }
  return r;  // unit diagonal by construction of the normalized rows
}

Mat14 realize_sigma(const CovarianceParam& cov) {
  if (cov.mode == CovarianceMode::Deterministic) return Mat14::Zero();
  const Mat14 r = realize_correlation(cov);
  return cov.d.asDiagonal() * r * cov.d.asDiagonal();
}

double variance_quadratic_form(const Eigen::VectorXd& p_hat, const Eigen::MatrixXd& sigma) {
  if (p_hat.size() != sigma.rows() || sigma.rows() != sigma.cols()) {
    throw std::invalid_argument("variance_quadratic_form: dimension mismatch");
  }
  return p_hat.dot(sigma * p_hat);
}

StressDistribution predict(const GaussianModel& model, const DeformationState& state) {
  const InvariantSet inv = invariants(state);
  const auto evals = eval_library(inv, model.w_star);

  StressDistribution out;
  Vec14 p11, p22;
  for (int i = 0; i < kNumTerms; ++i) {
    p11[i] = model.w_mu[i] * evals[i].f;
    p22[i] = model.w_mu[i] * evals[i].g;
    out.mu11 += p11[i];
    out.mu22 += p22[i];
  }
  if (model.covariance.mode == CovarianceMode::Deterministic) return out;

  const Mat14 r = realize_correlation(model.covariance);
  const Vec14 q11 = model.covariance.d.cwiseProduct(p11);
  const Vec14 q22 = model.covariance.d.cwiseProduct(p22);
  out.var11 = q11.dot(r * q11);
  out.var22 = q22.dot(r * q22);
  return out;
}

std::vector<Vec14> sample_weights(const GaussianModel& model, int n, std::uint64_t seed) {
  if (n < 0) throw std::invalid_argument("sample_weights: n must be non-negative");
  std::vector<Vec14> draws;
  draws.reserve(static_cast<std::size_t>(n));
  if (model.covariance.mode == CovarianceMode::Deterministic) {
    for (int k = 0; k < n; ++k) draws.push_back(model.w_mu);
    return draws;
  }
  const Mat14 a = sampling_factor(model.covariance);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int k = 0; k < n; ++k) {
    Vec14 z;
    for (int i = 0; i < kNumTerms; ++i) z[i] = normal(rng);
    const Vec14 w_hat = Vec14::Ones() + a * z;
    draws.push_back(model.w_mu.cwiseProduct(w_hat));
  }
  return draws;
}

double prob_negative_weight(const GaussianModel& model, int term) {
  if (term < 0 || term >= kNumTerms) {
    throw std::invalid_argument("prob_negative_weight: term index outside 0..13");
  }
  if (model.covariance.mode == CovarianceMode::Deterministic) return 0.0;
  const double sigma_ii = model.covariance.d[term] * model.covariance.d[term];
  if (sigma_ii <= 0.0) return 0.0;
  return normal_cdf(-1.0 / std::sqrt(sigma_ii));
}

}  // namespace gcnn
