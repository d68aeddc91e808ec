#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gcnn/data_pipeline.hpp"

namespace gcnn {

enum class Split { Train, Dev, All };

/// Gaussian likelihood variance floor [kPa^2]; keeps the NLL finite for
/// deterministic models and at stress-free states.
inline constexpr double kVarianceFloor = 1e-6;

struct LossBreakdown {
  double nll = 0.0;    // per-observation mean negative log likelihood [nats]
  double reg = 0.0;    // L0.5 penalty, added once (not per observation)
  double total = 0.0;  // nll + reg
  std::map<std::string, double> per_curve_nll;
};

/// Gradient of the total loss with respect to the training parameterization.
/// chol_rows uses only the lower triangle; identity-activation w_star slots
/// are reported honestly but held frozen by the trainer.
struct Gradients {
  Vec14 w_mu = Vec14::Zero();
  Vec14 w_star = Vec14::Zero();
  Vec14 d = Vec14::Zero();
  Mat14 chol_rows = Mat14::Zero();
};

/// Precomputed evaluation cache over one dataset: distinct deformation
/// states, their invariants, and per-(state, direction) observation groups.
/// Observations sharing a group share mean and variance, so likelihood sums
/// reduce to group statistics. Construction is O(dataset); evaluations never
/// touch the dataset again.
class LossEvaluator {
 public:
  explicit LossEvaluator(const BiaxialDataset& data);
  ~LossEvaluator();
  LossEvaluator(LossEvaluator&&) noexcept;
  LossEvaluator& operator=(LossEvaluator&&) noexcept;

  /// Mean NLL over the split [nats/point]. Throws for an empty split.
  double nll(const GaussianModel& model, Split split) const;

  /// NLL, penalty and per-curve means in one pass. alpha >= 0.
  LossBreakdown breakdown(const GaussianModel& model, Split split, double alpha) const;

  /// alpha * sum_i sqrt(w_mu[i] * stress integral of term i at w_star[i]),
  /// with lambda_max taken from the training split.
  double penalty(const GaussianModel& model, double alpha) const;

  /// Analytic gradient of breakdown().total over the split.
  Gradients gradients(const GaussianModel& model, Split split, double alpha) const;

  /// Mini-batch total loss and gradient over global observation ids
  /// (see train_observation_ids). Uses internal scratch; not thread safe.
  double batch_loss_grad(const GaussianModel& model, std::span<const int> obs_ids,
                         double alpha, Gradients& out);

  /// Model NLL on one curve minus the ideal NLL of the empirical
  /// per-stretch-point distribution (population variance). Stretch points
  /// with fewer than two samples are floored at kVarianceFloor and counted
  /// in *floored_points when given.
  double extra_nll(const GaussianModel& model, const std::string& curve_id,
                   int* floored_points = nullptr) const;

  /// Mean ideal NLL of one curve (the empirical-distribution bound).
  double ideal_nll(const std::string& curve_id, int* floored_points = nullptr) const;

  /// Fraction of the split's observations whose model variance sits at the
  /// floor (1.0 for deterministic models).
  double floor_fraction(const GaussianModel& model, Split split) const;

  std::span<const int> train_observation_ids() const;
  double lambda_max() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Convenience wrappers matching the module surface; each builds a fresh
// evaluator, so hot loops should hold a LossEvaluator instead.
double nll(const GaussianModel& model, const BiaxialDataset& data, Split split);
double extra_nll(const GaussianModel& model, const BiaxialDataset& data,
                 const std::string& curve_id);
Gradients gradients(const GaussianModel& model, const BiaxialDataset& data, Split split,
                    double alpha);

/// The L0.5 sparsity penalty at an explicit integration bound.
double l_half_penalty(const GaussianModel& model, double alpha, double lambda_max);

}  // namespace gcnn
