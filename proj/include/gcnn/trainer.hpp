#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "gcnn/data_pipeline.hpp"
#include "gcnn/objective.hpp"
#include "gcnn/stress_model.hpp"

namespace gcnn {

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs_pretrain = 2000;    // phase 1, no sparsity penalty
  int epochs_regularized = 2000; // phase 2, penalty weight alpha
  int batch_size = 1000;         // scalar stress observations per step
  double alpha = 0.0;
  CovarianceMode mode = CovarianceMode::IndependentDiag;
  std::uint64_t seed = 0;
  double zero_threshold = 1e-4;  // relative, on stress-scale contributions
};

struct EpochRecord {
  int epoch = 0;  // global index, phase 2 continues phase 1's count
  int phase = 0;
  double loss = 0.0;     // mean batch loss (NLL + penalty) over the epoch
  double penalty = 0.0;  // penalty at epoch end
};

// Passed to the per-epoch hook; the model reference is only valid during the
// call.
struct EpochSnapshot {
  int epoch = 0;
  int phase = 0;
  double loss = 0.0;
  double penalty = 0.0;
  const GaussianModel& model;
};

using EpochHook = std::function<void(const EpochSnapshot&)>;

struct FitResult {
  GaussianModel model;
  double alpha = 0.0;
  double train_nll = 0.0;
  double dev_nll = 0.0;  // NaN when the dataset has no dev split
  int n_active_terms = 0;
  std::vector<EpochRecord> history;
};

class TrainingDivergence : public std::runtime_error {
 public:
  TrainingDivergence(int epoch, GaussianModel snapshot, const std::string& message);

  int epoch;
  GaussianModel snapshot;  // parameters at the step that went non-finite
};

// Stress-scale contribution of each term: w_mu[i] * integral of the term's
// equibiaxial stress over [1, lambda_max] at the model's w_star. Terms whose
// contribution is at or below threshold * max contribution count as inactive.
int count_active_terms(const GaussianModel& model, double lambda_max, double threshold);

// Zeroes the w_mu of every inactive term; returns the active count.
int snap_inactive_terms(GaussianModel& model, double lambda_max, double threshold);

// Two-phase ADAM fit. Observations are shuffled each epoch and consumed in
// batches of config.batch_size without replacement; w_mu and w_star are
// clamped to [0, inf) after every step. Throws TrainingDivergence when the
// batch loss goes non-finite or a term evaluation overflows mid-step. `log`
// receives one line per epoch when set.
FitResult fit(const TrainConfig& config, const BiaxialDataset& data,
              const EpochHook& hook = {}, std::ostream* log = nullptr);

// One fit per alpha with phase 1 trained once and shared, so
// sweep({a}, base, data) reproduces fit(base with alpha=a, data) exactly.
std::vector<FitResult> sweep(const std::vector<double>& alphas, const TrainConfig& base,
                             const BiaxialDataset& data, const EpochHook& hook = {},
                             std::ostream* log = nullptr);

// Smallest model whose dev NLL is within 0.1 of the best: among results with
// dev_nll <= min + 0.1, fewest active terms wins; ties go to smaller dev_nll,
// then smaller alpha.
const FitResult& select(const std::vector<FitResult>& results);

}  // namespace gcnn
