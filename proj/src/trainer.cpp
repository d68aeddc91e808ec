#include "gcnn/trainer.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <span>

#include "gcnn/energy_terms.hpp"

namespace gcnn {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
// Bounds on the logistic pre-activation of d; the upper bound keeps
// Sigma_ii = d^2 strictly below 1 - 1e-9.
constexpr double kLogitMin = -30.0;
constexpr double kLogitMax = 20.0;

constexpr int kOffWMu = 0;
constexpr int kOffWStar = kNumTerms;
constexpr int kOffLogit = 2 * kNumTerms;
constexpr int kOffChol = 3 * kNumTerms;
constexpr int kNumChol = kNumTerms * (kNumTerms + 1) / 2;
constexpr int kNumParams = kOffChol + kNumChol;

double sigmoid(double s) { return 1.0 / (1.0 + std::exp(-s)); }

int chol_offset(int i, int j) { return kOffChol + i * (i + 1) / 2 + j; }

struct OptState {
  Eigen::VectorXd params{kNumParams};
  Eigen::VectorXd m = Eigen::VectorXd::Zero(kNumParams);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(kNumParams);
  std::int64_t step = 0;
  int epoch = 0;
  std::mt19937_64 rng;
  std::vector<EpochRecord> history;
};

// 1 where the covariance mode (and the identity-activation w_star freeze)
// lets a parameter move.
Eigen::VectorXd parameter_mask(CovarianceMode mode) {
  Eigen::VectorXd mask = Eigen::VectorXd::Zero(kNumParams);
  const auto& lib = term_library();
  for (int i = 0; i < kNumTerms; ++i) {
    mask[kOffWMu + i] = 1.0;
    if (lib[i].activation != Activation::Identity) mask[kOffWStar + i] = 1.0;
    if (mode != CovarianceMode::Deterministic) mask[kOffLogit + i] = 1.0;
  }
  if (mode == CovarianceMode::CorrelatedFull) {
    for (int k = kOffChol; k < kNumParams; ++k) mask[k] = 1.0;
  }
  return mask;
}

GaussianModel unpack(const Eigen::VectorXd& params, CovarianceMode mode) {
  GaussianModel model;
  for (int i = 0; i < kNumTerms; ++i) {
    model.w_mu[i] = params[kOffWMu + i];
    model.w_star[i] = params[kOffWStar + i];
  }
  if (mode == CovarianceMode::Deterministic) {
    model.covariance = CovarianceParam::deterministic();
    return model;
  }
  Vec14 d;
  for (int i = 0; i < kNumTerms; ++i) d[i] = sigmoid(params[kOffLogit + i]);
  if (mode == CovarianceMode::IndependentDiag) {
    model.covariance = CovarianceParam::independent(d);
    return model;
  }
  Mat14 chol = Mat14::Zero();
  for (int i = 0; i < kNumTerms; ++i) {
    for (int j = 0; j <= i; ++j) chol(i, j) = params[chol_offset(i, j)];
  }
  model.covariance = CovarianceParam::correlated(d, chol);
  return model;
}

Eigen::VectorXd pack_gradient(const Gradients& grads, const Eigen::VectorXd& params) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(kNumParams);
  for (int i = 0; i < kNumTerms; ++i) {
    g[kOffWMu + i] = grads.w_mu[i];
    g[kOffWStar + i] = grads.w_star[i];
    const double d = sigmoid(params[kOffLogit + i]);
    g[kOffLogit + i] = grads.d[i] * d * (1.0 - d);
    for (int j = 0; j <= i; ++j) g[chol_offset(i, j)] = grads.chol_rows(i, j);
  }
  return g;
}

void adam_step_and_project(OptState& state, const Eigen::VectorXd& g,
                           const Eigen::VectorXd& mask, double lr) {
  ++state.step;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));
  for (int k = 0; k < kNumParams; ++k) {
    if (mask[k] == 0.0) continue;
    state.m[k] = kBeta1 * state.m[k] + (1.0 - kBeta1) * g[k];
    state.v[k] = kBeta2 * state.v[k] + (1.0 - kBeta2) * g[k] * g[k];
    state.params[k] -= lr * (state.m[k] / c1) / (std::sqrt(state.v[k] / c2) + kAdamEps);
  }
  for (int i = 0; i < kNumTerms; ++i) {
    state.params[kOffWMu + i] = std::max(0.0, state.params[kOffWMu + i]);
    state.params[kOffWStar + i] = std::max(0.0, state.params[kOffWStar + i]);
    state.params[kOffLogit + i] =
        std::clamp(state.params[kOffLogit + i], kLogitMin, kLogitMax);
  }
}

void validate_config(const TrainConfig& cfg) {
  if (cfg.learning_rate <= 0.0) throw std::invalid_argument("fit: learning_rate must be > 0");
  if (cfg.epochs_pretrain <= 0 || cfg.epochs_regularized <= 0) {
    throw std::invalid_argument("fit: epoch counts must be > 0");
  }
  if (cfg.batch_size <= 0) throw std::invalid_argument("fit: batch_size must be > 0");
  if (cfg.alpha < 0.0) throw std::invalid_argument("fit: alpha must be >= 0");
  if (cfg.zero_threshold < 0.0) throw std::invalid_argument("fit: zero_threshold must be >= 0");
}

OptState initial_state(const TrainConfig& cfg) {
  OptState state;
  state.rng.seed(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto& lib = term_library();
  for (int i = 0; i < kNumTerms; ++i) state.params[kOffWMu + i] = unit(state.rng);
  for (int i = 0; i < kNumTerms; ++i) state.params[kOffWStar + i] = unit(state.rng);
  for (int i = 0; i < kNumTerms; ++i) {
    if (lib[i].activation == Activation::Identity) state.params[kOffWStar + i] = 1.0;
  }
  const double s0 = std::log(0.2 / 0.8);
  for (int i = 0; i < kNumTerms; ++i) state.params[kOffLogit + i] = s0;
  for (int i = 0; i < kNumTerms; ++i) {
    for (int j = 0; j <= i; ++j) state.params[chol_offset(i, j)] = (i == j) ? 1.0 : 0.0;
  }
  return state;
}

void run_phase(OptState& state, LossEvaluator& eval, const TrainConfig& cfg, double alpha,
               int epochs, int phase, const EpochHook& hook, std::ostream* log) {
  const Eigen::VectorXd mask = parameter_mask(cfg.mode);
  const auto train_ids = eval.train_observation_ids();
  std::vector<int> ids(train_ids.begin(), train_ids.end());
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);

  Gradients grads;
  for (int e = 0; e < epochs; ++e) {
    ++state.epoch;
    std::shuffle(ids.begin(), ids.end(), state.rng);
    double loss_sum = 0.0;
    int steps = 0;
    for (std::size_t off = 0; off < ids.size(); off += batch) {
      const std::size_t len = std::min(batch, ids.size() - off);
      const GaussianModel model = unpack(state.params, cfg.mode);
      double loss = 0.0;
      try {
        loss = eval.batch_loss_grad(model, std::span<const int>(ids.data() + off, len),
                                    alpha, grads);
      } catch (const std::overflow_error& err) {
        // runaway inner weights overflow a term before the loss itself
        // reaches infinity; both are the same failure for the caller
        throw TrainingDivergence(state.epoch, model,
                                 "training diverged at epoch " +
                                     std::to_string(state.epoch) + ": " + err.what());
      }
      if (!std::isfinite(loss)) {
        throw TrainingDivergence(state.epoch, model,
                                 "training loss became non-finite at epoch " +
                                     std::to_string(state.epoch));
      }
      adam_step_and_project(state, pack_gradient(grads, state.params), mask,
                            cfg.learning_rate);
      loss_sum += loss;
      ++steps;
    }
    const GaussianModel model = unpack(state.params, cfg.mode);
    const double penalty = eval.penalty(model, alpha);
    state.history.push_back({state.epoch, phase, loss_sum / steps, penalty});
    if (log != nullptr) {
      *log << "epoch " << state.epoch << " phase " << phase << " loss " << loss_sum / steps
           << " penalty " << penalty << '\n';
    }
    if (hook) hook(EpochSnapshot{state.epoch, phase, loss_sum / steps, penalty, model});
  }
}

FitResult finalize(OptState&& state, LossEvaluator& eval, const TrainConfig& cfg,
                   double alpha, bool has_dev) {
  FitResult result;
  result.model = unpack(state.params, cfg.mode);
  result.alpha = alpha;
  result.n_active_terms =
      snap_inactive_terms(result.model, eval.lambda_max(), cfg.zero_threshold);
  result.train_nll = eval.nll(result.model, Split::Train);
  result.dev_nll =
      has_dev ? eval.nll(result.model, Split::Dev) : std::numeric_limits<double>::quiet_NaN();
  result.history = std::move(state.history);
  return result;
}

}  // namespace

TrainingDivergence::TrainingDivergence(int epoch_, GaussianModel snapshot_,
                                       const std::string& message)
    : std::runtime_error(message), epoch(epoch_), snapshot(std::move(snapshot_)) {}

int count_active_terms(const GaussianModel& model, double lambda_max, double threshold) {
  const auto& lib = term_library();
  Vec14 c = Vec14::Zero();
  for (int i = 0; i < kNumTerms; ++i) {
    if (model.w_mu[i] > 0.0) {
      c[i] = model.w_mu[i] * term_stress_integral(lib[i], model.w_star[i], lambda_max);
    }
  }
  const double cmax = c.maxCoeff();
  if (cmax <= 0.0) return 0;
  int active = 0;
  for (int i = 0; i < kNumTerms; ++i) {
    if (c[i] > threshold * cmax) ++active;
  }
  return active;
}

int snap_inactive_terms(GaussianModel& model, double lambda_max, double threshold) {
  const auto& lib = term_library();
  Vec14 c = Vec14::Zero();
  for (int i = 0; i < kNumTerms; ++i) {
    if (model.w_mu[i] > 0.0) {
      c[i] = model.w_mu[i] * term_stress_integral(lib[i], model.w_star[i], lambda_max);
    }
  }
  const double cmax = c.maxCoeff();
  int active = 0;
  for (int i = 0; i < kNumTerms; ++i) {
    if (cmax > 0.0 && c[i] > threshold * cmax) {
      ++active;
    } else {
      model.w_mu[i] = 0.0;
    }
  }
  return active;
}

FitResult fit(const TrainConfig& config, const BiaxialDataset& data, const EpochHook& hook,
              std::ostream* log) {
  validate_config(config);
  if (data.observation_count(SplitTag::Train) == 0) {
    throw std::invalid_argument("fit: dataset has no training observations");
  }
  LossEvaluator eval(data);
  OptState state = initial_state(config);
  run_phase(state, eval, config, 0.0, config.epochs_pretrain, 1, hook, log);
  run_phase(state, eval, config, config.alpha, config.epochs_regularized, 2, hook, log);
  return finalize(std::move(state), eval, config, config.alpha,
                  data.observation_count(SplitTag::Dev) > 0);
}

std::vector<FitResult> sweep(const std::vector<double>& alphas, const TrainConfig& base,
                             const BiaxialDataset& data, const EpochHook& hook,
                             std::ostream* log) {
  if (alphas.empty()) throw std::invalid_argument("sweep: alphas must be non-empty");
  validate_config(base);
  for (const double a : alphas) {
    if (a < 0.0) throw std::invalid_argument("sweep: alphas must be >= 0");
  }
  if (data.observation_count(SplitTag::Train) == 0) {
    throw std::invalid_argument("sweep: dataset has no training observations");
  }
  LossEvaluator eval(data);
  const bool has_dev = data.observation_count(SplitTag::Dev) > 0;

  // Phase 1 does not depend on alpha, so it is trained once and each alpha
  // branches from a copy of the resulting optimizer state and RNG stream.
  OptState pretrained = initial_state(base);
  run_phase(pretrained, eval, base, 0.0, base.epochs_pretrain, 1, hook, log);

  std::vector<FitResult> results;
  results.reserve(alphas.size());
  for (const double alpha : alphas) {
    OptState branch = pretrained;
    if (log != nullptr) *log << "alpha " << alpha << '\n';
    run_phase(branch, eval, base, alpha, base.epochs_regularized, 2, hook, log);
    results.push_back(finalize(std::move(branch), eval, base, alpha, has_dev));
  }
  return results;
}

const FitResult& select(const std::vector<FitResult>& results) {
  if (results.empty()) throw std::invalid_argument("select: no results");
  for (const FitResult& r : results) {
    if (!std::isfinite(r.dev_nll)) {
      throw std::invalid_argument("select: model selection needs finite dev NLLs");
    }
  }
  double min_dev = results.front().dev_nll;
  for (const FitResult& r : results) min_dev = std::min(min_dev, r.dev_nll);
  const double cutoff = min_dev + 0.1;

  const FitResult* best = nullptr;
  for (const FitResult& r : results) {
    if (r.dev_nll > cutoff) continue;
    if (best == nullptr || r.n_active_terms < best->n_active_terms ||
        (r.n_active_terms == best->n_active_terms &&
         (r.dev_nll < best->dev_nll ||
          (r.dev_nll == best->dev_nll && r.alpha < best->alpha)))) {
      best = &r;
    }
  }
  return *best;
}

}  // namespace gcnn
