// Acceptance gate: eight end-to-end checks over the whole pipeline, one
// PASS/FAIL line per criterion on stdout. Exit code is the failure count,
// so a green run exits 0. Every seed below is frozen; the runs are
// deterministic and single threaded.
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <limits>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "gcnn/data_pipeline.hpp"
#include "gcnn/energy_terms.hpp"
#include "gcnn/kinematics.hpp"
#include "gcnn/objective.hpp"
#include "gcnn/stress_model.hpp"
#include "gcnn/trainer.hpp"

using namespace gcnn;
using Clock = std::chrono::steady_clock;

namespace {

constexpr double kPhiMinusOne = 0.15865525393145707;  // P(Z < -1)

struct Check {
  bool pass = false;
  std::string detail;
};

std::string note(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof buf, f, args);
  va_end(args);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// |a - b| over a unit-floored |a|, the scale-safe form of relative error.
double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(1.0, std::abs(a));
}

GaussianModel random_model(std::mt19937_64& rng, CovarianceMode mode) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  GaussianModel m;
  for (int i = 0; i < kNumTerms; ++i) {
    m.w_mu[i] = 0.1 + 1.5 * unit(rng);
    m.w_star[i] = 0.1 + 1.5 * unit(rng);
  }
  Vec14 d;
  for (int i = 0; i < kNumTerms; ++i) d[i] = 0.05 + 0.8 * unit(rng);
  switch (mode) {
    case CovarianceMode::Deterministic:
      m.covariance = CovarianceParam::deterministic();
      break;
    case CovarianceMode::IndependentDiag:
      m.covariance = CovarianceParam::independent(d);
      break;
    case CovarianceMode::CorrelatedFull: {
      Mat14 chol = Mat14::Zero();
      for (int i = 0; i < kNumTerms; ++i) {
        for (int j = 0; j < i; ++j) chol(i, j) = 2.0 * unit(rng) - 1.0;
        chol(i, i) = 0.5 + unit(rng);
      }
      m.covariance = CovarianceParam::correlated(d, chol);
      break;
    }
  }
  return m;
}

// criterion 1: analytic gradients of the total loss against central finite
// differences, 50 random configurations across all covariance modes.
Check gradient_check() {
  const auto t0 = Clock::now();

  std::vector<BiaxialDataset> datasets;
  for (int k = 0; k < 3; ++k) {
    GaussianModel gen;
    gen.w_mu[0] = 1.0;
    gen.w_mu[9] = 2.0;
    gen.w_mu[12] = 1.5;
    Vec14 d = Vec14::Zero();
    d[0] = 0.2;
    d[9] = 0.3;
    d[12] = 0.25;
    gen.covariance = CovarianceParam::independent(d);
    datasets.push_back(standard_split(
        synthesize(gen, standard_protocols(1.1 + 0.1 * k), 3, 4, 7 + k)));
  }
  std::vector<LossEvaluator> evals;
  for (const BiaxialDataset& d : datasets) evals.emplace_back(d);

  const double alphas[] = {0.0, 0.1, 0.5};
  std::mt19937_64 rng(29);
  double worst = 0.0;

  for (int k = 0; k < 50; ++k) {
    const CovarianceMode mode = static_cast<CovarianceMode>(k % 3);
    const double alpha = alphas[(k / 3) % 3];
    const LossEvaluator& eval = evals[k % evals.size()];

    const GaussianModel m = random_model(rng, mode);
    const Gradients g = eval.gradients(m, Split::Train, alpha);

    auto total = [&](const GaussianModel& x) {
      return eval.breakdown(x, Split::Train, alpha).total;
    };
    auto fd = [&](GaussianModel& x, double* slot) {
      const double v = *slot;
      const double h = 1e-6 * std::max(1.0, std::abs(v));
      *slot = v + h;
      const double up = total(x);
      *slot = v - h;
      const double dn = total(x);
      *slot = v;
      return (up - dn) / (2.0 * h);
    };

    for (int i = 0; i < kNumTerms; ++i) {
      GaussianModel p = m;
      worst = std::max(worst, rel_err(g.w_mu[i], fd(p, &p.w_mu[i])));
      worst = std::max(worst, rel_err(g.w_star[i], fd(p, &p.w_star[i])));
      if (mode != CovarianceMode::Deterministic) {
        worst = std::max(worst, rel_err(g.d[i], fd(p, &p.covariance.d[i])));
      }
    }
    if (mode == CovarianceMode::CorrelatedFull) {
      for (int i = 0; i < kNumTerms; ++i) {
        for (int j = 0; j <= i; ++j) {
          GaussianModel p = m;
          worst = std::max(worst,
                           rel_err(g.chol_rows(i, j), fd(p, &p.covariance.chol_rows(i, j))));
        }
      }
    }
  }

  const double secs = seconds_since(t0);
  return {worst < 1e-5 && secs < 60.0,
          note("50 configs, worst gradient rel err %.2e  [%.1f s]", worst, secs)};
}

// criterion 2: every term's (f, g) against finite differences of the reduced
// energy, 1000 random states in both mounting orientations.
Check stress_check() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> stretch(0.8, 1.4);
  std::uniform_real_distribution<double> inner(0.5, 8.0);
  double worst = 0.0;

  for (int k = 0; k < 1000; ++k) {
    const double l1 = stretch(rng);
    const double l2 = stretch(rng);
    Vec14 ws;
    for (int i = 0; i < kNumTerms; ++i) ws[i] = inner(rng);

    for (Orientation o : {Orientation::Aligned0_90, Orientation::Offset45}) {
      const auto center = eval_library(invariants({l1, l2, o}), ws);
      const double h1 = 1e-6 * l1;
      const double h2 = 1e-6 * l2;
      const auto up1 = eval_library(invariants({l1 + h1, l2, o}), ws);
      const auto dn1 = eval_library(invariants({l1 - h1, l2, o}), ws);
      const auto up2 = eval_library(invariants({l1, l2 + h2, o}), ws);
      const auto dn2 = eval_library(invariants({l1, l2 - h2, o}), ws);
      for (int i = 0; i < kNumTerms; ++i) {
        const double f_fd = (up1[i].psi - dn1[i].psi) / (2.0 * h1);
        const double g_fd = (up2[i].psi - dn2[i].psi) / (2.0 * h2);
        worst = std::max(worst, std::abs(center[i].f - f_fd) / std::max(1.0, std::abs(f_fd)));
        worst = std::max(worst, std::abs(center[i].g - g_fd) / std::max(1.0, std::abs(g_fd)));
      }
    }
  }

  const double secs = seconds_since(t0);
  return {worst < 1e-6 && secs < 10.0,
          note("1000 states x 14 terms x 2 orientations, worst stress rel err %.2e  [%.1f s]",
               worst, secs)};
}

// criterion 3: Monte-Carlo weight sampling reproduces the closed-form
// variances, 200k draws, 5 correlated models x 5 states.
Check variance_check() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> stretch(1.05, 1.4);
  const int n_draws = 200000;
  double worst = 0.0;

  for (int mk = 0; mk < 5; ++mk) {
    GaussianModel m;
    Vec14 d;
    for (int i = 0; i < kNumTerms; ++i) {
      m.w_mu[i] = 0.5 + 1.5 * unit(rng);
      m.w_star[i] = 0.5 + 3.5 * unit(rng);
      d[i] = 0.3 + 0.6 * unit(rng);
    }
    Mat14 chol = Mat14::Zero();
    for (int i = 0; i < kNumTerms; ++i) {
      for (int j = 0; j < i; ++j) chol(i, j) = 2.0 * unit(rng) - 1.0;
      chol(i, i) = 0.5 + unit(rng);
    }
    m.covariance = CovarianceParam::correlated(d, chol);

    const std::vector<Vec14> draws = sample_weights(m, n_draws, 777 + mk);

    for (int sk = 0; sk < 5; ++sk) {
      const Orientation o =
          (mk + sk) % 2 == 0 ? Orientation::Aligned0_90 : Orientation::Offset45;
      const DeformationState state{stretch(rng), stretch(rng), o};
      const auto evals = eval_library(invariants(state), m.w_star);
      Vec14 f, g;
      for (int i = 0; i < kNumTerms; ++i) {
        f[i] = evals[i].f;
        g[i] = evals[i].g;
      }
      const StressDistribution an = predict(m, state);

      double s1 = 0.0, q1 = 0.0, s2 = 0.0, q2 = 0.0;
      for (const Vec14& w : draws) {
        const double a = w.dot(f);
        const double b = w.dot(g);
        s1 += a;
        q1 += a * a;
        s2 += b;
        q2 += b * b;
      }
      const double n = n_draws;
      const double mc11 = (q1 - s1 * s1 / n) / (n - 1.0);
      const double mc22 = (q2 - s2 * s2 / n) / (n - 1.0);
      worst = std::max(worst, std::abs(mc11 - an.var11) / an.var11);
      worst = std::max(worst, std::abs(mc22 - an.var22) / an.var22);
    }
  }

  const double secs = seconds_since(t0);
  return {worst <= 0.02 && secs < 60.0,
          note("5 models x 5 states x 200k draws, worst variance rel err %.4f  [%.1f s]",
               worst, secs)};
}

// criterion 4: a full-covariance model with identity correlation predicts
// exactly like the independent-diagonal model with the same d.
Check diagonal_equivalence_check() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> stretch(0.85, 1.45);
  double worst = 0.0;

  for (int k = 0; k < 100; ++k) {
    GaussianModel indep;
    Vec14 d;
    for (int i = 0; i < kNumTerms; ++i) {
      indep.w_mu[i] = 2.0 * unit(rng);
      indep.w_star[i] = 0.2 + 2.0 * unit(rng);
      d[i] = 0.05 + 0.9 * unit(rng);
    }
    indep.covariance = CovarianceParam::independent(d);

    GaussianModel raw = indep;
    raw.covariance = CovarianceParam::correlated(d, Mat14::Identity());
    GaussianModel pinned = indep;
    pinned.covariance = CovarianceParam::correlated_pinned(d, Mat14::Identity());

    for (int j = 0; j < 20; ++j) {
      const Orientation o =
          j % 2 == 0 ? Orientation::Aligned0_90 : Orientation::Offset45;
      const DeformationState state{stretch(rng), stretch(rng), o};
      const StressDistribution pi = predict(indep, state);
      for (const GaussianModel* m : {&raw, &pinned}) {
        const StressDistribution pc = predict(*m, state);
        worst = std::max(worst, rel_err(pi.mu11, pc.mu11));
        worst = std::max(worst, rel_err(pi.mu22, pc.mu22));
        worst = std::max(worst, rel_err(pi.var11, pc.var11));
        worst = std::max(worst, rel_err(pi.var22, pc.var22));
      }
    }
  }

  const double secs = seconds_since(t0);
  return {worst <= 1e-12,
          note("100 models x 20 states, worst prediction gap %.2e  [%.1f s]", worst, secs)};
}

// Shared generator for the synthetic-recovery checks: one unmistakable shape
// per invariant channel keeps all four terms identifiable from biaxial data.
GaussianModel recovery_generator() {
  GaussianModel m;
  m.w_mu[0] = 15.0;                        // I1 linear
  m.w_mu[1] = 12.0;  m.w_star[1] = 8.0;    // I1 exponential
  m.w_mu[8] = 10.0;  m.w_star[8] = 8.0;    // I4w linear exponential
  m.w_mu[11] = 8.0;  m.w_star[11] = 10.0;  // I4s linear exponential
  Vec14 d = Vec14::Zero();
  d[0] = 0.15;
  d[1] = 0.12;
  d[8] = 0.15;
  d[11] = 0.08;
  m.covariance = CovarianceParam::independent(d);
  return m;
}

// The generator's own entropy bound on the dev split: the NLL it would score
// if the data spread matched its predictive variance exactly.
double generator_ideal_dev(const GaussianModel& gen, const BiaxialDataset& data) {
  double sum = 0.0;
  long n = 0;
  for (const Curve& c : data.curves()) {
    if (data.split_of(c.id) != SplitTag::Dev) continue;
    for (const CurvePoint& p : c.points) {
      const StressDistribution sd = predict(gen, {p.lambda1, p.lambda2, c.orientation});
      const double var = c.direction == Direction::Dir1 ? sd.var11 : sd.var22;
      const double v = std::max(var, kVarianceFloor);
      sum += 0.5 * std::log(2.0 * std::numbers::pi * v) + 0.5;
      ++n;
    }
  }
  return sum / static_cast<double>(n);
}

// Per-epoch constraint log shared by criteria 5, 6 and 8.
struct ConstraintLog {
  long epochs = 0;
  long violations = 0;
  double min_w = std::numeric_limits<double>::infinity();
  double min_eig = std::numeric_limits<double>::infinity();
  double max_sigma_ii = 0.0;
  std::string first;
};

EpochHook constraint_hook(ConstraintLog& log) {
  return [&log](const EpochSnapshot& s) {
    ++log.epochs;
    const double w_floor =
        std::min(s.model.w_mu.minCoeff(), s.model.w_star.minCoeff());
    const Mat14 sigma = realize_sigma(s.model.covariance);
    const Eigen::SelfAdjointEigenSolver<Mat14> es(sigma, Eigen::EigenvaluesOnly);
    const double eig = es.eigenvalues().minCoeff();
    const double sii = sigma.diagonal().maxCoeff();
    log.min_w = std::min(log.min_w, w_floor);
    log.min_eig = std::min(log.min_eig, eig);
    log.max_sigma_ii = std::max(log.max_sigma_ii, sii);
    if (w_floor < 0.0 || eig < -1e-12 || sii >= 1.0) {
      ++log.violations;
      if (log.first.empty()) {
        log.first = note("epoch %d: min w %.3g, min eig %.3g, max sigma_ii %.3g",
                         s.epoch, w_floor, eig, sii);
      }
    }
  };
}

// Synthetic recovery shared by criteria 5 and 6: synthesize from the known
// generator, sweep alphas, select, and compare the selected model against the
// generator's parameters and entropy bound.
Check recovery_check(int samples, int points, std::uint64_t data_seed, int ep1,
                     int ep2, double budget_s, ConstraintLog& log,
                     std::vector<GaussianModel>& final_models) {
  const auto t0 = Clock::now();
  const GaussianModel gen = recovery_generator();
  const BiaxialDataset data =
      standard_split(synthesize(gen, standard_protocols(1.35), samples, points, data_seed));

  TrainConfig cfg;
  cfg.mode = CovarianceMode::IndependentDiag;
  cfg.learning_rate = 3e-3;
  cfg.epochs_pretrain = ep1;
  cfg.epochs_regularized = ep2;
  cfg.seed = 3;

  const std::vector<FitResult> results =
      sweep({0.0, 0.001, 0.003, 0.005}, cfg, data, constraint_hook(log));
  const FitResult& sel = select(results);

  const LossEvaluator eval(data);
  for (const FitResult& r : results) {
    GaussianModel m = r.model;
    snap_inactive_terms(m, eval.lambda_max(), cfg.zero_threshold);
    final_models.push_back(std::move(m));
  }

  GaussianModel m = sel.model;
  snap_inactive_terms(m, eval.lambda_max(), cfg.zero_threshold);
  std::set<int> active;
  for (int i = 0; i < kNumTerms; ++i) {
    if (m.w_mu[i] > 0.0) active.insert(i);
  }
  const std::set<int> truth{0, 1, 8, 11};

  double worst_w = 0.0, worst_d = 0.0;
  for (int i : truth) {
    worst_w = std::max(worst_w, std::abs(m.w_mu[i] - gen.w_mu[i]) / gen.w_mu[i]);
    worst_d = std::max(worst_d, std::abs(m.covariance.d[i] - gen.covariance.d[i]) /
                                    gen.covariance.d[i]);
  }
  const double ideal = generator_ideal_dev(gen, data);
  const double gap = std::abs(sel.dev_nll - ideal);
  const double secs = seconds_since(t0);

  const bool pass = active == truth && worst_w <= 0.10 && worst_d <= 0.10 &&
                    gap <= 0.05 && secs < budget_s;
  return {pass,
          note("%d samples x %d points, selected alpha %g with %d terms; worst w err "
               "%.1f%%, worst d err %.1f%%, |dev - ideal| %.3f  [%.0f s]",
               samples, points, sel.alpha, sel.n_active_terms, 100.0 * worst_w,
               100.0 * worst_d, gap, secs)};
}

// criterion 7: on data from a negatively correlated generator, the selected
// full-covariance model explains the strip-s s-stress spread better than the
// selected independent model by at least 0.05 nats of extra NLL.
Check extra_nll_check() {
  const auto t0 = Clock::now();

  GaussianModel gen;
  gen.w_mu[0] = 15.0;
  gen.w_mu[1] = 12.0;  gen.w_star[1] = 8.0;
  gen.w_mu[8] = 10.0;  gen.w_star[8] = 8.0;
  gen.w_mu[12] = 8.0;  // I4s quadratic
  Vec14 d = Vec14::Zero();
  d[0] = 0.25;
  d[1] = 0.003;
  d[8] = 0.15;
  d[12] = 0.354;
  // The I1-linear and I4s-quadratic weights move against each other, so the
  // joint spread on strip-s is far flatter along stretch than any sum of
  // per-term variances can be.
  Mat14 corr = Mat14::Identity();
  corr(0, 12) = corr(12, 0) = -0.95;
  gen.covariance = CovarianceParam::correlated_pinned(d, corr);

  const BiaxialDataset data =
      standard_split(synthesize(gen, standard_protocols(1.35), 400, 10, 24));

  TrainConfig base;
  base.learning_rate = 3e-3;
  base.epochs_pretrain = 4000;
  base.epochs_regularized = 3000;
  base.seed = 3;
  const std::vector<double> alphas{0.0, 0.001, 0.003, 0.005};

  TrainConfig ci = base;
  ci.mode = CovarianceMode::IndependentDiag;
  const std::vector<FitResult> ri = sweep(alphas, ci, data);
  const FitResult& si = select(ri);

  TrainConfig cc = base;
  cc.mode = CovarianceMode::CorrelatedFull;
  const std::vector<FitResult> rc = sweep(alphas, cc, data);
  const FitResult& sc = select(rc);

  const LossEvaluator eval(data);
  const double extra_indep = eval.extra_nll(si.model, "strip-s:s");
  const double extra_corr = eval.extra_nll(sc.model, "strip-s:s");
  const double gap = extra_indep - extra_corr;
  const double secs = seconds_since(t0);

  return {extra_corr < extra_indep && gap >= 0.05,
          note("strip-s:s extra NLL, independent %.3f vs correlated %.3f, gap %.3f  [%.0f s]",
               extra_indep, extra_corr, gap, secs)};
}

// criterion 8: every epoch of the recovery fits kept the constraint set, and
// every active term of every final model keeps P(w < 0) under Phi(-1).
Check constraint_check(const ConstraintLog& log, std::vector<GaussianModel>& finals) {
  double max_prob = 0.0;
  for (const GaussianModel& m : finals) {
    for (int i = 0; i < kNumTerms; ++i) {
      if (m.w_mu[i] > 0.0) {
        max_prob = std::max(max_prob, prob_negative_weight(m, i));
      }
    }
  }
  const bool pass = log.epochs > 0 && log.violations == 0 &&
                    max_prob <= kPhiMinusOne + 1e-9;
  std::string detail =
      note("%ld epochs: min w %.3g, min sigma eig %.3g, max sigma_ii %.8f; "
           "max P(w<0) %.6f over %zu final models",
           log.epochs, log.min_w, log.min_eig, log.max_sigma_ii, max_prob,
           finals.size());
  if (!log.first.empty()) detail += "; first violation " + log.first;
  return {pass, detail};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&failures](int n, const Check& c) {
    std::printf("criterion %d: %s  %s\n", n, c.pass ? "PASS" : "FAIL",
                c.detail.c_str());
    std::fflush(stdout);
    if (!c.pass) ++failures;
  };
  auto guarded = [](auto&& fn) -> Check {
    try {
      return fn();
    } catch (const std::exception& e) {
      return {false, note("threw: %s", e.what())};
    }
  };

  report(1, guarded(gradient_check));
  report(2, guarded(stress_check));
  report(3, guarded(variance_check));
  report(4, guarded(diagonal_equivalence_check));

  ConstraintLog log;
  std::vector<GaussianModel> finals;
  report(5, guarded([&] {
           return recovery_check(500, 10, 13, 3500, 2500, 600.0, log, finals);
         }));
  report(6, guarded([&] {
           return recovery_check(100, 5, 24, 8000, 6000, 1800.0, log, finals);
         }));
  report(7, guarded(extra_nll_check));
  report(8, guarded([&] { return constraint_check(log, finals); }));

  return failures;
}
