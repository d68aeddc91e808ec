#include "gcnn/objective.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <tuple>

namespace gcnn {

namespace {

constexpr double kLogTwoPi = 1.8378770664093453;  // ln(2*pi)

double floored_variance(double var) { return var < kVarianceFloor ? kVarianceFloor : var; }

}  // namespace

struct LossEvaluator::Impl {
  // Observations with identical (curve, lambda1, lambda2) share the model
  // distribution; their likelihood reduces to (n, sum, sum of squares).
  struct Group {
    int state = 0;
    int curve = 0;
    Direction dir = Direction::Dir1;
    SplitTag split = SplitTag::Train;
    double n = 0.0, s1 = 0.0, s2 = 0.0;  // whole-dataset statistics
  };

  struct CurveInfo {
    std::string id;
    SplitTag split = SplitTag::Train;
    int group_begin = 0, group_end = 0;
    int obs_begin = 0, obs_end = 0;
  };

  std::vector<DeformationState> states;
  std::vector<InvariantSet> invs;
  std::vector<Group> groups;
  std::vector<CurveInfo> curve_infos;
  std::vector<int> obs_group;
  std::vector<double> obs_value;
  std::vector<int> train_obs, dev_obs, all_obs;
  double lambda_max_train = 1.0;

  struct Scratch {
    std::vector<double> grp_n, grp_s1, grp_s2;
    std::vector<int> touched;
    std::vector<std::uint32_t> state_gen;
    std::vector<std::array<TermEval, kNumTerms>> state_evals;
    std::uint32_t gen = 0;

    void ensure(std::size_t n_groups, std::size_t n_states) {
      grp_n.assign(n_groups, 0.0);
      grp_s1.resize(n_groups);
      grp_s2.resize(n_groups);
      state_gen.assign(n_states, 0);
      state_evals.resize(n_states);
      gen = 0;
    }
  };
  Scratch scratch;

  // Covariance quantities realized once per evaluation pass.
  struct ModelContext {
    const GaussianModel* model = nullptr;
    bool deterministic = true;
    bool correlated = false;
    Mat14 r = Mat14::Identity();
    Mat14 l_norm = Mat14::Identity();
  };

  ModelContext make_context(const GaussianModel& model) const {
    ModelContext ctx;
    ctx.model = &model;
    ctx.deterministic = model.covariance.mode == CovarianceMode::Deterministic;
    ctx.correlated = model.covariance.mode == CovarianceMode::CorrelatedFull;
    if (!ctx.deterministic) ctx.r = realize_correlation(model.covariance);
    if (ctx.correlated) ctx.l_norm = normalized_chol_rows(model.covariance);
    return ctx;
  }

  const std::array<TermEval, kNumTerms>& state_eval(Scratch& s, const GaussianModel& model,
                                                    int state) const {
    if (s.state_gen[state] != s.gen) {
      s.state_evals[state] = eval_library(invs[state], model.w_star);
      s.state_gen[state] = s.gen;
    }
    return s.state_evals[state];
  }

  // Loss of one group plus (optionally) its gradient contributions.
  // Returns the unnormalized group loss; gradients are accumulated raw and
  // divided by the observation count by the caller.
  double group_loss_grad(Scratch& s, const ModelContext& ctx, const Group& g, double n,
                         double s1, double s2, Gradients* out, Mat14* grad_r) const {
    const GaussianModel& model = *ctx.model;
    const auto& evals = state_eval(s, model, g.state);
    const bool dir1 = g.dir == Direction::Dir1;

    Vec14 phi, dphi, p_hat;
    double mu = 0.0;
    for (int i = 0; i < kNumTerms; ++i) {
      phi[i] = dir1 ? evals[i].f : evals[i].g;
      dphi[i] = dir1 ? evals[i].df_dwstar : evals[i].dg_dwstar;
      p_hat[i] = model.w_mu[i] * phi[i];
      mu += p_hat[i];
    }

    double var = 0.0;
    Vec14 q = Vec14::Zero(), rq = Vec14::Zero();
    if (!ctx.deterministic) {
      q = model.covariance.d.cwiseProduct(p_hat);
      rq = ctx.correlated ? Vec14(ctx.r * q) : q;
      var = q.dot(rq);
    }
    const double sigma_sq = floored_variance(var);
    const bool floored = var < kVarianceFloor;

    const double quad = s2 - 2.0 * mu * s1 + n * mu * mu;
    const double loss = 0.5 * n * (kLogTwoPi + std::log(sigma_sq)) + quad / (2.0 * sigma_sq);
    if (out == nullptr) return loss;

    const double gmu = (n * mu - s1) / sigma_sq;
    const double gvar = floored ? 0.0 : 0.5 * n / sigma_sq - quad / (2.0 * sigma_sq * sigma_sq);
    for (int i = 0; i < kNumTerms; ++i) {
      double gp = gmu;
      if (gvar != 0.0) {
        gp += gvar * 2.0 * rq[i] * model.covariance.d[i];
        out->d[i] += gvar * 2.0 * rq[i] * p_hat[i];
      }
      out->w_mu[i] += gp * phi[i];
      out->w_star[i] += gp * model.w_mu[i] * dphi[i];
    }
    if (ctx.correlated && gvar != 0.0 && grad_r != nullptr) {
      grad_r->noalias() += gvar * (q * q.transpose());
    }
    return loss;
  }

  void finish_chol_gradient(const ModelContext& ctx, const Mat14& grad_r, Gradients* out) const {
    if (!ctx.correlated) return;
    // var depends on R = L~ L~^T; the unit-diagonal forcing has zero gradient
    // through the row normalization, so the plain chain applies.
    const Mat14 gl = 2.0 * grad_r * ctx.l_norm;
    const Mat14& raw = ctx.model->covariance.chol_rows;
    for (int i = 0; i < kNumTerms; ++i) {
      double norm_sq = 0.0;
      for (int j = 0; j <= i; ++j) norm_sq += raw(i, j) * raw(i, j);
      if (norm_sq <= 0.0) continue;  // fallback row: no dependence on raw entries
      const double norm = std::sqrt(norm_sq);
      double dot = 0.0;
      for (int j = 0; j <= i; ++j) dot += gl(i, j) * ctx.l_norm(i, j);
      for (int j = 0; j <= i; ++j) {
        out->chol_rows(i, j) += (gl(i, j) - dot * ctx.l_norm(i, j)) / norm;
      }
    }
  }

  double penalty_grad(const GaussianModel& model, double alpha, Gradients* out) const {
    if (alpha < 0.0) throw std::invalid_argument("penalty: alpha must be non-negative");
    if (alpha == 0.0) return 0.0;
    const auto& lib = term_library();
    double pen = 0.0;
    for (int i = 0; i < kNumTerms; ++i) {
      if (model.w_mu[i] <= 0.0) continue;  // inactive terms carry no penalty gradient
      const IntegralEval integral =
          term_stress_integral_grad(lib[i], model.w_star[i], lambda_max_train);
      const double c = model.w_mu[i] * integral.value;
      if (c <= 0.0) continue;
      const double root = std::sqrt(c);
      pen += root;
      if (out != nullptr) {
        out->w_mu[i] += alpha * 0.5 / root * integral.value;
        out->w_star[i] += alpha * 0.5 / root * model.w_mu[i] * integral.dwstar;
      }
    }
    return alpha * pen;
  }

  bool in_split(SplitTag tag, Split split) const {
    return split == Split::All || (split == Split::Train && tag == SplitTag::Train) ||
           (split == Split::Dev && tag == SplitTag::Dev);
  }
};

LossEvaluator::LossEvaluator(const BiaxialDataset& data) : impl_(std::make_unique<Impl>()) {
  std::map<std::tuple<std::uint64_t, std::uint64_t, int>, int> state_index;

  for (const Curve& curve : data.curves()) {
    Impl::CurveInfo info;
    info.id = curve.id;
    info.split = data.split_of(curve.id);
    info.group_begin = static_cast<int>(impl_->groups.size());
    info.obs_begin = static_cast<int>(impl_->obs_value.size());

    std::map<int, int> local_groups;  // state index -> group index
    for (const CurvePoint& p : curve.points) {
      const auto key = std::make_tuple(std::bit_cast<std::uint64_t>(p.lambda1),
                                       std::bit_cast<std::uint64_t>(p.lambda2),
                                       static_cast<int>(curve.orientation));
      auto [sit, fresh] = state_index.try_emplace(key, static_cast<int>(impl_->states.size()));
      if (fresh) {
        const DeformationState state{p.lambda1, p.lambda2, curve.orientation};
        impl_->states.push_back(state);
        impl_->invs.push_back(invariants(state));
      }
      const int state = sit->second;

      auto [git, new_group] = local_groups.try_emplace(state, static_cast<int>(impl_->groups.size()));
      if (new_group) {
        Impl::Group group;
        group.state = state;
        group.curve = static_cast<int>(impl_->curve_infos.size());
        group.dir = curve.direction;
        group.split = info.split;
        impl_->groups.push_back(group);
      }
      Impl::Group& group = impl_->groups[git->second];
      group.n += 1.0;
      group.s1 += p.stress;
      group.s2 += p.stress * p.stress;

      const int obs = static_cast<int>(impl_->obs_value.size());
      impl_->obs_group.push_back(git->second);
      impl_->obs_value.push_back(p.stress);
      impl_->all_obs.push_back(obs);
      (info.split == SplitTag::Train ? impl_->train_obs : impl_->dev_obs).push_back(obs);
    }

    info.group_end = static_cast<int>(impl_->groups.size());
    info.obs_end = static_cast<int>(impl_->obs_value.size());
    impl_->curve_infos.push_back(std::move(info));
  }

  impl_->lambda_max_train = impl_->train_obs.empty() ? data.max_stretch(SplitTag::Dev)
                                                     : data.max_stretch(SplitTag::Train);
  impl_->scratch.ensure(impl_->groups.size(), impl_->states.size());
}

LossEvaluator::~LossEvaluator() = default;
LossEvaluator::LossEvaluator(LossEvaluator&&) noexcept = default;
LossEvaluator& LossEvaluator::operator=(LossEvaluator&&) noexcept = default;

double LossEvaluator::nll(const GaussianModel& model, Split split) const {
  return breakdown(model, split, 0.0).nll;
}

LossBreakdown LossEvaluator::breakdown(const GaussianModel& model, Split split,
                                       double alpha) const {
  Impl::Scratch scratch;
  scratch.ensure(0, impl_->states.size());
  scratch.gen = 1;
  const Impl::ModelContext ctx = impl_->make_context(model);

  LossBreakdown out;
  double total_n = 0.0;
  std::vector<double> curve_loss(impl_->curve_infos.size(), 0.0);
  std::vector<double> curve_n(impl_->curve_infos.size(), 0.0);
  for (const Impl::Group& g : impl_->groups) {
    if (!impl_->in_split(g.split, split)) continue;
    const double loss =
        impl_->group_loss_grad(scratch, ctx, g, g.n, g.s1, g.s2, nullptr, nullptr);
    curve_loss[g.curve] += loss;
    curve_n[g.curve] += g.n;
    out.nll += loss;
    total_n += g.n;
  }
  if (total_n == 0.0) {
    throw std::domain_error("nll: split contains no observations");
  }
  out.nll /= total_n;
  for (std::size_t c = 0; c < impl_->curve_infos.size(); ++c) {
    if (curve_n[c] > 0.0) {
      out.per_curve_nll[impl_->curve_infos[c].id] = curve_loss[c] / curve_n[c];
    }
  }
  out.reg = impl_->penalty_grad(model, alpha, nullptr);
  out.total = out.nll + out.reg;
  return out;
}

double LossEvaluator::penalty(const GaussianModel& model, double alpha) const {
  return impl_->penalty_grad(model, alpha, nullptr);
}

Gradients LossEvaluator::gradients(const GaussianModel& model, Split split, double alpha) const {
  Impl::Scratch scratch;
  scratch.ensure(0, impl_->states.size());
  scratch.gen = 1;
  const Impl::ModelContext ctx = impl_->make_context(model);

  Gradients out;
  Mat14 grad_r = Mat14::Zero();
  double total_n = 0.0;
  for (const Impl::Group& g : impl_->groups) {
    if (!impl_->in_split(g.split, split)) continue;
    impl_->group_loss_grad(scratch, ctx, g, g.n, g.s1, g.s2, &out, &grad_r);
    total_n += g.n;
  }
  if (total_n == 0.0) {
    throw std::domain_error("gradients: split contains no observations");
  }
  out.w_mu /= total_n;
  out.w_star /= total_n;
  out.d /= total_n;
  grad_r /= total_n;
  impl_->finish_chol_gradient(ctx, grad_r, &out);
  impl_->penalty_grad(model, alpha, &out);
  return out;
}

double LossEvaluator::batch_loss_grad(const GaussianModel& model, std::span<const int> obs_ids,
                                      double alpha, Gradients& out) {
  if (obs_ids.empty()) throw std::invalid_argument("batch_loss_grad: empty batch");
  Impl::Scratch& s = impl_->scratch;
  ++s.gen;

  s.touched.clear();
  for (const int id : obs_ids) {
    const int g = impl_->obs_group[id];
    if (s.grp_n[g] == 0.0) {
      s.touched.push_back(g);
      s.grp_s1[g] = 0.0;
      s.grp_s2[g] = 0.0;
    }
    const double y = impl_->obs_value[id];
    s.grp_n[g] += 1.0;
    s.grp_s1[g] += y;
    s.grp_s2[g] += y * y;
  }

  const Impl::ModelContext ctx = impl_->make_context(model);
  out = Gradients{};
  Mat14 grad_r = Mat14::Zero();
  double loss = 0.0;
  for (const int g : s.touched) {
    loss += impl_->group_loss_grad(s, ctx, impl_->groups[g], s.grp_n[g], s.grp_s1[g],
                                   s.grp_s2[g], &out, &grad_r);
    s.grp_n[g] = 0.0;
  }
  const double n = static_cast<double>(obs_ids.size());
  loss /= n;
  out.w_mu /= n;
  out.w_star /= n;
  out.d /= n;
  grad_r /= n;
  impl_->finish_chol_gradient(ctx, grad_r, &out);
  loss += impl_->penalty_grad(model, alpha, &out);
  return loss;
}

double LossEvaluator::ideal_nll(const std::string& curve_id, int* floored_points) const {
  const Impl::CurveInfo* info = nullptr;
  for (const auto& ci : impl_->curve_infos) {
    if (ci.id == curve_id) {
      info = &ci;
      break;
    }
  }
  if (info == nullptr) {
    throw std::invalid_argument("ideal_nll: no curve '" + curve_id + "' in dataset");
  }

  int floored = 0;
  double loss = 0.0, total_n = 0.0;
  for (int gi = info->group_begin; gi < info->group_end; ++gi) {
    const Impl::Group& g = impl_->groups[gi];
    const double mean = g.s1 / g.n;
    const double var_pop = std::max(0.0, g.s2 / g.n - mean * mean);
    if (g.n < 2.0 || var_pop < kVarianceFloor) ++floored;
    const double v = floored_variance(var_pop);
    loss += 0.5 * g.n * (kLogTwoPi + std::log(v)) + g.n * var_pop / (2.0 * v);
    total_n += g.n;
  }
  if (floored_points != nullptr) *floored_points = floored;
  return loss / total_n;
}

double LossEvaluator::extra_nll(const GaussianModel& model, const std::string& curve_id,
                                int* floored_points) const {
  const Impl::CurveInfo* info = nullptr;
  for (const auto& ci : impl_->curve_infos) {
    if (ci.id == curve_id) {
      info = &ci;
      break;
    }
  }
  if (info == nullptr) {
    throw std::invalid_argument("extra_nll: no curve '" + curve_id + "' in dataset");
  }

  Impl::Scratch scratch;
  scratch.ensure(0, impl_->states.size());
  scratch.gen = 1;
  const Impl::ModelContext ctx = impl_->make_context(model);
  double loss = 0.0, total_n = 0.0;
  for (int gi = info->group_begin; gi < info->group_end; ++gi) {
    const Impl::Group& g = impl_->groups[gi];
    loss += impl_->group_loss_grad(scratch, ctx, g, g.n, g.s1, g.s2, nullptr, nullptr);
    total_n += g.n;
  }
  return loss / total_n - ideal_nll(curve_id, floored_points);
}

double LossEvaluator::floor_fraction(const GaussianModel& model, Split split) const {
  Impl::Scratch scratch;
  scratch.ensure(0, impl_->states.size());
  scratch.gen = 1;
  const Impl::ModelContext ctx = impl_->make_context(model);

  double floored_n = 0.0, total_n = 0.0;
  for (const Impl::Group& g : impl_->groups) {
    if (!impl_->in_split(g.split, split)) continue;
    const auto& evals = impl_->state_eval(scratch, model, g.state);
    Vec14 p_hat;
    for (int i = 0; i < kNumTerms; ++i) {
      p_hat[i] = model.w_mu[i] * (g.dir == Direction::Dir1 ? evals[i].f : evals[i].g);
    }
    double var = 0.0;
    if (!ctx.deterministic) {
      const Vec14 q = model.covariance.d.cwiseProduct(p_hat);
      var = ctx.correlated ? q.dot(Vec14(ctx.r * q)) : q.squaredNorm();
    }
    if (var < kVarianceFloor) floored_n += g.n;
    total_n += g.n;
  }
  return total_n > 0.0 ? floored_n / total_n : 0.0;
}

std::span<const int> LossEvaluator::train_observation_ids() const {
  return impl_->train_obs;
}

double LossEvaluator::lambda_max() const { return impl_->lambda_max_train; }

double nll(const GaussianModel& model, const BiaxialDataset& data, Split split) {
  return LossEvaluator(data).nll(model, split);
}

double extra_nll(const GaussianModel& model, const BiaxialDataset& data,
                 const std::string& curve_id) {
  return LossEvaluator(data).extra_nll(model, curve_id);
}

Gradients gradients(const GaussianModel& model, const BiaxialDataset& data, Split split,
                    double alpha) {
  return LossEvaluator(data).gradients(model, split, alpha);
}

double l_half_penalty(const GaussianModel& model, double alpha, double lambda_max) {
  if (alpha < 0.0) throw std::invalid_argument("l_half_penalty: alpha must be non-negative");
  if (alpha == 0.0) return 0.0;
  const auto& lib = term_library();
  double pen = 0.0;
  for (int i = 0; i < kNumTerms; ++i) {
    if (model.w_mu[i] <= 0.0) continue;
    const double c = model.w_mu[i] * term_stress_integral(lib[i], model.w_star[i], lambda_max);
    if (c > 0.0) pen += std::sqrt(c);
  }
  return alpha * pen;
}

}  // namespace gcnn
