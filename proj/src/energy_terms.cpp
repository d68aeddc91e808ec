#include "gcnn/energy_terms.hpp"

#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

namespace gcnn {

namespace {

constexpr double kMaxExponent = 700.0;   // exp() overflow guard
constexpr double kSmallWstar = 1e-8;     // analytic limit below this

// Values of one activation branch at (x, b), with u = x^power folded in.
struct ActEval {
  double h = 0.0;          // energy per unit external weight
  double dh_dx = 0.0;      // chain through u included
  double ddh_dx_db = 0.0;  // mixed derivative for df/dwstar
};

ActEval activate(const TermSpec& spec, double x, double b) {
  const int k = spec.power == Power::One ? 1 : 2;
  const double u = k == 1 ? x : x * x;
  const double du_dx = k == 1 ? 1.0 : 2.0 * x;

  ActEval out;
  switch (spec.activation) {
    case Activation::Identity: {
      out.h = b * u;
      out.dh_dx = b * du_dx;
      out.ddh_dx_db = du_dx;
      break;
    }
    case Activation::Exponential: {
      const double arg = b * u;
      if (arg > kMaxExponent) {
        throw std::overflow_error("energy term " + term_name(spec.index) +
                                  ": exponent " + std::to_string(arg) + " exceeds 700");
      }
      const double e = std::exp(arg);
      if (b < kSmallWstar) {
        out.h = u * (1.0 + 0.5 * b * u);
      } else {
        out.h = std::expm1(arg) / b;
      }
      out.dh_dx = e * du_dx;
      out.ddh_dx_db = u * e * du_dx;
      break;
    }
    case Activation::LinearExponential: {
      // Library restricts this activation to power One, so u = x.
      const double arg = b * x;
      if (arg > kMaxExponent) {
        throw std::overflow_error("energy term " + term_name(spec.index) +
                                  ": exponent " + std::to_string(arg) + " exceeds 700");
      }
      const double em1 = std::expm1(arg);
      if (b < kSmallWstar) {
        out.h = 0.5 * b * x * x * (1.0 + b * x / 3.0);
      } else {
        out.h = (em1 - arg) / b;
      }
      out.dh_dx = em1;
      out.ddh_dx_db = x * std::exp(arg);
      break;
    }
  }
  return out;
}

// Gauss-Legendre nodes/weights on [-1, 1], Newton iteration on P_n.
struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
};

Quadrature gauss_legendre(int n) {
  Quadrature q;
  q.nodes.resize(n);
  q.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int j = 2; j <= n; ++j) {
        const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    q.nodes[i] = -x;
    q.nodes[n - 1 - i] = x;
    q.weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    q.weights[n - 1 - i] = q.weights[i];
  }
  return q;
}

const Quadrature& penalty_quadrature() {
  static const Quadrature q = gauss_legendre(32);
  return q;
}

const std::array<std::string, kNumTerms>& term_names() {
  static const std::array<std::string, kNumTerms> names = {
      "I1_lin",     "I1_exp",  "I1_sq",      "I1_sq_exp",  "I2_lin",
      "I2_exp",     "I2_sq",   "I2_sq_exp",  "I4w_linexp", "I4w_sq",
      "I4w_sq_exp", "I4s_linexp", "I4s_sq",  "I4s_sq_exp"};
  return names;
}

}  // namespace

const std::array<TermSpec, kNumTerms>& term_library() {
  static const std::array<TermSpec, kNumTerms> lib = {{
      {1, InvariantKind::I1, Power::One, Activation::Identity},
      {2, InvariantKind::I1, Power::One, Activation::Exponential},
      {3, InvariantKind::I1, Power::Two, Activation::Identity},
      {4, InvariantKind::I1, Power::Two, Activation::Exponential},
      {5, InvariantKind::I2, Power::One, Activation::Identity},
      {6, InvariantKind::I2, Power::One, Activation::Exponential},
      {7, InvariantKind::I2, Power::Two, Activation::Identity},
      {8, InvariantKind::I2, Power::Two, Activation::Exponential},
      {9, InvariantKind::I4w, Power::One, Activation::LinearExponential},
      {10, InvariantKind::I4w, Power::Two, Activation::Identity},
      {11, InvariantKind::I4w, Power::Two, Activation::Exponential},
      {12, InvariantKind::I4s, Power::One, Activation::LinearExponential},
      {13, InvariantKind::I4s, Power::Two, Activation::Identity},
      {14, InvariantKind::I4s, Power::Two, Activation::Exponential},
  }};
  return lib;
}

const std::string& term_name(int index) {
  if (index < 1 || index > kNumTerms) {
    throw std::invalid_argument("term_name: index " + std::to_string(index) +
                                " outside 1.." + std::to_string(kNumTerms));
  }
  return term_names()[index - 1];
}

int term_index(std::string_view name) {
  const auto& names = term_names();
  for (int i = 0; i < kNumTerms; ++i) {
    if (names[i] == name) return i + 1;
  }
  throw std::invalid_argument("term_index: unknown term name '" + std::string(name) + "'");
}

TermEval eval_term(const TermSpec& spec, const InvariantSet& inv, double wstar) {
  if (wstar < 0.0) {
    throw std::invalid_argument("eval_term: wstar must be non-negative for " +
                                term_name(spec.index) + ", got " + std::to_string(wstar));
  }

  struct Branch {
    double x;
    Eigen::Vector2d dx;
    double weight;
  };
  Branch branches[2];
  int n_branches = 1;
  switch (spec.invariant) {
    case InvariantKind::I1:
      branches[0] = {inv.i1 - 3.0, inv.di1, 1.0};
      break;
    case InvariantKind::I2:
      branches[0] = {inv.i2 - 3.0, inv.di2, 1.0};
      break;
    case InvariantKind::I4w:
      branches[0] = {inv.i4w - 1.0, inv.di4w, 1.0};
      break;
    case InvariantKind::I4s:
      branches[0] = {inv.i4s_i - 1.0, inv.di4s_i, 0.5};
      branches[1] = {inv.i4s_ii - 1.0, inv.di4s_ii, 0.5};
      n_branches = 2;
      break;
  }

  TermEval out;
  for (int bi = 0; bi < n_branches; ++bi) {
    const Branch& br = branches[bi];
    const ActEval act = activate(spec, br.x, wstar);
    out.psi += br.weight * act.h;
    out.f += br.weight * act.dh_dx * br.dx.x();
    out.g += br.weight * act.dh_dx * br.dx.y();
    out.df_dwstar += br.weight * act.ddh_dx_db * br.dx.x();
    out.dg_dwstar += br.weight * act.ddh_dx_db * br.dx.y();
    if (spec.invariant == InvariantKind::I1) out.dpsi_di1 += br.weight * act.dh_dx;
    if (spec.invariant == InvariantKind::I2) out.dpsi_di2 += br.weight * act.dh_dx;
  }
  return out;
}

std::array<TermEval, kNumTerms> eval_library(const InvariantSet& inv, const Vec14& wstar) {
  std::array<TermEval, kNumTerms> out;
  const auto& lib = term_library();
  for (int i = 0; i < kNumTerms; ++i) {
    out[i] = eval_term(lib[i], inv, wstar[i]);
  }
  return out;
}

IntegralEval term_stress_integral_grad(const TermSpec& spec, double wstar, double lambda_max) {
  if (!(lambda_max > 1.0)) {
    throw std::domain_error("term_stress_integral: lambda_max must exceed 1, got " +
                            std::to_string(lambda_max));
  }
  const Quadrature& q = penalty_quadrature();
  const double mid = 0.5 * (lambda_max + 1.0);
  const double half = 0.5 * (lambda_max - 1.0);
  IntegralEval out;
  for (std::size_t j = 0; j < q.nodes.size(); ++j) {
    const double lambda = mid + half * q.nodes[j];
    const InvariantSet inv = invariants({lambda, lambda, Orientation::Aligned0_90});
    const TermEval ev = eval_term(spec, inv, wstar);
    out.value += half * q.weights[j] * ev.f;
    out.dwstar += half * q.weights[j] * ev.df_dwstar;
  }
  return out;
}

double term_stress_integral(const TermSpec& spec, double wstar, double lambda_max) {
  return term_stress_integral_grad(spec, wstar, lambda_max).value;
}

}  // namespace gcnn
