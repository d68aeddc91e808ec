#pragma once

#include <array>
#include <string>
#include <string_view>

#include "gcnn/kinematics.hpp"

namespace gcnn {

inline constexpr int kNumTerms = 14;

using Vec14 = Eigen::Matrix<double, kNumTerms, 1>;
using Mat14 = Eigen::Matrix<double, kNumTerms, kNumTerms>;

enum class InvariantKind { I1, I2, I4w, I4s };
enum class Power { One, Two };
enum class Activation { Identity, Exponential, LinearExponential };

/// One entry of the fixed 14-term orthotropic energy library.
///
/// Per unit external weight w and inner weight b = w*, with x the shifted
/// invariant (I1-3, I2-3 or I4-1) and u = x^power:
///   Identity:           psi = b * u                      (b frozen at 1 in training)
///   Exponential:        psi = (exp(b*u) - 1) / b         (b -> 0 limit: u)
///   LinearExponential:  psi = (exp(b*x) - 1 - b*x) / b   (stress-free at x = 0)
/// I4s terms act on both fiber families with shared weights, 1/2 each.
struct TermSpec {
  int index;  // 1-based position in the library
  InvariantKind invariant;
  Power power;
  Activation activation;
};

/// The canonical library: 4 terms on I1, 4 on I2, 3 on I4w, 3 on I4s.
const std::array<TermSpec, kNumTerms>& term_library();

/// Stable serialized name of a term, e.g. "I1_exp", "I4w_sq_exp". 1-based index.
const std::string& term_name(int index);

/// Inverse of term_name. Throws std::invalid_argument for unknown names.
int term_index(std::string_view name);

/// Per-term evaluation at unit external weight. f and g are the contributions
/// to the first Piola-Kirchhoff stresses P11 and P22 of the reduced
/// (incompressibility-eliminated) energy; the hydrostatic pressure is folded
/// into them through the invariant derivative pairs.
struct TermEval {
  double psi = 0.0;        // [kPa]
  double f = 0.0;          // d psi / d lambda1 [kPa]
  double g = 0.0;          // d psi / d lambda2 [kPa]
  double dpsi_di1 = 0.0;   // pressure-term bookkeeping
  double dpsi_di2 = 0.0;
  double df_dwstar = 0.0;
  double dg_dwstar = 0.0;
};

/// Evaluates one term. Throws std::invalid_argument for wstar < 0 and
/// std::overflow_error (naming the term) when an exponent exceeds 700.
TermEval eval_term(const TermSpec& spec, const InvariantSet& inv, double wstar);

/// Evaluates the whole library with per-term inner weights.
std::array<TermEval, kNumTerms> eval_library(const InvariantSet& inv, const Vec14& wstar);

/// Integral of the term's unit-weight equibiaxial P11 over lambda in
/// [1, lambda_max] at the aligned orientation; the stress scale used by the
/// sparsity penalty. Throws std::domain_error for lambda_max <= 1.
double term_stress_integral(const TermSpec& spec, double wstar, double lambda_max);

struct IntegralEval {
  double value = 0.0;
  double dwstar = 0.0;
};

/// term_stress_integral together with its derivative with respect to wstar
/// (same quadrature rule applied to the integrand derivative).
IntegralEval term_stress_integral_grad(const TermSpec& spec, double wstar, double lambda_max);

}  // namespace gcnn
