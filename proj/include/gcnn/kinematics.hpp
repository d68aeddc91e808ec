#pragma once

#include <Eigen/Dense>

namespace gcnn {

/// Mounting of the orthotropic sample relative to the loading axes.
enum class Orientation {
  Aligned0_90,  ///< warp direction along loading axis 1
  Offset45      ///< warp direction at +45 degrees in the loading plane
};

/// Planar biaxial deformation of an incompressible sheet.
/// The thickness stretch is eliminated: lambda3 = 1/(lambda1*lambda2).
struct DeformationState {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  Orientation orientation = Orientation::Aligned0_90;
};

/// Unit fiber directions in the loading plane: the warp w plus the two
/// symmetric families sI/sII rotated +60/-60 degrees from w.
struct FiberFrame {
  Eigen::Vector3d w;
  Eigen::Vector3d s_i;
  Eigen::Vector3d s_ii;

  static const FiberFrame& of(Orientation orientation);
};

/// Isotropic and fiber invariants of C = F^T F together with their partial
/// derivatives with respect to (lambda1, lambda2) after the incompressibility
/// elimination of lambda3. Derivative pairs are (d/dlambda1, d/dlambda2).
struct InvariantSet {
  double i1 = 3.0;
  double i2 = 3.0;
  double i4w = 1.0;
  double i4s_i = 1.0;
  double i4s_ii = 1.0;
  Eigen::Vector2d di1 = Eigen::Vector2d::Zero();
  Eigen::Vector2d di2 = Eigen::Vector2d::Zero();
  Eigen::Vector2d di4w = Eigen::Vector2d::Zero();
  Eigen::Vector2d di4s_i = Eigen::Vector2d::Zero();
  Eigen::Vector2d di4s_ii = Eigen::Vector2d::Zero();
};

/// Evaluates all invariants and derivative pairs at a deformation state.
/// Throws std::domain_error for non-positive stretches.
InvariantSet invariants(const DeformationState& state);

/// Central-difference self check of the analytic derivative pairs at `state`
/// with step `h`. Returns the maximum relative error over all ten partials.
double invariant_derivatives_check(const DeformationState& state, double h);

}  // namespace gcnn
