#include "gcnn/kinematics.hpp"

#include <cmath>
#include <stdexcept>

namespace gcnn {

namespace {

// Rotation of an in-plane vector by `angle` about the thickness axis.
Eigen::Vector3d rotated(const Eigen::Vector3d& v, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * v.x() - s * v.y(), s * v.x() + c * v.y(), 0.0};
}

FiberFrame make_frame(double warp_angle) {
  constexpr double kOffset = M_PI / 3.0;  // 60 degrees
  FiberFrame frame;
  frame.w = rotated(Eigen::Vector3d::UnitX(), warp_angle);
  frame.s_i = rotated(frame.w, kOffset);
  frame.s_ii = rotated(frame.w, -kOffset);
  return frame;
}

}  // namespace

const FiberFrame& FiberFrame::of(Orientation orientation) {
  static const FiberFrame aligned = make_frame(0.0);
  static const FiberFrame offset = make_frame(M_PI / 4.0);
  return orientation == Orientation::Aligned0_90 ? aligned : offset;
}

InvariantSet invariants(const DeformationState& state) {
  const double l1 = state.lambda1;
  const double l2 = state.lambda2;
  if (!(l1 > 0.0) || !(l2 > 0.0)) {
    throw std::domain_error("invariants: stretches must be positive, got lambda1=" +
                            std::to_string(l1) + " lambda2=" + std::to_string(l2));
  }

  const double l1sq = l1 * l1;
  const double l2sq = l2 * l2;
  const double l3sq = 1.0 / (l1sq * l2sq);  // incompressibility

  InvariantSet inv;
  inv.i1 = l1sq + l2sq + l3sq;
  inv.di1 = {2.0 * l1 - 2.0 * l3sq / l1, 2.0 * l2 - 2.0 * l3sq / l2};

  // I2 = 1/2 [I1^2 - C:C] reduces to l1^2 l2^2 + l1^-2 + l2^-2 on this diagonal C.
  inv.i2 = l1sq * l2sq + 1.0 / l1sq + 1.0 / l2sq;
  inv.di2 = {2.0 * l1 * l2sq - 2.0 / (l1sq * l1), 2.0 * l1sq * l2 - 2.0 / (l2sq * l2)};

  const FiberFrame& frame = FiberFrame::of(state.orientation);
  auto fiber = [&](const Eigen::Vector3d& v, double& value, Eigen::Vector2d& deriv) {
    const double a = v.x() * v.x();
    const double b = v.y() * v.y();
    value = a * l1sq + b * l2sq;  // v is in-plane, so lambda3 never enters
    deriv = {2.0 * a * l1, 2.0 * b * l2};
  };
  fiber(frame.w, inv.i4w, inv.di4w);
  fiber(frame.s_i, inv.i4s_i, inv.di4s_i);
  fiber(frame.s_ii, inv.i4s_ii, inv.di4s_ii);
  return inv;
}

double invariant_derivatives_check(const DeformationState& state, double h) {
  auto at = [&](double d1, double d2) {
    DeformationState s = state;
    s.lambda1 += d1;
    s.lambda2 += d2;
    return invariants(s);
  };
  const InvariantSet center = invariants(state);
  const InvariantSet p1 = at(h, 0.0), m1 = at(-h, 0.0);
  const InvariantSet p2 = at(0.0, h), m2 = at(0.0, -h);

  double worst = 0.0;
  auto check = [&](double analytic, double plus, double minus) {
    const double fd = (plus - minus) / (2.0 * h);
    const double err = std::abs(analytic - fd) / (std::abs(fd) + 1e-12);
    worst = std::max(worst, err);
  };
  check(center.di1.x(), p1.i1, m1.i1);
  check(center.di1.y(), p2.i1, m2.i1);
  check(center.di2.x(), p1.i2, m1.i2);
  check(center.di2.y(), p2.i2, m2.i2);
  check(center.di4w.x(), p1.i4w, m1.i4w);
  check(center.di4w.y(), p2.i4w, m2.i4w);
  check(center.di4s_i.x(), p1.i4s_i, m1.i4s_i);
  check(center.di4s_i.y(), p2.i4s_i, m2.i4s_i);
  check(center.di4s_ii.x(), p1.i4s_ii, m1.i4s_ii);
  check(center.di4s_ii.y(), p2.i4s_ii, m2.i4s_ii);
  return worst;
}

}  // namespace gcnn
