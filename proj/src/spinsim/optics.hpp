#pragma once

#include <span>
#include <string>
#include <vector>

namespace spinsim {

// Paraxial ray transfer matrix [[a, b], [c, d]] acting on (height, slope);
// b is in meters, c in 1/meters. Propagation and lens elements and their
// products are unit-determinant.
struct RayMatrix {
  double a = 1.0, b = 0.0;
  double c = 0.0, d = 1.0;

  double det() const { return a * d - b * c; }
  RayMatrix operator*(const RayMatrix& rhs) const;
  RayMatrix operator-() const { return {-a, -b, -c, -d}; }
};

struct Ray {
  double height = 0.0;  // m
  double slope = 0.0;   // rad
};

Ray apply(const RayMatrix& m, const Ray& r);

RayMatrix free_space(double length);
RayMatrix thin_lens(double focal);  // focal != 0; identity stands in for an infinite focal length

// Product of elements listed in propagation order (first traversed first).
RayMatrix compose(std::span<const RayMatrix> elements);

// Focal length of the negative lens that collimates the shaper fan,
//   f2 = (phi_fa/w_in) f1 / (phi_fa/w_in - 1/f1).
// Degenerate when phi_fa/w_in == 1/f1 (the beam is already collimated).
double collimating_negative_lens(double w_in, double fan_angle, double f1);

struct SupergaussianProfile {
  double w_x = 0.0;   // half-width, m
  double w_y = 0.0;   // half-width, m
  double order = 1.0; // > 0; order 1 is an ordinary Gaussian

  void validate() const;
};

// Relative intensity exp(-2 (x/w_x)^{2n} - 2 (y/w_y)^{2n}), peak 1 at the origin.
double supergaussian(const SupergaussianProfile& profile, double x, double y);

struct DistanceSolution {
  double l1 = 0.0, l2 = 0.0, l3 = 0.0;  // m, >= 0
  double residual = 0.0;                // max entrywise deviation from the target
};

// Finds nonnegative separations such that S(l3) L(focal2) S(l2) L(focal1) S(l1)
// matches the target matrix entrywise to 1e-9. Multi-start damped root find
// over a coarse grid of spacings; throws NumericalError (reporting the best
// residual reached) when no nonnegative solution exists.
DistanceSolution solve_setup_distances(const RayMatrix& target, double focal1, double focal2);

enum class SetupInversion {
  none,      // match M_a directly
  inverted,  // match -M_a (an extra transverse inversion, e.g. a 4f relay)
  automatic, // direct first, inverted as fallback
};

// Collimated-tophat design: the simple setup M_a = L(f2) S(f1) L(f1) realized
// with lenses of focal lengths focal1/focal2 and solved separations.
struct TophatDesign {
  double w_in = 0.0;       // input Gaussian radius, m
  double fan_angle = 0.0;  // full fan angle of the shaper, rad
  double f1 = 0.0, f2 = 0.0;
  double focal1 = 0.0, focal2 = 0.0;
  double l1 = 0.0, l2 = 0.0, l3 = 0.0;
  double residual = 0.0;
  bool inverted = false;
};

TophatDesign solve_equivalent_setup(double w_in, double fan_angle, double f1, double f2,
                                    double focal1, double focal2,
                                    SetupInversion inversion = SetupInversion::none);

struct RayTracePoint {
  std::string element;
  double z = 0.0;  // cumulative position, m
  Ray ray;
};

// Marginal ray (height w_in, slope fan_angle) through the simple setup
// L(f1), S(f1), L(f2). The exit slope vanishes when f2 comes from
// collimating_negative_lens.
std::vector<RayTracePoint> trace_simple_setup(double w_in, double fan_angle, double f1, double f2);

// The same marginal ray through the solved arrangement.
std::vector<RayTracePoint> trace_solved_setup(const TophatDesign& design);

}  // namespace spinsim
