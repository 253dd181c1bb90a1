#include "spinsim/optics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Dense>

#include "spinsim/errors.hpp"

namespace spinsim {

namespace {

constexpr double kEntryTolerance = 1e-9;

double residual_norm(const RayMatrix& m, const RayMatrix& target) {
  return std::max({std::abs(m.a - target.a), std::abs(m.b - target.b),
                   std::abs(m.c - target.c), std::abs(m.d - target.d)});
}

RayMatrix setup_b(double l1, double l2, double l3, double focal1, double focal2) {
  const std::array<RayMatrix, 5> chain = {free_space(l1), thin_lens(focal1), free_space(l2),
                                          thin_lens(focal2), free_space(l3)};
  return compose(chain);
}

}  // namespace

RayMatrix RayMatrix::operator*(const RayMatrix& rhs) const {
  return {a * rhs.a + b * rhs.c, a * rhs.b + b * rhs.d,
          c * rhs.a + d * rhs.c, c * rhs.b + d * rhs.d};
}

Ray apply(const RayMatrix& m, const Ray& r) {
  return {m.a * r.height + m.b * r.slope, m.c * r.height + m.d * r.slope};
}

RayMatrix free_space(double length) {
  if (!std::isfinite(length)) throw ConfigError("propagation length must be finite");
  return {1.0, length, 0.0, 1.0};
}

RayMatrix thin_lens(double focal) {
  if (!std::isfinite(focal) || focal == 0.0)
    throw ConfigError("lens focal length must be finite and nonzero");
  return {1.0, 0.0, -1.0 / focal, 1.0};
}

RayMatrix compose(std::span<const RayMatrix> elements) {
  RayMatrix m;
  for (const auto& e : elements) m = e * m;  // later elements multiply from the left
  return m;
}

double collimating_negative_lens(double w_in, double fan_angle, double f1) {
  if (!(w_in > 0.0)) throw ConfigError("input beam radius must be > 0");
  if (!std::isfinite(fan_angle)) throw ConfigError("fan angle must be finite");
  if (f1 == 0.0 || !std::isfinite(f1)) throw ConfigError("f1 must be finite and nonzero");
  const double ratio = fan_angle / w_in;
  const double denom = ratio - 1.0 / f1;
  if (denom == 0.0)
    throw ConfigError("degenerate input: fan_angle/w_in equals 1/f1, beam already collimated");
  return ratio * f1 / denom;
}

void SupergaussianProfile::validate() const {
  if (!(w_x > 0.0) || !(w_y > 0.0)) throw ConfigError("supergaussian widths must be > 0");
  if (!(order > 0.0)) throw ConfigError("supergaussian order must be > 0");
}

double supergaussian(const SupergaussianProfile& profile, double x, double y) {
  profile.validate();
  const double ex = std::pow(std::abs(x) / profile.w_x, 2.0 * profile.order);
  const double ey = std::pow(std::abs(y) / profile.w_y, 2.0 * profile.order);
  return std::exp(-2.0 * ex - 2.0 * ey);
}

DistanceSolution solve_setup_distances(const RayMatrix& target, double focal1, double focal2) {
  if (focal1 == 0.0 || focal2 == 0.0 || !std::isfinite(focal1) || !std::isfinite(focal2))
    throw ConfigError("lens focal lengths must be finite and nonzero");

  const double f_scale = std::max(std::abs(focal1), std::abs(focal2));

  auto residual_vec = [&](const Eigen::Vector3d& l) {
    const RayMatrix m = setup_b(l[0], l[1], l[2], focal1, focal2);
    return Eigen::Vector4d(m.a - target.a, m.b - target.b, m.c - target.c, m.d - target.d);
  };

  // Damped Gauss-Newton from one starting point; the entry equations are
  // polynomial in the spacings and tame, so few iterations suffice.
  auto refine = [&](Eigen::Vector3d l) {
    double lambda = 1e-6;
    Eigen::Vector4d r = residual_vec(l);
    for (int iter = 0; iter < 200; ++iter) {
      Eigen::Matrix<double, 4, 3> jac;
      const double h = 1e-7 * f_scale;
      for (int j = 0; j < 3; ++j) {
        Eigen::Vector3d lp = l, lm = l;
        lp[j] += h;
        lm[j] -= h;
        jac.col(j) = (residual_vec(lp) - residual_vec(lm)) / (2.0 * h);
      }
      const Eigen::Matrix3d h_mat = jac.transpose() * jac;
      const Eigen::Vector3d g = jac.transpose() * r;
      bool stepped = false;
      for (int attempt = 0; attempt < 40; ++attempt) {
        Eigen::Matrix3d damped = h_mat;
        damped.diagonal() += lambda * h_mat.diagonal().cwiseMax(1e-12);
        const Eigen::Vector3d delta = damped.ldlt().solve(-g);
        const Eigen::Vector3d l_new = l + delta;
        const Eigen::Vector4d r_new = residual_vec(l_new);
        if (r_new.squaredNorm() < r.squaredNorm()) {
          l = l_new;
          r = r_new;
          lambda = std::max(lambda / 4.0, 1e-12);
          stepped = true;
          break;
        }
        lambda *= 4.0;
      }
      if (!stepped || r.norm() < 1e-14 * std::max(1.0, f_scale)) break;
    }
    return l;
  };

  // Coarse grid of starting spacings over the physically plausible range.
  const std::array<double, 5> starts = {0.0, 0.5 * f_scale, 1.0 * f_scale, 2.5 * f_scale,
                                        5.0 * f_scale};
  bool found = false;
  DistanceSolution best;
  double best_any_residual = std::numeric_limits<double>::infinity();
  Eigen::Vector3d best_any_l = Eigen::Vector3d::Zero();

  for (double s1 : starts) {
    for (double s2 : starts) {
      for (double s3 : starts) {
        Eigen::Vector3d l = refine(Eigen::Vector3d(s1, s2, s3));
        // Spacings within roundoff of zero count as zero.
        for (int j = 0; j < 3; ++j)
          if (l[j] < 0.0 && l[j] > -1e-9 * std::max(1.0, f_scale)) l[j] = 0.0;
        const RayMatrix m = setup_b(l[0], l[1], l[2], focal1, focal2);
        const double res = residual_norm(m, target);
        if (res < best_any_residual) {
          best_any_residual = res;
          best_any_l = l;
        }
        if (res > kEntryTolerance || l.minCoeff() < 0.0) continue;
        const DistanceSolution candidate{l[0], l[1], l[2], res};
        if (!found || std::tie(candidate.l1, candidate.l2, candidate.l3) <
                          std::tie(best.l1, best.l2, best.l3)) {
          best = candidate;
          found = true;
        }
      }
    }
  }

  if (!found) {
    std::ostringstream os;
    os << "no nonnegative lens spacing solves the setup-equivalence condition; "
       << "best residual " << best_any_residual << " at (L1, L2, L3) = (" << best_any_l[0]
       << ", " << best_any_l[1] << ", " << best_any_l[2] << ") m";
    throw NumericalError(os.str());
  }
  return best;
}

TophatDesign solve_equivalent_setup(double w_in, double fan_angle, double f1, double f2,
                                    double focal1, double focal2, SetupInversion inversion) {
  if (!(w_in > 0.0)) throw ConfigError("input beam radius must be > 0");
  if (!std::isfinite(fan_angle)) throw ConfigError("fan angle must be finite");

  const std::array<RayMatrix, 3> simple = {thin_lens(f1), free_space(f1), thin_lens(f2)};
  const RayMatrix m_a = compose(simple);

  auto attempt = [&](bool inverted) {
    const DistanceSolution sol =
        solve_setup_distances(inverted ? -m_a : m_a, focal1, focal2);
    TophatDesign design;
    design.w_in = w_in;
    design.fan_angle = fan_angle;
    design.f1 = f1;
    design.f2 = f2;
    design.focal1 = focal1;
    design.focal2 = focal2;
    design.l1 = sol.l1;
    design.l2 = sol.l2;
    design.l3 = sol.l3;
    design.residual = sol.residual;
    design.inverted = inverted;
    return design;
  };

  switch (inversion) {
    case SetupInversion::none:
      return attempt(false);
    case SetupInversion::inverted:
      return attempt(true);
    case SetupInversion::automatic:
      try {
        return attempt(false);
      } catch (const NumericalError&) {
        return attempt(true);
      }
  }
  throw ConfigError("unknown inversion mode");
}

std::vector<RayTracePoint> trace_simple_setup(double w_in, double fan_angle, double f1,
                                              double f2) {
  Ray ray{w_in, fan_angle};
  std::vector<RayTracePoint> table;
  table.push_back({"shaper_exit", 0.0, ray});
  ray = apply(thin_lens(f1), ray);
  table.push_back({"lens_f1", 0.0, ray});
  ray = apply(free_space(f1), ray);
  table.push_back({"waist_plane", f1, ray});
  ray = apply(thin_lens(f2), ray);
  table.push_back({"lens_f2", f1, ray});
  return table;
}

std::vector<RayTracePoint> trace_solved_setup(const TophatDesign& design) {
  Ray ray{design.w_in, design.fan_angle};
  double z = 0.0;
  std::vector<RayTracePoint> table;
  table.push_back({"shaper_exit", z, ray});
  ray = apply(free_space(design.l1), ray);
  z += design.l1;
  ray = apply(thin_lens(design.focal1), ray);
  table.push_back({"lens_F1", z, ray});
  ray = apply(free_space(design.l2), ray);
  z += design.l2;
  ray = apply(thin_lens(design.focal2), ray);
  table.push_back({"lens_F2", z, ray});
  ray = apply(free_space(design.l3), ray);
  z += design.l3;
  table.push_back({"output_plane", z, ray});
  return table;
}

}  // namespace spinsim
