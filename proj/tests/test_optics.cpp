#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "spinsim/errors.hpp"
#include "spinsim/optics.hpp"

using namespace spinsim;

namespace {

double residual(const RayMatrix& a, const RayMatrix& b) {
  return std::max({std::abs(a.a - b.a), std::abs(a.b - b.b), std::abs(a.c - b.c),
                   std::abs(a.d - b.d)});
}

}  // namespace

TEST_CASE("ray matrices: elementary properties") {
  const RayMatrix id = free_space(0.0);
  CHECK(id.a == 1.0);
  CHECK(id.b == 0.0);
  CHECK(id.c == 0.0);
  CHECK(id.d == 1.0);

  const std::array<RayMatrix, 2> spaces = {free_space(0.35), free_space(0.15)};
  CHECK(residual(compose(spaces), free_space(0.5)) == 0.0);

  CHECK_THROWS_AS(thin_lens(0.0), ConfigError);

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<RayMatrix> chain;
    const int n = 1 + static_cast<int>(6.0 * u(rng));
    for (int k = 0; k < n; ++k) {
      if (u(rng) < 0.5)
        chain.push_back(free_space(2.0 * u(rng)));
      else
        chain.push_back(thin_lens((u(rng) < 0.5 ? -1.0 : 1.0) * (0.02 + u(rng))));
    }
    CHECK(std::abs(compose(chain).det() - 1.0) <= 1e-12);
  }
}

TEST_CASE("collimating negative lens formula") {
  // phi_fa / w_in = 2/f1 gives f2 = 2 f1
  CHECK(collimating_negative_lens(1.0, 2.0 / 0.2, 0.2) == doctest::Approx(0.4).epsilon(1e-14));
  // f1 = 150 mm with phi_fa/w_in = 1/75 mm^-1 gives 300 mm
  CHECK(collimating_negative_lens(0.075, 1.0, 0.150) == doctest::Approx(0.300).epsilon(1e-14));
  CHECK_THROWS_AS(collimating_negative_lens(0.1, 1.0, 0.1), ConfigError);  // degenerate
  CHECK_THROWS_AS(collimating_negative_lens(-1.0, 0.03, 0.1), ConfigError);
}

TEST_CASE("collimation verified by the marginal ray") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const double w_in = 0.2e-3 + 2e-3 * u(rng);
    const double fan = 0.005 + 0.06 * u(rng);
    const double f1 = 0.05 + 0.4 * u(rng);
    const double f2 = collimating_negative_lens(w_in, fan, f1);
    const auto table = trace_simple_setup(w_in, fan, f1, f2);
    CHECK(std::abs(table.back().ray.slope) <= 1e-12 * fan);
  }
}

TEST_CASE("equivalent setup: identical lens choice reproduces the simple layout") {
  const double f1 = 0.15, f2 = -0.075;
  const TophatDesign d =
      solve_equivalent_setup(1e-3, 0.035, f1, f2, f1, f2, SetupInversion::none);
  CHECK(d.l1 == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(d.l2 == doctest::Approx(f1).epsilon(1e-12));
  CHECK(d.l3 == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(d.residual <= 1e-9);
}

TEST_CASE("equivalent setup: randomized forward-composed targets") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const double focal1 = (u(rng) < 0.3 ? -1.0 : 1.0) * (0.05 + 0.45 * u(rng));
    const double focal2 = (u(rng) < 0.3 ? -1.0 : 1.0) * (0.05 + 0.45 * u(rng));
    const double l1 = 0.6 * u(rng), l2 = 0.6 * u(rng), l3 = 0.6 * u(rng);
    const std::array<RayMatrix, 5> chain = {free_space(l1), thin_lens(focal1), free_space(l2),
                                            thin_lens(focal2), free_space(l3)};
    const RayMatrix target = compose(chain);
    const DistanceSolution sol = solve_setup_distances(target, focal1, focal2);
    CHECK(sol.residual <= 1e-9);
    CHECK(sol.l1 >= 0.0);
    CHECK(sol.l2 >= 0.0);
    CHECK(sol.l3 >= 0.0);
    // verified by residual only: the distance triple itself may differ
    const std::array<RayMatrix, 5> re = {free_space(sol.l1), thin_lens(focal1),
                                         free_space(sol.l2), thin_lens(focal2),
                                         free_space(sol.l3)};
    CHECK(residual(compose(re), target) <= 1e-9);
  }
}

TEST_CASE("equivalent setup: infeasible targets report the best residual") {
  const std::array<RayMatrix, 5> chain = {free_space(-0.3), thin_lens(0.2), free_space(0.4),
                                          thin_lens(0.25), free_space(0.1)};
  const RayMatrix target = compose(chain);
  try {
    solve_setup_distances(target, 0.2, 0.25);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("residual") != std::string::npos);
  }
}

TEST_CASE("equivalent setup: transverse inversion variant") {
  const double w_in = 1.1e-3, fan = 0.035, f1 = 0.2;
  const double f2 = collimating_negative_lens(w_in, fan, f1);
  const TophatDesign d =
      solve_equivalent_setup(w_in, fan, f1, f2, 0.3, 0.2, SetupInversion::automatic);
  CHECK(d.residual <= 1e-9);
  CHECK(d.inverted);  // this lens choice only works with the extra inversion

  const std::array<RayMatrix, 3> simple = {thin_lens(f1), free_space(f1), thin_lens(f2)};
  const RayMatrix m_a = compose(simple);
  const std::array<RayMatrix, 5> realized = {free_space(d.l1), thin_lens(d.focal1),
                                             free_space(d.l2), thin_lens(d.focal2),
                                             free_space(d.l3)};
  CHECK(residual(compose(realized), -m_a) <= 1e-9);

  // the traced marginal ray leaves collimated up to the sign flip
  const auto table = trace_solved_setup(d);
  CHECK(std::abs(table.back().ray.slope) <= 1e-9);
  CHECK(table.back().ray.height == doctest::Approx(-fan * f1).epsilon(1e-6));
}

TEST_CASE("supergaussian profile") {
  SupergaussianProfile tophat{0.42e-3, 0.42e-3, 3.2};
  CHECK(supergaussian(tophat, 0.0, 0.0) == 1.0);
  CHECK(supergaussian(tophat, tophat.w_x, 0.0) == doctest::Approx(std::exp(-2.0)));
  // flat top: at half width the intensity barely drops
  const double at_half = supergaussian(tophat, 0.5 * tophat.w_x, 0.0);
  CHECK(at_half == doctest::Approx(std::exp(-2.0 * std::pow(0.5, 6.4))).epsilon(1e-12));
  CHECK(at_half == doctest::Approx(0.976).epsilon(1e-3));
  CHECK(supergaussian(tophat, -0.3e-3, 0.1e-3) ==
        doctest::Approx(supergaussian(tophat, 0.3e-3, -0.1e-3)));

  SupergaussianProfile gauss{1e-3, 1e-3, 1.0};
  CHECK(supergaussian(gauss, 1e-3, 0.0) == doctest::Approx(std::exp(-2.0)));
  // an ordinary Gaussian is far from flat at half width
  CHECK(supergaussian(gauss, 0.5e-3, 0.0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));

  CHECK_THROWS_AS((supergaussian(SupergaussianProfile{0.0, 1.0, 1.0}, 0.0, 0.0)), ConfigError);
  CHECK_THROWS_AS((supergaussian(SupergaussianProfile{1.0, 1.0, 0.0}, 0.0, 0.0)), ConfigError);
}
