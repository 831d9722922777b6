#include <doctest.h>

#include <cmath>

#include "qfd/error.hpp"
#include "qfd/evolve.hpp"
#include "qfd/multires.hpp"
#include "qfd/observables.hpp"
#include "qfd/symmetry.hpp"
#include "support.hpp"

using namespace qfd;

namespace {

EvolutionParams params(double tol) {
  EvolutionParams p;
  p.tol = tol;
  p.check_freq = 20;
  p.snap_freq = 0;
  return p;
}

BootstrapStage stage(int n, double length, double tol) {
  return BootstrapStage{LatticeSpec::with_default_step(n, length / n), params(tol)};
}

} // namespace

TEST_SUITE("multires") {

TEST_CASE("resampling onto the same lattice is the identity") {
  const auto spec = LatticeSpec::with_default_step(10, 0.4);
  Field3D f = support::random_field(spec, 3);
  renormalize(f);
  CHECK(resample_unnormalized(f, spec) == f);
  const Field3D g = resample(f, spec);
  CHECK(support::max_abs_diff(f, g) <= 1e-15 * 8.0);
}

TEST_CASE("constants are reproduced") {
  const auto coarse = LatticeSpec::with_default_step(8, 0.5);
  Field3D f = allocate(coarse);
  for (int i = 1; i <= 8; ++i)
    for (int j = 1; j <= 8; ++j)
      for (int k = 1; k <= 8; ++k) f(i, j, k) = 0.3;
  for (int n : {4, 12, 16, 20}) {
    const auto fine = LatticeSpec::with_default_step(n, 4.0 / n);
    const Field3D g = resample_unnormalized(f, fine);
    for (int i = 1; i <= n; ++i)
      for (int j = 1; j <= n; ++j)
        for (int k = 1; k <= n; ++k) CHECK(g(i, j, k) == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(g(0, 3, 3) == 0.0);
  }
}

TEST_CASE("linear fields are reproduced away from the faces") {
  const double length = 4.8;
  const auto coarse = LatticeSpec::with_default_step(16, length / 16);
  const auto fine = LatticeSpec::with_default_step(32, length / 32);
  Field3D f = allocate(coarse);
  for (int i = 1; i <= 16; ++i)
    for (int j = 1; j <= 16; ++j)
      for (int k = 1; k <= 16; ++k) f(i, j, k) = coarse.coordinate(i) + 0.5 * coarse.coordinate(k);
  const Field3D g = resample_unnormalized(f, fine);
  const double hull = coarse.coordinate(16);
  int checked = 0;
  for (int i = 1; i <= 32; ++i)
    for (int j = 1; j <= 32; ++j)
      for (int k = 1; k <= 32; ++k) {
        const double x = fine.coordinate(i), z = fine.coordinate(k);
        if (std::fabs(x) > hull || std::fabs(z) > hull || std::fabs(fine.coordinate(j)) > hull) continue;
        CHECK(std::fabs(g(i, j, k) - (x + 0.5 * z)) <= 1e-13);
        ++checked;
      }
  CHECK(checked == 30 * 30 * 30);
  // Beyond the outermost coarse sites the nearest face value is used.
  CHECK(g(1, 5, 16) == doctest::Approx(coarse.coordinate(1) + 0.5 * fine.coordinate(16)).epsilon(1e-13));
}

TEST_CASE("resampling keeps antisymmetry") {
  const auto coarse = LatticeSpec::with_default_step(12, 0.5);
  Field3D f = support::random_field(coarse, 9);
  impose(f, parse_constraint("Az"));
  for (int n : {18, 24, 30}) {
    const auto fine = LatticeSpec::with_default_step(n, 6.0 / n);
    const Field3D g = resample(f, fine);
    double worst = 0.0;
    for (int i = 1; i <= n; ++i)
      for (int j = 1; j <= n; ++j)
        for (int k = 1; k <= n; ++k) worst = std::max(worst, std::fabs(g(i, j, k) + g(i, j, n + 1 - k)));
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("resampling needs equal box lengths") {
  const Field3D f = support::random_field(LatticeSpec::with_default_step(8, 0.5), 1);
  CHECK_THROWS_AS(resample(f, LatticeSpec::with_default_step(16, 0.26)), ConfigError);
  Field3D zero = allocate(LatticeSpec::with_default_step(8, 0.5));
  CHECK_THROWS_AS(resample(zero, LatticeSpec::with_default_step(16, 0.25)), ZeroNorm);
}

TEST_CASE("energy is continuous across resolutions") {
  const double length = 10.24;
  const auto coarse = LatticeSpec::with_default_step(32, length / 32);
  const auto c = evolve_to_convergence(support::random_field(coarse, 1), harmonic(coarse), params(1e-8));
  REQUIRE(c.converged);
  for (int n : {48, 64}) {
    const auto fine = LatticeSpec::with_default_step(n, length / n);
    const double e = energy(resample(c.psi, fine), harmonic(fine));
    CHECK(std::fabs(e - c.last().energy) < 0.1 * c.last().energy);
  }
}

TEST_CASE("single stage behaves like evolve_to_convergence") {
  const auto st = stage(16, 6.4, 1e-7);
  BootstrapOptions opt;
  opt.potential = harmonic;
  opt.seed = 11;
  const auto boot = bootstrap_run({st}, opt);
  const auto direct = evolve_to_convergence(support::random_field(st.spec, 11), harmonic(st.spec), st.params);
  CHECK(boot.state.psi == direct.psi);
  CHECK(boot.state.step_count == direct.step_count);
  REQUIRE(boot.stages.size() == 1);
  CHECK(boot.stages[0].steps == direct.step_count);
  CHECK(boot.stages[0].energy == direct.last().energy);
  CHECK(boot.stages[0].converged);

  opt.workers = 2;
  CHECK(bootstrap_run({st}, opt).state.psi == direct.psi);
}

TEST_CASE("the fine stage needs fewer iterations than a cold start") {
  const double length = 8.0;
  for (std::uint64_t seed : {1, 2, 3}) {
    BootstrapOptions opt;
    opt.potential = harmonic;
    opt.seed = seed;
    const auto boot = bootstrap_run({stage(16, length, 1e-7), stage(32, length, 1e-7)}, opt);
    REQUIRE(boot.stages.size() == 2);
    const auto cold = bootstrap_run({stage(32, length, 1e-7)}, opt);
    CHECK(boot.state.converged);
    CHECK(boot.stages[1].steps < cold.stages[0].steps);
    CHECK(boot.stages[1].energy == doctest::Approx(cold.stages[0].energy).epsilon(1e-5));
  }
}

TEST_CASE("carrying excited states and a given initial field") {
  const double length = 8.0;
  BootstrapOptions opt;
  opt.potential = harmonic;
  opt.carry = {1.0, 0.25};
  auto coarse = stage(16, length, 1e-7);
  coarse.params.snap_freq = 100;
  const auto boot = bootstrap_run({coarse, stage(32, length, 1e-7)}, opt);
  CHECK(boot.state.converged);
  CHECK(boot.state.last().energy == doctest::Approx(1.5).epsilon(0.01));

  BootstrapOptions seeded;
  seeded.potential = harmonic;
  seeded.initial = boot.state.psi;
  const auto warm = bootstrap_run({stage(32, length, 1e-7)}, seeded);
  CHECK(warm.state.step_count <= 2 * coarse.params.check_freq);
  const auto resampled = bootstrap_run({stage(16, length, 1e-7)}, seeded);
  CHECK(resampled.state.converged);
}

TEST_CASE("schedule validation") {
  BootstrapOptions opt;
  opt.potential = harmonic;
  CHECK_THROWS_AS(bootstrap_run({}, opt), ConfigError);
  CHECK_THROWS_AS(bootstrap_run({stage(16, 6.4, 1e-6), stage(16, 6.4, 1e-6)}, opt), ConfigError);
  CHECK_THROWS_AS(bootstrap_run({stage(32, 6.4, 1e-6), stage(16, 6.4, 1e-6)}, opt), ConfigError);
  CHECK_THROWS_AS(bootstrap_run({stage(16, 6.4, 1e-6), stage(32, 8.0, 1e-6)}, opt), ConfigError);
  opt.workers = 3;
  CHECK_THROWS_AS(bootstrap_run({stage(16, 6.4, 1e-6)}, opt), ConfigError);
  opt.workers = 1;
  opt.potential = nullptr;
  CHECK_THROWS_AS(bootstrap_run({stage(16, 6.4, 1e-6)}, opt), ConfigError);
}

TEST_CASE("an unconverged coarse stage stops the schedule") {
  BootstrapOptions opt;
  opt.potential = harmonic;
  auto coarse = stage(8, 6.4, 1e-12);
  coarse.params.max_steps = 40;
  CHECK_THROWS_AS(bootstrap_run({coarse, stage(16, 6.4, 1e-6)}, opt), NonConvergence);

  auto last = stage(16, 6.4, 1e-12);
  last.params.max_steps = 40;
  const auto r = bootstrap_run({stage(8, 6.4, 1e-6), last}, opt);
  CHECK_FALSE(r.state.converged);
  CHECK(r.stages.back().steps == 40);
}

}
