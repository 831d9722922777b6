#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "qfd/error.hpp"
#include "qfd/lattice_file.hpp"
#include "qfd/potential.hpp"
#include "support.hpp"

using namespace qfd;

namespace {

const double phi = 0.5 * (1.0 + std::sqrt(5.0));

double radius(const LatticeSpec& s, int i, int j, int k) {
  const double x = s.coordinate(i), y = s.coordinate(j), z = s.coordinate(k);
  return std::sqrt(x * x + y * y + z * z);
}

void check_coefficient_identities(const PotentialGrid& g) {
  const double h = 0.5 * g.spec.dtau;
  double worst_a = 0.0, worst_b = 0.0;
  for (std::size_t s = 0; s < g.v.size(); ++s) {
    const double d = 1.0 + h * g.v[s];
    worst_a = std::max(worst_a, std::fabs(g.a_coeff[s] * d - (1.0 - h * g.v[s])) /
                                    std::max(1.0, std::fabs(1.0 - h * g.v[s])));
    worst_b = std::max(worst_b, std::fabs(g.b_coeff[s] * d - 1.0));
  }
  CHECK(worst_a < 4e-16);
  CHECK(worst_b < 4e-16);
}

} // namespace

TEST_SUITE("potential") {

TEST_CASE("coulomb values") {
  const auto spec = LatticeSpec::with_default_step(9, 0.5);  // odd N: centre on site 5
  const auto g = coulomb(spec);
  CHECK(g.v_inf == doctest::Approx(2.0));
  CHECK(g.at(5, 5, 5) == 0.0);              // r = 0 < a
  CHECK(g.at(6, 5, 5) == 0.0);              // r = a exactly
  CHECK(g.at(7, 5, 5) == 1.0 / (2 * 0.5));  // r = 2a
  CHECK(g.at(5, 3, 5) == 1.0);
  for (int i = 1; i <= 9; ++i)
    for (int j = 1; j <= 9; ++j)
      for (int k = 1; k <= 9; ++k) {
        const double r = radius(spec, i, j, k);
        if (r < spec.a) CHECK(g.at(i, j, k) == 0.0);
      }
}

TEST_CASE("coulomb is continuous across r = a") {
  const auto spec = LatticeSpec::with_default_step(33, 0.05);
  const auto g = coulomb(spec);
  for (double eps : {0.5, 0.1, 0.02}) {
    double worst = 0.0;
    for (int i = 1; i <= spec.n; ++i)
      for (int j = 1; j <= spec.n; ++j)
        for (int k = 1; k <= spec.n; ++k) {
          const double r = radius(spec, i, j, k);
          if (r >= spec.a && r <= spec.a * (1.0 + eps)) worst = std::max(worst, std::fabs(g.at(i, j, k)));
        }
    CHECK(worst <= eps / (spec.a * (1.0 + eps)) + 1e-12);
  }
}

TEST_CASE("even N keeps sites off the centre") {
  const auto spec = LatticeSpec::with_default_step(8, 0.02);
  const auto g = harmonic(spec);
  CHECK(g.at(4, 4, 4) == doctest::Approx(1.5e-4).epsilon(1e-12));
  CHECK(g.at(5, 5, 5) == g.at(4, 4, 4));
  CHECK_FALSE(g.bounded());
}

TEST_CASE("harmonic values at r = 1 and r = 2") {
  const auto spec = LatticeSpec::with_default_step(9, 0.5);
  const auto g = harmonic(spec);
  CHECK(g.at(7, 5, 5) == 0.5);
  CHECK(g.at(5, 5, 9) == 2.0);
}

TEST_CASE("point reflection invariance") {
  for (int n : {8, 9}) {
    const auto spec = LatticeSpec::with_default_step(n, 0.3);
    for (const auto& g : {coulomb(spec), harmonic(spec)}) {
      for (int i = 1; i <= n; ++i)
        for (int j = 1; j <= n; ++j)
          for (int k = 1; k <= n; ++k) CHECK(g.at(i, j, k) == g.at(n + 1 - i, n + 1 - j, n + 1 - k));
    }
  }
}

TEST_CASE("dodecahedron examples") {
  const auto spec = LatticeSpec{33, 0.1, 1.0, 0.001};
  const auto g = dodecahedron(spec);
  CHECK(g.at(17, 17, 17) == -100.0);
  CHECK(g.at(1, 1, 1) == 0.0);
  CHECK(g.at(33, 1, 33) == 0.0);
  REQUIRE(g.v_inf.has_value());
  CHECK(*g.v_inf == 0.0);
  CHECK(dodecahedron(spec, -7.0).at(17, 17, 17) == -7.0);
}

TEST_CASE("dodecahedron membership") {
  const double inv = 1.0 / phi, inv2 = inv * inv;
  CHECK(inside_dodecahedron(inv, inv, inv));
  CHECK(inside_dodecahedron(-inv, inv, -inv));
  // Cyclic permutations of (0, ±1/phi^2, ±1).
  for (double s1 : {1.0, -1.0})
    for (double s2 : {1.0, -1.0}) {
      CHECK(inside_dodecahedron(0.0, s1 * inv2, s2));
      CHECK(inside_dodecahedron(s1 * inv2, s2, 0.0));
      CHECK(inside_dodecahedron(s2, 0.0, s1 * inv2));
      CHECK_FALSE(inside_dodecahedron(0.0, s1 * inv2 * 1.001, s2 * 1.001));
    }
  CHECK_FALSE(inside_dodecahedron(inv * 1.001, inv * 1.001, inv * 1.001));
  CHECK(inside_dodecahedron(0.0, 0.0, 0.0));

  // The inscribed sphere lies inside, everything beyond the circumsphere outside.
  const double circum = std::sqrt(3.0) / phi;
  const double face_offset = phi / std::sqrt(phi * phi + 1.0);  // vertex (1/phi)^3 on normal (0, phi, 1)
  for (int t = 0; t < 200; ++t) {
    const double th = 0.1 * t, ph = 0.37 * t;
    const double ux = std::sin(th) * std::cos(ph), uy = std::sin(th) * std::sin(ph), uz = std::cos(th);
    CHECK(inside_dodecahedron(0.999 * face_offset * ux, 0.999 * face_offset * uy, 0.999 * face_offset * uz));
    CHECK_FALSE(inside_dodecahedron(1.001 * circum * ux, 1.001 * circum * uy, 1.001 * circum * uz));
  }
}

TEST_CASE("dodecahedron inside set respects the sign flips") {
  const int n = 40;
  const auto g = dodecahedron(LatticeSpec{n, 0.05, 1.0, 0.001});
  long count = 0;
  long mismatches = 0;
  for (int i = 1; i <= n; ++i)
    for (int j = 1; j <= n; ++j)
      for (int k = 1; k <= n; ++k) {
        const double v = g.at(i, j, k);
        count += v != 0.0;
        for (int flips = 1; flips < 8; ++flips) {
          const int fi = flips & 1 ? n + 1 - i : i;
          const int fj = flips & 2 ? n + 1 - j : j;
          const int fk = flips & 4 ? n + 1 - k : k;
          mismatches += g.at(fi, fj, fk) != v;
        }
        mismatches += g.at(j, k, i) != v;  // cyclic permutation
      }
  CHECK(count > 0);
  CHECK(mismatches == 0);
}

TEST_CASE("coefficient examples") {
  const auto free = constant(LatticeSpec{6, 1.0, 1.0, 0.1}, 0.0);
  for (std::size_t s = 0; s < free.v.size(); ++s) {
    CHECK(free.a_coeff[s] == 1.0);
    CHECK(free.b_coeff[s] == 1.0);
  }
  const auto two = constant(LatticeSpec{6, 1.0, 1.0, 0.5}, 2.0);
  const auto s = linear_index(two.spec, 3, 3, 3);
  CHECK(two.a_coeff[s] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(two.b_coeff[s] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(two.a_coeff[0] == 1.0);  // padding carries V = 0
}

TEST_CASE("singular coefficients name the site") {
  PotentialGrid g = constant(LatticeSpec{6, 1.0, 1.0, 0.5}, 0.0);
  g.v[linear_index(g.spec, 2, 3, 4)] = -4.0;
  g.v[linear_index(g.spec, 5, 1, 1)] = -4.0;
  try {
    precompute_coefficients(g, 0.5);
    FAIL("expected CoefficientSingularity");
  } catch (const CoefficientSingularity& e) {
    CHECK(e.i() == 2);
    CHECK(e.j() == 3);
    CHECK(e.k() == 4);
  }
  CHECK_THROWS_AS(constant(LatticeSpec{6, 1.0, 1.0, 0.5}, -4.0), CoefficientSingularity);
  g.v[linear_index(g.spec, 2, 3, 4)] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(precompute_coefficients(g, 0.5), ConfigError);
}

TEST_CASE("coefficient identities hold on every grid") {
  const LatticeSpec spec{16, 0.1, 1.0, 0.0025};
  check_coefficient_identities(coulomb(spec));
  check_coefficient_identities(harmonic(spec));
  check_coefficient_identities(dodecahedron(LatticeSpec{16, 0.1, 1.0, 0.001}));
  check_coefficient_identities(constant(spec, 3.25));
}

TEST_CASE("potential files") {
  support::TempDir dir("potential");
  const auto spec = LatticeSpec::with_default_step(10, 0.2);

  SUBCASE("round trip is bitwise") {
    const auto g = harmonic(spec);
    save_potential(g, dir / "h.qwf");
    const auto back = potential_from_file(dir / "h.qwf", spec);
    CHECK(back.v == g.v);
    CHECK(back.a_coeff == g.a_coeff);
    CHECK_FALSE(back.bounded());

    const auto c = coulomb(spec);
    save_potential(c, dir / "c.qwf");
    const auto cb = potential_from_file(dir / "c.qwf", spec);
    REQUIRE(cb.v_inf.has_value());
    CHECK(*cb.v_inf == *c.v_inf);
  }
  SUBCASE("dimension mismatch") {
    save_potential(harmonic(spec), dir / "h.qwf");
    CHECK_THROWS_AS(potential_from_file(dir / "h.qwf", LatticeSpec::with_default_step(20, 0.1)),
                    FormatError);
  }
  SUBCASE("non-finite payload") {
    save_potential(harmonic(spec), dir / "h.qwf");
    auto b = support::read_bytes(dir / "h.qwf");
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::memcpy(b.data() + lattice_file_header_size + 8 * 300, &nan, 8);
    support::write_bytes(dir / "h.qwf", b);
    CHECK_THROWS_AS(potential_from_file(dir / "h.qwf", spec), FormatError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(potential_from_file(dir / "none.qwf", spec), ConfigError);
  }
  SUBCASE("wavefunction file") {
    LatticeFileHeader h;
    h.n = 10;
    h.a = 0.2;
    write_lattice_file(dir / "w.qwf", h, std::vector<double>(spec.storage_size(), 0.0));
    CHECK_THROWS_AS(potential_from_file(dir / "w.qwf", spec), FormatError);
  }
}

TEST_CASE("potential names") {
  CHECK(parse_potential_kind("coulomb") == PotentialKind::coulomb);
  CHECK(parse_potential_kind("free") == PotentialKind::free);
  CHECK(to_string(PotentialKind::dodecahedron) == "dodecahedron");
  CHECK_THROWS_AS(parse_potential_kind("yukawa"), ConfigError);
}

}
