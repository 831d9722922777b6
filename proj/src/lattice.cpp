#include "qfd/lattice.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "qfd/error.hpp"

namespace qfd {

LatticeSpec LatticeSpec::with_default_step(int n, double a, double mass) {
  return LatticeSpec{n, a, mass, a * a / 4.0};
}

void LatticeSpec::validate() const {
  auto positive = [](double x) { return std::isfinite(x) && x > 0.0; };
  std::ostringstream err;
  if (n < 4) err << "lattice needs N >= 4 (got " << n << "); ";
  if (!positive(a)) err << "lattice spacing must be positive (got " << a << "); ";
  if (!positive(mass)) err << "mass must be positive (got " << mass << "); ";
  if (!positive(dtau)) err << "time step must be positive (got " << dtau << "); ";
  if (!err.str().empty()) throw ConfigError(err.str());
}

std::size_t linear_index(const LatticeSpec& spec, int i, int j, int k) {
  const int last = spec.n + 1;
  if (i < 0 || j < 0 || k < 0 || i > last || j > last || k > last) {
    std::ostringstream err;
    err << "site (" << i << "," << j << "," << k << ") outside padded lattice 0.." << last;
    throw std::out_of_range(err.str());
  }
  const std::size_t e = static_cast<std::size_t>(spec.extent());
  return (static_cast<std::size_t>(i) * e + static_cast<std::size_t>(j)) * e +
         static_cast<std::size_t>(k);
}

std::array<int, 3> site_of(const LatticeSpec& spec, std::size_t index) {
  if (index >= spec.storage_size()) throw std::out_of_range("linear index beyond lattice storage");
  const std::size_t e = static_cast<std::size_t>(spec.extent());
  const int k = static_cast<int>(index % e);
  index /= e;
  const int j = static_cast<int>(index % e);
  const int i = static_cast<int>(index / e);
  return {i, j, k};
}

Field3D::Field3D(const LatticeSpec& spec) : spec_(spec), values_(spec.storage_size(), 0.0) {}

std::span<double> Field3D::plane(int i) noexcept {
  return std::span<double>(values_).subspan(static_cast<std::size_t>(i) * spec_.plane_size(),
                                            spec_.plane_size());
}

std::span<const double> Field3D::plane(int i) const noexcept {
  return std::span<const double>(values_).subspan(static_cast<std::size_t>(i) * spec_.plane_size(),
                                                  spec_.plane_size());
}

Field3D allocate(const LatticeSpec& spec) {
  spec.validate();
  return Field3D(spec);
}

namespace {

double unit_interval(std::uint64_t bits) {
  // (0, 1]: never zero, so log() below stays finite.
  return static_cast<double>((bits >> 11) + 1) * 0x1.0p-53;
}

} // namespace

void fill_random_gaussian(Field3D& field, std::uint64_t seed) {
  std::mt19937_64 engine(seed);
  const int n = field.n();
  bool have_spare = false;
  double spare = 0.0;
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= n; ++j) {
      for (int k = 1; k <= n; ++k) {
        if (have_spare) {
          field(i, j, k) = spare;
          have_spare = false;
          continue;
        }
        const double u1 = unit_interval(engine());
        const double u2 = unit_interval(engine());
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        field(i, j, k) = r * std::cos(theta);
        spare = r * std::sin(theta);
        have_spare = true;
      }
    }
  }
}

void apply_dirichlet_boundary(Field3D& field, double value) {
  const int last = field.n() + 1;
  for (int i = 0; i <= last; ++i) {
    const bool face_i = (i == 0 || i == last);
    for (int j = 0; j <= last; ++j) {
      const bool face_j = face_i || j == 0 || j == last;
      if (face_j) {
        for (int k = 0; k <= last; ++k) field(i, j, k) = value;
      } else {
        field(i, j, 0) = value;
        field(i, j, last) = value;
      }
    }
  }
}

std::size_t padding_site_count(const LatticeSpec& spec) noexcept {
  const std::size_t e = static_cast<std::size_t>(spec.extent());
  return 6 * e * e - 12 * e + 8;
}

} // namespace qfd
