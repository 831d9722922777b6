#pragma once

// Padded cubic lattice storage.
//
// A lattice with N sites per axis is stored as an (N+2)^3 block: padded
// indices 0 and N+1 on every axis form a one-site shell that holds the
// boundary value (or, under slab decomposition, a neighbour's halo plane).
// Interior sites use padded indices 1..N. Storage is x-major:
//
//   index = ((i * (N+2)) + j) * (N+2) + k
//
// and this order is also the serialization order for files and the
// accumulation order for every reduction.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace qfd {

struct LatticeSpec {
  int n = 0;          ///< sites per axis
  double a = 0.0;     ///< lattice spacing
  double mass = 1.0;  ///< particle mass
  double dtau = 0.0;  ///< imaginary-time step

  /// Spec with the conventional step dtau = a^2/4.
  static LatticeSpec with_default_step(int n, double a, double mass = 1.0);

  double box_length() const noexcept { return n * a; }
  int extent() const noexcept { return n + 2; }
  std::size_t plane_size() const noexcept {
    return static_cast<std::size_t>(extent()) * static_cast<std::size_t>(extent());
  }
  std::size_t storage_size() const noexcept {
    return plane_size() * static_cast<std::size_t>(extent());
  }
  /// Padded coordinate of the lattice centre, (N+1)/2 on every axis.
  double center() const noexcept { return 0.5 * (n + 1); }
  /// Physical coordinate of padded index `p` along one axis.
  double coordinate(int p) const noexcept { return (p - center()) * a; }

  /// Throws ConfigError unless N >= 4 and a, m, dtau are positive and finite.
  void validate() const;

  friend bool operator==(const LatticeSpec&, const LatticeSpec&) = default;
};

/// Linear storage index of padded site (i, j, k); throws std::out_of_range.
std::size_t linear_index(const LatticeSpec& spec, int i, int j, int k);

/// Inverse of linear_index.
std::array<int, 3> site_of(const LatticeSpec& spec, std::size_t index);

/// Real scalar field on the padded lattice.
class Field3D {
public:
  Field3D() = default;
  explicit Field3D(const LatticeSpec& spec);

  const LatticeSpec& spec() const noexcept { return spec_; }
  int n() const noexcept { return spec_.n; }

  double& operator()(int i, int j, int k) noexcept { return values_[offset(i, j, k)]; }
  double operator()(int i, int j, int k) const noexcept { return values_[offset(i, j, k)]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  /// The (N+2)^2 values of x-plane `i` in canonical (j, k) order.
  std::span<double> plane(int i) noexcept;
  std::span<const double> plane(int i) const noexcept;

  bool operator==(const Field3D&) const = default;

private:
  std::size_t offset(int i, int j, int k) const noexcept {
    const std::size_t e = static_cast<std::size_t>(spec_.n) + 2;
    return (static_cast<std::size_t>(i) * e + static_cast<std::size_t>(j)) * e +
           static_cast<std::size_t>(k);
  }

  LatticeSpec spec_{};
  std::vector<double> values_;
};

/// Zero-filled field; throws ConfigError for invalid specs and
/// std::bad_alloc when the block cannot be allocated.
Field3D allocate(const LatticeSpec& spec);

/// Interior sites <- independent standard normal draws.
///
/// Generator: std::mt19937_64 seeded with `seed`; each pair of 64-bit draws
/// (u1, u2) is mapped to (0, 1] by ((x >> 11) + 1) * 2^-53 and then through
/// Box-Muller, emitting r cos(theta) followed by r sin(theta). Sites are
/// visited in canonical x-major order, so a seed reproduces a field exactly.
/// Padding is left untouched.
void fill_random_gaussian(Field3D& field, std::uint64_t seed);

/// Every padding site <- value; interior untouched.
void apply_dirichlet_boundary(Field3D& field, double value = 0.0);

/// Number of sites in the padding shell, 6(N+2)^2 - 12(N+2) + 8.
std::size_t padding_site_count(const LatticeSpec& spec) noexcept;

inline bool is_padding(const LatticeSpec& spec, int i, int j, int k) noexcept {
  const int last = spec.n + 1;
  return i == 0 || j == 0 || k == 0 || i == last || j == last || k == last;
}

} // namespace qfd
