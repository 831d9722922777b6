#pragma once

#include <span>
#include <string>
#include <vector>

#include "qfd/kernels.hpp"
#include "qfd/lattice.hpp"

namespace qfd {

enum class Axis { x = 0, y = 1, z = 2 };
enum class Parity { symmetric, antisymmetric };

/// Reflection (anti)symmetry about the lattice mid-plane normal to `axis`;
/// the reflection maps padded index i to N + 1 - i.
struct SymmetryConstraint {
  Axis axis = Axis::z;
  Parity parity = Parity::symmetric;

  friend bool operator==(const SymmetryConstraint&, const SymmetryConstraint&) = default;
};

/// "Sx", "Ay", ... (S = symmetric, A = antisymmetric).
SymmetryConstraint parse_constraint(const std::string& text);
std::vector<SymmetryConstraint> parse_constraints(const std::string& comma_separated);
std::string to_string(const SymmetryConstraint& c);

/// Copies the lower half onto the upper half along the constraint axis,
/// negated for antisymmetric parity. For odd N the central plane is zeroed
/// under antisymmetric parity. Afterwards psi(reflected) == ±psi exactly.
void impose(Field3D& field, const SymmetryConstraint& c);

namespace kernels {

/// impose() for axis y or z on the interior planes of a slab (no x coupling).
void impose_transverse(double* slab, const SlabLayout& layout, const SymmetryConstraint& c);

/// One x-plane of an x-reflection: target <- sign * source on the interior
/// (j, k) sites.
void mirror_plane(std::span<const double> source, std::span<double> target, int n, double sign);

/// Zeroes the interior (j, k) sites of one x-plane.
void clear_plane(std::span<double> target, int n);

} // namespace kernels

} // namespace qfd
