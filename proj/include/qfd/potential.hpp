#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "qfd/lattice.hpp"

namespace qfd {

/// Potential sampled on the padded lattice together with the per-site
/// update coefficients
///
///   A = (1 - dtau V / 2) / (1 + dtau V / 2),   B = 1 / (1 + dtau V / 2).
///
/// Arrays are (N+2)^3 in canonical order; padding sites carry V = 0.
/// Immutable once built, so workers may share one instance.
struct PotentialGrid {
  LatticeSpec spec;
  std::vector<double> v;
  std::vector<double> a_coeff;
  std::vector<double> b_coeff;
  /// Value at spatial infinity; empty for potentials that grow without
  /// bound (binding energies are then not reported).
  std::optional<double> v_inf;

  double at(int i, int j, int k) const { return v[linear_index(spec, i, j, k)]; }
  bool bounded() const noexcept { return v_inf.has_value(); }
};

/// V(r) = 0 for r < a, -1/r + 1/a otherwise; V_inf = 1/a.
PotentialGrid coulomb(const LatticeSpec& spec);

/// V(r) = r^2 / 2; unbounded.
PotentialGrid harmonic(const LatticeSpec& spec);

/// Constant potential (value 0 gives the Dirichlet box); V_inf = value.
PotentialGrid constant(const LatticeSpec& spec, double value = 0.0);

/// `depth` inside the regular dodecahedron with circumradius sqrt(3)/phi,
/// zero outside. Lattice coordinates are mapped so that padded index 1
/// sits at -1 and index N at +1 on every axis.
PotentialGrid dodecahedron(const LatticeSpec& spec, double depth = -100.0);

/// Point-membership test in the [-1, 1]^3 frame used by dodecahedron();
/// points on a face count as inside.
bool inside_dodecahedron(double x, double y, double z);

/// Loads V (and V_inf) from a potential file and computes coefficients
/// with spec.dtau. Throws FormatError / ConfigError.
PotentialGrid potential_from_file(const std::filesystem::path& path, const LatticeSpec& spec);

/// Writes `grid` in the lattice file format with kind = potential.
void save_potential(const PotentialGrid& grid, const std::filesystem::path& path);

/// Fills A and B for time step `dtau`. Throws CoefficientSingularity naming
/// the first site (canonical order) where 1 + dtau V / 2 == 0, and
/// ConfigError for non-finite potential values.
void precompute_coefficients(PotentialGrid& grid, double dtau);

/// Potential choices understood by configuration files.
enum class PotentialKind { free, coulomb, harmonic, dodecahedron, file };

PotentialKind parse_potential_kind(const std::string& name);
std::string to_string(PotentialKind kind);

} // namespace qfd
