#include "qfd/potential.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <sstream>

#include "qfd/error.hpp"
#include "qfd/lattice_file.hpp"

namespace qfd {

namespace {

template <typename Fn>
PotentialGrid sample(const LatticeSpec& spec, std::optional<double> v_inf, Fn&& value_at) {
  spec.validate();
  PotentialGrid grid;
  grid.spec = spec;
  grid.v_inf = v_inf;
  grid.v.assign(spec.storage_size(), 0.0);
  for (int i = 1; i <= spec.n; ++i) {
    for (int j = 1; j <= spec.n; ++j) {
      for (int k = 1; k <= spec.n; ++k) {
        grid.v[linear_index(spec, i, j, k)] = value_at(i, j, k);
      }
    }
  }
  precompute_coefficients(grid, spec.dtau);
  return grid;
}

double radius(const LatticeSpec& spec, int i, int j, int k) {
  const double x = spec.coordinate(i), y = spec.coordinate(j), z = spec.coordinate(k);
  return std::sqrt(x * x + y * y + z * z);
}

struct Dodecahedron {
  std::array<std::array<double, 3>, 12> normals{};
  double offset = 0.0;

  Dodecahedron() {
    const double phi = 0.5 * (1.0 + std::sqrt(5.0));
    const double inv = 1.0 / phi;
    const double inv2 = inv * inv;

    // Vertices: (±1/φ, ±1/φ, ±1/φ) and cyclic permutations of (0, ±1/φ², ±1).
    std::array<std::array<double, 3>, 20> vertices{};
    std::size_t nv = 0;
    for (int sx : {1, -1})
      for (int sy : {1, -1})
        for (int sz : {1, -1}) vertices[nv++] = {sx * inv, sy * inv, sz * inv};
    for (int s1 : {1, -1}) {
      for (int s2 : {1, -1}) {
        vertices[nv++] = {0.0, s1 * inv2, s2 * 1.0};
        vertices[nv++] = {s1 * inv2, s2 * 1.0, 0.0};
        vertices[nv++] = {s2 * 1.0, 0.0, s1 * inv2};
      }
    }

    // Face normals point at the vertices of the dual icosahedron:
    // cyclic permutations of (0, ±φ, ±1).
    const double len = std::sqrt(phi * phi + 1.0);
    std::size_t nn = 0;
    for (int s1 : {1, -1}) {
      for (int s2 : {1, -1}) {
        normals[nn++] = {0.0, s1 * phi / len, s2 / len};
        normals[nn++] = {s1 * phi / len, s2 / len, 0.0};
        normals[nn++] = {s2 / len, 0.0, s1 * phi / len};
      }
    }

    // Common face-plane distance, taken as the largest vertex projection on
    // one normal (five vertices attain it).
    for (const auto& vtx : vertices) {
      offset = std::max(offset, vtx[0] * normals[0][0] + vtx[1] * normals[0][1] +
                                    vtx[2] * normals[0][2]);
    }
  }

  bool contains(double x, double y, double z) const {
    const double limit = offset * (1.0 + 1e-12);
    for (const auto& nrm : normals) {
      if (x * nrm[0] + y * nrm[1] + z * nrm[2] > limit) return false;
    }
    return true;
  }
};

const Dodecahedron& unit_dodecahedron() {
  static const Dodecahedron shape;
  return shape;
}

} // namespace

void precompute_coefficients(PotentialGrid& grid, double dtau) {
  const LatticeSpec& spec = grid.spec;
  grid.a_coeff.assign(grid.v.size(), 1.0);
  grid.b_coeff.assign(grid.v.size(), 1.0);
  const double half = 0.5 * dtau;
  for (std::size_t s = 0; s < grid.v.size(); ++s) {
    const double v = grid.v[s];
    if (!std::isfinite(v)) {
      const auto [i, j, k] = site_of(spec, s);
      std::ostringstream err;
      err << "potential is not finite at site (" << i << "," << j << "," << k << ")";
      throw ConfigError(err.str());
    }
    const double denom = 1.0 + half * v;
    if (denom == 0.0) {
      const auto [i, j, k] = site_of(spec, s);
      std::ostringstream err;
      err << "update coefficients are singular at site (" << i << "," << j << "," << k
          << "): 1 + dtau*V/2 = 0 with V = " << v << ", dtau = " << dtau;
      throw CoefficientSingularity(err.str(), i, j, k);
    }
    grid.a_coeff[s] = (1.0 - half * v) / denom;
    grid.b_coeff[s] = 1.0 / denom;
  }
}

PotentialGrid coulomb(const LatticeSpec& spec) {
  const double a = spec.a;
  return sample(spec, 1.0 / a, [&](int i, int j, int k) {
    const double r = radius(spec, i, j, k);
    return r < a ? 0.0 : -1.0 / r + 1.0 / a;
  });
}

PotentialGrid harmonic(const LatticeSpec& spec) {
  return sample(spec, std::nullopt, [&](int i, int j, int k) {
    const double r = radius(spec, i, j, k);
    return 0.5 * r * r;
  });
}

PotentialGrid constant(const LatticeSpec& spec, double value) {
  return sample(spec, value, [&](int, int, int) { return value; });
}

bool inside_dodecahedron(double x, double y, double z) {
  return unit_dodecahedron().contains(x, y, z);
}

PotentialGrid dodecahedron(const LatticeSpec& spec, double depth) {
  const Dodecahedron& shape = unit_dodecahedron();
  // Index 1 -> -1 and index N -> +1.
  const double scale = 2.0 / (spec.n - 1);
  auto unit = [&](int p) { return -1.0 + (p - 1) * scale; };
  return sample(spec, 0.0, [&](int i, int j, int k) {
    return shape.contains(unit(i), unit(j), unit(k)) ? depth : 0.0;
  });
}

PotentialGrid potential_from_file(const std::filesystem::path& path, const LatticeSpec& spec) {
  spec.validate();
  LatticeFile file = read_lattice_file(path);
  if (file.header.kind != PayloadKind::potential) {
    throw FormatError(path.string() + " holds a wavefunction, not a potential");
  }
  if (file.header.n != static_cast<std::uint64_t>(spec.n)) {
    std::ostringstream err;
    err << path.string() << ": dimension mismatch, file N=" << file.header.n
        << " but run N=" << spec.n;
    throw FormatError(err.str());
  }
  if (file.header.a != spec.a) {
    std::ostringstream err;
    err << path.string() << ": lattice spacing mismatch, file a=" << file.header.a
        << " but run a=" << spec.a;
    throw FormatError(err.str());
  }
  PotentialGrid grid;
  grid.spec = spec;
  grid.v = std::move(file.values);
  if (std::isfinite(file.header.v_inf)) grid.v_inf = file.header.v_inf;
  precompute_coefficients(grid, spec.dtau);
  return grid;
}

void save_potential(const PotentialGrid& grid, const std::filesystem::path& path) {
  LatticeFileHeader header;
  header.kind = PayloadKind::potential;
  header.n = static_cast<std::uint64_t>(grid.spec.n);
  header.a = grid.spec.a;
  header.mass = grid.spec.mass;
  header.v_inf = grid.v_inf.value_or(std::numeric_limits<double>::infinity());
  write_lattice_file(path, header, grid.v);
}

PotentialKind parse_potential_kind(const std::string& name) {
  if (name == "free" || name == "box") return PotentialKind::free;
  if (name == "coulomb") return PotentialKind::coulomb;
  if (name == "harmonic") return PotentialKind::harmonic;
  if (name == "dodecahedron") return PotentialKind::dodecahedron;
  if (name == "file") return PotentialKind::file;
  throw ConfigError("unknown potential '" + name +
                    "' (expected free, coulomb, harmonic, dodecahedron or file)");
}

std::string to_string(PotentialKind kind) {
  switch (kind) {
  case PotentialKind::free: return "free";
  case PotentialKind::coulomb: return "coulomb";
  case PotentialKind::harmonic: return "harmonic";
  case PotentialKind::dodecahedron: return "dodecahedron";
  case PotentialKind::file: return "file";
  }
  return "unknown";
}

} // namespace qfd
