#include "qfd/symmetry.hpp"

#include <sstream>

#include "qfd/error.hpp"

namespace qfd {

SymmetryConstraint parse_constraint(const std::string& text) {
  if (text.size() != 2) throw ConfigError("bad symmetry constraint '" + text + "' (use e.g. Az, Sx)");
  SymmetryConstraint c;
  switch (text[0]) {
  case 'S': case 's': c.parity = Parity::symmetric; break;
  case 'A': case 'a': c.parity = Parity::antisymmetric; break;
  default: throw ConfigError("bad symmetry parity in '" + text + "' (S or A)");
  }
  switch (text[1]) {
  case 'x': case 'X': c.axis = Axis::x; break;
  case 'y': case 'Y': c.axis = Axis::y; break;
  case 'z': case 'Z': c.axis = Axis::z; break;
  default: throw ConfigError("bad symmetry axis in '" + text + "' (x, y or z)");
  }
  return c;
}

std::vector<SymmetryConstraint> parse_constraints(const std::string& comma_separated) {
  std::vector<SymmetryConstraint> out;
  std::stringstream ss(comma_separated);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(parse_constraint(item));
  }
  return out;
}

std::string to_string(const SymmetryConstraint& c) {
  std::string s(c.parity == Parity::symmetric ? "S" : "A");
  s += c.axis == Axis::x ? "x" : c.axis == Axis::y ? "y" : "z";
  return s;
}

namespace kernels {

void mirror_plane(std::span<const double> source, std::span<double> target, int n, double sign) {
  const std::size_t e = static_cast<std::size_t>(n + 2);
  for (int j = 1; j <= n; ++j) {
    for (int k = 1; k <= n; ++k) {
      const std::size_t s = static_cast<std::size_t>(j) * e + static_cast<std::size_t>(k);
      target[s] = sign * source[s];
    }
  }
}

void clear_plane(std::span<double> target, int n) {
  const std::size_t e = static_cast<std::size_t>(n + 2);
  for (int j = 1; j <= n; ++j) {
    for (int k = 1; k <= n; ++k) target[static_cast<std::size_t>(j) * e + static_cast<std::size_t>(k)] = 0.0;
  }
}

void impose_transverse(double* slab, const SlabLayout& layout, const SymmetryConstraint& c) {
  const int n = layout.n;
  const std::size_t e = static_cast<std::size_t>(n + 2);
  const double sign = c.parity == Parity::symmetric ? 1.0 : -1.0;
  const bool zero_middle = (n % 2 == 1) && c.parity == Parity::antisymmetric;
  const int middle = (n + 1) / 2;
  for (int p = 1; p <= layout.width; ++p) {
    double* plane = slab + static_cast<std::size_t>(p) * layout.plane_size();
    auto at = [&](int j, int k) -> double& {
      return plane[static_cast<std::size_t>(j) * e + static_cast<std::size_t>(k)];
    };
    for (int lo = 1; lo <= n / 2; ++lo) {
      const int hi = n + 1 - lo;
      for (int t = 1; t <= n; ++t) {
        if (c.axis == Axis::y) {
          at(hi, t) = sign * at(lo, t);
        } else {
          at(t, hi) = sign * at(t, lo);
        }
      }
    }
    if (zero_middle) {
      for (int t = 1; t <= n; ++t) {
        if (c.axis == Axis::y) {
          at(middle, t) = 0.0;
        } else {
          at(t, middle) = 0.0;
        }
      }
    }
  }
}

} // namespace kernels

void impose(Field3D& field, const SymmetryConstraint& c) {
  const int n = field.n();
  if (c.axis != Axis::x) {
    kernels::impose_transverse(field.values().data(), kernels::SlabLayout::whole(n), c);
    return;
  }
  const double sign = c.parity == Parity::symmetric ? 1.0 : -1.0;
  for (int lo = 1; lo <= n / 2; ++lo) {
    kernels::mirror_plane(field.plane(lo), field.plane(n + 1 - lo), n, sign);
  }
  if (n % 2 == 1 && c.parity == Parity::antisymmetric) {
    kernels::clear_plane(field.plane((n + 1) / 2), n);
  }
}

} // namespace qfd
