#pragma once

// Binary lattice file (little-endian):
//
//   offset size
//        0    4  magic "QWF1"
//        4    4  u32 version = 1
//        8    1  u8  kind (0 = wavefunction, 1 = potential)
//        9    3  reserved, zero
//       12    8  u64 N
//       20    8  f64 a
//       28    8  f64 m
//       36    8  f64 V_inf (potential files; 0 for wavefunctions, +inf marks
//                an unbounded potential)
//       44    8  u64 step_count
//       52       (N+2)^3 f64 values in canonical x-major order, padding included

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace qfd {

enum class PayloadKind : std::uint8_t { wavefunction = 0, potential = 1 };

struct LatticeFileHeader {
  PayloadKind kind = PayloadKind::wavefunction;
  std::uint64_t n = 0;
  double a = 0.0;
  double mass = 1.0;
  double v_inf = 0.0;
  std::uint64_t step_count = 0;
};

struct LatticeFile {
  LatticeFileHeader header;
  std::vector<double> values;
};

inline constexpr std::size_t lattice_file_header_size = 52;
inline constexpr std::uint32_t lattice_file_version = 1;

std::vector<std::uint8_t> encode_lattice_file(const LatticeFileHeader& header,
                                              std::span<const double> values);

/// Throws FormatError on bad magic, unsupported version, unknown kind,
/// truncated or oversized payload, or non-finite values.
LatticeFile decode_lattice_file(std::span<const std::uint8_t> bytes);

void write_lattice_file(const std::filesystem::path& path, const LatticeFileHeader& header,
                        std::span<const double> values);
LatticeFile read_lattice_file(const std::filesystem::path& path);

} // namespace qfd
