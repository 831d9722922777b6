#pragma once

// Little-endian encoding helpers shared by the file format and the wire protocol.

#include <bit>
#include <cstdint>
#include <cstring>
#include <vector>

namespace qfd::le {

template <typename U>
void put(std::vector<std::uint8_t>& out, U value) {
  static_assert(std::is_unsigned_v<U>);
  for (std::size_t b = 0; b < sizeof(U); ++b) {
    out.push_back(static_cast<std::uint8_t>(value >> (8 * b)));
  }
}

inline void put_f64(std::vector<std::uint8_t>& out, double value) {
  put(out, std::bit_cast<std::uint64_t>(value));
}

template <typename U>
U get(const std::uint8_t* in) {
  static_assert(std::is_unsigned_v<U>);
  U value = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) value |= static_cast<U>(in[b]) << (8 * b);
  return value;
}

inline double get_f64(const std::uint8_t* in) {
  return std::bit_cast<double>(get<std::uint64_t>(in));
}

/// Appends `count` doubles; bulk copy on little-endian hosts.
inline void put_f64_array(std::vector<std::uint8_t>& out, const double* values, std::size_t count) {
  if constexpr (std::endian::native == std::endian::little) {
    const std::size_t at = out.size();
    out.resize(at + count * 8);
    std::memcpy(out.data() + at, values, count * 8);
  } else {
    for (std::size_t i = 0; i < count; ++i) put_f64(out, values[i]);
  }
}

inline void get_f64_array(const std::uint8_t* in, double* values, std::size_t count) {
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(values, in, count * 8);
  } else {
    for (std::size_t i = 0; i < count; ++i) values[i] = get_f64(in + 8 * i);
  }
}

} // namespace qfd::le
