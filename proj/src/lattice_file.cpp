#include "qfd/lattice_file.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "qfd/endian.hpp"
#include "qfd/error.hpp"

namespace qfd {

namespace {

constexpr char magic[4] = {'Q', 'W', 'F', '1'};

} // namespace

std::vector<std::uint8_t> encode_lattice_file(const LatticeFileHeader& header,
                                              std::span<const double> values) {
  std::vector<std::uint8_t> out;
  out.reserve(lattice_file_header_size + values.size() * 8);
  out.insert(out.end(), std::begin(magic), std::end(magic));
  le::put<std::uint32_t>(out, lattice_file_version);
  out.push_back(static_cast<std::uint8_t>(header.kind));
  out.insert(out.end(), 3, 0);
  le::put<std::uint64_t>(out, header.n);
  le::put_f64(out, header.a);
  le::put_f64(out, header.mass);
  le::put_f64(out, header.v_inf);
  le::put<std::uint64_t>(out, header.step_count);
  le::put_f64_array(out, values.data(), values.size());
  return out;
}

LatticeFile decode_lattice_file(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < lattice_file_header_size) {
    throw FormatError("lattice file truncated: " + std::to_string(bytes.size()) +
                      " bytes is shorter than the header");
  }
  const std::uint8_t* p = bytes.data();
  if (!std::equal(std::begin(magic), std::end(magic), p)) {
    throw FormatError("lattice file has bad magic (expected QWF1)");
  }
  const auto version = le::get<std::uint32_t>(p + 4);
  if (version != lattice_file_version) {
    throw FormatError("unsupported lattice file version " + std::to_string(version));
  }
  LatticeFile file;
  const std::uint8_t kind = p[8];
  if (kind > 1) throw FormatError("unknown lattice file kind " + std::to_string(kind));
  file.header.kind = static_cast<PayloadKind>(kind);
  file.header.n = le::get<std::uint64_t>(p + 12);
  file.header.a = le::get_f64(p + 20);
  file.header.mass = le::get_f64(p + 28);
  file.header.v_inf = le::get_f64(p + 36);
  file.header.step_count = le::get<std::uint64_t>(p + 44);

  const std::uint64_t n = file.header.n;
  if (n < 1 || n > (1u << 16)) throw FormatError("implausible lattice size in header");
  const std::uint64_t count = (n + 2) * (n + 2) * (n + 2);
  const std::uint64_t expected = lattice_file_header_size + count * 8;
  if (bytes.size() != expected) {
    std::ostringstream err;
    err << "lattice file payload size mismatch: header N=" << n << " needs " << expected
        << " bytes, file has " << bytes.size();
    throw FormatError(err.str());
  }
  file.values.resize(count);
  le::get_f64_array(p + lattice_file_header_size, file.values.data(), count);
  for (std::size_t s = 0; s < file.values.size(); ++s) {
    if (!std::isfinite(file.values[s])) {
      throw FormatError("non-finite value in lattice file payload at index " + std::to_string(s));
    }
  }
  return file;
}

void write_lattice_file(const std::filesystem::path& path, const LatticeFileHeader& header,
                        std::span<const double> values) {
  const auto bytes = encode_lattice_file(header, values);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("write to '" + path.string() + "' failed");
}

LatticeFile read_lattice_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_lattice_file(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

} // namespace qfd
