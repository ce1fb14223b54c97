#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "sdiar/errors.hpp"

// Little-endian scalar I/O shared by the binary containers (SDFE, SDSG, SDEM,
// SDCK).
namespace sdiar::binary {

template <typename T>
void write_le(std::ostream& os, T value) {
  static_assert(std::is_arithmetic_v<T>);
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::uint16_t>>;
  static_assert(sizeof(T) == sizeof(U));
  const U bits = std::bit_cast<U>(value);
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i)
    bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFFu);
  os.write(bytes.data(), bytes.size());
  if (!os) throw FormatError("write failed");
}

template <typename T>
T read_le(std::istream& is) {
  static_assert(std::is_arithmetic_v<T>);
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::uint16_t>>;
  std::array<unsigned char, sizeof(U)> bytes{};
  is.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (is.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw FormatError("unexpected end of file");
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i)
    bits |= static_cast<U>(bytes[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

inline void write_magic(std::ostream& os, std::string_view magic) {
  os.write(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (!os) throw FormatError("write failed");
}

inline void expect_magic(std::istream& is, std::string_view magic) {
  std::string got(magic.size(), '\0');
  is.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (is.gcount() != static_cast<std::streamsize>(magic.size()) || got != magic)
    throw FormatError("bad magic, expected " + std::string(magic));
}

/// Common header of the frame-matrix containers (SDFE and SDSG).
struct ContainerHeader {
  std::uint32_t version = 1;
  std::uint32_t dim = 0;
  double frame_step = 0.0;

  static constexpr std::size_t kBytes = 4 + 4 + 4 + 8;
};

inline void write_header(std::ostream& os, std::string_view magic,
                         const ContainerHeader& h) {
  write_magic(os, magic);
  write_le(os, h.version);
  write_le(os, h.dim);
  write_le(os, h.frame_step);
}

inline ContainerHeader read_header(std::istream& is, std::string_view magic) {
  expect_magic(is, magic);
  ContainerHeader h;
  h.version = read_le<std::uint32_t>(is);
  if (h.version != 1)
    throw FormatError("unsupported container version " +
                      std::to_string(h.version));
  h.dim = read_le<std::uint32_t>(is);
  h.frame_step = read_le<double>(is);
  if (h.dim == 0) throw FormatError("container dimension is zero");
  if (!(h.frame_step > 0.0)) throw FormatError("non-positive frame step");
  return h;
}

}  // namespace sdiar::binary
