#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <vector>

#include "partmatch/errors.hpp"

namespace partmatch::detail {

inline void write_f64_le(std::ostream& os, std::span<const double> values) {
  for (double v : values) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    char bytes[8];
    std::memcpy(bytes, &bits, 8);
    os.write(bytes, 8);
  }
}

inline void read_f64_le(std::istream& is, std::span<double> out) {
  for (double& v : out) {
    char bytes[8];
    if (!is.read(bytes, 8)) throw IoError("unexpected end of float-64 payload");
    std::uint64_t bits;
    std::memcpy(&bits, bytes, 8);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    v = std::bit_cast<double>(bits);
  }
}

}  // namespace partmatch::detail
