#pragma once

// LNT1 tensor files.
//
//   bytes 0..3   magic "LNT1"
//   byte  4      dtype (0 = f32, 1 = f64)
//   byte  5      rank
//   then         rank x u32 extents, little-endian
//   then         values, little-endian, row-major

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <variant>

#include "linac/tensor.hpp"

namespace linac::lnt1 {

inline constexpr std::array<char, 4> kMagic{'L', 'N', 'T', '1'};

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1 };

template <typename T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? DType::kF32 : DType::kF64;
}

namespace detail {

template <typename U>
void put_le(std::ostream& os, U v) {
  std::array<unsigned char, sizeof(U)> b;
  for (std::size_t i = 0; i < sizeof(U); ++i)
    b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(b.data()), b.size());
}

template <typename U>
U get_le(std::istream& is) {
  std::array<unsigned char, sizeof(U)> b;
  if (!is.read(reinterpret_cast<char*>(b.data()), b.size()))
    throw std::runtime_error("LNT1: truncated stream");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
  return v;
}

template <typename T>
using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;

}  // namespace detail

template <typename T>
void write(std::ostream& os, const Tensor<T>& t) {
  if (t.rank() > 255) throw std::invalid_argument("LNT1: rank exceeds 255");
  os.write(kMagic.data(), kMagic.size());
  os.put(static_cast<char>(dtype_of<T>()));
  os.put(static_cast<char>(t.rank()));
  for (std::size_t d : t.dims()) {
    if (d > std::numeric_limits<std::uint32_t>::max())
      throw std::invalid_argument("LNT1: extent exceeds u32");
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
  }
  for (T v : t.values()) detail::put_le(os, std::bit_cast<detail::Bits<T>>(v));
  if (!os) throw std::runtime_error("LNT1: write failed");
}

/// Tensor of either supported dtype.
using AnyTensor = std::variant<Tensor<float>, Tensor<double>>;

inline AnyTensor read_any(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic)
    throw std::runtime_error("LNT1: bad magic");
  const int dtype = is.get();
  const int rank = is.get();
  if (dtype < 0 || rank < 0) throw std::runtime_error("LNT1: truncated header");
  Dims dims(static_cast<std::size_t>(rank));
  for (auto& d : dims) d = detail::get_le<std::uint32_t>(is);
  auto body = [&]<typename T>(Tensor<T> t) -> AnyTensor {
    for (T& v : t.values()) v = std::bit_cast<T>(detail::get_le<detail::Bits<T>>(is));
    return t;
  };
  switch (static_cast<DType>(dtype)) {
    case DType::kF32: return body(Tensor<float>(dims));
    case DType::kF64: return body(Tensor<double>(dims));
  }
  throw std::runtime_error("LNT1: unknown dtype code " + std::to_string(dtype));
}

/// Reads a tensor, converting from the stored dtype if necessary.
template <typename T>
Tensor<T> read(std::istream& is) {
  return std::visit([](auto&& t) { return t.template cast<T>(); }, read_any(is));
}

template <typename T>
void save(const std::filesystem::path& path, const Tensor<T>& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("LNT1: cannot open " + path.string() + " for writing");
  write(os, t);
}

template <typename T>
Tensor<T> load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("LNT1: cannot open " + path.string());
  return read<T>(is);
}

}  // namespace linac::lnt1
