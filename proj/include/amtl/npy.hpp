#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

namespace amtl {

enum class NpyType { UInt8, Float64 };

/// A C-order array read from or written to NPY v1.0.
struct NpyArray {
  std::vector<std::size_t> shape;
  std::variant<std::vector<std::uint8_t>, std::vector<double>> data;

  NpyType type() const { return data.index() == 0 ? NpyType::UInt8 : NpyType::Float64; }
  std::size_t element_count() const;

  const std::vector<std::uint8_t> &u8() const { return std::get<0>(data); }
  const std::vector<double> &f64() const { return std::get<1>(data); }

  friend bool operator==(const NpyArray &, const NpyArray &) = default;
};

/// Parses NPY v1.0 bytes ('|u1' or '<f8', fortran_order False).
/// Throws FormatError on bad magic, unsupported version/dtype/order, a
/// malformed header or a truncated payload.
NpyArray parse_npy(std::span<const std::uint8_t> bytes);

/// Serializes to NPY v1.0; the data section starts at a multiple of 64 bytes.
std::vector<std::uint8_t> write_npy(const NpyArray &array);

NpyArray read_npy_file(const std::filesystem::path &path);
void write_npy_file(const std::filesystem::path &path, const NpyArray &array);

} // namespace amtl
