#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bvs/image.hpp"

namespace bvs {

/// Dense f32 tensor as stored in a BVST file.
///
/// Layout (all little-endian): magic "BVST", u32 version (1), u32 ndim,
/// u32 dims[ndim], then prod(dims) f32 values in row-major order.
struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t element_count() const;
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

inline constexpr std::uint32_t kBvstVersion = 1;

std::vector<std::uint8_t> encode_bvst(const Tensor& tensor);
Tensor decode_bvst(std::span<const std::uint8_t> bytes);

void write_bvst(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_bvst(const std::filesystem::path& path);

/// 2-D tensor with dims {height, width}.
Tensor to_tensor(const Image& image);
Image to_image(const Tensor& tensor);

/// Binary PGM (P5, maxval 255). Values are clamped to [0,1] and rounded.
std::vector<std::uint8_t> encode_pgm(const Image& image);
void write_pgm(const std::filesystem::path& path, const Image& image);

/// 8-bit grayscale PNG, same quantization as PGM.
std::vector<std::uint8_t> encode_png(const Image& image);

}  // namespace bvs
