#include "bvs/tensor_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace bvs {
namespace {

static_assert(std::endian::native == std::endian::little,
              "BVST encoding assumes a little-endian host");

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  if (pos + 4 > bytes.size()) throw FormatError("BVST: truncated header");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
  pos += 4;
  return v;
}

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

std::size_t Tensor::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return dims.empty() ? 0 : n;
}

std::vector<std::uint8_t> encode_bvst(const Tensor& tensor) {
  if (tensor.element_count() != tensor.data.size()) {
    throw FormatError("BVST: dims do not match data length");
  }
  std::vector<std::uint8_t> out{'B', 'V', 'S', 'T'};
  out.reserve(12 + 4 * tensor.dims.size() + 4 * tensor.data.size());
  put_u32(out, kBvstVersion);
  put_u32(out, static_cast<std::uint32_t>(tensor.dims.size()));
  for (auto d : tensor.dims) put_u32(out, d);
  for (float f : tensor.data) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

Tensor decode_bvst(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "BVST", 4) != 0) {
    throw FormatError("BVST: bad magic");
  }
  std::size_t pos = 4;
  const auto version = get_u32(bytes, pos);
  if (version != kBvstVersion) {
    throw FormatError("BVST: unsupported version " + std::to_string(version));
  }
  const auto ndim = get_u32(bytes, pos);
  if (ndim > 16) throw FormatError("BVST: implausible ndim");
  Tensor t;
  for (std::uint32_t i = 0; i < ndim; ++i) t.dims.push_back(get_u32(bytes, pos));
  const std::size_t n = t.element_count();
  if (bytes.size() - pos != 4 * n) throw FormatError("BVST: payload size mismatch");
  t.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) t.data[i] = std::bit_cast<float>(get_u32(bytes, pos));
  return t;
}

void write_bvst(const std::filesystem::path& path, const Tensor& tensor) {
  write_file(path, encode_bvst(tensor));
}

Tensor read_bvst(const std::filesystem::path& path) { return decode_bvst(read_file(path)); }

Tensor to_tensor(const Image& image) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(image.height()), static_cast<std::uint32_t>(image.width())};
  t.data.assign(image.pixels().begin(), image.pixels().end());
  return t;
}

Image to_image(const Tensor& tensor) {
  if (tensor.dims.size() != 2) throw FormatError("expected a 2-D tensor for an image");
  Image img(static_cast<int>(tensor.dims[1]), static_cast<int>(tensor.dims[0]));
  std::copy(tensor.data.begin(), tensor.data.end(), img.pixels().begin());
  return img;
}

std::vector<std::uint8_t> encode_pgm(const Image& image) {
  const std::string header = "P5\n" + std::to_string(image.width()) + " " +
                             std::to_string(image.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + image.size());
  for (double v : image.pixels()) out.push_back(quantize(v));
  return out;
}

void write_pgm(const std::filesystem::path& path, const Image& image) {
  write_file(path, encode_pgm(image));
}

std::vector<std::uint8_t> encode_png(const Image& image) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width());
  png.height = static_cast<png_uint_32>(image.height());
  png.format = PNG_FORMAT_GRAY;

  std::vector<std::uint8_t> gray(image.size());
  std::transform(image.pixels().begin(), image.pixels().end(), gray.begin(), quantize);

  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, gray.data(), 0, nullptr)) {
    throw FormatError(std::string("PNG sizing failed: ") + png.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&png, out.data(), &size, 0, gray.data(), 0, nullptr)) {
    throw FormatError(std::string("PNG encoding failed: ") + png.message);
  }
  out.resize(size);
  return out;
}

}  // namespace bvs
