#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lensless/errors.hpp"
#include "lensless/image_field.hpp"
#include "lensless/tensor.hpp"

namespace lensless {

// On-disk tensor container:
//   bytes 0..7   magic "LENSTNSR"
//   bytes 8..9   format version, u16 little-endian, currently 1
//   bytes 10..11 rank, u16 little-endian, 1..8
//   then rank u32 little-endian dims
//   then the payload: row-major (channel-last) IEEE-754 binary32 little-endian
// A file round-trips bit-exactly through read/write.

namespace tensor_file {

inline constexpr std::array<char, 8> kMagic = {'L', 'E', 'N', 'S', 'T', 'N', 'S', 'R'};
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::uint16_t kMaxRank = 8;

static_assert(std::endian::native == std::endian::little,
              "tensor file I/O assumes a little-endian host");
static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559,
              "tensor file payload requires IEEE-754 binary32");

}  // namespace tensor_file

inline void write_tensor_file(const Tensor<float>& t, const std::filesystem::path& path) {
  if (t.rank() == 0 || t.size() == 0)
    throw ZeroSizedField("tensor write: refusing to serialize a zero-sized tensor (" +
                         shape_string(t) + ")");
  if (t.rank() > tensor_file::kMaxRank)
    throw ShapeMismatch("tensor write: rank " + std::to_string(t.rank()) + " exceeds limit");
  if (!all_finite(t)) throw NonFiniteData("tensor write: payload contains non-finite values");

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoFailure("tensor write: cannot open " + path.string());

  f.write(tensor_file::kMagic.data(), tensor_file::kMagic.size());
  std::uint16_t version = tensor_file::kVersion;
  std::uint16_t rank = static_cast<std::uint16_t>(t.rank());
  f.write(reinterpret_cast<const char*>(&version), 2);
  f.write(reinterpret_cast<const char*>(&rank), 2);
  for (std::uint32_t d : t.dims) f.write(reinterpret_cast<const char*>(&d), 4);
  f.write(reinterpret_cast<const char*>(t.v.data()),
          static_cast<std::streamsize>(t.v.size() * sizeof(float)));
  if (!f) throw IoFailure("tensor write: short write to " + path.string());
}

inline Tensor<float> read_tensor_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoFailure("tensor read: cannot open " + path.string());
  f.seekg(0, std::ios::end);
  const std::uint64_t file_size = static_cast<std::uint64_t>(f.tellg());
  f.seekg(0, std::ios::beg);

  std::array<char, 8> magic{};
  std::uint16_t version = 0, rank = 0;
  if (file_size < 12) throw MalformedHeader("tensor read: file too short for a header");
  f.read(magic.data(), 8);
  f.read(reinterpret_cast<char*>(&version), 2);
  f.read(reinterpret_cast<char*>(&rank), 2);
  if (!f || magic != tensor_file::kMagic)
    throw MalformedHeader("tensor read: bad magic in " + path.string());
  if (version != tensor_file::kVersion)
    throw MalformedHeader("tensor read: unsupported format version " + std::to_string(version));
  if (rank == 0 || rank > tensor_file::kMaxRank)
    throw MalformedHeader("tensor read: rank " + std::to_string(rank) + " out of range");
  if (file_size < 12 + 4ull * rank)
    throw MalformedHeader("tensor read: file too short for " + std::to_string(rank) + " dims");

  std::vector<std::uint32_t> dims(rank);
  f.read(reinterpret_cast<char*>(dims.data()), 4ll * rank);
  std::uint64_t count = 1;
  for (std::uint32_t d : dims) {
    if (d == 0) throw ZeroSizedField("tensor read: zero-sized dimension in " + path.string());
    if (count > (1ull << 40) / d)
      throw MalformedHeader("tensor read: implausible element count");
    count *= d;
  }

  const std::uint64_t expected = 12 + 4ull * rank + 4ull * count;
  if (file_size != expected)
    throw TruncatedPayload("tensor read: " + path.string() + " holds " + std::to_string(file_size) +
                           " bytes, expected " + std::to_string(expected));

  Tensor<float> t;
  t.dims = std::move(dims);
  t.v.resize(count);
  f.read(reinterpret_cast<char*>(t.v.data()), static_cast<std::streamsize>(4ull * count));
  if (!f) throw TruncatedPayload("tensor read: payload short in " + path.string());
  if (!all_finite(t)) throw NonFiniteData("tensor read: non-finite payload in " + path.string());
  return t;
}

// Image-shaped convenience wrappers. Domain tags are not serialized; the
// reader assigns the tag the caller expects and checks the shape against it.
template <typename T>
void write_image(const ImageField<T>& f, const std::filesystem::path& path) {
  write_tensor_file(cast_tensor<float>(f.data), path);
}

inline ImageField<float> read_image(const std::filesystem::path& path,
                                    Domain domain = Domain::sensor) {
  Tensor<float> t = read_tensor_file(path);
  if (t.rank() != 3 || (t.dims[2] != 1 && t.dims[2] != 3))
    throw MalformedHeader("tensor read: " + path.string() + " is " + shape_string(t) +
                          ", not an H x W x C image");
  return ImageField<float>(std::move(t), domain);
}

}  // namespace lensless
