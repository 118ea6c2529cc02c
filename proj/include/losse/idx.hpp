#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace losse::idx {

inline constexpr std::uint32_t kImageMagic = 0x00000803;
inline constexpr std::uint32_t kLabelMagic = 0x00000801;

struct Images {
  std::uint32_t count = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols, row-major

  std::span<const std::uint8_t> image(std::size_t i) const {
    return {pixels.data() + i * rows * cols, static_cast<std::size_t>(rows) * cols};
  }
};

struct Labels {
  std::vector<std::uint8_t> labels;
};

// Big-endian IDX parsing. Malformed input raises ParseError carrying the byte
// offset of the problem.
Images parse_images(std::span<const std::uint8_t> bytes);
Labels parse_labels(std::span<const std::uint8_t> bytes);

Images read_images(const std::string& path);
Labels read_labels(const std::string& path);

std::vector<std::uint8_t> encode_images(const Images& images);

}  // namespace losse::idx
