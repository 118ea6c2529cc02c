#include "losse/idx.hpp"

#include <fstream>
#include <iterator>

#include "losse/errors.hpp"

namespace losse::idx {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  if (bytes.size() < offset + 4) throw ParseError("unexpected end of IDX header", bytes.size());
  return (std::uint32_t(bytes[offset]) << 24) | (std::uint32_t(bytes[offset + 1]) << 16) |
         (std::uint32_t(bytes[offset + 2]) << 8) | std::uint32_t(bytes[offset + 3]);
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::vector<std::uint8_t> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open IDX file '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

Images parse_images(std::span<const std::uint8_t> bytes) {
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kImageMagic) throw ParseError("bad IDX image magic", 0);
  Images out;
  out.count = read_be32(bytes, 4);
  out.rows = read_be32(bytes, 8);
  out.cols = read_be32(bytes, 12);
  if (out.rows == 0 || out.cols == 0) throw ParseError("IDX image with zero rows or columns", 8);
  const std::uint64_t payload = std::uint64_t(out.count) * out.rows * out.cols;
  const std::size_t header = 16;
  if (bytes.size() - header < payload) {
    throw ParseError("IDX image payload truncated", bytes.size());
  }
  if (bytes.size() - header > payload) {
    throw ParseError("trailing bytes after IDX image payload", header + payload);
  }
  out.pixels.assign(bytes.begin() + header, bytes.end());
  return out;
}

Labels parse_labels(std::span<const std::uint8_t> bytes) {
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kLabelMagic) throw ParseError("bad IDX label magic", 0);
  const std::uint32_t count = read_be32(bytes, 4);
  const std::size_t header = 8;
  if (bytes.size() - header < count) throw ParseError("IDX label payload truncated", bytes.size());
  if (bytes.size() - header > count) throw ParseError("trailing bytes after IDX labels", header + count);
  return Labels{{bytes.begin() + header, bytes.end()}};
}

Images read_images(const std::string& path) { return parse_images(slurp(path)); }

Labels read_labels(const std::string& path) { return parse_labels(slurp(path)); }

std::vector<std::uint8_t> encode_images(const Images& images) {
  std::vector<std::uint8_t> out;
  out.reserve(16 + images.pixels.size());
  write_be32(out, kImageMagic);
  write_be32(out, images.count);
  write_be32(out, images.rows);
  write_be32(out, images.cols);
  out.insert(out.end(), images.pixels.begin(), images.pixels.end());
  return out;
}

}  // namespace losse::idx
