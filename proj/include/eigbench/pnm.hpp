#pragma once

// Binary PGM (P5) and PPM (P6) reading and writing.

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "eigbench/core.hpp"

namespace eigbench {

namespace detail {

class PnmHeaderReader {
 public:
  PnmHeaderReader(const std::string& data, const std::string& what) : data_(data), what_(what) {}

  std::size_t number() {
    skip_space_and_comments();
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos_ < data_.size() && std::isdigit(static_cast<unsigned char>(data_[pos_]))) {
      value = value * 10 + static_cast<std::size_t>(data_[pos_] - '0');
      if (value > (std::size_t{1} << 32)) fail("header value too large");
      ++pos_;
      ++digits;
    }
    if (digits == 0) fail("malformed header");
    return value;
  }

  /// Exactly one whitespace byte separates the header from the raster.
  std::size_t raster_offset() {
    if (pos_ >= data_.size() || !std::isspace(static_cast<unsigned char>(data_[pos_]))) {
      fail("missing whitespace after header");
    }
    return pos_ + 1;
  }

  [[noreturn]] void fail(const std::string& why) const { throw IoError(what_ + ": " + why); }

 private:
  void skip_space_and_comments() {
    while (pos_ < data_.size()) {
      const char ch = data_[pos_];
      if (ch == '#') {
        while (pos_ < data_.size() && data_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(ch))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& data_;
  const std::string& what_;
  std::size_t pos_ = 2;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace detail

/// Reads a P5 (gray) or P6 (RGB) file; 16-bit rasters are rescaled to 8 bits,
/// 8-bit rasters are returned as stored.
inline Image read_pnm(const std::filesystem::path& path) {
  const std::string data = detail::read_file(path);
  const std::string what = path.string();
  if (data.size() < 2 || data[0] != 'P' || (data[1] != '5' && data[1] != '6')) {
    throw IoError(what + ": not a binary PGM/PPM file");
  }
  detail::PnmHeaderReader header(data, what);
  Image image;
  image.channels = data[1] == '5' ? 1 : 3;
  image.width = header.number();
  image.height = header.number();
  const std::size_t maxval = header.number();
  if (image.width == 0 || image.height == 0) header.fail("zero dimension");
  if (maxval == 0 || maxval > 65535) header.fail("maxval outside 1..65535");
  const std::size_t offset = header.raster_offset();
  const std::size_t samples = image.width * image.height * image.channels;
  const std::size_t bytes_per_sample = maxval > 255 ? 2 : 1;
  if (data.size() - offset < samples * bytes_per_sample) header.fail("truncated raster");

  image.pixels.resize(samples);
  const auto* raster = reinterpret_cast<const unsigned char*>(data.data() + offset);
  for (std::size_t i = 0; i < samples; ++i) {
    if (bytes_per_sample == 1) {
      image.pixels[i] = raster[i];
    } else {
      const std::size_t v = (std::size_t{raster[2 * i]} << 8) | raster[2 * i + 1];
      image.pixels[i] = static_cast<std::uint8_t>((std::min(v, maxval) * 255 + maxval / 2) / maxval);
    }
  }
  return image;
}

inline void write_pnm(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw IoError("write_pnm: channels must be 1 or 3");
  if (image.pixels.size() != image.height * image.width * image.channels) {
    throw ShapeError("write_pnm: pixel count does not match dimensions");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << (image.channels == 1 ? "P5" : "P6") << '\n'
      << image.width << ' ' << image.height << '\n'
      << 255 << '\n';
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

/// Loads a mask file; any nonzero gray value is foreground.
inline BinaryMask read_mask(const std::filesystem::path& path) {
  const Image image = read_pnm(path);
  if (image.channels != 1) throw IoError(path.string() + ": mask must be a PGM (P5) file");
  std::vector<std::uint8_t> bits(image.pixels.size());
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = image.pixels[i] != 0 ? 1 : 0;
  return BinaryMask(image.height, image.width, std::move(bits));
}

/// Writes a mask as P5 with foreground 255.
inline void write_mask(const std::filesystem::path& path, const BinaryMask& mask) {
  Image image{mask.height(), mask.width(), 1, std::vector<std::uint8_t>(mask.size())};
  for (std::size_t i = 0; i < mask.size(); ++i) image.pixels[i] = mask[i] ? 255 : 0;
  write_pnm(path, image);
}

}  // namespace eigbench
