#pragma once

// Seeded synthetic blob images for desk-scale runs.

#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "eigbench/dataset.hpp"
#include "eigbench/eig.hpp"
#include "eigbench/pnm.hpp"

namespace eigbench {

/// One star-convex blob: an ellipse with a low-order radial wobble, rendered
/// over a noisy background. The mask is the blob.
inline DatasetItem make_blob_item(const std::string& id, std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  const double s = static_cast<double>(size);
  const double cy = s * (0.35 + 0.3 * rng.uniform());
  const double cx = s * (0.35 + 0.3 * rng.uniform());
  const double ry = s * (0.14 + 0.1 * rng.uniform());
  const double rx = s * (0.14 + 0.1 * rng.uniform());
  const double tilt = std::numbers::pi * rng.uniform();
  const double wobble = 0.15 * rng.uniform();
  const double phase = 2.0 * std::numbers::pi * rng.uniform();
  const int lobes = 2 + static_cast<int>(rng.index(3));

  DatasetItem item{id, Image{size, size, 1, std::vector<std::uint8_t>(size * size)}, BinaryMask(size, size)};
  for (std::size_t r = 0; r < size; ++r) {
    for (std::size_t c = 0; c < size; ++c) {
      const double dy = static_cast<double>(r) - cy;
      const double dx = static_cast<double>(c) - cx;
      const double u = (dx * std::cos(tilt) + dy * std::sin(tilt)) / rx;
      const double v = (-dx * std::sin(tilt) + dy * std::cos(tilt)) / ry;
      const double angle = std::atan2(v, u);
      const double boundary = 1.0 + wobble * std::sin(lobes * angle + phase);
      const bool inside = u * u + v * v <= boundary * boundary;
      item.gt.set(r, c, inside);
      const double base = inside ? 170.0 : 60.0;
      item.image.pixels[r * size + c] =
          static_cast<std::uint8_t>(std::clamp(base + 40.0 * (rng.uniform() - 0.5), 0.0, 255.0));
    }
  }
  return item;
}

inline std::vector<DatasetItem> make_blob_dataset(std::size_t count, std::size_t size, std::uint64_t seed) {
  std::vector<DatasetItem> items;
  for (std::size_t i = 0; i < count; ++i) {
    std::string id = "blob" + std::string(i < 10 ? "0" : "") + std::to_string(i);
    items.push_back(make_blob_item(id, size, mix_key(seed, i)));
  }
  return items;
}

inline void write_dataset(const std::filesystem::path& dir, const std::vector<DatasetItem>& items) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  for (const auto& item : items) {
    write_pnm(dir / (item.id + ".img.pgm"), item.image);
    write_mask(dir / (item.id + ".mask.pgm"), item.gt);
  }
}

}  // namespace eigbench
