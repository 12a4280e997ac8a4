#pragma once

// EIG heatmap export as a triplet sharing one path prefix:
//   <prefix>.f32   raw row-major float32 little-endian values (nats)
//   <prefix>.json  {"rows", "cols", "units": "nats", "min", "max"}
//   <prefix>.pgm   P5 preview, 0 -> 0 and ln 2 -> 255, floor rounding, clamped

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "eigbench/eig.hpp"
#include "eigbench/pnm.hpp"

namespace eigbench {

struct HeatmapFiles {
  std::filesystem::path raw;
  std::filesystem::path sidecar;
  std::filesystem::path preview;
};

inline HeatmapFiles heatmap_paths(const std::filesystem::path& prefix) {
  const std::string base = prefix.string();
  return {base + ".f32", base + ".json", base + ".pgm"};
}

inline std::uint8_t heatmap_level(float nats) {
  const double scaled = std::floor(static_cast<double>(nats) / kLn2 * 255.0);
  if (!(scaled > 0.0)) return 0;
  return static_cast<std::uint8_t>(std::min(scaled, 255.0));
}

inline HeatmapFiles export_heatmap(const EigMap& m, const std::filesystem::path& prefix) {
  if (m.values.size() != m.rows * m.cols || m.values.empty()) {
    throw ShapeError("export_heatmap: map size does not match rows x cols");
  }
  const HeatmapFiles files = heatmap_paths(prefix);
  if (prefix.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(prefix.parent_path(), ec);
  }

  std::vector<float> raw(m.values.size());
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<float>(m.values[i]);
  float lo = raw.front(), hi = raw.front();
  for (float v : raw) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }

  {
    std::string bytes(raw.size() * 4, '\0');
    for (std::size_t i = 0; i < raw.size(); ++i) {
      const auto bits = std::bit_cast<std::uint32_t>(raw[i]);
      for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    }
    std::ofstream out(files.raw, std::ios::binary);
    if (!out) throw IoError("cannot write " + files.raw.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + files.raw.string());
  }
  {
    const nlohmann::json sidecar = {{"rows", m.rows},
                                    {"cols", m.cols},
                                    {"units", "nats"},
                                    {"min", static_cast<double>(lo)},
                                    {"max", static_cast<double>(hi)}};
    std::ofstream out(files.sidecar);
    if (!out) throw IoError("cannot write " + files.sidecar.string());
    out << sidecar.dump(2) << '\n';
    if (!out) throw IoError("failed writing " + files.sidecar.string());
  }
  Image preview{m.rows, m.cols, 1, std::vector<std::uint8_t>(raw.size())};
  for (std::size_t i = 0; i < raw.size(); ++i) preview.pixels[i] = heatmap_level(raw[i]);
  write_pnm(files.preview, preview);
  return files;
}

/// Reads back a .f32 file written by export_heatmap.
inline std::vector<float> read_heatmap_raw(const std::filesystem::path& path) {
  const std::string bytes = detail::read_file(path);
  if (bytes.size() % 4 != 0) throw IoError(path.string() + ": size is not a multiple of 4");
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= std::uint32_t{static_cast<unsigned char>(bytes[4 * i + b])} << (8 * b);
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

}  // namespace eigbench
