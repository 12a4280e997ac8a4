#pragma once

// Dataset directories hold pairs <id>.img.pgm (or .img.ppm) and <id>.mask.pgm.

#include <algorithm>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "eigbench/core.hpp"
#include "eigbench/pnm.hpp"

namespace eigbench {

struct IngestionError : Error {
  using Error::Error;
};

struct DatasetItem {
  std::string id;
  Image image;
  BinaryMask gt;
};

struct SkippedItem {
  std::string id;
  std::string reason;
};

struct Dataset {
  std::vector<DatasetItem> items;
  std::vector<SkippedItem> skipped;
};

namespace detail {

inline bool strip_suffix(std::string& name, const std::string& suffix) {
  if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) {
    return false;
  }
  name.resize(name.size() - suffix.size());
  return true;
}

}  // namespace detail

/// Items sorted by id. A missing pair member is an error; a dimension
/// mismatch skips the item and records why.
inline Dataset load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IngestionError("dataset directory not found: " + dir.string());

  struct Pair {
    std::optional<fs::path> image;
    std::optional<fs::path> mask;
  };
  std::map<std::string, Pair> pairs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string name = entry.path().filename().string();
    if (detail::strip_suffix(name, ".img.pgm") || detail::strip_suffix(name, ".img.ppm")) {
      if (pairs[name].image) throw IngestionError("item '" + name + "': more than one image file");
      pairs[name].image = entry.path();
    } else if (detail::strip_suffix(name, ".mask.pgm")) {
      pairs[name].mask = entry.path();
    }
  }

  Dataset out;
  for (const auto& [id, pair] : pairs) {
    if (!pair.image) throw IngestionError("item '" + id + "': missing image file (" + id + ".img.pgm)");
    if (!pair.mask) throw IngestionError("item '" + id + "': missing mask file (" + id + ".mask.pgm)");
    DatasetItem item{id, read_pnm(*pair.image), read_mask(*pair.mask)};
    if (item.image.height != item.gt.height() || item.image.width != item.gt.width()) {
      out.skipped.push_back({id, "image is " + std::to_string(item.image.height) + "x" +
                                     std::to_string(item.image.width) + " but mask is " +
                                     std::to_string(item.gt.height()) + "x" +
                                     std::to_string(item.gt.width())});
      continue;
    }
    out.items.push_back(std::move(item));
  }
  return out;
}

}  // namespace eigbench
