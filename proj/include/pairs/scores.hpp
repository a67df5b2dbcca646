#pragma once
// ScoreTensor: per-image x per-patch x per-class scores, the interchange
// object between external feature extraction and score aggregation.
// Per-patch vectors are typically softmax outputs but any finite reals
// are accepted.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "pairs/binio.hpp"
#include "pairs/errors.hpp"

namespace pairs {

inline constexpr uint8_t kSplitTest = 0;
inline constexpr uint8_t kSplitTrain = 1;

struct ScoreTensor {
  int n_images = 0;
  int n_patches = 0;
  int n_classes = 0;
  std::vector<float> data;     // image-major, then patch, then class
  std::vector<int> labels;     // class index per image
  std::vector<uint8_t> split;  // kSplitTrain / kSplitTest per image

  float at(int image, int patch, int cls) const {
    return data[(static_cast<size_t>(image) * n_patches + patch) * n_classes + cls];
  }

  float& at(int image, int patch, int cls) {
    return data[(static_cast<size_t>(image) * n_patches + patch) * n_classes + cls];
  }

  std::span<const float> row(int image, int patch) const {
    return {data.data() + (static_cast<size_t>(image) * n_patches + patch) * n_classes,
            static_cast<size_t>(n_classes)};
  }

  int count_split(uint8_t flag) const {
    int c = 0;
    for (uint8_t s : split) c += (s == flag) ? 1 : 0;
    return c;
  }
};

inline void validate(const ScoreTensor& t) {
  if (t.n_images < 0 || t.n_patches <= 0 || t.n_classes <= 0) {
    throw DimensionMismatchError("score tensor dimensions must be positive");
  }
  const size_t expect =
      static_cast<size_t>(t.n_images) * t.n_patches * t.n_classes;
  if (t.data.size() != expect) {
    throw DimensionMismatchError("score data length != images*patches*classes");
  }
  if (t.labels.size() != static_cast<size_t>(t.n_images) ||
      t.split.size() != static_cast<size_t>(t.n_images)) {
    throw DimensionMismatchError("labels/split length != image count");
  }
  for (int l : t.labels) {
    if (l < 0 || l >= t.n_classes) {
      throw DimensionMismatchError("label out of class range");
    }
  }
  for (float v : t.data) {
    if (!std::isfinite(v)) throw BadFormatError("score values must be finite");
  }
}

// ---------------------------------------------------------------------------
// File format: magic "PSCR", u32 n_images, n_patches, n_classes, then
// labels (u32 per image), split flags (u8 per image), then the scores as
// little-endian f32, image-major row-major.
// ---------------------------------------------------------------------------

inline void write_score_tensor(std::ostream& os, const ScoreTensor& t) {
  binio::write_magic(os, "PSCR");
  binio::write_u32(os, static_cast<uint32_t>(t.n_images));
  binio::write_u32(os, static_cast<uint32_t>(t.n_patches));
  binio::write_u32(os, static_cast<uint32_t>(t.n_classes));
  for (int l : t.labels) binio::write_u32(os, static_cast<uint32_t>(l));
  for (uint8_t s : t.split) binio::write_u8(os, s);
  binio::write_f32_array(os, t.data);
}

inline void write_score_tensor(const std::filesystem::path& path, const ScoreTensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw MissingFileError(path.string());
  write_score_tensor(os, t);
}

inline ScoreTensor read_score_tensor(std::istream& is) {
  binio::expect_magic(is, "PSCR");
  ScoreTensor t;
  t.n_images = static_cast<int>(binio::read_u32(is));
  t.n_patches = static_cast<int>(binio::read_u32(is));
  t.n_classes = static_cast<int>(binio::read_u32(is));
  if (t.n_images < 0 || t.n_patches <= 0 || t.n_classes <= 0) {
    throw BadFormatError("score tensor header out of range");
  }
  t.labels.resize(static_cast<size_t>(t.n_images));
  for (int& l : t.labels) l = static_cast<int>(binio::read_u32(is));
  t.split.resize(static_cast<size_t>(t.n_images));
  for (uint8_t& s : t.split) s = binio::read_u8(is);
  t.data.resize(static_cast<size_t>(t.n_images) * t.n_patches * t.n_classes);
  binio::read_f32_array(is, t.data);
  try {
    validate(t);
  } catch (const ConstraintError& e) {
    throw BadFormatError(e.what());
  }
  return t;
}

inline ScoreTensor read_score_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingFileError(path.string());
  return read_score_tensor(is);
}

// Debug dump: one "image_id,patch_id,score..." row per (image, patch).
inline void write_scores_csv(std::ostream& os, const ScoreTensor& t) {
  os << "image_id,patch_id";
  for (int c = 0; c < t.n_classes; ++c) os << ",class" << c;
  os << '\n';
  char buf[64];
  for (int i = 0; i < t.n_images; ++i) {
    for (int p = 0; p < t.n_patches; ++p) {
      os << i << ',' << p;
      for (int c = 0; c < t.n_classes; ++c) {
        std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(t.at(i, p, c)));
        os << ',' << buf;
      }
      os << '\n';
    }
  }
}

}  // namespace pairs
