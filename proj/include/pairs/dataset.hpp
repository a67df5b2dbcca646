#pragma once
// CUB-style dataset ingestion. A dataset root holds:
//   images.txt               "<id> <relative path>"
//   image_class_labels.txt   "<id> <class>"        (1-based classes)
//   bounding_boxes.txt       "<id> <x> <y> <w> <h>"
//   train_test_split.txt     "<id> <flag>"         (1 = train)
//   parts/parts.txt          "<part_id> <name>"    (1-based contiguous)
//   parts/part_locs.txt      "<id> <part_id> <x> <y> <visible>"
//   sizes.txt                "<id> <w> <h>"        (optional; NABirds has it,
//                                                   CUB does not)
// Image pixels live under <root>/images/<relative path>. NABirds uses the
// same contracts, so its directory tree loads through this reader as well.
// Ids are kept as strings (CUB uses integers, NABirds uses UUIDs).

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pairs/annotation.hpp"
#include "pairs/errors.hpp"
#include "pairs/posetensor.hpp"
#include "pairs/schema.hpp"

namespace pairs {

struct ImageRecord {
  std::string id;
  std::string rel_path;
  int width = 0;   // 0 = unknown (no sizes.txt)
  int height = 0;
  int class_label = 0;  // 0-based
  double box_x = 0, box_y = 0, box_w = 0, box_h = 0;
  bool is_train = false;

  bool operator==(const ImageRecord&) const = default;
};

struct DatasetIndex {
  std::vector<std::string> keypoint_names;
  std::vector<std::pair<int, int>> symmetric_pairs;
  std::vector<ImageRecord> images;             // images.txt order
  std::vector<PoseAnnotation> annotations;     // aligned with images
  std::vector<std::string> warnings;           // non-fatal validation notes

  int n_keypoints() const { return static_cast<int>(keypoint_names.size()); }

  KeypointSchema schema() const { return {keypoint_names, symmetric_pairs}; }
};

namespace detail {

struct LineReader {
  std::ifstream is;
  std::string file;
  long line_no = 0;

  explicit LineReader(const std::filesystem::path& path)
      : is(path), file(path.filename().string()) {
    if (!is) throw MissingFileError(path.string());
  }

  bool next(std::vector<std::string>& tokens, std::string& raw) {
    std::string line;
    while (std::getline(is, line)) {
      ++line_no;
      line = rstrip_cr(line);
      if (line.empty()) continue;
      tokens = split_ws(line);
      raw = line;
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw MalformedLineError(file, line_no, why);
  }
};

inline double parse_double(const LineReader& r, const std::string& tok) {
  try {
    size_t pos = 0;
    const double v = std::stod(tok, &pos);
    if (pos != tok.size()) r.fail("bad number: " + tok);
    return v;
  } catch (const std::logic_error&) {
    r.fail("bad number: " + tok);
  }
}

inline int parse_int(const LineReader& r, const std::string& tok) {
  try {
    size_t pos = 0;
    const int v = std::stoi(tok, &pos);
    if (pos != tok.size()) r.fail("bad integer: " + tok);
    return v;
  } catch (const std::logic_error&) {
    r.fail("bad integer: " + tok);
  }
}

}  // namespace detail

inline DatasetIndex load_cub(const std::filesystem::path& root) {
  DatasetIndex index;
  {
    KeypointSchema schema = load_schema(root / "parts" / "parts.txt");
    index.keypoint_names = schema.names;
    index.symmetric_pairs = schema.symmetric_pairs;
  }
  const int n_kp = index.n_keypoints();

  std::map<std::string, size_t> slot;  // id -> image index
  {
    detail::LineReader r(root / "images.txt");
    std::vector<std::string> t;
    std::string raw;
    while (r.next(t, raw)) {
      if (t.size() != 2) r.fail("expected \"<id> <relative path>\"");
      ImageRecord rec;
      rec.id = t[0];
      rec.rel_path = t[1];
      if (!slot.emplace(rec.id, index.images.size()).second) {
        r.fail("duplicate image id " + rec.id);
      }
      index.images.push_back(std::move(rec));
    }
  }
  const size_t n_images = index.images.size();
  index.annotations.assign(n_images, PoseAnnotation(static_cast<size_t>(n_kp)));

  auto locate = [&](detail::LineReader& r, const std::string& id) -> size_t {
    auto it = slot.find(id);
    if (it == slot.end()) {
      throw InconsistentCountsError(r.file + " references unknown image id " + id);
    }
    return it->second;
  };

  {
    detail::LineReader r(root / "image_class_labels.txt");
    std::vector<std::string> t;
    std::string raw;
    std::vector<char> seen(n_images, 0);
    while (r.next(t, raw)) {
      if (t.size() != 2) r.fail("expected \"<id> <class>\"");
      const size_t i = locate(r, t[0]);
      if (seen[i]++) r.fail("duplicate class label for image " + t[0]);
      const int label = detail::parse_int(r, t[1]);
      if (label < 1) r.fail("class labels are 1-based");
      index.images[i].class_label = label - 1;
    }
    if (static_cast<size_t>(std::count(seen.begin(), seen.end(), 1)) != n_images) {
      throw InconsistentCountsError("image_class_labels.txt does not cover every image");
    }
  }

  {
    detail::LineReader r(root / "bounding_boxes.txt");
    std::vector<std::string> t;
    std::string raw;
    std::vector<char> seen(n_images, 0);
    while (r.next(t, raw)) {
      if (t.size() != 5) r.fail("expected \"<id> <x> <y> <w> <h>\"");
      const size_t i = locate(r, t[0]);
      if (seen[i]++) r.fail("duplicate bounding box for image " + t[0]);
      index.images[i].box_x = detail::parse_double(r, t[1]);
      index.images[i].box_y = detail::parse_double(r, t[2]);
      index.images[i].box_w = detail::parse_double(r, t[3]);
      index.images[i].box_h = detail::parse_double(r, t[4]);
    }
    if (static_cast<size_t>(std::count(seen.begin(), seen.end(), 1)) != n_images) {
      throw InconsistentCountsError("bounding_boxes.txt does not cover every image");
    }
  }

  {
    detail::LineReader r(root / "train_test_split.txt");
    std::vector<std::string> t;
    std::string raw;
    std::vector<char> seen(n_images, 0);
    while (r.next(t, raw)) {
      if (t.size() != 2) r.fail("expected \"<id> <flag>\"");
      const size_t i = locate(r, t[0]);
      if (seen[i]++) r.fail("duplicate split flag for image " + t[0]);
      index.images[i].is_train = detail::parse_int(r, t[1]) == 1;
    }
    if (static_cast<size_t>(std::count(seen.begin(), seen.end(), 1)) != n_images) {
      throw InconsistentCountsError("train_test_split.txt does not cover every image");
    }
  }

  {
    detail::LineReader r(root / "parts" / "part_locs.txt");
    std::vector<std::string> t;
    std::string raw;
    std::vector<int> count(n_images, 0);
    while (r.next(t, raw)) {
      if (t.size() != 5) r.fail("expected \"<id> <part_id> <x> <y> <visible>\"");
      const size_t i = locate(r, t[0]);
      const int part = detail::parse_int(r, t[1]);
      if (part < 1 || part > n_kp) r.fail("part id out of range: " + t[1]);
      AnnotatedKeypoint& kp = index.annotations[i][static_cast<size_t>(part - 1)];
      kp.pos.x = detail::parse_double(r, t[2]);
      kp.pos.y = detail::parse_double(r, t[3]);
      const int vis = detail::parse_int(r, t[4]);
      if (vis != 0 && vis != 1) r.fail("visible flag must be 0 or 1");
      kp.visible = vis == 1;
      ++count[i];
    }
    for (size_t i = 0; i < n_images; ++i) {
      if (count[i] != n_kp) {
        throw InconsistentCountsError("part_locs.txt has " + std::to_string(count[i]) +
                                      " rows for image " + index.images[i].id +
                                      ", expected " + std::to_string(n_kp));
      }
    }
  }

  if (std::filesystem::exists(root / "sizes.txt")) {
    detail::LineReader r(root / "sizes.txt");
    std::vector<std::string> t;
    std::string raw;
    while (r.next(t, raw)) {
      if (t.size() != 3) r.fail("expected \"<id> <w> <h>\"");
      const size_t i = locate(r, t[0]);
      index.images[i].width = detail::parse_int(r, t[1]);
      index.images[i].height = detail::parse_int(r, t[2]);
    }
  }

  // Visible keypoints outside the image bounds are suspicious but not fatal.
  for (size_t i = 0; i < n_images; ++i) {
    const ImageRecord& rec = index.images[i];
    if (rec.width <= 0 || rec.height <= 0) continue;
    for (int k = 0; k < n_kp; ++k) {
      const AnnotatedKeypoint& kp = index.annotations[i][static_cast<size_t>(k)];
      if (!kp.visible) continue;
      if (kp.pos.x < 0 || kp.pos.y < 0 || kp.pos.x > rec.width || kp.pos.y > rec.height) {
        index.warnings.push_back("image " + rec.id + ": visible keypoint " +
                                 index.keypoint_names[static_cast<size_t>(k)] +
                                 " outside image bounds");
      }
    }
  }
  return index;
}

// Inverse of load_cub; writes sizes.txt only when any dimension is known.
inline void write_cub(const DatasetIndex& index, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  fs::create_directories(root / "parts");
  auto open = [](const fs::path& p) {
    std::ofstream os(p);
    if (!os) throw MissingFileError(p.string());
    return os;
  };
  char buf[64];
  auto fmt = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };

  {
    auto os = open(root / "images.txt");
    for (const auto& rec : index.images) os << rec.id << ' ' << rec.rel_path << '\n';
  }
  {
    auto os = open(root / "image_class_labels.txt");
    for (const auto& rec : index.images) os << rec.id << ' ' << rec.class_label + 1 << '\n';
  }
  {
    auto os = open(root / "bounding_boxes.txt");
    for (const auto& rec : index.images) {
      os << rec.id << ' ' << fmt(rec.box_x) << ' ' << fmt(rec.box_y) << ' '
         << fmt(rec.box_w) << ' ' << fmt(rec.box_h) << '\n';
    }
  }
  {
    auto os = open(root / "train_test_split.txt");
    for (const auto& rec : index.images) os << rec.id << ' ' << (rec.is_train ? 1 : 0) << '\n';
  }
  {
    auto os = open(root / "parts" / "parts.txt");
    for (size_t k = 0; k < index.keypoint_names.size(); ++k) {
      os << k + 1 << ' ' << index.keypoint_names[k] << '\n';
    }
  }
  {
    auto os = open(root / "parts" / "part_locs.txt");
    for (size_t i = 0; i < index.images.size(); ++i) {
      for (size_t k = 0; k < index.annotations[i].size(); ++k) {
        const AnnotatedKeypoint& kp = index.annotations[i][k];
        os << index.images[i].id << ' ' << k + 1 << ' ' << fmt(kp.pos.x) << ' '
           << fmt(kp.pos.y) << ' ' << (kp.visible ? 1 : 0) << '\n';
      }
    }
  }
  const bool any_size = std::any_of(index.images.begin(), index.images.end(),
                                    [](const ImageRecord& r) { return r.width > 0; });
  if (any_size) {
    auto os = open(root / "sizes.txt");
    for (const auto& rec : index.images) {
      os << rec.id << ' ' << rec.width << ' ' << rec.height << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Keypoint JSON: {"<image_id>": [[x, y, confidence], ...]} in schema order.
// ---------------------------------------------------------------------------

inline void write_keypoints_json(const std::filesystem::path& path,
                                 const std::map<std::string, DecodedPose>& poses) {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& [id, pose] : poses) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& kp : pose.keypoints) {
      arr.push_back({kp.location.x, kp.location.y, static_cast<double>(kp.confidence)});
    }
    doc[id] = std::move(arr);
  }
  std::ofstream os(path);
  if (!os) throw MissingFileError(path.string());
  os << doc.dump(2) << '\n';
}

inline std::map<std::string, std::vector<std::array<double, 3>>> read_keypoints_json(
    const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw MissingFileError(path.string());
  nlohmann::json doc = nlohmann::json::parse(is, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw BadFormatError("keypoint JSON must be an object: " + path.string());
  }
  std::map<std::string, std::vector<std::array<double, 3>>> out;
  for (const auto& [id, arr] : doc.items()) {
    if (!arr.is_array()) throw BadFormatError("keypoint JSON rows must be arrays");
    std::vector<std::array<double, 3>> kps;
    for (const auto& row : arr) {
      if (!row.is_array() || row.size() < 2) {
        throw BadFormatError("keypoint JSON entries must be [x, y, confidence]");
      }
      kps.push_back({row[0].get<double>(), row[1].get<double>(),
                     row.size() > 2 ? row[2].get<double>() : 0.0});
    }
    out[id] = std::move(kps);
  }
  return out;
}

}  // namespace pairs
