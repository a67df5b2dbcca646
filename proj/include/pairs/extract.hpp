#pragma once
// Batch patch extraction: for every image and every raw keypoint pair,
// warp the pose-aligned patch and write it as
//   <out_dir>[/<hybrid class>]/<image_id>__<kpA>__<kpB>.png
// Degenerate pairs (coincident keypoints) are recorded and skipped, as are
// pairs with an invisible endpoint under the visible-only policy. Images
// process in parallel; the manifest is merged in image order so repeated
// runs produce identical output.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "pairs/dataset.hpp"
#include "pairs/errors.hpp"
#include "pairs/geometry.hpp"
#include "pairs/image.hpp"
#include "pairs/image_io.hpp"
#include "pairs/schema.hpp"

namespace pairs {

enum class VisibilityPolicy {
  All,          // use every annotated location regardless of visibility
  VisibleOnly,  // skip pairs with an invisible endpoint
};

struct ExtractOptions {
  int out_w = 512;
  int out_h = 256;
  VisibilityPolicy policy = VisibilityPolicy::All;
  bool merge_symmetric = false;  // group outputs into hybrid class directories
  SymmetryNaming naming{};
  float fill = 0.5f;
  int n_threads = 0;  // 0 = hardware concurrency
};

struct SkippedPair {
  int i = 0, j = 0;
  std::string kp_i, kp_j;
};

struct ImageExtractReport {
  std::string id;
  int written = 0;
  std::vector<SkippedPair> skipped_degenerate;
  std::vector<SkippedPair> skipped_invisible;
  std::string io_error;  // empty when the image processed cleanly
};

struct ExtractManifest {
  long written = 0;
  long skipped_degenerate = 0;
  long skipped_invisible = 0;
  std::vector<ImageExtractReport> per_image;
  std::vector<std::string> io_errors;
};

namespace detail {

inline std::string sanitize_component(std::string s) {
  for (char& c : s) {
    if (c == '/' || c == '\\') c = '_';
  }
  return s;
}

inline void write_skipped_sidecar(const std::filesystem::path& out_dir,
                                  const ImageExtractReport& rep) {
  nlohmann::json doc{{"image_id", rep.id}};
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& sp : rep.skipped_degenerate) arr.push_back({sp.kp_i, sp.kp_j});
  doc["skipped_degenerate"] = std::move(arr);
  const auto path = out_dir / (sanitize_component(rep.id) + "__skipped.json");
  std::ofstream os(path);
  if (!os) throw MissingFileError(path.string());
  os << doc.dump(2) << '\n';
}

}  // namespace detail

inline ExtractManifest extract_all(const DatasetIndex& index, const KeypointSchema& schema,
                                   const std::filesystem::path& root,
                                   const std::filesystem::path& out_dir,
                                   const ExtractOptions& opts = {}) {
  namespace fs = std::filesystem;
  validate(schema);
  if (schema.size() != index.n_keypoints()) {
    throw DimensionMismatchError("schema keypoint count != dataset keypoint count");
  }
  if (opts.out_h <= 0 || opts.out_w != 2 * opts.out_h) {
    throw BadAspectError("patch size must be 2:1 (got " + std::to_string(opts.out_w) +
                         "x" + std::to_string(opts.out_h) + ")");
  }

  const std::vector<PatchClass> raw = enumerate_raw_pairs(schema);
  std::map<RawPair, std::string> subdir;  // pair -> hybrid directory name
  fs::create_directories(out_dir);
  if (opts.merge_symmetric) {
    for (const auto& hybrid : merge_symmetric(schema, raw, opts.naming)) {
      const std::string dir = detail::sanitize_component(hybrid.label());
      fs::create_directories(out_dir / dir);
      for (const auto& pair : hybrid.member_pairs) subdir[pair] = dir;
    }
  }

  std::vector<ImageExtractReport> reports(index.images.size());
  std::atomic<size_t> cursor{0};
  auto worker = [&]() {
    while (true) {
      const size_t idx = cursor.fetch_add(1);
      if (idx >= index.images.size()) break;
      const ImageRecord& rec = index.images[idx];
      const PoseAnnotation& ann = index.annotations[idx];
      ImageExtractReport& rep = reports[idx];
      rep.id = rec.id;
      RgbImage img;
      try {
        img = read_image(root / "images" / rec.rel_path);
      } catch (const Error& e) {
        rep.io_error = e.what();
        continue;
      }
      for (const auto& cls : raw) {
        const auto [i, j] = cls.member_pairs.front();
        const std::string& name_i = schema.names[static_cast<size_t>(i)];
        const std::string& name_j = schema.names[static_cast<size_t>(j)];
        if (opts.policy == VisibilityPolicy::VisibleOnly &&
            (!ann[static_cast<size_t>(i)].visible || !ann[static_cast<size_t>(j)].visible)) {
          rep.skipped_invisible.push_back({i, j, name_i, name_j});
          continue;
        }
        PatchSpec spec;
        try {
          spec = patch_transform(ann[static_cast<size_t>(i)].pos,
                                 ann[static_cast<size_t>(j)].pos, opts.out_w, opts.out_h);
        } catch (const DegeneratePairError&) {
          rep.skipped_degenerate.push_back({i, j, name_i, name_j});
          continue;
        }
        const RgbImage patch = warp_patch(img, spec, opts.fill);
        fs::path dir = out_dir;
        if (opts.merge_symmetric) dir /= subdir.at({i, j});
        const std::string name = detail::sanitize_component(rec.id) + "__" +
                                 detail::sanitize_component(name_i) + "__" +
                                 detail::sanitize_component(name_j) + ".png";
        try {
          write_png(dir / name, patch);
          ++rep.written;
        } catch (const Error& e) {
          rep.io_error = e.what();
          break;
        }
      }
      if (!rep.skipped_degenerate.empty()) {
        detail::write_skipped_sidecar(out_dir, rep);
      }
    }
  };

  int n_threads = opts.n_threads > 0
                      ? opts.n_threads
                      : static_cast<int>(std::thread::hardware_concurrency());
  n_threads = std::max(1, std::min<int>(n_threads, static_cast<int>(index.images.size())));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  ExtractManifest manifest;
  manifest.per_image = std::move(reports);
  for (const auto& rep : manifest.per_image) {
    manifest.written += rep.written;
    manifest.skipped_degenerate += static_cast<long>(rep.skipped_degenerate.size());
    manifest.skipped_invisible += static_cast<long>(rep.skipped_invisible.size());
    if (!rep.io_error.empty()) {
      manifest.io_errors.push_back(rep.id + ": " + rep.io_error);
    }
  }
  return manifest;
}

inline void write_manifest_json(const ExtractManifest& m, const std::filesystem::path& path) {
  nlohmann::json doc{{"written", m.written},
                     {"skipped_degenerate", m.skipped_degenerate},
                     {"skipped_invisible", m.skipped_invisible},
                     {"io_errors", m.io_errors}};
  nlohmann::json images = nlohmann::json::array();
  for (const auto& rep : m.per_image) {
    nlohmann::json entry{{"image_id", rep.id}, {"written", rep.written}};
    auto pairs_of = [](const std::vector<SkippedPair>& v) {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& sp : v) arr.push_back({sp.kp_i, sp.kp_j});
      return arr;
    };
    entry["skipped_degenerate"] = pairs_of(rep.skipped_degenerate);
    entry["skipped_invisible"] = pairs_of(rep.skipped_invisible);
    if (!rep.io_error.empty()) entry["io_error"] = rep.io_error;
    images.push_back(std::move(entry));
  }
  doc["images"] = std::move(images);
  std::ofstream os(path);
  if (!os) throw MissingFileError(path.string());
  os << doc.dump(2) << '\n';
}

}  // namespace pairs
