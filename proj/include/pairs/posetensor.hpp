#pragma once
// Pose tensor: one 2D non-negative probability map per keypoint, decoded
// to image coordinates by taking each channel's maximally activated cell.
// Every keypoint is treated as visible under the max policy; an optional
// confidence threshold can mark low-peak keypoints invisible instead.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "pairs/binio.hpp"
#include "pairs/errors.hpp"
#include "pairs/geometry.hpp"

namespace pairs {

struct PoseTensor {
  int tensor_w = 0;
  int tensor_h = 0;
  int img_w = 0;   // source image dimensions the tensor corresponds to
  int img_h = 0;
  std::vector<std::vector<float>> channels;  // row-major tensor_w * tensor_h each

  int n_channels() const { return static_cast<int>(channels.size()); }
};

inline void validate(const PoseTensor& t) {
  if (t.img_w <= 0 || t.img_h <= 0) {
    throw EmptyTensorError("pose tensor has non-positive image dimensions");
  }
  const size_t area = static_cast<size_t>(t.tensor_w) * static_cast<size_t>(t.tensor_h);
  for (const auto& ch : t.channels) {
    if (t.tensor_w <= 0 || t.tensor_h <= 0 || ch.size() != area) {
      throw EmptyTensorError("pose tensor channel has zero or mismatched area");
    }
    for (float v : ch) {
      if (!std::isfinite(v) || v < 0.0f) {
        throw BadFormatError("pose tensor values must be finite and >= 0");
      }
    }
  }
}

struct DecodedKeypoint {
  Point2 location;     // image coordinates
  float confidence = 0.0f;
  bool visible = true;
};

struct DecodedPose {
  std::vector<DecodedKeypoint> keypoints;  // channel order
};

// Argmax decoding. Ties break to the first cell in row-major order; the
// winning cell's center is scaled from tensor resolution to image
// resolution, so locations always land inside [0,img_w) x [0,img_h).
inline DecodedPose decode(const PoseTensor& t,
                          std::optional<float> visibility_threshold = std::nullopt) {
  if (t.tensor_w <= 0 || t.tensor_h <= 0) {
    throw EmptyTensorError();
  }
  if (t.img_w <= 0 || t.img_h <= 0) {
    throw EmptyTensorError("pose tensor has non-positive image dimensions");
  }
  const double sx = static_cast<double>(t.img_w) / t.tensor_w;
  const double sy = static_cast<double>(t.img_h) / t.tensor_h;
  DecodedPose pose;
  pose.keypoints.reserve(t.channels.size());
  for (const auto& ch : t.channels) {
    if (ch.size() != static_cast<size_t>(t.tensor_w) * t.tensor_h) {
      throw EmptyTensorError("pose tensor channel has mismatched area");
    }
    size_t best = 0;
    for (size_t i = 1; i < ch.size(); ++i) {
      if (ch[i] > ch[best]) best = i;
    }
    const int cx = static_cast<int>(best % static_cast<size_t>(t.tensor_w));
    const int cy = static_cast<int>(best / static_cast<size_t>(t.tensor_w));
    DecodedKeypoint kp;
    kp.location = {(cx + 0.5) * sx, (cy + 0.5) * sy};
    kp.confidence = ch[best];
    kp.visible = !visibility_threshold || ch[best] >= *visibility_threshold;
    pose.keypoints.push_back(kp);
  }
  return pose;
}

// ---------------------------------------------------------------------------
// File format: magic "PTNS", u32 n_channels, tensor_w, tensor_h, img_w,
// img_h, then n_channels * tensor_w * tensor_h little-endian f32 values,
// channel-major, each channel row-major.
// ---------------------------------------------------------------------------

inline void write_pose_tensor(std::ostream& os, const PoseTensor& t) {
  binio::write_magic(os, "PTNS");
  binio::write_u32(os, static_cast<uint32_t>(t.n_channels()));
  binio::write_u32(os, static_cast<uint32_t>(t.tensor_w));
  binio::write_u32(os, static_cast<uint32_t>(t.tensor_h));
  binio::write_u32(os, static_cast<uint32_t>(t.img_w));
  binio::write_u32(os, static_cast<uint32_t>(t.img_h));
  for (const auto& ch : t.channels) binio::write_f32_array(os, ch);
}

inline void write_pose_tensor(const std::filesystem::path& path, const PoseTensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw MissingFileError(path.string());
  write_pose_tensor(os, t);
}

inline PoseTensor read_pose_tensor(std::istream& is) {
  binio::expect_magic(is, "PTNS");
  PoseTensor t;
  const uint32_t n = binio::read_u32(is);
  t.tensor_w = static_cast<int>(binio::read_u32(is));
  t.tensor_h = static_cast<int>(binio::read_u32(is));
  t.img_w = static_cast<int>(binio::read_u32(is));
  t.img_h = static_cast<int>(binio::read_u32(is));
  if (t.tensor_w <= 0 || t.tensor_h <= 0 || n > (1u << 20)) {
    throw BadFormatError("pose tensor header out of range");
  }
  t.channels.resize(n);
  for (auto& ch : t.channels) {
    ch.resize(static_cast<size_t>(t.tensor_w) * t.tensor_h);
    binio::read_f32_array(is, ch);
  }
  validate(t);
  return t;
}

inline PoseTensor read_pose_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingFileError(path.string());
  return read_pose_tensor(is);
}

}  // namespace pairs
