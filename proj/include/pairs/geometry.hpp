#pragma once
// Pose-aligned rectangle and similarity transform for a keypoint pair.
//
// Image coordinates: origin top-left, x right, y down, units of pixels.
// The perpendicular is the right-handed cross product z x r, which in
// these coordinates is t = (-r.y, r.x).
//
// For keypoints p_i, p_j with d = |p_j - p_i| and h = d/2, the region is
// a 2d x d rectangle with the long side along r:
//
//   c0 = (p_i - h r) + h t        c1 = (p_j + h r) - h t
//   c2 = (p_i - h r) - h t        c3 = (p_j + h r) + h t
//
// The patch transform is the similarity with scale out_h / d that pins
// p_i to (out_w/4, out_h/2) and p_j to (3 out_w/4, out_h/2); the corners
// land exactly on the patch corners (c2 on the patch origin). Warping a
// keypoint pair therefore produces the same patch layout whatever the
// object's pose, scale or in-plane rotation.

#include <array>
#include <cmath>
#include <string>

#include "pairs/errors.hpp"

namespace pairs {

inline constexpr double kDegeneratePairEps = 1e-6;  // pixels

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

inline Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
inline Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
inline Point2 operator*(double s, Point2 p) { return {s * p.x, s * p.y}; }
inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Point2 p) { return std::hypot(p.x, p.y); }
inline double distance(Point2 a, Point2 b) { return norm(a - b); }

// 2x3 row-major affine map, p -> (m0 x + m1 y + m2, m3 x + m4 y + m5).
// All transforms produced here are similarities: the 2x2 linear part has
// orthogonal equal-norm columns.
struct Similarity {
  std::array<double, 6> m{1, 0, 0, 0, 1, 0};

  Point2 apply(Point2 p) const {
    return {m[0] * p.x + m[1] * p.y + m[2], m[3] * p.x + m[4] * p.y + m[5]};
  }

  double scale() const { return std::hypot(m[0], m[3]); }

  Similarity inverse() const {
    const double det = m[0] * m[4] - m[1] * m[3];
    if (std::abs(det) < 1e-300) {
      throw ConstraintError("transform is singular");
    }
    Similarity inv;
    inv.m[0] = m[4] / det;
    inv.m[1] = -m[1] / det;
    inv.m[3] = -m[3] / det;
    inv.m[4] = m[0] / det;
    inv.m[2] = -(inv.m[0] * m[2] + inv.m[1] * m[5]);
    inv.m[5] = -(inv.m[3] * m[2] + inv.m[4] * m[5]);
    return inv;
  }

  static Similarity identity() { return {}; }

  static Similarity translation(double tx, double ty) {
    Similarity t;
    t.m[2] = tx;
    t.m[5] = ty;
    return t;
  }

  // p -> center + s R(angle) (p - center)
  static Similarity rotation_scale_about(Point2 center, double angle_rad, double s) {
    const double c = s * std::cos(angle_rad);
    const double n = s * std::sin(angle_rad);
    Similarity t;
    t.m = {c, -n, center.x - c * center.x + n * center.y,
           n, c,  center.y - n * center.x - c * center.y};
    return t;
  }
};

// a(b(p))
inline Similarity compose(const Similarity& a, const Similarity& b) {
  Similarity r;
  r.m[0] = a.m[0] * b.m[0] + a.m[1] * b.m[3];
  r.m[1] = a.m[0] * b.m[1] + a.m[1] * b.m[4];
  r.m[2] = a.m[0] * b.m[2] + a.m[1] * b.m[5] + a.m[2];
  r.m[3] = a.m[3] * b.m[0] + a.m[4] * b.m[3];
  r.m[4] = a.m[3] * b.m[1] + a.m[4] * b.m[4];
  r.m[5] = a.m[3] * b.m[2] + a.m[4] * b.m[5] + a.m[5];
  return r;
}

struct PatchSpec {
  // Corner order (near-i upper, near-j lower, near-i lower, near-j upper):
  // c0, c1, c2, c3 as in the header comment. "Upper" means the +t side.
  std::array<Point2, 4> corners{};
  Similarity transform;  // source image coords -> patch pixel coords
  int out_w = 0;
  int out_h = 0;
};

inline std::array<Point2, 4> pair_rectangle(Point2 p_i, Point2 p_j) {
  const double d = distance(p_i, p_j);
  if (!(d > kDegeneratePairEps)) {
    throw DegeneratePairError("keypoint pair closer than " +
                              std::to_string(kDegeneratePairEps) + " px");
  }
  const Point2 r = (1.0 / d) * (p_j - p_i);
  const Point2 t{-r.y, r.x};
  const double h = d / 2.0;
  const Point2 base_i = p_i - h * r;
  const Point2 base_j = p_j + h * r;
  return {base_i + h * t, base_j - h * t, base_i - h * t, base_j + h * t};
}

inline PatchSpec patch_transform(Point2 p_i, Point2 p_j, int out_w, int out_h) {
  if (out_h <= 0 || out_w != 2 * out_h) {
    throw BadAspectError("patch size must be 2:1 (got " + std::to_string(out_w) +
                         "x" + std::to_string(out_h) + ")");
  }
  PatchSpec spec;
  spec.corners = pair_rectangle(p_i, p_j);
  spec.out_w = out_w;
  spec.out_h = out_h;

  const double d = distance(p_i, p_j);
  const Point2 r = (1.0 / d) * (p_j - p_i);
  const Point2 t{-r.y, r.x};
  const double s = static_cast<double>(out_h) / d;
  // u = out_w/4 + s r.(q - p_i), v = out_h/2 + s t.(q - p_i). In pixel
  // coordinates (y down) the +t side of the segment maps to +v, which is
  // the identity map when the pair already sits on the patch anchors.
  spec.transform.m = {s * r.x, s * r.y, out_w / 4.0 - s * dot(r, p_i),
                      s * t.x, s * t.y, out_h / 2.0 - s * dot(t, p_i)};
  return spec;
}

}  // namespace pairs
