#pragma once
// Ground-truth keypoint annotations: per-image coordinates plus a
// visibility flag, in schema index order.

#include <vector>

#include "pairs/geometry.hpp"

namespace pairs {

struct AnnotatedKeypoint {
  Point2 pos;
  bool visible = false;
};

using PoseAnnotation = std::vector<AnnotatedKeypoint>;

}  // namespace pairs
