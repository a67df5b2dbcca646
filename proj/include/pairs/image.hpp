#pragma once
// Row-major float images with channel values in [0,1], plus the bilinear
// similarity warp used for patch extraction.

#include <cmath>
#include <vector>

#include "pairs/errors.hpp"
#include "pairs/geometry.hpp"

namespace pairs {

template <int Channels>
struct BasicImage {
  static_assert(Channels >= 1);
  int width = 0;
  int height = 0;
  std::vector<float> pixels;  // height * width * Channels

  static BasicImage filled(int w, int h, float value) {
    BasicImage img;
    img.width = w;
    img.height = h;
    img.pixels.assign(static_cast<size_t>(w) * h * Channels, value);
    return img;
  }

  bool in_bounds(int x, int y) const {
    return x >= 0 && y >= 0 && x < width && y < height;
  }

  float at(int x, int y, int c = 0) const {
    return pixels[(static_cast<size_t>(y) * width + x) * Channels + c];
  }

  float& at(int x, int y, int c = 0) {
    return pixels[(static_cast<size_t>(y) * width + x) * Channels + c];
  }
};

using GrayImage = BasicImage<1>;
using RgbImage = BasicImage<3>;

// Bilinear sample of channel c at continuous pixel coordinates. Pixel
// (i, j) covers [i, i+1) x [j, j+1) with its center at (i+0.5, j+0.5);
// taps outside the image read as `fill`.
template <int C>
inline float sample_bilinear(const BasicImage<C>& img, int c, double sx, double sy,
                             float fill) {
  const double fx = sx - 0.5;
  const double fy = sy - 0.5;
  const int x0 = static_cast<int>(std::floor(fx));
  const int y0 = static_cast<int>(std::floor(fy));
  const double dx = fx - x0;
  const double dy = fy - y0;
  auto tap = [&](int x, int y) -> double {
    return img.in_bounds(x, y) ? img.at(x, y, c) : fill;
  };
  const double top = (1.0 - dx) * tap(x0, y0) + dx * tap(x0 + 1, y0);
  const double bot = (1.0 - dx) * tap(x0, y0 + 1) + dx * tap(x0 + 1, y0 + 1);
  return static_cast<float>((1.0 - dy) * top + dy * bot);
}

// out(u, v) = src(out_from_src^-1 applied to (u+0.5, v+0.5)).
template <int C>
inline BasicImage<C> warp_with(const BasicImage<C>& src, const Similarity& out_from_src,
                               int out_w, int out_h, float fill = 0.5f) {
  if (out_w <= 0 || out_h <= 0) {
    throw DimensionMismatchError("warp output size must be positive");
  }
  const Similarity src_from_out = out_from_src.inverse();
  BasicImage<C> out = BasicImage<C>::filled(out_w, out_h, fill);
  for (int v = 0; v < out_h; ++v) {
    for (int u = 0; u < out_w; ++u) {
      const Point2 s = src_from_out.apply({u + 0.5, v + 0.5});
      for (int c = 0; c < C; ++c) {
        out.at(u, v, c) = sample_bilinear(src, c, s.x, s.y, fill);
      }
    }
  }
  return out;
}

template <int C>
inline BasicImage<C> warp_patch(const BasicImage<C>& src, const PatchSpec& spec,
                                float fill = 0.5f) {
  return warp_with(src, spec.transform, spec.out_w, spec.out_h, fill);
}

}  // namespace pairs
