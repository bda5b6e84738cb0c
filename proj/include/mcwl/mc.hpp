#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "mcwl/motion.hpp"
#include "mcwl/plane.hpp"

namespace mcwl {

// Prediction operator: output pixel p is `frame` sampled bilinearly at the
// field's subpixel position for p. Integer positions reproduce samples exactly.
template <typename T>
RealPlane warp(const Plane<T>& frame, const DensePositionField& field) {
  require_same_shape(frame, field.width(), field.height(), "warp");
  RealPlane out(frame.width(), frame.height());
  for (int y = 0; y < frame.height(); ++y)
    for (int x = 0; x < frame.width(); ++x) {
      const Vec2 p = field.subpixel(x, y);
      out(x, y) = sample_bilinear(frame, p.x, p.y);
    }
  return out;
}

namespace detail {

// Fills every pixel with written[p] == false from the nearest written pixel
// (Euclidean distance, ties resolved by raster order of the source).
inline void fill_unconnected(Frame& out, const std::vector<std::uint8_t>& written) {
  const int w = out.width();
  const int h = out.height();
  const Frame src = out;
  bool any = false;
  for (auto b : written) any = any || b;
  if (!any) return;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (written[out.index(x, y)]) continue;
      long best_d2 = std::numeric_limits<long>::max();
      std::size_t best_idx = 0;
      // Grow a square ring until the best hit is provably nearest: any pixel
      // outside Chebyshev radius R is farther than R.
      for (int radius = 1;; ++radius) {
        for (int yy = y - radius; yy <= y + radius; ++yy) {
          if (yy < 0 || yy >= h) continue;
          const bool edge_row = (yy == y - radius || yy == y + radius);
          const int step = edge_row ? 1 : 2 * radius;
          for (int xx = x - radius; xx <= x + radius; xx += step) {
            if (xx < 0 || xx >= w) continue;
            const std::size_t idx = out.index(xx, yy);
            if (!written[idx]) continue;
            const long d2 = static_cast<long>(xx - x) * (xx - x) +
                            static_cast<long>(yy - y) * (yy - y);
            if (d2 < best_d2 || (d2 == best_d2 && idx < best_idx)) {
              best_d2 = d2;
              best_idx = idx;
            }
          }
        }
        const bool covers_frame = x - radius <= 0 && y - radius <= 0 &&
                                  x + radius >= w - 1 && y + radius >= h - 1;
        if (best_d2 <= static_cast<long>(radius) * radius || covers_frame) break;
      }
      out[out.index(x, y)] = src[best_idx];
    }
}

}  // namespace detail

// Block-model update operator: each HP pixel is scattered to its
// motion-displaced position (clamped); collisions keep the last raster-order
// writer and unconnected pixels take the nearest connected value.
inline Frame inverse_warp_block(const Frame& hp, const BlockMVF& mvf) {
  const int w = hp.width();
  const int h = hp.height();
  require(mvf.cols == (w + mvf.cell_size - 1) / mvf.cell_size &&
              mvf.rows == (h + mvf.cell_size - 1) / mvf.cell_size,
          "inverse_warp_block: dimension mismatch");
  Frame out(w, h);
  std::vector<std::uint8_t> written(hp.size(), 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto& v = mvf.at(x / mvf.cell_size, y / mvf.cell_size);
      const int tx = std::clamp(x + v.dx, 0, w - 1);
      const int ty = std::clamp(y + v.dy, 0, h - 1);
      out(tx, ty) = hp(x, y);
      written[out.index(tx, ty)] = 1;
    }
  detail::fill_unconnected(out, written);
  return out;
}

// Mesh-model update operator, approximated by warping with the negated mesh.
inline RealPlane inverse_warp_mesh(const Frame& hp, const MeshMVF& mvf) {
  require(mvf.cols == hp.width() / mvf.cell_size + 1 && mvf.rows == hp.height() / mvf.cell_size + 1,
          "inverse_warp_mesh: dimension mismatch");
  return warp(hp, upsample_grid(negated(mvf), hp.width(), hp.height()));
}

}  // namespace mcwl
