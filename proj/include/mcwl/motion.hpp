#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mcwl/plane.hpp"
#include "mcwl/volume.hpp"

namespace mcwl {

struct MotionVector {
  int dx = 0;
  int dy = 0;
  friend bool operator==(const MotionVector&, const MotionVector&) = default;
};

// Lattice of integer vectors shared by the block and mesh motion models.
// cell_size is the block size (block model) or grid spacing (mesh model).
struct VectorLattice {
  int cell_size = 8;
  int search_range = 8;
  int cols = 0;
  int rows = 0;
  std::vector<MotionVector> vectors;

  MotionVector& at(int c, int r) { return vectors[static_cast<std::size_t>(r * cols + c)]; }
  const MotionVector& at(int c, int r) const {
    return vectors[static_cast<std::size_t>(r * cols + c)];
  }
  bool all_zero() const {
    return std::all_of(vectors.begin(), vectors.end(),
                       [](const MotionVector& v) { return v.dx == 0 && v.dy == 0; });
  }
  friend bool operator==(const VectorLattice&, const VectorLattice&) = default;
};

// One vector per block; ceil(width/b) x ceil(height/b) blocks.
struct BlockMVF : VectorLattice {
  static BlockMVF zero(int width, int height, int block_size, int search_range) {
    require(block_size >= 1, "block mvf: block_size must be >= 1");
    BlockMVF m;
    m.cell_size = block_size;
    m.search_range = search_range;
    m.cols = (width + block_size - 1) / block_size;
    m.rows = (height + block_size - 1) / block_size;
    m.vectors.assign(static_cast<std::size_t>(m.cols * m.rows), {});
    return m;
  }
  friend bool operator==(const BlockMVF&, const BlockMVF&) = default;
};

// One vector per grid point; (floor(width/g)+1) x (floor(height/g)+1) GPs at
// (c*g, r*g). A GP vector d means the current frame at the GP corresponds to
// the reference frame at GP + d.
struct MeshMVF : VectorLattice {
  static MeshMVF zero(int width, int height, int grid_size, int search_range) {
    require(grid_size >= 1, "mesh mvf: grid_size must be >= 1");
    MeshMVF m;
    m.cell_size = grid_size;
    m.search_range = search_range;
    m.cols = width / grid_size + 1;
    m.rows = height / grid_size + 1;
    m.vectors.assign(static_cast<std::size_t>(m.cols * m.rows), {});
    return m;
  }
  friend bool operator==(const MeshMVF&, const MeshMVF&) = default;
};

using AnyMvf = std::variant<BlockMVF, MeshMVF>;

inline MeshMVF negated(MeshMVF m) {
  for (auto& v : m.vectors) v = {-v.dx, -v.dy};
  return m;
}

struct PixelPos {
  int x = 0;
  int y = 0;
  friend bool operator==(const PixelPos&, const PixelPos&) = default;
};

// Per-pixel compensated coordinates: the unrounded position and its rounded,
// frame-clamped counterpart.
struct DensePositionField {
  Plane<Vec2> subpixel;
  Plane<PixelPos> rounded;

  int width() const { return subpixel.width(); }
  int height() const { return subpixel.height(); }

  static DensePositionField identity(int width, int height) {
    DensePositionField f{Plane<Vec2>(width, height), Plane<PixelPos>(width, height)};
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        f.subpixel(x, y) = {static_cast<double>(x), static_cast<double>(y)};
        f.rounded(x, y) = {x, y};
      }
    return f;
  }
};

// Half-away-from-zero rounding followed by clamping to [0, extent-1].
inline int round_clamp(double v, int extent) {
  const double r = std::round(v);
  if (r <= 0.0) return 0;
  if (r >= extent - 1) return extent - 1;
  return static_cast<int>(r);
}

namespace detail {

// Candidate displacements ordered by (|dx|+|dy|, dy, dx); the first minimum
// in this order wins, which prefers the zero / shorter vector.
inline std::vector<MotionVector> tie_ordered_window(int range) {
  std::vector<MotionVector> w;
  for (int dy = -range; dy <= range; ++dy)
    for (int dx = -range; dx <= range; ++dx) w.push_back({dx, dy});
  std::stable_sort(w.begin(), w.end(), [](const MotionVector& a, const MotionVector& b) {
    const int la = std::abs(a.dx) + std::abs(a.dy);
    const int lb = std::abs(b.dx) + std::abs(b.dy);
    if (la != lb) return la < lb;
    if (a.dy != b.dy) return a.dy < b.dy;
    return a.dx < b.dx;
  });
  return w;
}

inline std::int64_t block_ssd(const Frame& ref, const Frame& cur, int x0, int y0, int x1,
                              int y1, MotionVector d) {
  std::int64_t ssd = 0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      const std::int64_t diff = cur(x, y) - ref.at_clamped(x + d.dx, y + d.dy);
      ssd += diff * diff;
    }
  return ssd;
}

// Exhaustive search over the window for the rectangle [x0,x1) x [y0,y1).
inline MotionVector best_vector(const Frame& ref, const Frame& cur, int x0, int y0, int x1,
                                int y1, std::span<const MotionVector> window) {
  MotionVector best{};
  std::int64_t best_ssd = std::numeric_limits<std::int64_t>::max();
  for (const auto& d : window) {
    const std::int64_t s = block_ssd(ref, cur, x0, y0, x1, y1, d);
    if (s < best_ssd) {
      best_ssd = s;
      best = d;
    }
  }
  return best;
}

}  // namespace detail

// Full-search block matching. Each block of `cur` is compared with `ref`
// displaced by (dx, dy) (edge-clamped), minimising SSD.
inline BlockMVF estimate_block_mvf(const Frame& ref, const Frame& cur, int block_size,
                                   int search_range) {
  require_same_shape(cur, ref.width(), ref.height(), "estimate_block_mvf");
  require(block_size >= 1, "estimate_block_mvf: block_size must be >= 1");
  require(search_range >= 0 && search_range <= 127,
          "estimate_block_mvf: search_range must lie in [0,127]");
  require(block_size <= ref.width() && block_size <= ref.height(),
          "estimate_block_mvf: block_size exceeds the frame dimensions");
  auto mvf = BlockMVF::zero(ref.width(), ref.height(), block_size, search_range);
  const auto window = detail::tie_ordered_window(search_range);
  for (int r = 0; r < mvf.rows; ++r)
    for (int c = 0; c < mvf.cols; ++c) {
      const int x0 = c * block_size;
      const int y0 = r * block_size;
      mvf.at(c, r) = detail::best_vector(ref, cur, x0, y0, std::min(x0 + block_size, ref.width()),
                                         std::min(y0 + block_size, ref.height()), window);
    }
  return mvf;
}

// ---------------------------------------------------------------------------
// Mesh model

namespace detail {

// Quad (column qx, row qy) owns pixels [qx*g, (qx+1)*g) horizontally; the last
// quad column/row also owns the pixels past the final GP.
struct QuadSpan {
  int x0, x1, y0, y1;
};

inline QuadSpan quad_span(const VectorLattice& m, int qx, int qy, int width, int height) {
  const int g = m.cell_size;
  return {qx * g, qx == m.cols - 2 ? width : (qx + 1) * g, qy * g,
          qy == m.rows - 2 ? height : (qy + 1) * g};
}

// Displacement at pixel (x, y) by bilinear interpolation of the enclosing GPs.
inline Vec2 mesh_displacement(const VectorLattice& m, int x, int y) {
  const int g = m.cell_size;
  const int qx = std::min(x / g, m.cols - 2);
  const int qy = std::min(y / g, m.rows - 2);
  const double u = std::clamp(static_cast<double>(x - qx * g) / g, 0.0, 1.0);
  const double v = std::clamp(static_cast<double>(y - qy * g) / g, 0.0, 1.0);
  const auto& a = m.at(qx, qy);
  const auto& b = m.at(qx + 1, qy);
  const auto& c = m.at(qx, qy + 1);
  const auto& d = m.at(qx + 1, qy + 1);
  const double w00 = (1 - u) * (1 - v), w10 = u * (1 - v), w01 = (1 - u) * v, w11 = u * v;
  return {w00 * a.dx + w10 * b.dx + w01 * c.dx + w11 * d.dx,
          w00 * a.dy + w10 * b.dy + w01 * c.dy + w11 * d.dy};
}

inline double cross(Vec2 o, Vec2 a, Vec2 b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

}  // namespace detail

// True when the deformed quad (qx, qy) is strictly convex with positive
// orientation in image coordinates, which implies positive signed area.
inline bool quad_is_valid(const VectorLattice& m, int qx, int qy) {
  const int g = m.cell_size;
  auto pos = [&](int c, int r) {
    const auto& v = m.at(c, r);
    return Vec2{static_cast<double>(c * g + v.dx), static_cast<double>(r * g + v.dy)};
  };
  const std::array<Vec2, 4> q{pos(qx, qy), pos(qx + 1, qy), pos(qx + 1, qy + 1),
                              pos(qx, qy + 1)};
  for (int i = 0; i < 4; ++i)
    if (detail::cross(q[i], q[(i + 1) % 4], q[(i + 2) % 4]) <= 0.0) return false;
  return true;
}

inline double quad_signed_area(const VectorLattice& m, int qx, int qy) {
  const int g = m.cell_size;
  auto pos = [&](int c, int r) {
    const auto& v = m.at(c, r);
    return Vec2{static_cast<double>(c * g + v.dx), static_cast<double>(r * g + v.dy)};
  };
  const std::array<Vec2, 4> q{pos(qx, qy), pos(qx + 1, qy), pos(qx + 1, qy + 1),
                              pos(qx, qy + 1)};
  double a = 0.0;
  for (int i = 0; i < 4; ++i) a += q[i].x * q[(i + 1) % 4].y - q[(i + 1) % 4].x * q[i].y;
  return 0.5 * a;
}

inline bool mesh_is_valid(const MeshMVF& m) {
  for (int qy = 0; qy + 1 < m.rows; ++qy)
    for (int qx = 0; qx + 1 < m.cols; ++qx)
      if (!quad_is_valid(m, qx, qy)) return false;
  return true;
}

// SSD between `cur` and `ref` warped by the mesh over one quad's pixels.
inline double mesh_quad_ssd(const Frame& ref, const Frame& cur, const MeshMVF& m, int qx, int qy) {
  const auto s = detail::quad_span(m, qx, qy, cur.width(), cur.height());
  double ssd = 0.0;
  for (int y = s.y0; y < s.y1; ++y)
    for (int x = s.x0; x < s.x1; ++x) {
      const Vec2 d = detail::mesh_displacement(m, x, y);
      const double diff = cur(x, y) - sample_bilinear(ref, x + d.x, y + d.y);
      ssd += diff * diff;
    }
  return ssd;
}

inline double mesh_total_ssd(const Frame& ref, const Frame& cur, const MeshMVF& m) {
  double total = 0.0;
  for (int qy = 0; qy + 1 < m.rows; ++qy)
    for (int qx = 0; qx + 1 < m.cols; ++qx) total += mesh_quad_ssd(ref, cur, m, qx, qy);
  return total;
}

struct MeshEstimateTrace {
  std::vector<double> ssd_after_pass;  // index 0 = after initialisation
};

namespace detail {

inline std::vector<std::array<int, 2>> incident_quads(const VectorLattice& m, int c, int r) {
  std::vector<std::array<int, 2>> q;
  for (int qy = r - 1; qy <= r; ++qy)
    for (int qx = c - 1; qx <= c; ++qx)
      if (qx >= 0 && qy >= 0 && qx + 1 < m.cols && qy + 1 < m.rows) q.push_back({qx, qy});
  return q;
}

inline bool incident_quads_valid(const VectorLattice& m, int c, int r) {
  for (const auto& q : incident_quads(m, c, r))
    if (!quad_is_valid(m, q[0], q[1])) return false;
  return true;
}

// Neighbour offsets visited around the current vector, nearest ring first.
inline constexpr std::array<MotionVector, 8> kSpiral{{
    {1, 0}, {0, 1}, {-1, 0}, {0, -1}, {1, 1}, {-1, 1}, {-1, -1}, {1, -1}}};

}  // namespace detail

// Quadrilateral mesh estimation by local GP refinement.
//
// GPs start at the best full-search vector of a grid_size window centred on
// them (kept only if the incident quads stay valid), then `passes` raster
// sweeps move each GP to the best of its 3x3 integer neighbourhood when that
// strictly lowers the SSD over its incident quads and keeps them valid.
inline MeshMVF estimate_mesh_mvf(const Frame& ref, const Frame& cur, int grid_size,
                                 int search_range, int passes,
                                 MeshEstimateTrace* trace = nullptr) {
  require_same_shape(cur, ref.width(), ref.height(), "estimate_mesh_mvf");
  require(grid_size >= 2, "estimate_mesh_mvf: grid_size must be >= 2");
  require(passes >= 1, "estimate_mesh_mvf: passes must be >= 1");
  require(search_range >= 0 && search_range <= 127,
          "estimate_mesh_mvf: search_range must lie in [0,127]");
  require(grid_size <= ref.width() && grid_size <= ref.height(),
          "estimate_mesh_mvf: grid_size exceeds the frame dimensions");

  const int w = ref.width();
  const int h = ref.height();
  auto mvf = MeshMVF::zero(w, h, grid_size, search_range);

  const auto window = detail::tie_ordered_window(search_range);
  const int half = grid_size / 2;
  for (int r = 0; r < mvf.rows; ++r)
    for (int c = 0; c < mvf.cols; ++c) {
      const int x0 = std::clamp(c * grid_size - half, 0, w);
      const int y0 = std::clamp(r * grid_size - half, 0, h);
      const int x1 = std::clamp(c * grid_size - half + grid_size, 0, w);
      const int y1 = std::clamp(r * grid_size - half + grid_size, 0, h);
      if (x1 <= x0 || y1 <= y0) continue;
      const MotionVector v = detail::best_vector(ref, cur, x0, y0, x1, y1, window);
      mvf.at(c, r) = v;
      if (!detail::incident_quads_valid(mvf, c, r)) mvf.at(c, r) = {};
    }

  if (trace) trace->ssd_after_pass = {mesh_total_ssd(ref, cur, mvf)};

  for (int pass = 0; pass < passes; ++pass) {
    bool moved = false;
    for (int r = 0; r < mvf.rows; ++r)
      for (int c = 0; c < mvf.cols; ++c) {
        const auto quads = detail::incident_quads(mvf, c, r);
        auto local_cost = [&] {
          double s = 0.0;
          for (const auto& q : quads) s += mesh_quad_ssd(ref, cur, mvf, q[0], q[1]);
          return s;
        };
        const MotionVector start = mvf.at(c, r);
        MotionVector best = start;
        double best_cost = local_cost();
        for (const auto& off : detail::kSpiral) {
          const MotionVector cand{start.dx + off.dx, start.dy + off.dy};
          if (std::abs(cand.dx) > search_range || std::abs(cand.dy) > search_range) continue;
          mvf.at(c, r) = cand;
          if (detail::incident_quads_valid(mvf, c, r)) {
            const double cost = local_cost();
            if (cost < best_cost) {
              best_cost = cost;
              best = cand;
            }
          }
        }
        mvf.at(c, r) = best;
        moved = moved || !(best == start);
      }
    if (trace) trace->ssd_after_pass.push_back(mesh_total_ssd(ref, cur, mvf));
    if (!moved) break;
  }
  return mvf;
}

// Bilinear upsampling of GP displacements to every pixel (the "positions
// between GPs"). Pixels beyond the last GP row/column take the boundary GP
// values.
inline DensePositionField upsample_grid(const MeshMVF& mvf, int width, int height) {
  require(mvf.cols == width / mvf.cell_size + 1 && mvf.rows == height / mvf.cell_size + 1,
          "upsample_grid: lattice does not match the frame dimensions");
  require(mvf.cols >= 2 && mvf.rows >= 2, "upsample_grid: lattice needs at least 2x2 GPs");
  DensePositionField f{Plane<Vec2>(width, height), Plane<PixelPos>(width, height)};
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const Vec2 d = detail::mesh_displacement(mvf, x, y);
      const Vec2 p{x + d.x, y + d.y};
      f.subpixel(x, y) = p;
      f.rounded(x, y) = {round_clamp(p.x, width), round_clamp(p.y, height)};
    }
  return f;
}

inline DensePositionField block_to_dense(const BlockMVF& mvf, int width, int height) {
  require(mvf.cols == (width + mvf.cell_size - 1) / mvf.cell_size &&
              mvf.rows == (height + mvf.cell_size - 1) / mvf.cell_size,
          "block_to_dense: lattice does not match the frame dimensions");
  DensePositionField f{Plane<Vec2>(width, height), Plane<PixelPos>(width, height)};
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const auto& v = mvf.at(x / mvf.cell_size, y / mvf.cell_size);
      const PixelPos p{std::clamp(x + v.dx, 0, width - 1), std::clamp(y + v.dy, 0, height - 1)};
      f.rounded(x, y) = p;
      f.subpixel(x, y) = {static_cast<double>(p.x), static_cast<double>(p.y)};
    }
  return f;
}

// ---------------------------------------------------------------------------
// MVF byte format: "MVF1" u8 kind (0 block, 1 mesh) u16 cols u16 rows
// u8 cell_size u8 search_range, then rows*cols (dx, dy) i8 pairs.

inline constexpr std::size_t kMvfHeaderBytes = 11;

inline std::size_t encoded_mvf_size(int cols, int rows) {
  return kMvfHeaderBytes + 2 * static_cast<std::size_t>(cols) * static_cast<std::size_t>(rows);
}

namespace detail {

inline std::vector<std::uint8_t> encode_lattice(const VectorLattice& m, std::uint8_t kind) {
  require(m.cols >= 1 && m.rows >= 1 && m.cols <= 0xFFFF && m.rows <= 0xFFFF,
          "encode_mvf: lattice dimensions out of range");
  require(m.cell_size >= 1 && m.cell_size <= 255, "encode_mvf: cell size must fit a u8");
  require(m.search_range >= 0 && m.search_range <= 127, "encode_mvf: search range must fit an i8");
  require(m.vectors.size() == static_cast<std::size_t>(m.cols) * static_cast<std::size_t>(m.rows),
          "encode_mvf: vector count does not match lattice");
  std::vector<std::uint8_t> out{'M', 'V', 'F', '1'};
  out.reserve(encoded_mvf_size(m.cols, m.rows));
  out.push_back(kind);
  put_u16(out, static_cast<std::uint16_t>(m.cols));
  put_u16(out, static_cast<std::uint16_t>(m.rows));
  out.push_back(static_cast<std::uint8_t>(m.cell_size));
  out.push_back(static_cast<std::uint8_t>(m.search_range));
  for (const auto& v : m.vectors) {
    require(std::abs(v.dx) <= m.search_range && std::abs(v.dy) <= m.search_range,
            "encode_mvf: vector exceeds the search range");
    out.push_back(static_cast<std::uint8_t>(static_cast<std::int8_t>(v.dx)));
    out.push_back(static_cast<std::uint8_t>(static_cast<std::int8_t>(v.dy)));
  }
  return out;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_mvf(const BlockMVF& m) {
  return detail::encode_lattice(m, 0);
}
inline std::vector<std::uint8_t> encode_mvf(const MeshMVF& m) {
  return detail::encode_lattice(m, 1);
}
inline std::vector<std::uint8_t> encode_mvf(const AnyMvf& m) {
  return std::visit([](const auto& x) { return encode_mvf(x); }, m);
}

// Decodes one record starting at `offset` and advances it past the record.
inline AnyMvf decode_mvf(std::span<const std::uint8_t> bytes, std::size_t& offset) {
  if (bytes.size() < offset + kMvfHeaderBytes) throw FormatError("mvf: truncated header");
  const std::uint8_t* p = bytes.data() + offset;
  if (p[0] != 'M' || p[1] != 'V' || p[2] != 'F' || p[3] != '1')
    throw FormatError("mvf: bad magic");
  const std::uint8_t kind = p[4];
  if (kind > 1) throw FormatError("mvf: unknown kind");
  VectorLattice m;
  m.cols = detail::get_u16(p + 5);
  m.rows = detail::get_u16(p + 7);
  m.cell_size = p[9];
  m.search_range = p[10];
  if (m.cols == 0 || m.rows == 0 || m.cell_size == 0) throw FormatError("mvf: zero dimension");
  if (m.search_range > 127) throw FormatError("mvf: search range exceeds i8");
  const std::size_t len = encoded_mvf_size(m.cols, m.rows);
  if (bytes.size() < offset + len) throw FormatError("mvf: length mismatch");
  m.vectors.resize(static_cast<std::size_t>(m.cols) * static_cast<std::size_t>(m.rows));
  const std::uint8_t* v = p + kMvfHeaderBytes;
  for (auto& mv : m.vectors) {
    mv.dx = static_cast<std::int8_t>(v[0]);
    mv.dy = static_cast<std::int8_t>(v[1]);
    v += 2;
    if (std::abs(mv.dx) > m.search_range || std::abs(mv.dy) > m.search_range)
      throw FormatError("mvf: vector exceeds the declared search range");
  }
  offset += len;
  if (kind == 0) {
    BlockMVF b;
    static_cast<VectorLattice&>(b) = std::move(m);
    return b;
  }
  MeshMVF mesh;
  static_cast<VectorLattice&>(mesh) = std::move(m);
  return mesh;
}

// Decodes a buffer holding exactly one record.
inline AnyMvf decode_mvf(std::span<const std::uint8_t> bytes) {
  std::size_t offset = 0;
  AnyMvf m = decode_mvf(bytes, offset);
  if (offset != bytes.size()) throw FormatError("mvf: length mismatch");
  return m;
}

}  // namespace mcwl
