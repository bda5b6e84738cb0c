#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "mcwl/motion.hpp"
#include "mcwl/plane.hpp"

namespace mcwl {

struct Triplet {
  std::uint32_t row = 0;
  std::uint32_t col = 0;
  double weight = 0.0;
  friend bool operator==(const Triplet&, const Triplet&) = default;
};

// Compressed-row sparse matrix with non-negative weights. Entries within a
// row are kept sorted by column.
class SparseMatrix {
 public:
  SparseMatrix() = default;

  SparseMatrix(std::size_t n_rows, std::size_t n_cols, std::vector<Triplet> entries)
      : n_rows_(n_rows), n_cols_(n_cols), row_ptr_(n_rows + 1, 0) {
    std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
      return std::tie(a.row, a.col) < std::tie(b.row, b.col);
    });
    for (std::size_t e = 0; e < entries.size(); ++e) {
      const auto& t = entries[e];
      require(t.row < n_rows && t.col < n_cols, "sparse matrix: entry index out of range");
      require(t.weight >= 0.0 && std::isfinite(t.weight),
              "sparse matrix: weights must be finite and non-negative");
      if (e > 0 && entries[e - 1].row == t.row && entries[e - 1].col == t.col)
        throw InvalidArgument("sparse matrix: duplicate (row, col) entry");
      ++row_ptr_[t.row + 1];
    }
    for (std::size_t r = 0; r < n_rows; ++r) row_ptr_[r + 1] += row_ptr_[r];
    cols_.reserve(entries.size());
    values_.reserve(entries.size());
    for (const auto& t : entries) {
      cols_.push_back(t.col);
      values_.push_back(t.weight);
    }
  }

  static SparseMatrix identity(std::size_t n) {
    std::vector<Triplet> e;
    e.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
      e.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i), 1.0});
    return SparseMatrix(n, n, std::move(e));
  }

  std::size_t rows() const { return n_rows_; }
  std::size_t cols() const { return n_cols_; }
  std::size_t nonzeros() const { return values_.size(); }

  std::span<const std::uint32_t> row_cols(std::size_t r) const {
    return {cols_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }
  std::span<const double> row_values(std::size_t r) const {
    return {values_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }

  double row_sum(std::size_t r) const {
    double s = 0.0;
    for (double v : row_values(r)) s += v;
    return s;
  }

  std::vector<Triplet> triplets() const {
    std::vector<Triplet> out;
    out.reserve(nonzeros());
    for (std::size_t r = 0; r < n_rows_; ++r)
      for (std::size_t e = row_ptr_[r]; e < row_ptr_[r + 1]; ++e)
        out.push_back({static_cast<std::uint32_t>(r), cols_[e], values_[e]});
    return out;
  }

  // y = M x, accumulated in double in column order.
  template <typename T>
  std::vector<double> multiply(std::span<const T> x) const {
    require(x.size() == n_cols_, "sparse matrix: vector length does not match columns");
    std::vector<double> y(n_rows_, 0.0);
    for (std::size_t r = 0; r < n_rows_; ++r) {
      double acc = 0.0;
      for (std::size_t e = row_ptr_[r]; e < row_ptr_[r + 1]; ++e)
        acc += values_[e] * static_cast<double>(x[cols_[e]]);
      y[r] = acc;
    }
    return y;
  }

  SparseMatrix transposed() const {
    std::vector<Triplet> t;
    t.reserve(nonzeros());
    for (const auto& e : triplets()) t.push_back({e.col, e.row, e.weight});
    return SparseMatrix(n_cols_, n_rows_, std::move(t));
  }

  friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

 private:
  std::size_t n_rows_ = 0;
  std::size_t n_cols_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::uint32_t> cols_;
  std::vector<double> values_;
};

// One candidate link between even-frame node i and odd-frame node j with the
// three lengths that feed the weighting function.
struct EdgeTriplet {
  std::uint32_t i = 0;    // even-frame node
  std::uint32_t j = 0;    // odd-frame node
  double e_b = 0.0;       // inter-frame length
  double e_i = 0.0;       // regular intra-frame length
  double e_i_comp = 0.0;  // compensated intra-frame length
  friend bool operator==(const EdgeTriplet&, const EdgeTriplet&) = default;
};

enum class DistanceMode { subpixel, rounded };

// Higher weight for short inter-frame links and for contracted intra-frame
// links (compensated length below the regular one).
inline double weight_edge(const EdgeTriplet& t) {
  const double e = t.e_i_comp < t.e_i ? t.e_i_comp : t.e_b;
  return std::exp(-0.5 * (t.e_b * t.e_b + e * e)) * std::exp(std::abs(t.e_b - t.e_i_comp));
}

// Links every even-frame pixel to the k odd-frame nodes whose rounded
// compensated positions lie nearest to it (ties by smaller node id). Several
// odd nodes may round onto one cell; all of them stay candidates.
//
// `field` holds the compensated position of every odd-frame node in
// even-frame coordinates. Intra-frame lengths are measured from the anchor,
// the first selected neighbour (the odd node co-located with i in the
// compensated grid; with an identity field it is node i itself):
//   e_b      = |pos(j) - p_i|
//   e_i      = |grid(j) - grid(anchor)|
//   e_i_comp = |pos(j) - pos(anchor)|
// where pos is the subpixel (or, in DistanceMode::rounded, the rounded)
// compensated position. Output is grouped by i, nearest first.
inline std::vector<EdgeTriplet> build_edges(const DensePositionField& field, int k,
                                            DistanceMode mode = DistanceMode::subpixel) {
  const int w = field.width();
  const int h = field.height();
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  require(k >= 1, "build_edges: k must be >= 1");
  require(static_cast<std::size_t>(k) <= n, "build_edges: k exceeds the node count");

  // Bucket odd nodes by their rounded cell.
  std::vector<std::size_t> cell_start(n + 1, 0);
  for (const auto& p : field.rounded.samples()) ++cell_start[field.rounded.index(p.x, p.y) + 1];
  for (std::size_t c = 0; c < n; ++c) cell_start[c + 1] += cell_start[c];
  std::vector<std::uint32_t> cell_nodes(n);
  {
    auto fill = cell_start;
    for (std::size_t j = 0; j < n; ++j) {
      const auto& p = field.rounded[j];
      cell_nodes[fill[field.rounded.index(p.x, p.y)]++] = static_cast<std::uint32_t>(j);
    }
  }

  auto position = [&](std::size_t j) {
    if (mode == DistanceMode::rounded) {
      const auto& r = field.rounded[j];
      return Vec2{static_cast<double>(r.x), static_cast<double>(r.y)};
    }
    return field.subpixel[j];
  };

  struct Candidate {
    long d2;
    std::uint32_t j;
  };
  std::vector<EdgeTriplet> edges;
  edges.reserve(n * static_cast<std::size_t>(k));
  std::vector<Candidate> cand;
  const auto kk = static_cast<std::size_t>(k);

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      cand.clear();
      auto visit = [&](int cx, int cy) {
        if (cx < 0 || cy < 0 || cx >= w || cy >= h) return;
        const std::size_t c = static_cast<std::size_t>(cy) * w + cx;
        const long d2 = static_cast<long>(cx - x) * (cx - x) + static_cast<long>(cy - y) * (cy - y);
        for (std::size_t e = cell_start[c]; e < cell_start[c + 1]; ++e)
          cand.push_back({d2, cell_nodes[e]});
      };
      auto by_distance = [](const Candidate& a, const Candidate& b) {
        return a.d2 != b.d2 ? a.d2 < b.d2 : a.j < b.j;
      };
      visit(x, y);
      for (int radius = 1;; ++radius) {
        for (int cx = x - radius; cx <= x + radius; ++cx) {
          visit(cx, y - radius);
          visit(cx, y + radius);
        }
        for (int cy = y - radius + 1; cy <= y + radius - 1; ++cy) {
          visit(x - radius, cy);
          visit(x + radius, cy);
        }
        const bool covers = x - radius <= 0 && y - radius <= 0 && x + radius >= w - 1 &&
                            y + radius >= h - 1;
        if (covers) break;
        // Every unvisited cell is farther than `radius`, so the selection is
        // final once the k-th best lies within it.
        if (cand.size() >= kk) {
          std::nth_element(cand.begin(), cand.begin() + (k - 1), cand.end(), by_distance);
          if (cand[kk - 1].d2 <= static_cast<long>(radius) * radius) break;
        }
      }
      std::partial_sort(cand.begin(), cand.begin() + k, cand.end(), by_distance);

      const auto i = static_cast<std::uint32_t>(static_cast<std::size_t>(y) * w + x);
      const std::uint32_t anchor = cand[0].j;
      const Vec2 anchor_pos = position(anchor);
      const int ax = static_cast<int>(anchor % static_cast<std::uint32_t>(w));
      const int ay = static_cast<int>(anchor / static_cast<std::uint32_t>(w));
      for (std::size_t c = 0; c < kk; ++c) {
        const std::uint32_t j = cand[c].j;
        const int jx = static_cast<int>(j % static_cast<std::uint32_t>(w));
        const int jy = static_cast<int>(j / static_cast<std::uint32_t>(w));
        const Vec2 pj = position(j);
        EdgeTriplet t;
        t.i = i;
        t.j = j;
        t.e_b = std::hypot(pj.x - x, pj.y - y);
        t.e_i = std::hypot(static_cast<double>(jx - ax), static_cast<double>(jy - ay));
        t.e_i_comp = std::hypot(pj.x - anchor_pos.x, pj.y - anchor_pos.y);
        edges.push_back(t);
      }
    }
  return edges;
}

// Random-walk normalisation D^-1 M. A zero row is an error.
inline SparseMatrix transition_matrix(const SparseMatrix& adj) {
  std::vector<Triplet> t;
  t.reserve(adj.nonzeros());
  for (std::size_t r = 0; r < adj.rows(); ++r) {
    const double s = adj.row_sum(r);
    if (!(s > 0.0)) throw InvalidArgument("transition_matrix: zero row " + std::to_string(r));
    const auto cols = adj.row_cols(r);
    const auto vals = adj.row_values(r);
    for (std::size_t e = 0; e < cols.size(); ++e)
      t.push_back({static_cast<std::uint32_t>(r), cols[e], vals[e] / s});
  }
  return SparseMatrix(adj.rows(), adj.cols(), std::move(t));
}

// Like transition_matrix, but rows without entries stay empty.
inline SparseMatrix row_normalized(const SparseMatrix& adj) {
  std::vector<Triplet> t;
  t.reserve(adj.nonzeros());
  for (std::size_t r = 0; r < adj.rows(); ++r) {
    const auto cols = adj.row_cols(r);
    if (cols.empty()) continue;
    const double s = adj.row_sum(r);
    if (!(s > 0.0)) throw InvalidArgument("row_normalized: zero-weight row " + std::to_string(r));
    const auto vals = adj.row_values(r);
    for (std::size_t e = 0; e < cols.size(); ++e)
      t.push_back({static_cast<std::uint32_t>(r), cols[e], vals[e] / s});
  }
  return SparseMatrix(adj.rows(), adj.cols(), std::move(t));
}

// Prediction matrix J_P: weighted even-to-odd adjacency, row-normalised.
inline SparseMatrix build_prediction_matrix(std::span<const EdgeTriplet> edges, std::size_t n_even,
                                            std::size_t n_odd) {
  std::vector<Triplet> t;
  t.reserve(edges.size());
  std::vector<std::uint8_t> has_edge(n_even, 0);
  for (const auto& e : edges) {
    require(e.i < n_even && e.j < n_odd, "build_prediction_matrix: node id out of range");
    t.push_back({e.i, e.j, weight_edge(e)});
    has_edge[e.i] = 1;
  }
  for (std::size_t r = 0; r < n_even; ++r)
    if (!has_edge[r])
      throw InvalidArgument("build_prediction_matrix: even node " + std::to_string(r) +
                            " has no edge");
  return transition_matrix(SparseMatrix(n_even, n_odd, std::move(t)));
}

// Update matrix K_U = J_P^T, entry-exact.
inline SparseMatrix update_from_prediction(const SparseMatrix& jp) { return jp.transposed(); }

// "row col weight" lines for cross-implementation diffing.
inline void write_triplets(std::ostream& os, const SparseMatrix& m) {
  const auto old = os.precision(17);
  for (const auto& t : m.triplets()) os << t.row << ' ' << t.col << ' ' << t.weight << '\n';
  os.precision(old);
}

}  // namespace mcwl
