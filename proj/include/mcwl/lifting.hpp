#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <future>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "mcwl/graph.hpp"
#include "mcwl/mc.hpp"
#include "mcwl/motion.hpp"
#include "mcwl/plane.hpp"
#include "mcwl/volume.hpp"

namespace mcwl {

// A prediction operator W(odd -> even) and its update counterpart
// W(even -> odd), both producing real values that the lifting step floors.
struct MotionCompensation {
  std::function<RealPlane(const Frame&)> predict;
  std::function<RealPlane(const Frame&)> update;

  static MotionCompensation identity() {
    auto id = [](const Frame& f) {
      RealPlane out(f.width(), f.height());
      for (std::size_t i = 0; i < f.size(); ++i) out[i] = f[i];
      return out;
    };
    return {id, id};
  }
};

inline RealPlane to_real(const Frame& f) {
  RealPlane out(f.width(), f.height());
  for (std::size_t i = 0; i < f.size(); ++i) out[i] = f[i];
  return out;
}

inline MotionCompensation block_compensation(const BlockMVF& mvf, int width, int height) {
  auto field = std::make_shared<DensePositionField>(block_to_dense(mvf, width, height));
  return {[field](const Frame& f) { return warp(f, *field); },
          [mvf](const Frame& hp) { return to_real(inverse_warp_block(hp, mvf)); }};
}

inline MotionCompensation mesh_compensation(const MeshMVF& mvf, int width, int height) {
  auto fwd = std::make_shared<DensePositionField>(upsample_grid(mvf, width, height));
  auto inv = std::make_shared<DensePositionField>(upsample_grid(negated(mvf), width, height));
  return {[fwd](const Frame& f) { return warp(f, *fwd); },
          [inv](const Frame& hp) { return warp(hp, *inv); }};
}

struct LiftedPair {
  Frame lp;
  Frame hp;
};

// HP = even - floor(W(odd));  LP = odd + floor(W^-1(HP) / 2).
inline LiftedPair haar_lift(const Frame& f_odd, const Frame& f_even,
                            const MotionCompensation& mc) {
  require_same_shape(f_even, f_odd.width(), f_odd.height(), "haar_lift");
  const RealPlane pred = mc.predict(f_odd);
  require_same_shape(pred, f_odd.width(), f_odd.height(), "haar_lift: predictor");
  Frame hp(f_odd.width(), f_odd.height());
  for (std::size_t i = 0; i < hp.size(); ++i) hp[i] = f_even[i] - floor_to_int(pred[i]);
  const RealPlane upd = mc.update(hp);
  require_same_shape(upd, f_odd.width(), f_odd.height(), "haar_lift: updater");
  Frame lp(f_odd.width(), f_odd.height());
  for (std::size_t i = 0; i < lp.size(); ++i) lp[i] = f_odd[i] + floor_to_int(0.5 * upd[i]);
  return {std::move(lp), std::move(hp)};
}

// Returns (f_odd, f_even).
inline std::pair<Frame, Frame> haar_unlift(const Frame& lp, const Frame& hp,
                                           const MotionCompensation& mc) {
  require_same_shape(hp, lp.width(), lp.height(), "haar_unlift");
  if (!mc.predict || !mc.update) throw InvalidArgument("haar_unlift: missing MC operators");
  const RealPlane upd = mc.update(hp);
  Frame odd(lp.width(), lp.height());
  for (std::size_t i = 0; i < odd.size(); ++i) odd[i] = lp[i] - floor_to_int(0.5 * upd[i]);
  const RealPlane pred = mc.predict(odd);
  Frame even(lp.width(), lp.height());
  for (std::size_t i = 0; i < even.size(); ++i) even[i] = hp[i] + floor_to_int(pred[i]);
  return {std::move(odd), std::move(even)};
}

using NodeVector = std::vector<std::int32_t>;

// H = X_even - floor(J_P X_odd);  L = X_odd + floor(K_U H / 2).
// Returns (H, L).
inline std::pair<NodeVector, NodeVector> graph_lift(std::span<const std::int32_t> x_even,
                                                    std::span<const std::int32_t> x_odd,
                                                    const SparseMatrix& jp,
                                                    const SparseMatrix& ku) {
  require(jp.rows() == x_even.size() && jp.cols() == x_odd.size(),
          "graph_lift: prediction matrix does not match vector lengths");
  require(ku.rows() == x_odd.size() && ku.cols() == x_even.size(),
          "graph_lift: update matrix does not match vector lengths");
  const auto pred = jp.multiply(x_odd);
  NodeVector h(x_even.size());
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = x_even[i] - floor_to_int(pred[i]);
  const auto upd = ku.multiply(std::span<const std::int32_t>(h));
  NodeVector l(x_odd.size());
  for (std::size_t i = 0; i < l.size(); ++i) l[i] = x_odd[i] + floor_to_int(0.5 * upd[i]);
  return {std::move(h), std::move(l)};
}

// Returns (X_even, X_odd).
inline std::pair<NodeVector, NodeVector> graph_unlift(std::span<const std::int32_t> h,
                                                      std::span<const std::int32_t> l,
                                                      const SparseMatrix& jp,
                                                      const SparseMatrix& ku) {
  require(jp.rows() == h.size() && jp.cols() == l.size(),
          "graph_unlift: prediction matrix does not match vector lengths");
  require(ku.rows() == l.size() && ku.cols() == h.size(),
          "graph_unlift: update matrix does not match vector lengths");
  const auto upd = ku.multiply(h);
  NodeVector x_odd(l.size());
  for (std::size_t i = 0; i < l.size(); ++i) x_odd[i] = l[i] - floor_to_int(0.5 * upd[i]);
  const auto pred = jp.multiply(std::span<const std::int32_t>(x_odd));
  NodeVector x_even(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) x_even[i] = h[i] + floor_to_int(pred[i]);
  return {std::move(x_even), std::move(x_odd)};
}

// ---------------------------------------------------------------------------
// Volume-level decomposition

enum class Method { none, block, mesh, graph };
enum class UpdateVariant { transpose, eq5 };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::none: return "none";
    case Method::block: return "block";
    case Method::mesh: return "mesh";
    case Method::graph: return "graph";
  }
  return "?";
}

inline std::optional<Method> parse_method(std::string_view s) {
  if (s == "none") return Method::none;
  if (s == "block") return Method::block;
  if (s == "mesh") return Method::mesh;
  if (s == "graph") return Method::graph;
  return std::nullopt;
}

struct LiftingParams {
  int grid_size = 8;
  int block_size = 8;
  int search_range = 8;
  int knn = 25;
  int mesh_passes = 4;
  UpdateVariant update = UpdateVariant::transpose;
  DistanceMode distances = DistanceMode::subpixel;
};

struct GraphOperators {
  SparseMatrix jp;
  SparseMatrix ku;
};

// J_P / K_U for one frame pair from its mesh MVF. The odd-frame nodes sit at
// their compensated positions in the even frame, i.e. the negated mesh.
inline GraphOperators graph_operators(const MeshMVF& mvf, int width, int height,
                                      const LiftingParams& params) {
  const auto field = upsample_grid(negated(mvf), width, height);
  const auto edges = build_edges(field, params.knn, params.distances);
  const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  GraphOperators ops;
  ops.jp = build_prediction_matrix(edges, n, n);
  ops.ku = params.update == UpdateVariant::transpose ? update_from_prediction(ops.jp)
                                                      : row_normalized(update_from_prediction(ops.jp));
  return ops;
}

struct SubbandPair {
  Frame lp;
  Frame hp;
  Method method = Method::none;
  std::optional<AnyMvf> mvf;  // block or mesh field; empty for Method::none
};

inline SubbandPair decompose_pair(const Frame& f_odd, const Frame& f_even, Method method,
                                  const LiftingParams& params) {
  const int w = f_odd.width();
  const int h = f_odd.height();
  SubbandPair sb;
  sb.method = method;
  switch (method) {
    case Method::none: {
      auto r = haar_lift(f_odd, f_even, MotionCompensation::identity());
      sb.lp = std::move(r.lp);
      sb.hp = std::move(r.hp);
      break;
    }
    case Method::block: {
      auto mvf = estimate_block_mvf(f_odd, f_even, params.block_size, params.search_range);
      auto r = haar_lift(f_odd, f_even, block_compensation(mvf, w, h));
      sb.lp = std::move(r.lp);
      sb.hp = std::move(r.hp);
      sb.mvf = std::move(mvf);
      break;
    }
    case Method::mesh: {
      auto mvf = estimate_mesh_mvf(f_odd, f_even, params.grid_size, params.search_range,
                                   params.mesh_passes);
      auto r = haar_lift(f_odd, f_even, mesh_compensation(mvf, w, h));
      sb.lp = std::move(r.lp);
      sb.hp = std::move(r.hp);
      sb.mvf = std::move(mvf);
      break;
    }
    case Method::graph: {
      auto mvf = estimate_mesh_mvf(f_odd, f_even, params.grid_size, params.search_range,
                                   params.mesh_passes);
      const auto ops = graph_operators(mvf, w, h, params);
      auto [hv, lv] = graph_lift(f_even.samples(), f_odd.samples(), ops.jp, ops.ku);
      sb.hp = Frame(w, h, std::move(hv));
      sb.lp = Frame(w, h, std::move(lv));
      sb.mvf = std::move(mvf);
      break;
    }
  }
  return sb;
}

// Inverse of decompose_pair; returns (f_odd, f_even).
inline std::pair<Frame, Frame> compose_pair(const SubbandPair& sb, const LiftingParams& params) {
  const int w = sb.lp.width();
  const int h = sb.lp.height();
  require_same_shape(sb.hp, w, h, "compose_pair");
  auto need = [&]<typename T>() -> const T& {
    if (!sb.mvf || !std::holds_alternative<T>(*sb.mvf))
      throw InvalidArgument(std::string("compose_pair: missing motion field for method ") +
                            std::string(to_string(sb.method)));
    return std::get<T>(*sb.mvf);
  };
  switch (sb.method) {
    case Method::none:
      return haar_unlift(sb.lp, sb.hp, MotionCompensation::identity());
    case Method::block:
      return haar_unlift(sb.lp, sb.hp, block_compensation(need.operator()<BlockMVF>(), w, h));
    case Method::mesh:
      return haar_unlift(sb.lp, sb.hp, mesh_compensation(need.operator()<MeshMVF>(), w, h));
    case Method::graph: {
      const auto ops = graph_operators(need.operator()<MeshMVF>(), w, h, params);
      auto [ev, ov] = graph_unlift(sb.hp.samples(), sb.lp.samples(), ops.jp, ops.ku);
      return {Frame(w, h, std::move(ov)), Frame(w, h, std::move(ev))};
    }
  }
  throw InvalidArgument("compose_pair: unknown method");
}

struct Decomposition {
  Method method = Method::none;
  Volume lp;  // signed payload
  Volume hp;  // signed payload
  std::vector<std::optional<AnyMvf>> motion;  // one entry per pair
};

namespace detail {

// Runs fn(0..n-1) on up to hardware_concurrency threads; results by index.
template <typename Fn>
auto parallel_map(int n, Fn fn) {
  using R = decltype(fn(0));
  std::vector<std::optional<R>> slots(static_cast<std::size_t>(n));
  const int workers =
      std::max(1, std::min<int>(n, static_cast<int>(std::thread::hardware_concurrency())));
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) slots[static_cast<std::size_t>(i)].emplace(fn(i));
  } else {
    std::vector<std::future<void>> jobs;
    std::atomic<int> next{0};
    for (int t = 0; t < workers; ++t)
      jobs.push_back(std::async(std::launch::async, [&] {
        for (int i = next++; i < n; i = next++) slots[static_cast<std::size_t>(i)].emplace(fn(i));
      }));
    for (auto& j : jobs) j.get();
  }
  std::vector<R> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

}  // namespace detail

// One Haar decomposition step over the frame axis; pairs (frames[2t],
// frames[2t+1]) are processed independently.
inline Decomposition decompose_volume(const Volume& v, Method method, const LiftingParams& params) {
  auto pairs = detail::parallel_map(v.pair_count(), [&](int t) {
    return decompose_pair(v.frame(2 * t), v.frame(2 * t + 1), method, params);
  });
  std::vector<Frame> lp, hp;
  Decomposition d;
  d.method = method;
  for (auto& p : pairs) {
    lp.push_back(std::move(p.lp));
    hp.push_back(std::move(p.hp));
    d.motion.push_back(std::move(p.mvf));
  }
  d.lp = Volume(std::move(lp), v.bit_depth(), true, v.axis());
  d.hp = Volume(std::move(hp), v.bit_depth(), true, v.axis());
  return d;
}

inline Volume compose_volume(const Decomposition& d, const LiftingParams& params) {
  const int pairs = static_cast<int>(d.motion.size());
  require(d.lp.frame_count() == pairs && d.hp.frame_count() == pairs,
          "compose_volume: subband volumes and motion records disagree on the pair count");
  auto rec = detail::parallel_map(pairs, [&](int t) {
    SubbandPair sb{d.lp.frame(t), d.hp.frame(t), d.method, d.motion[static_cast<std::size_t>(t)]};
    return compose_pair(sb, params);
  });
  std::vector<Frame> frames;
  for (auto& [odd, even] : rec) {
    frames.push_back(std::move(odd));
    frames.push_back(std::move(even));
  }
  return Volume(std::move(frames), d.lp.bit_depth(), false, d.lp.axis());
}

}  // namespace mcwl
