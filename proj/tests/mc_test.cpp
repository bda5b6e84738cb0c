#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "mcwl/mc.hpp"
#include "oracles.hpp"

using namespace mcwl;

namespace {

Frame ramp_x(int w, int h) {
  Frame f(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) f(x, y) = x;
  return f;
}

std::vector<oracle::BlockVec> vecs_of(const BlockMVF& m) {
  std::vector<oracle::BlockVec> v;
  for (const auto& mv : m.vectors) v.push_back({mv.dx, mv.dy});
  return v;
}

}  // namespace

TEST(Warp, IdentityFieldIsIdentity) {
  std::mt19937_64 rng(1);
  const auto f = oracle::random_frame(rng, 13, 9);
  const auto out = warp(f, DensePositionField::identity(13, 9));
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_EQ(out[i], f[i]);
}

TEST(Warp, ConstantShiftOnRamp) {
  auto m = MeshMVF::zero(16, 8, 8, 8);
  for (auto& v : m.vectors) v = {1, 0};
  const auto out = warp(ramp_x(16, 8), upsample_grid(m, 16, 8));
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 16; ++x) EXPECT_DOUBLE_EQ(out(x, y), std::min(x + 1, 15));
}

TEST(Warp, SubpixelBilinear) {
  auto field = DensePositionField::identity(8, 8);
  field.subpixel(0, 0) = {2.5, 3.0};
  field.subpixel(1, 0) = {2.25, 3.75};
  Frame f(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) f(x, y) = x + 10 * y;
  const auto out = warp(f, field);
  EXPECT_DOUBLE_EQ(out(0, 0), 32.5);
  EXPECT_DOUBLE_EQ(out(1, 0), 2.25 + 37.5);
  EXPECT_DOUBLE_EQ(warp(ramp_x(8, 8), field)(0, 0), 2.5);
}

TEST(Warp, OutputWithinInputRange) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> pos(-3.0, 20.0);
  const auto f = oracle::random_frame(rng, 16, 16, 100, 900);
  auto field = DensePositionField::identity(16, 16);
  for (auto& p : field.subpixel.data()) p = {pos(rng), pos(rng)};
  const auto [lo, hi] = std::minmax_element(f.data().begin(), f.data().end());
  for (double v : warp(f, field).data()) {
    EXPECT_GE(v, *lo);
    EXPECT_LE(v, *hi);
  }
}

TEST(InverseWarpBlock, ZeroMvfIsIdentity) {
  std::mt19937_64 rng(3);
  const auto hp = oracle::random_frame(rng, 17, 11, -50, 50);
  EXPECT_EQ(inverse_warp_block(hp, BlockMVF::zero(17, 11, 4, 8)), hp);
}

TEST(InverseWarpBlock, SingleShiftedBlockMatchesScatterFillOracle) {
  std::mt19937_64 rng(4);
  const auto hp = oracle::random_frame(rng, 24, 16, -100, 100);
  auto m = BlockMVF::zero(24, 16, 8, 8);
  m.at(0, 0) = {8, 0};
  const auto got = inverse_warp_block(hp, m);
  EXPECT_EQ(got, oracle::scatter_fill(hp, vecs_of(m), 8));
  // vacated pixels copy their nearest written pixel: (0,8) below, or at equal
  // distance the earlier raster position (8,0), where the unshifted
  // neighbour block wrote last
  for (int y = 1; y < 8; ++y) EXPECT_EQ(got(0, y), hp(0, 8));
  EXPECT_EQ(got(0, 0), hp(8, 0));
}

TEST(InverseWarpBlock, RandomFieldsMatchOracle) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> d(-3, 3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto hp = oracle::random_frame(rng, 14, 10, -20, 20);
    auto m = BlockMVF::zero(14, 10, 4, 3);
    for (auto& v : m.vectors) v = {d(rng), d(rng)};
    EXPECT_EQ(inverse_warp_block(hp, m), oracle::scatter_fill(hp, vecs_of(m), 4));
  }
}

TEST(InverseWarpBlock, UniformVectorIsTranslation) {
  std::mt19937_64 rng(6);
  const auto hp = oracle::random_frame(rng, 16, 16, -9, 9);
  auto m = BlockMVF::zero(16, 16, 4, 8);
  for (auto& v : m.vectors) v = {2, 1};
  const auto got = inverse_warp_block(hp, m);
  for (int y = 1; y < 15; ++y)
    for (int x = 2; x < 15; ++x) EXPECT_EQ(got(x, y), hp(x - 2, y - 1));
  EXPECT_EQ(got, oracle::scatter_fill(hp, vecs_of(m), 4));
}

TEST(InverseWarpMesh, ZeroIsIdentity) {
  std::mt19937_64 rng(7);
  const auto hp = oracle::random_frame(rng, 16, 16, -9, 9);
  const auto out = inverse_warp_mesh(hp, MeshMVF::zero(16, 16, 8, 8));
  for (std::size_t i = 0; i < hp.size(); ++i) EXPECT_EQ(out[i], hp[i]);
}

TEST(InverseWarpMesh, ConstantFieldShiftsBack) {
  auto m = MeshMVF::zero(16, 8, 8, 8);
  for (auto& v : m.vectors) v = {1, 0};
  const auto out = inverse_warp_mesh(ramp_x(16, 8), m);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 16; ++x) EXPECT_DOUBLE_EQ(out(x, y), std::max(x - 1, 0));
}

TEST(InverseWarpMesh, ApproximateInverseOnSmoothRamp) {
  // Deviation of W^-1(W(f)) from f on a smooth image with a small deformation.
  // The inverse is approximate; only a loose bound is checked.
  const int w = 32, h = 32;
  Frame f(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) f(x, y) = 10 * x + 5 * y;
  auto m = MeshMVF::zero(w, h, 8, 8);
  m.at(2, 2) = {1, -1};
  m.at(1, 2) = {1, 0};
  const auto fw = warp(f, upsample_grid(m, w, h));
  Frame fi(w, h);
  for (std::size_t i = 0; i < fi.size(); ++i) fi[i] = static_cast<std::int32_t>(std::lround(fw[i]));
  const auto back = inverse_warp_mesh(fi, m);
  double worst = 0.0;
  for (int y = 4; y < h - 4; ++y)
    for (int x = 4; x < w - 4; ++x) worst = std::max(worst, std::abs(back(x, y) - f(x, y)));
  RecordProperty("max_abs_deviation", std::to_string(worst));
  EXPECT_LT(worst, 10.0);
}
