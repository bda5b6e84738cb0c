#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mcwl/motion.hpp"
#include "oracles.hpp"

using namespace mcwl;

namespace {

Frame shifted(const Frame& ref, int dx, int dy) {
  Frame out(ref.width(), ref.height());
  for (int y = 0; y < ref.height(); ++y)
    for (int x = 0; x < ref.width(); ++x) out(x, y) = oracle::ref_sample(ref, x + dx, y + dy);
  return out;
}

void expect_matches_oracle(const Frame& ref, const Frame& cur, int b, int s) {
  const auto got = estimate_block_mvf(ref, cur, b, s);
  const auto want = oracle::block_search(ref, cur, b, s);
  ASSERT_EQ(got.vectors.size(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    EXPECT_EQ(got.vectors[i].dx, want[i].dx) << "block " << i;
    EXPECT_EQ(got.vectors[i].dy, want[i].dy) << "block " << i;
  }
}

}  // namespace

TEST(BlockMvf, StaticFramesGiveZero) {
  std::mt19937_64 rng(1);
  const auto f = oracle::random_frame(rng, 24, 16);
  EXPECT_TRUE(estimate_block_mvf(f, f, 8, 8).all_zero());
}

TEST(BlockMvf, ConstantFramesGiveZero) {
  const Frame f(20, 20, 700);
  EXPECT_TRUE(estimate_block_mvf(f, f, 4, 3).all_zero());
}

TEST(BlockMvf, GlobalShiftFoundInInterior) {
  std::mt19937_64 rng(2);
  const auto ref = oracle::random_frame(rng, 48, 48);
  const auto cur = shifted(ref, 2, 3);
  const auto mvf = estimate_block_mvf(ref, cur, 8, 8);
  EXPECT_EQ(mvf.cols, 6);
  for (int r = 0; r < mvf.rows - 1; ++r)
    for (int c = 0; c < mvf.cols - 1; ++c) EXPECT_EQ(mvf.at(c, r), (MotionVector{2, 3}));
  expect_matches_oracle(ref, cur, 8, 8);
}

TEST(BlockMvf, MatchesExhaustiveOracleIncludingTies) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    // few intensity levels make SSD ties common
    const auto ref = oracle::random_frame(rng, 8, 8, 0, 2);
    const auto cur = oracle::random_frame(rng, 8, 8, 0, 2);
    expect_matches_oracle(ref, cur, 4, 2);
    expect_matches_oracle(ref, cur, 3, 2);
  }
}

TEST(BlockMvf, CeilGridDims) {
  const Frame f(17, 9);
  const auto m = estimate_block_mvf(f, f, 8, 1);
  EXPECT_EQ(m.cols, 3);
  EXPECT_EQ(m.rows, 2);
}

TEST(BlockMvf, Errors) {
  const Frame a(8, 8), b(8, 9);
  EXPECT_THROW(estimate_block_mvf(a, b, 4, 2), InvalidArgument);
  EXPECT_THROW(estimate_block_mvf(a, a, 9, 2), InvalidArgument);
  EXPECT_THROW(estimate_block_mvf(a, a, 0, 2), InvalidArgument);
  EXPECT_THROW(estimate_block_mvf(a, a, 4, -1), InvalidArgument);
  EXPECT_THROW(estimate_block_mvf(a, a, 4, 128), InvalidArgument);
}

TEST(MeshMvf, StaticFramesGiveZero) {
  std::mt19937_64 rng(4);
  const auto f = oracle::random_frame(rng, 33, 25);
  EXPECT_TRUE(estimate_mesh_mvf(f, f, 8, 8, 4).all_zero());
}

TEST(MeshMvf, ConstantFramesGiveZero) {
  const Frame f(32, 32, 123);
  EXPECT_TRUE(estimate_mesh_mvf(f, f, 8, 8, 4).all_zero());
}

TEST(MeshMvf, LatticeDims) {
  const Frame f(33, 16);
  const auto m = estimate_mesh_mvf(f, f, 8, 2, 1);
  EXPECT_EQ(m.cols, 5);
  EXPECT_EQ(m.rows, 3);
}

TEST(MeshMvf, PhantomEndpointErrorBelowOnePixel) {
  // Noise-free contraction phantoms, amplitudes 2..6, both pairs.
  double sum = 0.0;
  int n = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    PhantomSpec s;
    s.contraction_amplitude = 2.0 + static_cast<double>(seed % 5);
    s.noise_sigma = 0;
    s.rng_seed = seed;
    const auto ph = generate_phantom(s);
    for (int pair = 0; pair < 2; ++pair) {
      const auto m = estimate_mesh_mvf(ph.volume.frame(2 * pair), ph.volume.frame(2 * pair + 1), 8, 8, 4);
      for (int r = 0; r < m.rows; ++r)
        for (int c = 0; c < m.cols; ++c) {
          const auto g = phantom_pair_displacement(s, pair, c * 8, r * 8);
          sum += std::hypot(m.at(c, r).dx - g.x, m.at(c, r).dy - g.y);
          ++n;
        }
    }
  }
  const double epe = sum / n;
  RecordProperty("mean_epe", std::to_string(epe));
  EXPECT_LT(epe, 1.0);
}

TEST(MeshMvf, SsdNonIncreasingAndValid) {
  std::mt19937_64 rng(6);
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    PhantomSpec s;
    s.width = 64;
    s.height = 48;
    s.contraction_amplitude = 2.0 + static_cast<double>(seed);
    s.rng_seed = seed;
    const auto ph = generate_phantom(s);
    MeshEstimateTrace tr;
    const auto m = estimate_mesh_mvf(ph.volume.frame(0), ph.volume.frame(1), 8, 8, 4, &tr);
    // initial cost plus one entry per pass; stops early once nothing moves
    ASSERT_GE(tr.ssd_after_pass.size(), 2u);
    ASSERT_LE(tr.ssd_after_pass.size(), 5u);
    for (std::size_t i = 1; i < tr.ssd_after_pass.size(); ++i)
      EXPECT_LE(tr.ssd_after_pass[i], tr.ssd_after_pass[i - 1]);
    EXPECT_TRUE(mesh_is_valid(m));
    for (int qy = 0; qy + 1 < m.rows; ++qy)
      for (int qx = 0; qx + 1 < m.cols; ++qx) EXPECT_GT(quad_signed_area(m, qx, qy), 0.0);
    for (const auto& v : m.vectors) {
      EXPECT_LE(std::abs(v.dx), 8);
      EXPECT_LE(std::abs(v.dy), 8);
    }
  }
  // random noise frames: still valid and within range
  const auto a = oracle::random_frame(rng, 32, 32);
  const auto b = oracle::random_frame(rng, 32, 32);
  const auto m = estimate_mesh_mvf(a, b, 8, 3, 2);
  EXPECT_TRUE(mesh_is_valid(m));
}

TEST(MeshMvf, Errors) {
  const Frame a(16, 16);
  EXPECT_THROW(estimate_mesh_mvf(a, a, 1, 2, 1), InvalidArgument);
  EXPECT_THROW(estimate_mesh_mvf(a, a, 17, 2, 1), InvalidArgument);
  EXPECT_THROW(estimate_mesh_mvf(a, a, 8, 2, 0), InvalidArgument);
  EXPECT_THROW(estimate_mesh_mvf(a, Frame(16, 15), 8, 2, 1), InvalidArgument);
}

TEST(QuadValidity, FoldedQuadRejected) {
  auto m = MeshMVF::zero(16, 16, 8, 8);
  EXPECT_TRUE(mesh_is_valid(m));
  m.at(1, 1) = {-8, -8};  // onto GP (0,0)
  EXPECT_FALSE(mesh_is_valid(m));
}

TEST(UpsampleGrid, ZeroIsIdentity) {
  const auto f = upsample_grid(MeshMVF::zero(19, 13, 4, 8), 19, 13);
  for (int y = 0; y < 13; ++y)
    for (int x = 0; x < 19; ++x) {
      EXPECT_EQ(f.subpixel(x, y).x, x);
      EXPECT_EQ(f.subpixel(x, y).y, y);
      EXPECT_EQ(f.rounded(x, y), (PixelPos{x, y}));
    }
}

TEST(UpsampleGrid, ConstantShiftClampsAtRightEdge) {
  auto m = MeshMVF::zero(16, 16, 8, 8);
  for (auto& v : m.vectors) v = {1, 0};
  const auto f = upsample_grid(m, 16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      EXPECT_DOUBLE_EQ(f.subpixel(x, y).x, x + 1.0);
      EXPECT_EQ(f.rounded(x, y), (PixelPos{std::min(x + 1, 15), y}));
    }
}

TEST(UpsampleGrid, SingleGpQuarterAtQuadCentre) {
  auto m = MeshMVF::zero(16, 16, 8, 8);
  m.at(1, 1) = {4, -4};
  const auto f = upsample_grid(m, 16, 16);
  // local (4,4) in quad (0,0): bilinear weight of corner (1,1) is 1/4
  EXPECT_DOUBLE_EQ(f.subpixel(4, 4).x, 5.0);
  EXPECT_DOUBLE_EQ(f.subpixel(4, 4).y, 3.0);
  // the GP itself carries the full vector
  EXPECT_DOUBLE_EQ(f.subpixel(8, 8).x, 12.0);
  EXPECT_DOUBLE_EQ(f.subpixel(8, 8).y, 4.0);
}

TEST(UpsampleGrid, HalfwayRoundsAwayFromZero) {
  auto m = MeshMVF::zero(16, 16, 8, 8);
  m.at(1, 0) = {1, 0};
  m.at(1, 1) = {1, 0};
  // x=4 lies halfway between GP columns 0 and 1: subpixel 4.5 rounds to 5
  const auto f = upsample_grid(m, 16, 16);
  EXPECT_DOUBLE_EQ(f.subpixel(4, 3).x, 4.5);
  EXPECT_EQ(f.rounded(4, 3).x, 5);
  EXPECT_EQ(round_clamp(-0.5, 10), 0);
  EXPECT_EQ(round_clamp(2.5, 10), 3);
  EXPECT_EQ(round_clamp(9.6, 10), 9);
}

TEST(BlockToDense, ZeroIsIdentityAndBlockShift) {
  auto m = BlockMVF::zero(16, 16, 8, 8);
  const auto id = block_to_dense(m, 16, 16);
  EXPECT_EQ(id.rounded(5, 9), (PixelPos{5, 9}));
  m.at(1, 0) = {2, 3};
  const auto f = block_to_dense(m, 16, 16);
  for (int y = 0; y < 8; ++y)
    for (int x = 8; x < 16; ++x) EXPECT_EQ(f.rounded(x, y), (PixelPos{std::min(x + 2, 15), y + 3}));
  EXPECT_EQ(f.rounded(3, 3), (PixelPos{3, 3}));
}

TEST(MvfCodec, ZeroMeshSize) {
  const auto bytes = encode_mvf(MeshMVF::zero(16, 16, 8, 8));
  EXPECT_EQ(bytes.size(), kMvfHeaderBytes + 18);
  for (std::size_t i = kMvfHeaderBytes; i < bytes.size(); ++i) EXPECT_EQ(bytes[i], 0);
}

TEST(MvfCodec, RoundtripAndIdempotence) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> d(-8, 8);
  for (int trial = 0; trial < 20; ++trial) {
    auto m = MeshMVF::zero(40, 24, 8, 8);
    for (auto& v : m.vectors) v = {d(rng), d(rng)};
    const auto bytes = encode_mvf(m);
    const auto back = decode_mvf(bytes);
    ASSERT_TRUE(std::holds_alternative<MeshMVF>(back));
    EXPECT_EQ(std::get<MeshMVF>(back), m);
    EXPECT_EQ(encode_mvf(back), bytes);

    auto b = BlockMVF::zero(40, 24, 8, 8);
    for (auto& v : b.vectors) v = {d(rng), d(rng)};
    EXPECT_EQ(std::get<BlockMVF>(decode_mvf(encode_mvf(b))), b);
  }
}

TEST(MvfCodec, LengthDependsOnlyOnDims) {
  auto a = MeshMVF::zero(32, 32, 8, 8);
  auto b = a;
  b.at(2, 2) = {3, -5};
  EXPECT_EQ(encode_mvf(a).size(), encode_mvf(b).size());
  EXPECT_EQ(encode_mvf(a).size(), encoded_mvf_size(a.cols, a.rows));
}

TEST(MvfCodec, DecodeErrors) {
  auto m = MeshMVF::zero(16, 16, 8, 2);
  auto bytes = encode_mvf(m);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_mvf(bad), FormatError);
  bad = bytes;
  bad.pop_back();
  EXPECT_THROW(decode_mvf(bad), FormatError);
  bad = bytes;
  bad[kMvfHeaderBytes] = 3;  // |dx| = 3 > range 2
  EXPECT_THROW(decode_mvf(bad), FormatError);
  bad = bytes;
  bad[4] = 7;
  EXPECT_THROW(decode_mvf(bad), FormatError);
}

TEST(MvfCodec, StreamOfRecords) {
  auto a = MeshMVF::zero(16, 16, 8, 8);
  auto b = BlockMVF::zero(16, 16, 8, 8);
  b.at(0, 1) = {-1, 2};
  auto bytes = encode_mvf(a);
  const auto tail = encode_mvf(b);
  bytes.insert(bytes.end(), tail.begin(), tail.end());
  std::size_t off = 0;
  EXPECT_EQ(std::get<MeshMVF>(decode_mvf(bytes, off)), a);
  EXPECT_EQ(std::get<BlockMVF>(decode_mvf(bytes, off)), b);
  EXPECT_EQ(off, bytes.size());
}
