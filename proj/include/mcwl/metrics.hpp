#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <vector>

#include "mcwl/plane.hpp"
#include "mcwl/volume.hpp"

namespace mcwl {

// 10*log10(peak^2 / MSE) with peak = 2^bit_depth - 1; +inf when MSE is zero.
inline double psnr(const Frame& a, const Frame& b, int bit_depth) {
  require_same_shape(b, a.width(), a.height(), "psnr");
  require(!a.empty(), "psnr: empty frames");
  double sse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sse += d * d;
  }
  if (sse == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = sse / static_cast<double>(a.size());
  const double peak = std::ldexp(1.0, bit_depth) - 1.0;
  return 10.0 * std::log10(peak * peak / mse);
}

inline double mean_energy(std::span<const std::int32_t> band) {
  require(!band.empty(), "mean_energy: empty band");
  double s = 0.0;
  for (std::int32_t v : band) s += static_cast<double>(v) * static_cast<double>(v);
  return s / static_cast<double>(band.size());
}

inline double mean_energy(const Frame& band) { return mean_energy(band.samples()); }

inline double mean_energy(const Volume& band) {
  double s = 0.0;
  for (const auto& f : band.frames())
    for (std::int32_t v : f.samples()) s += static_cast<double>(v) * static_cast<double>(v);
  return s / static_cast<double>(band.sample_count());
}

struct EntropyEstimate {
  double bits = 0.0;
  double bytes() const { return bits / 8.0; }
  std::size_t samples = 0;
  std::size_t symbols = 0;
};

// Zeroth-order empirical entropy of the sample histogram times the sample count.
inline EntropyEstimate entropy_bits(std::span<const std::span<const std::int32_t>> bands) {
  std::map<std::int32_t, std::size_t> hist;
  std::size_t n = 0;
  for (auto b : bands)
    for (std::int32_t v : b) {
      ++hist[v];
      ++n;
    }
  EntropyEstimate e;
  e.samples = n;
  e.symbols = hist.size();
  if (n == 0) return e;
  const double total = static_cast<double>(n);
  double h = 0.0;
  for (const auto& [sym, count] : hist) {
    const double p = static_cast<double>(count) / total;
    h -= p * std::log2(p);
  }
  e.bits = h * total;
  return e;
}

inline EntropyEstimate entropy_bits(const Frame& band) {
  const std::span<const std::int32_t> one = band.samples();
  return entropy_bits(std::span<const std::span<const std::int32_t>>(&one, 1));
}

inline EntropyEstimate entropy_bits(const Volume& band) {
  std::vector<std::span<const std::int32_t>> spans;
  for (const auto& f : band.frames()) spans.push_back(f.samples());
  return entropy_bits(spans);
}

struct LpQuality {
  std::vector<double> per_pair_db;
  double average_db = 0.0;
};

// PSNR of each LP frame against the odd (first) frame of its pair, averaged
// arithmetically in dB.
inline LpQuality lp_quality(const Volume& lp, const Volume& originals) {
  require(lp.frame_count() * 2 == originals.frame_count(),
          "lp_quality: LP frame count must be half the original frame count");
  LpQuality q;
  double sum = 0.0;
  for (int t = 0; t < lp.frame_count(); ++t) {
    const double db = psnr(lp.frame(t), originals.frame(2 * t), originals.bit_depth());
    q.per_pair_db.push_back(db);
    sum += db;
  }
  q.average_db = sum / static_cast<double>(lp.frame_count());
  return q;
}

}  // namespace mcwl
