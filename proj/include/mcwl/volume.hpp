#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "mcwl/plane.hpp"

namespace mcwl {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

using VectorField = Plane<Vec2>;

enum class StackAxis : std::uint8_t { temporal = 0, spatial = 1 };

// Ordered stack of equally sized frames. Input volumes are paired (odd, even)
// = (frames[2t], frames[2t+1]) by the lifting stage, so their frame count must
// be even. Signed coefficient volumes hold one frame per pair and only need
// one frame.
class Volume {
 public:
  Volume() = default;
  Volume(std::vector<Frame> frames, int bit_depth = 12,
         bool signed_payload = false, StackAxis axis = StackAxis::temporal)
      : frames_(std::move(frames)), bit_depth_(bit_depth),
        signed_(signed_payload), axis_(axis) {
    if (signed_)
      require(!frames_.empty(), "volume: coefficient volume needs at least one frame");
    else
      require(frames_.size() >= 2 && frames_.size() % 2 == 0,
              "volume: frame count must be even and at least 2");
    require(bit_depth_ >= 1 && bit_depth_ <= 16, "volume: bit depth must be in [1,16]");
    const int w = frames_.front().width();
    const int h = frames_.front().height();
    require(w > 0 && h > 0, "volume: zero frame dimension");
    for (const auto& f : frames_)
      require(f.same_shape(w, h), "volume: frames must share dimensions");
  }

  int width() const { return frames_.front().width(); }
  int height() const { return frames_.front().height(); }
  int frame_count() const { return static_cast<int>(frames_.size()); }
  int pair_count() const { return frame_count() / 2; }
  int bit_depth() const { return bit_depth_; }
  bool signed_payload() const { return signed_; }
  StackAxis axis() const { return axis_; }

  const Frame& frame(int t) const { return frames_.at(static_cast<std::size_t>(t)); }
  const std::vector<Frame>& frames() const { return frames_; }

  std::size_t sample_count() const {
    return frames_.size() * frames_.front().size();
  }

  friend bool operator==(const Volume&, const Volume&) = default;

 private:
  std::vector<Frame> frames_;
  int bit_depth_ = 12;
  bool signed_ = false;
  StackAxis axis_ = StackAxis::temporal;
};

// ---------------------------------------------------------------------------
// Volume file: "MCWL" u8 version u16 width u16 height u16 frames u8 bit_depth
// u8 flags, then a little-endian u16 (or i16 when flags bit0 is set) payload,
// row-major within a frame, frame after frame. Flags bit1 marks a spatially
// stacked sequence.

inline constexpr std::array<char, 4> kVolumeMagic{'M', 'C', 'W', 'L'};
inline constexpr std::uint8_t kVolumeVersion = 1;
inline constexpr std::size_t kVolumeHeaderBytes = 13;

namespace detail {

inline void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path,
                       const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_volume(const Volume& v) {
  require(v.width() <= 0xFFFF && v.height() <= 0xFFFF && v.frame_count() <= 0xFFFF,
          "volume: dimensions exceed the u16 header fields");
  std::vector<std::uint8_t> out;
  out.reserve(kVolumeHeaderBytes + v.sample_count() * 2);
  out.insert(out.end(), kVolumeMagic.begin(), kVolumeMagic.end());
  detail::put_u8(out, kVolumeVersion);
  detail::put_u16(out, static_cast<std::uint16_t>(v.width()));
  detail::put_u16(out, static_cast<std::uint16_t>(v.height()));
  detail::put_u16(out, static_cast<std::uint16_t>(v.frame_count()));
  detail::put_u8(out, static_cast<std::uint8_t>(v.bit_depth()));
  std::uint8_t flags = v.signed_payload() ? 1 : 0;
  if (v.axis() == StackAxis::spatial) flags |= 2;
  detail::put_u8(out, flags);

  const std::int32_t lo = v.signed_payload() ? std::numeric_limits<std::int16_t>::min() : 0;
  const std::int32_t hi = v.signed_payload() ? std::numeric_limits<std::int16_t>::max()
                                             : (std::int32_t{1} << v.bit_depth()) - 1;
  for (const auto& f : v.frames()) {
    for (std::int32_t s : f.samples()) {
      if (s < lo || s > hi)
        throw InvalidArgument("volume: sample " + std::to_string(s) +
                              " outside the declared range [" + std::to_string(lo) +
                              "," + std::to_string(hi) + "]");
      detail::put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(s)));
    }
  }
  return out;
}

inline Volume decode_volume(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kVolumeHeaderBytes) throw FormatError("volume: truncated header");
  if (!std::equal(kVolumeMagic.begin(), kVolumeMagic.end(), bytes.begin()))
    throw FormatError("volume: bad magic");
  if (bytes[4] != kVolumeVersion) throw FormatError("volume: unsupported version");
  const int w = detail::get_u16(&bytes[5]);
  const int h = detail::get_u16(&bytes[7]);
  const int n = detail::get_u16(&bytes[9]);
  const int depth = bytes[11];
  const std::uint8_t flags = bytes[12];
  if (w == 0 || h == 0 || n == 0) throw FormatError("volume: zero dimension");
  if (depth == 0 || depth > 16) throw FormatError("volume: bit depth must be in [1,16]");
  const bool is_signed = flags & 1;
  const std::size_t per_frame = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  const std::size_t need = kVolumeHeaderBytes + per_frame * static_cast<std::size_t>(n) * 2;
  if (bytes.size() < need) throw FormatError("volume: truncated payload");
  if (bytes.size() > need) throw FormatError("volume: trailing bytes after payload");
  if (!is_signed && n % 2 != 0) throw FormatError("volume: frame count must be even");

  std::vector<Frame> frames;
  frames.reserve(static_cast<std::size_t>(n));
  const std::uint8_t* p = bytes.data() + kVolumeHeaderBytes;
  for (int t = 0; t < n; ++t) {
    std::vector<std::int32_t> s(per_frame);
    for (auto& v : s) {
      const std::uint16_t raw = detail::get_u16(p);
      v = is_signed ? static_cast<std::int32_t>(static_cast<std::int16_t>(raw))
                    : static_cast<std::int32_t>(raw);
      p += 2;
    }
    frames.emplace_back(w, h, std::move(s));
  }
  return Volume(std::move(frames), depth, is_signed,
                (flags & 2) ? StackAxis::spatial : StackAxis::temporal);
}

inline Volume load_volume(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw IoError("volume file '" + path.string() + "' does not exist");
  return decode_volume(detail::read_file(path));
}

inline std::size_t save_volume(const Volume& v, const std::filesystem::path& path) {
  const auto bytes = encode_volume(v);
  detail::write_file(path, bytes);
  return bytes.size();
}

// ---------------------------------------------------------------------------
// Synthetic deformable phantom.

struct PhantomSpec {
  int width = 128;
  int height = 128;
  int frame_count = 4;
  int blob_count = 24;
  double contraction_amplitude = 4.0;  // max displacement magnitude, pixels
  double noise_sigma = 20.0;
  std::uint64_t rng_seed = 1;
  int bit_depth = 12;
};

inline constexpr double kMaxPhantomAmplitude = 8.0;

struct Phantom {
  Volume volume;
  // d_t(p) per frame: frame t is frame 0 sampled at p + d_t(p).
  std::vector<VectorField> frame_displacement;
  // Per pair (frames 2t, 2t+1): the second frame at p corresponds to the first
  // frame at p + g(p).
  std::vector<VectorField> pair_displacement;
};

namespace detail {

// Portable draws on top of mt19937_64, whose output sequence is fixed by the
// standard (the std distributions are not).
class PhantomRng {
 public:
  explicit PhantomRng(std::uint64_t seed) : eng_(seed) {}
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace detail

inline void validate(const PhantomSpec& s) {
  require(s.width >= 2 && s.height >= 2, "phantom: frames must be at least 2x2");
  require(s.frame_count >= 2 && s.frame_count % 2 == 0,
          "phantom: frame_count must be even and at least 2");
  require(s.blob_count >= 0, "phantom: blob_count must be non-negative");
  require(s.contraction_amplitude >= 0.0 && s.contraction_amplitude <= kMaxPhantomAmplitude,
          "phantom: contraction_amplitude must lie in [0, 8] (the motion search range)");
  require(s.noise_sigma >= 0.0, "phantom: noise_sigma must be non-negative");
  require(s.bit_depth >= 1 && s.bit_depth <= 16, "phantom: bit_depth must be in [1,16]");
}

inline Phantom generate_phantom(const PhantomSpec& spec) {
  validate(spec);
  detail::PhantomRng rng(spec.rng_seed);
  const int w = spec.width;
  const int h = spec.height;
  const double max_value = std::ldexp(1.0, spec.bit_depth) - 1.0;

  struct Blob {
    double cx, cy, sigma, amp;
  };
  const double short_side = std::min(w, h);
  std::vector<Blob> blobs;
  for (int b = 0; b < spec.blob_count; ++b) {
    Blob blob;
    blob.cx = rng.uniform(0.0, w - 1.0);
    blob.cy = rng.uniform(0.0, h - 1.0);
    blob.sigma = rng.uniform(short_side / 24.0, short_side / 8.0);
    blob.sigma = std::max(blob.sigma, 1.0);
    const double mag = rng.uniform(0.15, 0.6) * max_value;
    blob.amp = rng.uniform() < 0.5 ? -mag : mag;
    blobs.push_back(blob);
  }

  const double background = 0.5 * max_value;
  RealPlane base(w, h, background);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double v = background;
      for (const auto& b : blobs) {
        const double dx = x - b.cx;
        const double dy = y - b.cy;
        v += b.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
      }
      base(x, y) = std::clamp(v, 0.0, max_value);
    }

  const double cx = (w - 1) / 2.0;
  const double cy = (h - 1) / 2.0;
  const double r_max = std::hypot(cx, cy);
  const int n = spec.frame_count;
  std::vector<double> scale(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t)
    scale[static_cast<std::size_t>(t)] =
        spec.contraction_amplitude * std::sin(std::numbers::pi * t / n) / r_max;

  Phantom out;
  std::vector<Frame> frames;
  for (int t = 0; t < n; ++t) {
    const double s = scale[static_cast<std::size_t>(t)];
    VectorField field(w, h);
    Frame f(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const Vec2 d{s * (x - cx), s * (y - cy)};
        field(x, y) = d;
        double v = sample_bilinear(base, x + d.x, y + d.y);
        if (spec.noise_sigma > 0.0) v += spec.noise_sigma * rng.gaussian();
        f(x, y) = static_cast<std::int32_t>(std::clamp(std::round(v), 0.0, max_value));
      }
    frames.push_back(std::move(f));
    out.frame_displacement.push_back(std::move(field));
  }

  for (int t = 0; t + 1 < n; t += 2) {
    const double sa = scale[static_cast<std::size_t>(t)];
    const double sb = scale[static_cast<std::size_t>(t + 1)];
    const double k = (sb - sa) / (1.0 + sa);
    VectorField g(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) g(x, y) = Vec2{k * (x - cx), k * (y - cy)};
    out.pair_displacement.push_back(std::move(g));
  }

  out.volume = Volume(std::move(frames), spec.bit_depth);
  return out;
}

// Analytic pair displacement at an arbitrary (possibly off-raster) position.
inline Vec2 phantom_pair_displacement(const PhantomSpec& spec, int pair, double x, double y) {
  const double cx = (spec.width - 1) / 2.0;
  const double cy = (spec.height - 1) / 2.0;
  const double r_max = std::hypot(cx, cy);
  const int n = spec.frame_count;
  auto s = [&](int t) {
    return spec.contraction_amplitude * std::sin(std::numbers::pi * t / n) / r_max;
  };
  const double k = (s(2 * pair + 1) - s(2 * pair)) / (1.0 + s(2 * pair));
  return {k * (x - cx), k * (y - cy)};
}

// Ground-truth sidecar: "MCGT" u16 width u16 height u16 pairs, then per pair
// width*height (dx, dy) little-endian float32 pairs.
inline void save_displacement_sidecar(const std::vector<VectorField>& fields,
                                      const std::filesystem::path& path) {
  require(!fields.empty(), "sidecar: no fields");
  std::vector<std::uint8_t> out{'M', 'C', 'G', 'T'};
  detail::put_u16(out, static_cast<std::uint16_t>(fields.front().width()));
  detail::put_u16(out, static_cast<std::uint16_t>(fields.front().height()));
  detail::put_u16(out, static_cast<std::uint16_t>(fields.size()));
  for (const auto& f : fields)
    for (const Vec2& v : f.samples())
      for (double c : {v.x, v.y}) {
        const float fl = static_cast<float>(c);
        std::uint32_t bits;
        std::memcpy(&bits, &fl, sizeof bits);
        for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
      }
  detail::write_file(path, out);
}

inline std::vector<VectorField> load_displacement_sidecar(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  if (bytes.size() < 10 || bytes[0] != 'M' || bytes[1] != 'C' || bytes[2] != 'G' ||
      bytes[3] != 'T')
    throw FormatError("sidecar: bad header");
  const int w = detail::get_u16(&bytes[4]);
  const int h = detail::get_u16(&bytes[6]);
  const int n = detail::get_u16(&bytes[8]);
  const std::size_t need =
      10 + static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(n) * 8;
  if (bytes.size() != need) throw FormatError("sidecar: length mismatch");
  std::vector<VectorField> fields;
  const std::uint8_t* p = bytes.data() + 10;
  auto next = [&p] {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(p[b]) << (8 * b);
    p += 4;
    float fl;
    std::memcpy(&fl, &bits, sizeof fl);
    return static_cast<double>(fl);
  };
  for (int i = 0; i < n; ++i) {
    VectorField f(w, h);
    for (auto& v : f.data()) {
      v.x = next();
      v.y = next();
    }
    fields.push_back(std::move(f));
  }
  return fields;
}

}  // namespace mcwl
