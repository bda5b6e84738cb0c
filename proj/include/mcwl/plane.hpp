#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcwl {

// Precondition violations on caller-supplied arguments.
struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed or truncated on-disk data.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem failures (missing file, unwritable path).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidArgument(what);
}

// Row-major 2-D sample plane.
template <typename T>
class Plane {
 public:
  using value_type = T;

  Plane() = default;
  Plane(int width, int height, T fill = T{})
      : width_(width), height_(height),
        samples_(checked_size(width, height), fill) {}
  Plane(int width, int height, std::vector<T> samples)
      : width_(width), height_(height), samples_(std::move(samples)) {
    require(samples_.size() == checked_size(width, height),
            "plane: sample count does not match width*height");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }

  T& operator()(int x, int y) { return samples_[index(x, y)]; }
  const T& operator()(int x, int y) const { return samples_[index(x, y)]; }
  T& operator[](std::size_t i) { return samples_[i]; }
  const T& operator[](std::size_t i) const { return samples_[i]; }

  // Edge-clamped access.
  const T& at_clamped(int x, int y) const {
    return (*this)(std::clamp(x, 0, width_ - 1), std::clamp(y, 0, height_ - 1));
  }

  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  std::span<T> samples() { return samples_; }
  std::span<const T> samples() const { return samples_; }
  std::vector<T>& data() { return samples_; }
  const std::vector<T>& data() const { return samples_; }

  bool same_shape(int w, int h) const { return width_ == w && height_ == h; }
  template <typename U>
  bool same_shape(const Plane<U>& o) const {
    return same_shape(o.width(), o.height());
  }

  friend bool operator==(const Plane& a, const Plane& b) = default;

 private:
  static std::size_t checked_size(int w, int h) {
    require(w >= 0 && h >= 0, "plane: negative dimension");
    return static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> samples_;
};

// Integer samples: input frames (12-bit by default) and lifting coefficients.
using Frame = Plane<std::int32_t>;
// Real-valued output of prediction/update operators, floored by the lifting step.
using RealPlane = Plane<double>;

// Floor with a small upward slack so that weighted sums which equal an
// integer up to summation rounding (e.g. a row-stochastic average of a
// constant) floor to that integer. Forward and inverse lifting use the same
// function, so losslessness is unaffected.
inline constexpr double kFloorSlack = 1e-7;

inline std::int32_t floor_to_int(double v) {
  return static_cast<std::int32_t>(std::floor(v + kFloorSlack));
}

template <typename T>
void require_same_shape(const Plane<T>& a, int w, int h, const char* who) {
  if (!a.same_shape(w, h))
    throw InvalidArgument(std::string(who) + ": dimension mismatch");
}

// Bilinear sample with clamp-to-border edge handling.
template <typename T>
double sample_bilinear(const Plane<T>& p, double x, double y) {
  const double cx = std::clamp(x, 0.0, static_cast<double>(p.width() - 1));
  const double cy = std::clamp(y, 0.0, static_cast<double>(p.height() - 1));
  const int x0 = static_cast<int>(std::floor(cx));
  const int y0 = static_cast<int>(std::floor(cy));
  const int x1 = std::min(x0 + 1, p.width() - 1);
  const int y1 = std::min(y0 + 1, p.height() - 1);
  const double fx = cx - x0;
  const double fy = cy - y0;
  if (fx == 0.0 && fy == 0.0) return static_cast<double>(p(x0, y0));
  // std::lerp is exact at the endpoints and bounded by them, so constant
  // neighbourhoods interpolate to the exact constant.
  const double top = std::lerp(static_cast<double>(p(x0, y0)),
                               static_cast<double>(p(x1, y0)), fx);
  const double bot = std::lerp(static_cast<double>(p(x0, y1)),
                               static_cast<double>(p(x1, y1)), fx);
  return std::lerp(top, bot, fy);
}

}  // namespace mcwl
