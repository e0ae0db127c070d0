#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "salattack/errors.hpp"

namespace salattack {

/// H x W x C intensities in [0,1], stored row-major with channels interleaved
/// (index = (row * width + col) * channels + ch).
class Image {
 public:
  Image() = default;

  Image(int height, int width, int channels, float fill = 0.0f)
      : height_(height), width_(width), channels_(channels) {
    check_shape();
    if (!(fill >= 0.0f && fill <= 1.0f)) throw InvalidInput("Image: fill value outside [0,1]");
    data_.assign(size(), fill);
  }

  Image(int height, int width, int channels, std::vector<float> data)
      : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
    check_shape();
    if (data_.size() != size()) throw InvalidInput("Image: data size does not match shape");
    for (float v : data_) {
      if (!(v >= 0.0f && v <= 1.0f)) throw InvalidInput("Image: intensity outside [0,1]");
    }
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t locations() const { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const { return locations() * channels_; }
  bool empty() const { return data_.empty(); }

  bool same_geometry(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  float operator()(int row, int col, int ch) const { return data_[index(row, col, ch)]; }
  float& operator()(int row, int col, int ch) { return data_[index(row, col, ch)]; }

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int row, int col, int ch) const {
    return (static_cast<std::size_t>(row) * width_ + col) * channels_ + ch;
  }

  void check_shape() const {
    if (height_ < 1 || width_ < 1) throw InvalidInput("Image: height and width must be >= 1");
    if (channels_ != 1 && channels_ != 3) throw InvalidInput("Image: channels must be 1 or 3");
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

struct Location {
  int row = 0;
  int col = 0;
  friend bool operator==(const Location&, const Location&) = default;
  friend auto operator<=>(const Location&, const Location&) = default;
};

/// Binary H x W grid of perturbable locations (the salient region).
class SalientMask {
 public:
  SalientMask() = default;

  SalientMask(int height, int width, bool value = false)
      : height_(height), width_(width), bits_(static_cast<std::size_t>(height) * width, value ? 1 : 0) {
    if (height < 1 || width < 1) throw InvalidInput("SalientMask: empty geometry");
  }

  SalientMask(int height, int width, std::vector<std::uint8_t> bits)
      : height_(height), width_(width), bits_(std::move(bits)) {
    if (height < 1 || width < 1) throw InvalidInput("SalientMask: empty geometry");
    if (bits_.size() != static_cast<std::size_t>(height) * width)
      throw InvalidInput("SalientMask: bit count does not match geometry");
    for (auto& b : bits_) b = b ? 1 : 0;
  }

  static SalientMask all_ones(int height, int width) { return SalientMask(height, width, true); }

  int height() const { return height_; }
  int width() const { return width_; }
  bool test(int row, int col) const { return bits_[static_cast<std::size_t>(row) * width_ + col] != 0; }
  void set(int row, int col, bool value) { bits_[static_cast<std::size_t>(row) * width_ + col] = value ? 1 : 0; }
  std::span<const std::uint8_t> bits() const { return bits_; }

  std::size_t count() const { return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1)); }

  // Threshold the mask was binarized with, when it came from a saliency map.
  float phi = -1.0f;

  friend bool operator==(const SalientMask& a, const SalientMask& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ && a.bits_ == b.bits_;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Square region of the block tree. `level` is the split depth (1 = initial blocks).
struct Block {
  int row0 = 0;
  int col0 = 0;
  int side = 1;
  int level = 1;
  friend bool operator==(const Block&, const Block&) = default;
};

inline bool is_power_of_two(int v) { return v >= 1 && (v & (v - 1)) == 0; }

/// Per-location sign grid in {-1, 0, +1} with magnitude epsilon. Signs may only
/// be non-zero where the mask supplied at construction is set.
class PerturbationState {
 public:
  PerturbationState() = default;

  PerturbationState(SalientMask mask, float epsilon)
      : mask_(std::make_shared<const SalientMask>(std::move(mask))), epsilon_(epsilon) {
    if (!(epsilon > 0.0f)) throw InvalidInput("PerturbationState: epsilon must be > 0");
    signs_.assign(static_cast<std::size_t>(mask_->height()) * mask_->width(), 0);
  }

  int height() const { return mask_->height(); }
  int width() const { return mask_->width(); }
  float epsilon() const { return epsilon_; }
  const SalientMask& mask() const { return *mask_; }

  int sign(int row, int col) const { return signs_[offset(row, col)]; }

  void set_sign(int row, int col, int sign) {
    if (sign < -1 || sign > 1) throw InvalidInput("PerturbationState: sign must be -1, 0 or +1");
    if (sign != 0 && !mask_->test(row, col))
      throw InvalidInput("PerturbationState: location outside the salient mask");
    signs_[offset(row, col)] = static_cast<std::int8_t>(sign);
  }

  std::span<const std::int8_t> signs() const { return signs_; }

  std::size_t support_size() const {
    return static_cast<std::size_t>(std::count_if(signs_.begin(), signs_.end(), [](std::int8_t s) { return s != 0; }));
  }

  void clear() { std::fill(signs_.begin(), signs_.end(), std::int8_t{0}); }

  friend bool operator==(const PerturbationState& a, const PerturbationState& b) {
    return a.epsilon_ == b.epsilon_ && a.signs_ == b.signs_;
  }

 private:
  std::size_t offset(int row, int col) const { return static_cast<std::size_t>(row) * mask_->width() + col; }

  std::shared_ptr<const SalientMask> mask_ = std::make_shared<const SalientMask>();
  float epsilon_ = 0.0f;
  std::vector<std::int8_t> signs_;
};

/// x + sign * epsilon at every channel of every location, clipped to [0,1].
inline Image apply_perturbation(const Image& x, const PerturbationState& state) {
  if (state.height() != x.height() || state.width() != x.width())
    throw InvalidInput("apply_perturbation: state grid does not match image geometry");
  Image out = x;
  const auto signs = state.signs();
  const float eps = state.epsilon();
  auto data = out.data();
  const int channels = x.channels();
  for (std::size_t loc = 0; loc < signs.size(); ++loc) {
    if (signs[loc] == 0) continue;
    const float delta = signs[loc] > 0 ? eps : -eps;
    for (int ch = 0; ch < channels; ++ch) {
      float& v = data[loc * channels + ch];
      v = std::clamp(v + delta, 0.0f, 1.0f);
    }
  }
  return out;
}

/// Tiles `b` with (b.side / k)^2 children of side k, row-major, at level b.level + 1.
inline std::vector<Block> split_block(const Block& b, int k) {
  if (k < 1 || k > b.side || b.side % k != 0)
    throw InvalidInput("split_block: k must divide the block side (k=" + std::to_string(k) +
                       ", side=" + std::to_string(b.side) + ")");
  const int per_side = b.side / k;
  std::vector<Block> children;
  children.reserve(static_cast<std::size_t>(per_side) * per_side);
  for (int i = 0; i < per_side; ++i) {
    for (int j = 0; j < per_side; ++j) {
      children.push_back(Block{b.row0 + i * k, b.col0 + j * k, k, b.level + 1});
    }
  }
  return children;
}

/// Locations of `b` whose mask bit is set, row-major.
inline std::vector<Location> block_locations(const Block& b, const SalientMask& mask) {
  if (b.row0 < 0 || b.col0 < 0 || b.row0 + b.side > mask.height() || b.col0 + b.side > mask.width())
    throw InvalidInput("block_locations: block outside mask bounds");
  std::vector<Location> out;
  for (int r = b.row0; r < b.row0 + b.side; ++r) {
    for (int c = b.col0; c < b.col0 + b.side; ++c) {
      if (mask.test(r, c)) out.push_back({r, c});
    }
  }
  return out;
}

namespace detail {

// Half-pixel-centre source coordinate, clamped to the valid range.
struct Tap {
  int lo = 0;
  int hi = 0;
  float frac = 0.0f;
};

inline std::vector<Tap> bilinear_taps(int src, int dst) {
  std::vector<Tap> taps(static_cast<std::size_t>(dst));
  const double scale = static_cast<double>(src) / dst;
  for (int i = 0; i < dst; ++i) {
    double s = (i + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src - 1));
    const int lo = static_cast<int>(std::floor(s));
    const int hi = std::min(lo + 1, src - 1);
    taps[i] = Tap{lo, hi, static_cast<float>(s - lo)};
  }
  return taps;
}

}  // namespace detail

/// Bilinear resampling of an H x W plane (any channel count) to dst_h x dst_w.
inline std::vector<float> resize_plane(std::span<const float> src, int src_h, int src_w, int channels, int dst_h,
                                       int dst_w) {
  const auto rows = detail::bilinear_taps(src_h, dst_h);
  const auto cols = detail::bilinear_taps(src_w, dst_w);
  std::vector<float> out(static_cast<std::size_t>(dst_h) * dst_w * channels);
  auto at = [&](int r, int c, int ch) { return src[(static_cast<std::size_t>(r) * src_w + c) * channels + ch]; };
  for (int r = 0; r < dst_h; ++r) {
    const auto& tr = rows[r];
    for (int c = 0; c < dst_w; ++c) {
      const auto& tc = cols[c];
      for (int ch = 0; ch < channels; ++ch) {
        const float top = at(tr.lo, tc.lo, ch) * (1 - tc.frac) + at(tr.lo, tc.hi, ch) * tc.frac;
        const float bot = at(tr.hi, tc.lo, ch) * (1 - tc.frac) + at(tr.hi, tc.hi, ch) * tc.frac;
        out[(static_cast<std::size_t>(r) * dst_w + c) * channels + ch] = top * (1 - tr.frac) + bot * tr.frac;
      }
    }
  }
  return out;
}

inline Image resize_bilinear(const Image& x, int height, int width) {
  if (height < 1 || width < 1) throw InvalidInput("resize_bilinear: target side must be >= 1");
  auto data = resize_plane(x.data(), x.height(), x.width(), x.channels(), height, width);
  for (float& v : data) v = std::clamp(v, 0.0f, 1.0f);
  return Image(height, width, x.channels(), std::move(data));
}

inline Image resize_bilinear(const Image& x, int side) { return resize_bilinear(x, side, side); }

/// Luma plane 0.299 R + 0.587 G + 0.114 B (identity for single-channel images).
inline std::vector<float> luma(const Image& x) {
  std::vector<float> out(x.locations());
  const auto d = x.data();
  if (x.channels() == 1) {
    std::copy(d.begin(), d.end(), out.begin());
    return out;
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 0.299f * d[3 * i] + 0.587f * d[3 * i + 1] + 0.114f * d[3 * i + 2];
  }
  return out;
}

}  // namespace salattack
