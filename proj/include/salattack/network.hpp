#pragma once

// Embedded classifier: a small feed-forward network loaded from the "SRW1"
// portable weight container and evaluated with float32 accumulation.
//
// SRW1 layout (all integers u32, all reals float32, little-endian):
//   "SRW1" version(=1) input_height input_width input_channels num_classes layer_count
//   then layer_count records, each starting with a kind tag:
//     1 conv    in_ch out_ch kernel padding  weights[out][in][k][k]  bias[out]
//     2 dense   in out                        weights[out][in]        bias[out]
//     3 relu
//     4 maxpool size      (stride = size, floor mode)
//     5 avgpool size      (stride = size, floor mode)
//     6 flatten           (channel-major, i.e. (c, row, col) order)
// The network input is the image in (channel, row, col) order.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "salattack/errors.hpp"
#include "salattack/image.hpp"
#include "salattack/model.hpp"
#include "salattack/raster_io.hpp"

namespace salattack {

namespace layers {

struct Conv2D {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  int padding = 0;
  std::vector<float> weights;  // [out][in][k][k]
  std::vector<float> bias;     // [out]
};

struct Dense {
  int in = 0;
  int out = 0;
  std::vector<float> weights;  // [out][in]
  std::vector<float> bias;     // [out]
};

struct ReLU {};
struct MaxPool {
  int size = 2;
};
struct AvgPool {
  int size = 2;
};
struct Flatten {};

}  // namespace layers

using Layer = std::variant<layers::Conv2D, layers::Dense, layers::ReLU, layers::MaxPool, layers::AvgPool, layers::Flatten>;

struct PortableWeights {
  static constexpr std::uint32_t kVersion = 1;

  InputSpec input;
  int num_classes = 0;
  std::vector<Layer> layers;
};

namespace detail {

enum LayerTag : std::uint32_t { kConv = 1, kDense = 2, kRelu = 3, kMaxPool = 4, kAvgPool = 5, kFlatten = 6 };

struct Shape {
  int c = 0, h = 0, w = 0;  // h == w == 0 marks a flat vector of length c
  bool flat() const { return h == 0; }
  std::size_t size() const { return flat() ? c : static_cast<std::size_t>(c) * h * w; }
};

struct Tensor {
  Shape shape;
  std::vector<float> data;
};

// Propagates shapes through the layer chain; throws FormatError on the first
// incompatibility.
inline Shape check_chain(const PortableWeights& net) {
  const auto& in = net.input;
  if (in.height < 1 || in.width < 1 || (in.channels != 1 && in.channels != 3))
    throw FormatError("weights: invalid input geometry");
  Shape s{in.channels, in.height, in.width};
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const std::string where = "weights: layer " + std::to_string(i) + ": ";
    std::visit(
        [&](const auto& layer) {
          using L = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<L, layers::Conv2D>) {
            if (s.flat()) throw FormatError(where + "conv after flatten");
            if (layer.in_channels != s.c) throw FormatError(where + "conv input channels mismatch");
            if (layer.kernel < 1 || layer.padding < 0 || layer.out_channels < 1)
              throw FormatError(where + "bad conv geometry");
            if (layer.weights.size() != static_cast<std::size_t>(layer.out_channels) * layer.in_channels *
                                            layer.kernel * layer.kernel ||
                layer.bias.size() != static_cast<std::size_t>(layer.out_channels))
              throw FormatError(where + "conv parameter count mismatch");
            s = Shape{layer.out_channels, s.h + 2 * layer.padding - layer.kernel + 1,
                      s.w + 2 * layer.padding - layer.kernel + 1};
            if (s.h < 1 || s.w < 1) throw FormatError(where + "conv output is empty");
          } else if constexpr (std::is_same_v<L, layers::Dense>) {
            if (static_cast<std::size_t>(layer.in) != s.size()) throw FormatError(where + "dense input width mismatch");
            if (layer.out < 1 || layer.weights.size() != static_cast<std::size_t>(layer.out) * layer.in ||
                layer.bias.size() != static_cast<std::size_t>(layer.out))
              throw FormatError(where + "dense parameter count mismatch");
            s = Shape{layer.out, 0, 0};
          } else if constexpr (std::is_same_v<L, layers::MaxPool> || std::is_same_v<L, layers::AvgPool>) {
            if (s.flat()) throw FormatError(where + "pooling after flatten");
            if (layer.size < 1 || layer.size > s.h || layer.size > s.w) throw FormatError(where + "bad pool size");
            s = Shape{s.c, s.h / layer.size, s.w / layer.size};
          } else if constexpr (std::is_same_v<L, layers::Flatten>) {
            s = Shape{static_cast<int>(s.size()), 0, 0};
          }
        },
        net.layers[i]);
  }
  if (!s.flat() && s.h * s.w != 1) throw FormatError("weights: network output is not a vector");
  if (static_cast<int>(s.size()) != net.num_classes)
    throw FormatError("weights: final layer width " + std::to_string(s.size()) + " != class count " +
                      std::to_string(net.num_classes));
  return s;
}

inline void conv2d(const layers::Conv2D& L, const Tensor& in, Tensor& out) {
  const int H = in.shape.h, W = in.shape.w, k = L.kernel, p = L.padding;
  const int OH = H + 2 * p - k + 1, OW = W + 2 * p - k + 1;
  out.shape = Shape{L.out_channels, OH, OW};
  out.data.assign(static_cast<std::size_t>(L.out_channels) * OH * OW, 0.0f);
  for (int o = 0; o < L.out_channels; ++o) {
    float* dst = out.data.data() + static_cast<std::size_t>(o) * OH * OW;
    std::fill(dst, dst + static_cast<std::size_t>(OH) * OW, L.bias[o]);
    for (int i = 0; i < L.in_channels; ++i) {
      const float* src = in.data.data() + static_cast<std::size_t>(i) * H * W;
      const float* wk = L.weights.data() + (static_cast<std::size_t>(o) * L.in_channels + i) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const float wv = wk[ky * k + kx];
          const int col_lo = std::max(0, p - kx), col_hi = std::min(OW, W + p - kx);
          for (int oy = 0; oy < OH; ++oy) {
            const int iy = oy + ky - p;
            if (iy < 0 || iy >= H) continue;
            const float* srow = src + static_cast<std::size_t>(iy) * W + (kx - p);
            float* drow = dst + static_cast<std::size_t>(oy) * OW;
            for (int ox = col_lo; ox < col_hi; ++ox) drow[ox] += wv * srow[ox];
          }
        }
      }
    }
  }
}

template <bool Max>
void pool2d(int size, const Tensor& in, Tensor& out) {
  const int H = in.shape.h, W = in.shape.w, OH = H / size, OW = W / size;
  out.shape = Shape{in.shape.c, OH, OW};
  out.data.assign(static_cast<std::size_t>(in.shape.c) * OH * OW, 0.0f);
  const float inv = 1.0f / static_cast<float>(size * size);
  for (int c = 0; c < in.shape.c; ++c) {
    const float* src = in.data.data() + static_cast<std::size_t>(c) * H * W;
    float* dst = out.data.data() + static_cast<std::size_t>(c) * OH * OW;
    for (int oy = 0; oy < OH; ++oy) {
      for (int ox = 0; ox < OW; ++ox) {
        float acc = Max ? src[static_cast<std::size_t>(oy * size) * W + ox * size] : 0.0f;
        for (int dy = 0; dy < size; ++dy) {
          const float* row = src + static_cast<std::size_t>(oy * size + dy) * W + ox * size;
          for (int dx = 0; dx < size; ++dx) {
            if constexpr (Max) {
              acc = std::max(acc, row[dx]);
            } else {
              acc += row[dx];
            }
          }
        }
        dst[oy * OW + ox] = Max ? acc : acc * inv;
      }
    }
  }
}

inline void dense(const layers::Dense& L, const Tensor& in, Tensor& out) {
  out.shape = Shape{L.out, 0, 0};
  out.data.resize(static_cast<std::size_t>(L.out));
  for (int o = 0; o < L.out; ++o) {
    const float* w = L.weights.data() + static_cast<std::size_t>(o) * L.in;
    float acc = L.bias[o];
    for (int i = 0; i < L.in; ++i) acc += w[i] * in.data[i];
    out.data[o] = acc;
  }
}

inline std::vector<float> read_floats(std::istream& is, std::size_t n, const std::string& what) {
  if (n > (std::size_t{1} << 28)) throw FormatError(what + ": implausible parameter count");
  std::vector<float> v(n);
  for (float& f : v) f = get_f32(is, what);
  return v;
}

inline int read_dim(std::istream& is, const std::string& what) {
  const auto v = get_u32(is, what);
  if (v > (1u << 20)) throw FormatError(what + ": implausible dimension " + std::to_string(v));
  return static_cast<int>(v);
}

}  // namespace detail

/// Forward pass. Throws InvalidInput when the image does not match the input spec.
inline Logits infer(const PortableWeights& net, const Image& x) {
  if (x.height() != net.input.height || x.width() != net.input.width || x.channels() != net.input.channels)
    throw InvalidInput("infer: image geometry does not match network input");
  detail::Tensor a{{x.channels(), x.height(), x.width()}, std::vector<float>(x.size())};
  const auto d = x.data();
  const std::size_t plane = x.locations();
  for (std::size_t loc = 0; loc < plane; ++loc) {
    for (int c = 0; c < x.channels(); ++c) a.data[c * plane + loc] = d[loc * x.channels() + c];
  }
  detail::Tensor b;
  for (const auto& layer : net.layers) {
    std::visit(
        [&](const auto& L) {
          using T = std::decay_t<decltype(L)>;
          if constexpr (std::is_same_v<T, layers::Conv2D>) {
            detail::conv2d(L, a, b);
            std::swap(a, b);
          } else if constexpr (std::is_same_v<T, layers::Dense>) {
            detail::dense(L, a, b);
            std::swap(a, b);
          } else if constexpr (std::is_same_v<T, layers::ReLU>) {
            for (float& v : a.data) v = std::max(v, 0.0f);
          } else if constexpr (std::is_same_v<T, layers::MaxPool>) {
            detail::pool2d<true>(L.size, a, b);
            std::swap(a, b);
          } else if constexpr (std::is_same_v<T, layers::AvgPool>) {
            detail::pool2d<false>(L.size, a, b);
            std::swap(a, b);
          } else {
            a.shape = detail::Shape{static_cast<int>(a.shape.size()), 0, 0};
          }
        },
        layer);
  }
  return Logits(std::move(a.data));
}

inline PortableWeights load_weights(const std::filesystem::path& path) {
  using namespace detail;
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open weights '" + path.string() + "'");
  const std::string what = "SRW1 '" + path.string() + "'";
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "SRW1", 4) != 0) throw FormatError(what + ": bad magic");
  const auto version = get_u32(is, what);
  if (version != PortableWeights::kVersion)
    throw FormatError(what + ": unsupported container version " + std::to_string(version));
  PortableWeights net;
  net.input.height = read_dim(is, what);
  net.input.width = read_dim(is, what);
  net.input.channels = read_dim(is, what);
  net.num_classes = read_dim(is, what);
  const int count = read_dim(is, what);
  for (int i = 0; i < count; ++i) {
    switch (get_u32(is, what)) {
      case kConv: {
        layers::Conv2D L;
        L.in_channels = read_dim(is, what);
        L.out_channels = read_dim(is, what);
        L.kernel = read_dim(is, what);
        L.padding = read_dim(is, what);
        L.weights = read_floats(is, static_cast<std::size_t>(L.out_channels) * L.in_channels * L.kernel * L.kernel, what);
        L.bias = read_floats(is, L.out_channels, what);
        net.layers.emplace_back(std::move(L));
        break;
      }
      case kDense: {
        layers::Dense L;
        L.in = read_dim(is, what);
        L.out = read_dim(is, what);
        L.weights = read_floats(is, static_cast<std::size_t>(L.out) * L.in, what);
        L.bias = read_floats(is, L.out, what);
        net.layers.emplace_back(std::move(L));
        break;
      }
      case kRelu: net.layers.emplace_back(layers::ReLU{}); break;
      case kMaxPool: net.layers.emplace_back(layers::MaxPool{read_dim(is, what)}); break;
      case kAvgPool: net.layers.emplace_back(layers::AvgPool{read_dim(is, what)}); break;
      case kFlatten: net.layers.emplace_back(layers::Flatten{}); break;
      default: throw FormatError(what + ": unknown layer kind in record " + std::to_string(i));
    }
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError(what + ": trailing bytes");
  check_chain(net);
  return net;
}

inline void save_weights(const PortableWeights& net, const std::filesystem::path& path) {
  using namespace detail;
  check_chain(net);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open '" + path.string() + "' for writing");
  os.write("SRW1", 4);
  for (auto v : {PortableWeights::kVersion, static_cast<std::uint32_t>(net.input.height),
                 static_cast<std::uint32_t>(net.input.width), static_cast<std::uint32_t>(net.input.channels),
                 static_cast<std::uint32_t>(net.num_classes), static_cast<std::uint32_t>(net.layers.size())})
    put_u32(os, v);
  auto floats = [&](const std::vector<float>& v) {
    for (float f : v) put_f32(os, f);
  };
  for (const auto& layer : net.layers) {
    std::visit(
        [&](const auto& L) {
          using T = std::decay_t<decltype(L)>;
          if constexpr (std::is_same_v<T, layers::Conv2D>) {
            for (auto v : {+kConv, static_cast<std::uint32_t>(L.in_channels), static_cast<std::uint32_t>(L.out_channels),
                           static_cast<std::uint32_t>(L.kernel), static_cast<std::uint32_t>(L.padding)})
              put_u32(os, v);
            floats(L.weights);
            floats(L.bias);
          } else if constexpr (std::is_same_v<T, layers::Dense>) {
            for (auto v : {+kDense, static_cast<std::uint32_t>(L.in), static_cast<std::uint32_t>(L.out)}) put_u32(os, v);
            floats(L.weights);
            floats(L.bias);
          } else if constexpr (std::is_same_v<T, layers::ReLU>) {
            put_u32(os, kRelu);
          } else if constexpr (std::is_same_v<T, layers::MaxPool>) {
            put_u32(os, kMaxPool);
            put_u32(os, static_cast<std::uint32_t>(L.size));
          } else if constexpr (std::is_same_v<T, layers::AvgPool>) {
            put_u32(os, kAvgPool);
            put_u32(os, static_cast<std::uint32_t>(L.size));
          } else {
            put_u32(os, kFlatten);
          }
        },
        layer);
  }
  if (!os) throw FormatError("write failed for '" + path.string() + "'");
}

/// Single dense layer over the flattened (channel, row, col) input:
/// logits_k = sum_i weights[k][i] * x_i + bias[k].
inline PortableWeights linear_weights(InputSpec input, std::vector<float> weights, std::vector<float> bias) {
  PortableWeights net;
  net.input = input;
  net.num_classes = static_cast<int>(bias.size());
  layers::Dense L;
  L.in = input.height * input.width * input.channels;
  L.out = net.num_classes;
  L.weights = std::move(weights);
  L.bias = std::move(bias);
  net.layers.emplace_back(std::move(L));
  try {
    detail::check_chain(net);
  } catch (const FormatError& e) {
    throw InvalidInput(e.what());
  }
  return net;
}

class EmbeddedBackend final : public ClassifierBackend {
 public:
  explicit EmbeddedBackend(PortableWeights weights)
      : weights_(std::make_shared<const PortableWeights>(std::move(weights))) {
    detail::check_chain(*weights_);
  }

  static EmbeddedBackend from_file(const std::filesystem::path& path) { return EmbeddedBackend(load_weights(path)); }

  InputSpec input_spec() const override { return weights_->input; }
  int num_classes() const override { return weights_->num_classes; }
  Logits evaluate(const Image& x) const override { return infer(*weights_, x); }
  const PortableWeights& weights() const { return *weights_; }

 private:
  std::shared_ptr<const PortableWeights> weights_;
};

}  // namespace salattack
