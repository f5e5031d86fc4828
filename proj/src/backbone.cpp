#include "cobnet/backbone.hpp"

#include <cmath>

#include "cobnet/error.hpp"
#include "cobnet/ops.hpp"
#include "cobnet/tensor_io.hpp"

namespace cobnet {

namespace {
constexpr double kBiasStd = 0.1;
}

Backbone::Backbone(BackboneConfig config) : config_(config) {
  if (config_.layers == 0 || config_.channels == 0) throw ConfigError("backbone needs at least one layer and channel");
  std::size_t d = config_.downsample;
  if (d == 0 || (d & (d - 1)) != 0) throw ConfigError("backbone downsample factor must be a power of two");
  while (d > 1) {
    d >>= 1;
    ++pool_count_;
  }
  if (pool_count_ > config_.layers) throw ConfigError("backbone downsample exceeds 2^layers");

  Rng rng(mix_seed(config_.seed, 0xBAC0B0E));
  std::size_t in = 3;
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::size_t shift = config_.layers - 1 - l;
    const std::size_t out = std::max<std::size_t>(config_.channels >> shift, 1);
    ConvLayer layer = ConvLayer::init(out, in, 3, rng, false);
    layer.bias = normal_tensor({out}, kBiasStd, rng, false);
    blocks_.push_back(std::move(layer));
    in = out;
  }
}

FeatureMap Backbone::extract(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("backbone expects a 3×H×W image, got " + shape_string(image.shape()));
  }
  const std::size_t h = image.dim(1), w = image.dim(2);
  if (h % config_.downsample != 0 || w % config_.downsample != 0) {
    throw DimensionError("image side " + std::to_string(h) + "×" + std::to_string(w) +
                         " not divisible by downsample factor " + std::to_string(config_.downsample));
  }
  Graph::NoGrad no_grad;
  Tensor x = image;
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    x = relu(blocks_[l](x));
    if (l < pool_count_) x = adaptive_avg_pool(x, x.dim(1) / 2, x.dim(2) / 2);
  }
  return x;
}

FeatureMap extract_features(const Tensor& image, const Backbone& backbone) { return backbone.extract(image); }

FeatureMap load_features(const std::filesystem::path& path) {
  Tensor t = load_tensor(path);
  if (t.rank() != 3) throw FormatError(path.string() + ": feature file must have rank 3, got " + std::to_string(t.rank()));
  return t;
}

}  // namespace cobnet
