#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cobnet/layers.hpp"
#include "cobnet/tensor.hpp"

namespace cobnet {

/// c×h×w activation block produced by the frozen backbone.
using FeatureMap = Tensor;

struct BackboneConfig {
  std::size_t channels = 64;
  std::size_t downsample = 4;  // power of two, at most 2^layers
  std::uint64_t seed = 1234;
  std::size_t layers = 3;
};

/// Frozen, seeded stand-in feature extractor:
/// `layers` blocks of 3×3 conv → max(x, 0), with a 2× mean-pool closing each
/// of the first log2(downsample) blocks. Widths double toward `channels`.
class Backbone {
 public:
  explicit Backbone(BackboneConfig config);

  const BackboneConfig& config() const { return config_; }
  const std::vector<ConvLayer>& blocks() const { return blocks_; }
  std::size_t pool_count() const { return pool_count_; }

  FeatureMap extract(const Tensor& image) const;

 private:
  BackboneConfig config_;
  std::vector<ConvLayer> blocks_;
  std::size_t pool_count_ = 0;
};

FeatureMap extract_features(const Tensor& image, const Backbone& backbone);

/// Loads a rank-3 CBT1 file as a FeatureMap.
FeatureMap load_features(const std::filesystem::path& path);

}  // namespace cobnet
