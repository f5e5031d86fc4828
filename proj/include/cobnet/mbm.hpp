#pragma once

#include <span>
#include <vector>

#include "cobnet/layers.hpp"
#include "cobnet/prior.hpp"
#include "cobnet/proto.hpp"

namespace cobnet {

struct ScalePyramid {
  std::vector<std::size_t> sizes;
  std::vector<Tensor> levels;  // c×k_i×k_i
};

/// Intermediate prediction head: 3×3 conv → relu → 3×3 conv → relu → 1×1 conv to 2 logits.
struct HeadParams {
  ConvLayer conv1;
  ConvLayer conv2;
  ConvLayer out;

  static HeadParams init(std::size_t channels, Rng& rng);
};

/// Parameters of one pyramid scale; fuse_minus is undefined when the
/// background branch is ablated.
struct ScaleParams {
  ConvLayer fuse_plus;   // (2c+1) → c, 1×1
  ConvLayer fuse_minus;  // (2c+1) → c, 1×1
  HeadParams head;
};

namespace mbm {

/// One adaptive average pool per size; sizes must be non-increasing.
ScalePyramid build_pyramid(const FeatureMap& query, std::span<const std::size_t> sizes);

Tensor expand_object(const ObjectPrototype& prototype, std::size_t k);

/// Nearest-neighbour tiling: output (y, x) takes cell (⌊y·j/k⌋, ⌊x·j/k⌋).
Tensor expand_background(const BackgroundGrid& grid, std::size_t k);

/// conv1×1(concat[object, pyramid level, mask]).
Tensor fuse_plus(const Tensor& level, const Tensor& object, const Tensor& mask_k, const ConvLayer& conv);

/// conv1×1(concat[pyramid level, background, 1 − mask]).
Tensor fuse_minus(const Tensor& level, const Tensor& background, const Tensor& mask_k, const ConvLayer& conv);

/// Σ_i bilinear_resize(level_i, h, w).
Tensor aggregate(std::span<const Tensor> levels, std::size_t h, std::size_t w);

Tensor intermediate_prediction(const Tensor& fused, const HeadParams& head);

}  // namespace mbm
}  // namespace cobnet
