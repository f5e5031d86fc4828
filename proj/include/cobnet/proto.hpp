#pragma once

#include <span>

#include "cobnet/backbone.hpp"
#include "cobnet/mask.hpp"

namespace cobnet {

/// c×1×1 object prototype.
struct ObjectPrototype {
  Tensor values;
};

/// c×j×j background prototype grid.
struct BackgroundGrid {
  Tensor values;
  std::size_t grid = 0;
};

/// One support exemplar at feature resolution.
struct SupportShot {
  FeatureMap features;
  Mask mask;  // resized to the feature map's h×w
};

namespace proto {

/// Bilinear resize of a binary mask followed by a ≥ 0.5 threshold.
Mask resize_mask(const Mask& mask, std::size_t height, std::size_t width);

/// Mean feature vector over the foreground of `mask`. Masks at a different
/// resolution than the features are resized first. Throws EmptyMaskError
/// when no foreground pixel survives.
ObjectPrototype masked_average_pool(const FeatureMap& support, const Mask& mask);

/// Mean of per-shot masked-average prototypes.
ObjectPrototype kshot_prototype(std::span<const SupportShot> shots);

/// Adaptive average pool of the query features into a j×j grid.
/// `smallest_scale` is the smallest pyramid size; j must not exceed it.
BackgroundGrid background_grid(const FeatureMap& query, std::size_t grid, std::size_t smallest_scale);

/// Global average of the support features (no annotation).
ObjectPrototype weak_object_prototype(const FeatureMap& support);

/// Mean over shots of weak_object_prototype.
ObjectPrototype weak_kshot_prototype(std::span<const SupportShot> shots);

/// Background grid taken from the support set instead of the query: each cell
/// averages the support features under the mask complement within the
/// adaptive bin; cells without background pixels use the global complement
/// mean (or the global feature mean if the complement is empty). Shots are
/// averaged.
BackgroundGrid support_background_grid(std::span<const SupportShot> shots, std::size_t grid,
                                       std::size_t smallest_scale);

}  // namespace proto
}  // namespace cobnet
