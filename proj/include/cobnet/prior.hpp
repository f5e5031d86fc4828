#pragma once

#include <span>

#include "cobnet/backbone.hpp"
#include "cobnet/mask.hpp"

namespace cobnet {

/// Training-free per-pixel object prior, 1×h×w with values in [0, 1].
struct AlignMask {
  Tensor values;
};

namespace prior {

/// Zeroes the feature vectors outside the mask (mask at feature resolution,
/// resized first otherwise).
FeatureMap masked_support_features(const FeatureMap& support, const Mask& mask);

/// Per query position, the maximum cosine similarity against every position
/// of the masked support features (zero vectors have cosine 0), followed by
/// min-max normalisation over the map. A constant raw map becomes 0.5.
AlignMask align_mask(const FeatureMap& query, const FeatureMap& masked_support);

/// As above with the maximum taken over the positions of every shot.
AlignMask align_mask(const FeatureMap& query, std::span<const FeatureMap> masked_supports);

/// Raw (unnormalised) max-cosine map.
Tensor max_cosine_map(const FeatureMap& query, std::span<const FeatureMap> masked_supports);

/// Min-max normalisation to [0, 1]; constant maps become 0.5.
Tensor normalize_min_max(const Tensor& map);

/// Bilinear resize of the align mask to k×k.
Tensor downsample_mask(const AlignMask& mask, std::size_t k);

}  // namespace prior
}  // namespace cobnet
