#pragma once

#include <span>
#include <utility>

#include "cobnet/layers.hpp"
#include "cobnet/mask.hpp"

namespace cobnet {

/// Two 1×1 convolutions (2c → c, c → 1) producing the attention logits.
struct AttentionParams {
  ConvLayer conv1;
  ConvLayer conv2;

  static AttentionParams init(std::size_t channels, Rng& rng);
};

/// Three 3×3 convolutions (2c → c → c → c), each followed by max(x, 0), then a 1×1 conv to 2 logits.
struct ClassifierParams {
  ConvLayer conv1;
  ConvLayer conv2;
  ConvLayer conv3;
  ConvLayer out;

  static ClassifierParams init(std::size_t channels, Rng& rng);
};

namespace cam {

/// sigmoid(conv(relu(conv(concat[object, background])))), a 1×h×w map in (0, 1).
Tensor attention(const Tensor& object, const Tensor& background, const AttentionParams& params);

/// (object ⊙ A, background ⊙ (1 − A)) with A broadcast over channels.
std::pair<Tensor, Tensor> apply_attention(const Tensor& object, const Tensor& background, const Tensor& attention);

/// 2×h×w logits from concat[object, background].
Tensor classify(const Tensor& object, const Tensor& background, const ClassifierParams& params);

/// (1/N)·Σ CE(intermediate_i) + CE(final), every logit map bilinearly
/// resized to the mask resolution first.
Tensor total_loss(const Tensor& final_logits, std::span<const Tensor> intermediate, const Mask& truth);

/// Per-pixel argmax over the two channels; ties go to background.
Mask predict_mask(const Tensor& logits);

}  // namespace cam
}  // namespace cobnet
