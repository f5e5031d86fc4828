#include "cobnet/cam.hpp"

#include "cobnet/error.hpp"
#include "cobnet/ops.hpp"

namespace cobnet {

AttentionParams AttentionParams::init(std::size_t channels, Rng& rng) {
  AttentionParams p;
  p.conv1 = ConvLayer::init(channels, 2 * channels, 1, rng);
  p.conv2 = ConvLayer::init(1, channels, 1, rng);
  return p;
}

ClassifierParams ClassifierParams::init(std::size_t channels, Rng& rng) {
  ClassifierParams p;
  p.conv1 = ConvLayer::init(channels, 2 * channels, 3, rng);
  p.conv2 = ConvLayer::init(channels, channels, 3, rng);
  p.conv3 = ConvLayer::init(channels, channels, 3, rng);
  p.out = ConvLayer::init(2, channels, 1, rng);
  return p;
}

namespace cam {

Tensor attention(const Tensor& object, const Tensor& background, const AttentionParams& params) {
  if (object.shape() != background.shape()) {
    throw DimensionError("attention inputs differ: " + shape_string(object.shape()) + " vs " +
                         shape_string(background.shape()));
  }
  return sigmoid(params.conv2(relu(params.conv1(concat_channels({object, background})))));
}

std::pair<Tensor, Tensor> apply_attention(const Tensor& object, const Tensor& background, const Tensor& attention) {
  return {mul(object, attention), mul(background, one_minus(attention))};
}

Tensor classify(const Tensor& object, const Tensor& background, const ClassifierParams& params) {
  if (object.shape() != background.shape()) throw DimensionError("classifier inputs differ in shape");
  Tensor x = concat_channels({object, background});
  x = relu(params.conv1(x));
  x = relu(params.conv2(x));
  x = relu(params.conv3(x));
  return params.out(x);
}

Tensor total_loss(const Tensor& final_logits, std::span<const Tensor> intermediate, const Mask& truth) {
  if (intermediate.empty()) throw UsageError("total loss needs at least one intermediate prediction");
  auto ce = [&](const Tensor& logits) {
    return softmax_cross_entropy(bilinear_resize(logits, truth.height, truth.width), truth);
  };
  Tensor aux = ce(intermediate[0]);
  for (std::size_t i = 1; i < intermediate.size(); ++i) aux = add(aux, ce(intermediate[i]));
  return add(scale(aux, 1.0 / static_cast<double>(intermediate.size())), ce(final_logits));
}

Mask predict_mask(const Tensor& logits) {
  if (logits.rank() != 3 || logits.dim(0) != 2) throw DimensionError("predict_mask expects 2×H×W logits");
  const std::size_t h = logits.dim(1), w = logits.dim(2), n = h * w;
  Mask out(h, w);
  const auto z = logits.data();
  for (std::size_t i = 0; i < n; ++i) out.values[i] = z[n + i] > z[i] ? 1 : 0;
  return out;
}

}  // namespace cam
}  // namespace cobnet
