#include "cobnet/layers.hpp"

#include <cmath>

#include "cobnet/ops.hpp"

namespace cobnet {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finaliser over a combined state
  std::uint64_t z = a + 0x9E3779B97F4A7C15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

Tensor normal_tensor(Shape shape, double stddev, Rng& rng, bool requires_grad) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = dist(rng);
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

ConvLayer ConvLayer::init(std::size_t c_out, std::size_t c_in, std::size_t kernel, Rng& rng, bool trainable) {
  const double fan_in = static_cast<double>(c_in * kernel * kernel);
  ConvLayer layer;
  layer.weight = normal_tensor({c_out, c_in, kernel, kernel}, 1.0 / std::sqrt(fan_in), rng, trainable);
  layer.bias = Tensor::zeros({c_out}, trainable);
  return layer;
}

Tensor ConvLayer::operator()(const Tensor& input) const { return conv2d(input, weight, bias); }

void append_conv(ParameterList& list, const std::string& prefix, const ConvLayer& layer) {
  list.push_back({prefix + ".weight", layer.weight});
  list.push_back({prefix + ".bias", layer.bias});
}

}  // namespace cobnet
