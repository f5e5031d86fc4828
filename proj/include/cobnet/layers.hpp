#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cobnet/tensor.hpp"

namespace cobnet {

using Rng = std::mt19937_64;

/// Deterministic 64-bit mixer used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// Normal(0, std²) entries drawn from `rng` in row-major order.
Tensor normal_tensor(Shape shape, double stddev, Rng& rng, bool requires_grad);

struct ConvLayer {
  Tensor weight;  // c_out×c_in×k×k
  Tensor bias;    // c_out

  // Weight ~ N(0, 1/fan_in), zero bias.
  static ConvLayer init(std::size_t c_out, std::size_t c_in, std::size_t kernel, Rng& rng, bool trainable = true);

  Tensor operator()(const Tensor& input) const;
  bool defined() const { return weight.defined(); }
};

struct NamedParameter {
  std::string name;
  Tensor tensor;
};
using ParameterList = std::vector<NamedParameter>;

void append_conv(ParameterList& list, const std::string& prefix, const ConvLayer& layer);

}  // namespace cobnet
