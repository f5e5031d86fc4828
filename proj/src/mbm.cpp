#include "cobnet/mbm.hpp"

#include "cobnet/error.hpp"
#include "cobnet/ops.hpp"

namespace cobnet {

HeadParams HeadParams::init(std::size_t channels, Rng& rng) {
  HeadParams head;
  head.conv1 = ConvLayer::init(channels, channels, 3, rng);
  head.conv2 = ConvLayer::init(channels, channels, 3, rng);
  head.out = ConvLayer::init(2, channels, 1, rng);
  return head;
}

namespace mbm {

ScalePyramid build_pyramid(const FeatureMap& query, std::span<const std::size_t> sizes) {
  if (sizes.empty()) throw ConfigError("pyramid needs at least one scale");
  ScalePyramid pyramid;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (i > 0 && sizes[i] > sizes[i - 1]) throw ConfigError("pyramid sizes must be non-increasing");
    if (sizes[i] > query.dim(1) || sizes[i] > query.dim(2)) {
      throw DimensionError("pyramid size " + std::to_string(sizes[i]) + " exceeds feature map " +
                           shape_string(query.shape()));
    }
    pyramid.sizes.push_back(sizes[i]);
    pyramid.levels.push_back(adaptive_avg_pool(query, sizes[i], sizes[i]));
  }
  return pyramid;
}

Tensor expand_object(const ObjectPrototype& prototype, std::size_t k) {
  const std::size_t c = prototype.values.numel();
  const auto p = prototype.values.data();
  std::vector<double> out(c * k * k);
  for (std::size_t ch = 0; ch < c; ++ch) std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(ch * k * k), k * k, p[ch]);
  return Tensor({c, k, k}, std::move(out));
}

Tensor expand_background(const BackgroundGrid& grid, std::size_t k) {
  const std::size_t j = grid.grid;
  if (k < j) throw ConfigError("cannot expand a " + std::to_string(j) + "-grid to size " + std::to_string(k));
  const std::size_t c = grid.values.dim(0);
  const auto g = grid.values.data();
  std::vector<double> out(c * k * k);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < k; ++y)
      for (std::size_t x = 0; x < k; ++x) out[(ch * k + y) * k + x] = g[(ch * j + y * j / k) * j + x * j / k];
  return Tensor({c, k, k}, std::move(out));
}

Tensor fuse_plus(const Tensor& level, const Tensor& object, const Tensor& mask_k, const ConvLayer& conv) {
  return conv(concat_channels({object, level, mask_k}));
}

Tensor fuse_minus(const Tensor& level, const Tensor& background, const Tensor& mask_k, const ConvLayer& conv) {
  return conv(concat_channels({level, background, one_minus(mask_k)}));
}

Tensor aggregate(std::span<const Tensor> levels, std::size_t h, std::size_t w) {
  if (levels.empty()) throw UsageError("aggregate needs at least one level");
  Tensor total = bilinear_resize(levels[0], h, w);
  for (std::size_t i = 1; i < levels.size(); ++i) total = add(total, bilinear_resize(levels[i], h, w));
  return total;
}

Tensor intermediate_prediction(const Tensor& fused, const HeadParams& head) {
  return head.out(relu(head.conv2(relu(head.conv1(fused)))));
}

}  // namespace mbm
}  // namespace cobnet
