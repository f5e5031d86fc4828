#include "cobnet/proto.hpp"

#include "cobnet/error.hpp"
#include "cobnet/ops.hpp"

namespace cobnet::proto {

namespace {

void require_features(const FeatureMap& f) {
  if (!f.defined() || f.rank() != 3) throw DimensionError("feature map must be c×h×w");
}

Mask at_feature_resolution(const FeatureMap& f, const Mask& mask) {
  if (mask.height == f.dim(1) && mask.width == f.dim(2)) return mask;
  return resize_mask(mask, f.dim(1), f.dim(2));
}

void check_grid(std::size_t grid, std::size_t smallest_scale, std::size_t h, std::size_t w) {
  if (grid < 1 || grid > smallest_scale || grid > h || grid > w) {
    throw ConfigError("background grid size " + std::to_string(grid) + " must lie in [1, " +
                      std::to_string(std::min({smallest_scale, h, w})) + "]");
  }
}

}  // namespace

Mask resize_mask(const Mask& mask, std::size_t height, std::size_t width) {
  if (mask.height == height && mask.width == width) return mask;
  std::vector<double> values(mask.values.begin(), mask.values.end());
  Graph::NoGrad no_grad;
  const Tensor resized = bilinear_resize(Tensor({1, mask.height, mask.width}, std::move(values)), height, width);
  Mask out(height, width);
  const auto r = resized.data();
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = r[i] >= 0.5 ? 1 : 0;
  return out;
}

ObjectPrototype masked_average_pool(const FeatureMap& support, const Mask& mask) {
  require_features(support);
  const Mask m = at_feature_resolution(support, mask);
  const std::size_t c = support.dim(0), hw = support.dim(1) * support.dim(2);
  const std::size_t count = m.count();
  if (count == 0) throw EmptyMaskError("support mask has no foreground at feature resolution");
  std::vector<double> proto(c, 0.0);
  const auto f = support.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (std::size_t i = 0; i < hw; ++i)
      if (m.values[i]) acc += f[ch * hw + i];
    proto[ch] = acc / static_cast<double>(count);
  }
  return {Tensor({c, 1, 1}, std::move(proto))};
}

namespace {

template <typename PerShot>
ObjectPrototype average_shots(std::span<const SupportShot> shots, PerShot&& per_shot) {
  if (shots.empty()) throw UsageError("k-shot prototype needs at least one shot");
  std::vector<double> acc;
  std::size_t c = 0;
  for (const auto& shot : shots) {
    const ObjectPrototype p = per_shot(shot);
    if (acc.empty()) {
      c = p.values.numel();
      acc.assign(c, 0.0);
    } else if (p.values.numel() != c) {
      throw DimensionError("support shots have differing channel counts");
    }
    const auto v = p.values.data();
    for (std::size_t i = 0; i < c; ++i) acc[i] += v[i];
  }
  for (auto& v : acc) v /= static_cast<double>(shots.size());
  return {Tensor({c, 1, 1}, std::move(acc))};
}

}  // namespace

ObjectPrototype kshot_prototype(std::span<const SupportShot> shots) {
  return average_shots(shots, [](const SupportShot& s) { return masked_average_pool(s.features, s.mask); });
}

ObjectPrototype weak_kshot_prototype(std::span<const SupportShot> shots) {
  return average_shots(shots, [](const SupportShot& s) { return weak_object_prototype(s.features); });
}

BackgroundGrid background_grid(const FeatureMap& query, std::size_t grid, std::size_t smallest_scale) {
  require_features(query);
  check_grid(grid, smallest_scale, query.dim(1), query.dim(2));
  Graph::NoGrad no_grad;
  return {adaptive_avg_pool(query, grid, grid).detach(), grid};
}

ObjectPrototype weak_object_prototype(const FeatureMap& support) {
  require_features(support);
  Graph::NoGrad no_grad;
  return {adaptive_avg_pool(support, 1, 1).detach()};
}

BackgroundGrid support_background_grid(std::span<const SupportShot> shots, std::size_t grid,
                                       std::size_t smallest_scale) {
  if (shots.empty()) throw UsageError("support background grid needs at least one shot");
  const std::size_t c = shots[0].features.dim(0), h = shots[0].features.dim(1), w = shots[0].features.dim(2);
  check_grid(grid, smallest_scale, h, w);
  std::vector<double> acc(c * grid * grid, 0.0);
  for (const auto& shot : shots) {
    require_features(shot.features);
    if (shot.features.shape() != shots[0].features.shape()) throw DimensionError("support shots differ in shape");
    const Mask m = at_feature_resolution(shot.features, shot.mask);
    const auto f = shot.features.data();
    const std::size_t hw = h * w;

    std::size_t bg_total = 0;
    for (auto v : m.values) bg_total += (v == 0);
    std::vector<double> fallback(c, 0.0);
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::size_t i = 0; i < hw; ++i)
        if (bg_total == 0 || m.values[i] == 0) s += f[ch * hw + i];
      fallback[ch] = s / static_cast<double>(bg_total == 0 ? hw : bg_total);
    }

    for (std::size_t a = 0; a < grid; ++a) {
      const std::size_t y0 = a * h / grid, y1 = ((a + 1) * h + grid - 1) / grid;
      for (std::size_t b = 0; b < grid; ++b) {
        const std::size_t x0 = b * w / grid, x1 = ((b + 1) * w + grid - 1) / grid;
        std::size_t n = 0;
        for (std::size_t y = y0; y < y1; ++y)
          for (std::size_t x = x0; x < x1; ++x) n += (m.values[y * w + x] == 0);
        for (std::size_t ch = 0; ch < c; ++ch) {
          double cell = fallback[ch];
          if (n > 0) {
            double s = 0.0;
            for (std::size_t y = y0; y < y1; ++y)
              for (std::size_t x = x0; x < x1; ++x)
                if (m.values[y * w + x] == 0) s += f[ch * hw + y * w + x];
            cell = s / static_cast<double>(n);
          }
          acc[(ch * grid + a) * grid + b] += cell;
        }
      }
    }
  }
  for (auto& v : acc) v /= static_cast<double>(shots.size());
  return {Tensor({c, grid, grid}, std::move(acc)), grid};
}

}  // namespace cobnet::proto
