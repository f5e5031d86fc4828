#include "cobnet/prior.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "cobnet/error.hpp"
#include "cobnet/ops.hpp"
#include "cobnet/proto.hpp"

namespace cobnet::prior {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Positions as rows, unit-normalised; zero vectors stay zero.
RowMatrix unit_rows(const FeatureMap& f) {
  const std::size_t c = f.dim(0), hw = f.dim(1) * f.dim(2);
  RowMatrix m(hw, c);
  const auto d = f.data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < hw; ++i) m(i, ch) = d[ch * hw + i];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    if (n > 0.0) m.row(i) /= n;
  }
  return m;
}

}  // namespace

FeatureMap masked_support_features(const FeatureMap& support, const Mask& mask) {
  if (support.rank() != 3) throw DimensionError("masked_support_features expects c×h×w features");
  const Mask m = (mask.height == support.dim(1) && mask.width == support.dim(2))
                     ? mask
                     : proto::resize_mask(mask, support.dim(1), support.dim(2));
  const std::size_t c = support.dim(0), hw = support.dim(1) * support.dim(2);
  std::vector<double> out(support.data().begin(), support.data().end());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < hw; ++i)
      if (!m.values[i]) out[ch * hw + i] = 0.0;
  return Tensor(support.shape(), std::move(out));
}

Tensor max_cosine_map(const FeatureMap& query, std::span<const FeatureMap> masked_supports) {
  if (query.rank() != 3) throw DimensionError("align mask expects c×h×w query features");
  if (masked_supports.empty()) throw UsageError("align mask needs at least one support map");
  const RowMatrix q = unit_rows(query);
  std::vector<double> raw(static_cast<std::size_t>(q.rows()), -std::numeric_limits<double>::infinity());
  for (const auto& s : masked_supports) {
    if (s.shape() != query.shape()) {
      throw DimensionError("support features " + shape_string(s.shape()) + " do not match query " +
                           shape_string(query.shape()));
    }
    const RowMatrix sm = unit_rows(s);
    const RowMatrix cos = q * sm.transpose();
    for (Eigen::Index i = 0; i < cos.rows(); ++i) raw[i] = std::max(raw[i], cos.row(i).maxCoeff());
  }
  return Tensor({1, query.dim(1), query.dim(2)}, std::move(raw));
}

Tensor normalize_min_max(const Tensor& map) {
  const auto d = map.data();
  const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
  const double span = *hi - *lo;
  std::vector<double> out(d.size(), 0.5);
  if (span > 0.0) {
    for (std::size_t i = 0; i < d.size(); ++i) out[i] = std::clamp((d[i] - *lo) / span, 0.0, 1.0);
  }
  return Tensor(map.shape(), std::move(out));
}

AlignMask align_mask(const FeatureMap& query, std::span<const FeatureMap> masked_supports) {
  return {normalize_min_max(max_cosine_map(query, masked_supports))};
}

AlignMask align_mask(const FeatureMap& query, const FeatureMap& masked_support) {
  return align_mask(query, std::span<const FeatureMap>(&masked_support, 1));
}

Tensor downsample_mask(const AlignMask& mask, std::size_t k) {
  if (k < 1 || k > mask.values.dim(1)) {
    throw DimensionError("align mask cannot be resized to " + std::to_string(k) + " from " +
                         std::to_string(mask.values.dim(1)));
  }
  Graph::NoGrad no_grad;
  return bilinear_resize(mask.values, k, k);
}

}  // namespace cobnet::prior
