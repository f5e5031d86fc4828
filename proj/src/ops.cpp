#include "cobnet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "cobnet/error.hpp"

namespace cobnet {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;

void require_rank3(const Tensor& t, const char* what) {
  if (!t.defined() || t.rank() != 3) {
    throw DimensionError(std::string(what) + " expects a c×h×w tensor, got " +
                         (t.defined() ? shape_string(t.shape()) : std::string("undefined")));
  }
}

// Adds `delta` into the gradient of `t`, if it tracks one.
template <typename F>
void accumulate(Tensor t, F&& body) {
  if (!t.requires_grad()) return;
  body(t.mutable_grad());
}

void im2col3(std::span<const double> in, std::size_t cin, std::size_t h, std::size_t w, double* col) {
  const std::size_t hw = h * w;
  for (std::size_t i = 0; i < cin; ++i) {
    const double* plane = in.data() + i * hw;
    for (std::size_t dy = 0; dy < 3; ++dy) {
      for (std::size_t dx = 0; dx < 3; ++dx) {
        double* row = col + ((i * 3 + dy) * 3 + dx) * hw;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y + dy) - 1;
          double* dst = row + y * w;
          if (sy < 0 || sy >= static_cast<long>(h)) {
            std::fill(dst, dst + w, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(sy) * w;
          for (std::size_t x = 0; x < w; ++x) {
            const long sx = static_cast<long>(x + dx) - 1;
            dst[x] = (sx < 0 || sx >= static_cast<long>(w)) ? 0.0 : src[sx];
          }
        }
      }
    }
  }
}

void col2im3(const double* col, std::size_t cin, std::size_t h, std::size_t w, std::span<double> out) {
  const std::size_t hw = h * w;
  for (std::size_t i = 0; i < cin; ++i) {
    double* plane = out.data() + i * hw;
    for (std::size_t dy = 0; dy < 3; ++dy) {
      for (std::size_t dx = 0; dx < 3; ++dx) {
        const double* row = col + ((i * 3 + dy) * 3 + dx) * hw;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y + dy) - 1;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          double* dst = plane + static_cast<std::size_t>(sy) * w;
          const double* src = row + y * w;
          for (std::size_t x = 0; x < w; ++x) {
            const long sx = static_cast<long>(x + dx) - 1;
            if (sx >= 0 && sx < static_cast<long>(w)) dst[sx] += src[x];
          }
        }
      }
    }
  }
}

struct BilinearTap {
  std::size_t i0, i1;
  double frac;
};

std::vector<BilinearTap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<BilinearTap> taps(out);
  for (std::size_t i = 0; i < out; ++i) {
    const double src = out > 1 ? static_cast<double>(i * (in - 1)) / static_cast<double>(out - 1)
                               : static_cast<double>(in - 1) / 2.0;
    auto i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[i] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

// Row range [begin, end) of adaptive bin `i` out of `out` bins over `in` rows.
std::pair<std::size_t, std::size_t> adaptive_bin(std::size_t i, std::size_t in, std::size_t out) {
  return {(i * in) / out, ((i + 1) * in + out - 1) / out};
}

enum class BroadcastSide { none, a, b };

BroadcastSide broadcast_side(const Shape& a, const Shape& b) {
  if (a == b) return BroadcastSide::none;
  if (a.size() == 3 && b.size() == 3 && a[1] == b[1] && a[2] == b[2]) {
    if (a[0] == 1) return BroadcastSide::a;
    if (b[0] == 1) return BroadcastSide::b;
  }
  throw DimensionError("incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank3(input, "conv2d");
  if (weight.rank() != 4) throw DimensionError("conv2d weight must be c_out×c_in×k×k");
  const std::size_t cout = weight.dim(0), cin = weight.dim(1), k = weight.dim(2);
  if (weight.dim(3) != k || (k != 1 && k != 3)) {
    throw DimensionError("conv2d supports square kernels of size 1 or 3, got " + shape_string(weight.shape()));
  }
  if (cin != input.dim(0)) {
    throw DimensionError("conv2d weight expects " + std::to_string(cin) + " input channels, input has " +
                         std::to_string(input.dim(0)));
  }
  if (bias.numel() != cout) throw DimensionError("conv2d bias must have c_out entries");

  const std::size_t h = input.dim(1), w = input.dim(2), hw = h * w, patch = cin * k * k;
  std::shared_ptr<RowMatrix> col;
  const double* col_data = input.data().data();
  if (k == 3) {
    col = std::make_shared<RowMatrix>(patch, hw);
    im2col3(input.data(), cin, h, w, col->data());
    col_data = col->data();
  }

  Tensor out(Shape{cout, h, w});
  ConstMatrixMap wmat(weight.data().data(), cout, patch);
  ConstMatrixMap cmat(col_data, patch, hw);
  MatrixMap omat(out.mutable_data().data(), cout, hw);
  omat.noalias() = wmat * cmat;
  const auto b = bias.data();
  for (std::size_t o = 0; o < cout; ++o) omat.row(o).array() += b[o];

  Graph::record(out, {input, weight, bias}, [input, weight, bias, col, cin, cout, h, w, k](std::span<const double> g) {
    const std::size_t hw = h * w, patch = cin * k * k;
    ConstMatrixMap gmat(g.data(), cout, hw);
    const double* col_data = col ? col->data() : input.data().data();
    ConstMatrixMap cmat(col_data, patch, hw);
    accumulate(weight, [&](std::span<double> gw) {
      MatrixMap gwmat(gw.data(), cout, patch);
      gwmat.noalias() += gmat * cmat.transpose();
    });
    accumulate(bias, [&](std::span<double> gb) {
      for (std::size_t o = 0; o < cout; ++o) gb[o] += gmat.row(o).sum();
    });
    accumulate(input, [&](std::span<double> gi) {
      ConstMatrixMap wmat(weight.data().data(), cout, patch);
      if (k == 1) {
        MatrixMap gimat(gi.data(), cin, hw);
        gimat.noalias() += wmat.transpose() * gmat;
      } else {
        RowMatrix gcol = wmat.transpose() * gmat;
        col2im3(gcol.data(), cin, h, w, gi);
      }
    });
  });
  return out;
}

Tensor adaptive_avg_pool(const Tensor& input, std::size_t out_h, std::size_t out_w) {
  require_rank3(input, "adaptive_avg_pool");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (out_h < 1 || out_w < 1 || out_h > h || out_w > w) {
    throw DimensionError("adaptive_avg_pool output " + std::to_string(out_h) + "×" + std::to_string(out_w) +
                         " outside input " + std::to_string(h) + "×" + std::to_string(w));
  }
  Tensor out(Shape{c, out_h, out_w});
  auto o = out.mutable_data();
  const auto in = input.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < out_h; ++i) {
      const auto [y0, y1] = adaptive_bin(i, h, out_h);
      for (std::size_t j = 0; j < out_w; ++j) {
        const auto [x0, x1] = adaptive_bin(j, w, out_w);
        double acc = 0.0;
        for (std::size_t y = y0; y < y1; ++y)
          for (std::size_t x = x0; x < x1; ++x) acc += in[(ch * h + y) * w + x];
        o[(ch * out_h + i) * out_w + j] = acc / static_cast<double>((y1 - y0) * (x1 - x0));
      }
    }
  }
  Graph::record(out, {input}, [input, c, h, w, out_h, out_w](std::span<const double> g) {
    accumulate(input, [&](std::span<double> gi) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < out_h; ++i) {
          const auto [y0, y1] = adaptive_bin(i, h, out_h);
          for (std::size_t j = 0; j < out_w; ++j) {
            const auto [x0, x1] = adaptive_bin(j, w, out_w);
            const double share = g[(ch * out_h + i) * out_w + j] / static_cast<double>((y1 - y0) * (x1 - x0));
            for (std::size_t y = y0; y < y1; ++y)
              for (std::size_t x = x0; x < x1; ++x) gi[(ch * h + y) * w + x] += share;
          }
        }
      }
    });
  });
  return out;
}

Tensor bilinear_resize(const Tensor& input, std::size_t out_h, std::size_t out_w) {
  require_rank3(input, "bilinear_resize");
  if (out_h < 1 || out_w < 1) throw DimensionError("bilinear_resize output sizes must be positive");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  Tensor out(Shape{c, out_h, out_w});
  if (out_h == h && out_w == w) {
    std::copy(input.data().begin(), input.data().end(), out.mutable_data().begin());
  } else {
    const auto ty = bilinear_taps(h, out_h);
    const auto tx = bilinear_taps(w, out_w);
    const auto in = input.data();
    auto o = out.mutable_data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* plane = in.data() + ch * h * w;
      for (std::size_t y = 0; y < out_h; ++y) {
        const auto& r = ty[y];
        for (std::size_t x = 0; x < out_w; ++x) {
          const auto& s = tx[x];
          const double top = (1.0 - s.frac) * plane[r.i0 * w + s.i0] + s.frac * plane[r.i0 * w + s.i1];
          const double bot = (1.0 - s.frac) * plane[r.i1 * w + s.i0] + s.frac * plane[r.i1 * w + s.i1];
          o[(ch * out_h + y) * out_w + x] = (1.0 - r.frac) * top + r.frac * bot;
        }
      }
    }
  }
  Graph::record(out, {input}, [input, c, h, w, out_h, out_w](std::span<const double> g) {
    accumulate(input, [&](std::span<double> gi) {
      if (out_h == h && out_w == w) {
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g[i];
        return;
      }
      const auto ty = bilinear_taps(h, out_h);
      const auto tx = bilinear_taps(w, out_w);
      for (std::size_t ch = 0; ch < c; ++ch) {
        double* plane = gi.data() + ch * h * w;
        for (std::size_t y = 0; y < out_h; ++y) {
          const auto& r = ty[y];
          for (std::size_t x = 0; x < out_w; ++x) {
            const auto& s = tx[x];
            const double v = g[(ch * out_h + y) * out_w + x];
            plane[r.i0 * w + s.i0] += (1.0 - r.frac) * (1.0 - s.frac) * v;
            plane[r.i0 * w + s.i1] += (1.0 - r.frac) * s.frac * v;
            plane[r.i1 * w + s.i0] += r.frac * (1.0 - s.frac) * v;
            plane[r.i1 * w + s.i1] += r.frac * s.frac * v;
          }
        }
      }
    });
  });
  return out;
}

Tensor sigmoid(const Tensor& input) {
  Tensor out(input.shape());
  auto o = out.mutable_data();
  const auto in = input.data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double x = in[i];
    if (x >= 0.0) {
      o[i] = 1.0 / (1.0 + std::exp(-x));
    } else {
      const double e = std::exp(x);
      o[i] = e / (1.0 + e);
    }
  }
  Graph::record(out, {input}, [input, out](std::span<const double> g) {
    accumulate(input, [&](std::span<double> gi) {
      const auto s = out.data();
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g[i] * s[i] * (1.0 - s[i]);
    });
  });
  return out;
}

Tensor relu(const Tensor& input) {
  Tensor out(input.shape());
  auto o = out.mutable_data();
  const auto in = input.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] > 0.0 ? in[i] : 0.0;
  Graph::record(out, {input}, [input](std::span<const double> g) {
    accumulate(input, [&](std::span<double> gi) {
      const auto in = input.data();
      for (std::size_t i = 0; i < gi.size(); ++i)
        if (in[i] > 0.0) gi[i] += g[i];
    });
  });
  return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, const Mask& target) {
  require_rank3(logits, "softmax_cross_entropy");
  if (logits.dim(0) != 2) throw DimensionError("softmax_cross_entropy expects 2 logit channels");
  const std::size_t h = logits.dim(1), w = logits.dim(2), n = h * w;
  if (target.height != h || target.width != w) {
    throw DimensionError("target mask " + std::to_string(target.height) + "×" + std::to_string(target.width) +
                         " does not match logits " + shape_string(logits.shape()));
  }
  for (auto v : target.values) {
    if (v > 1) throw ValidationError("target mask values must be 0 or 1");
  }
  const auto z = logits.data();
  // Background and object probabilities are kept for the backward pass.
  auto probs = std::make_shared<std::vector<double>>(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z0 = z[i], z1 = z[n + i];
    const double m = std::max(z0, z1);
    const double lse = m + std::log(std::exp(z0 - m) + std::exp(z1 - m));
    total += lse - (target.values[i] ? z1 : z0);
    (*probs)[i] = std::exp(z0 - lse);
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(n));
  Graph::record(out, {logits}, [logits, probs, target, n](std::span<const double> g) {
    accumulate(logits, [&](std::span<double> gl) {
      const double s = g[0] / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double p0 = (*probs)[i];
        const double t1 = target.values[i] ? 1.0 : 0.0;
        gl[i] += s * (p0 - (1.0 - t1));
        gl[n + i] += s * ((1.0 - p0) - t1);
      }
    });
  });
  return out;
}

Tensor elementwise(const Tensor& a, const Tensor& b, ElementwiseKind kind) {
  if (kind == ElementwiseKind::one_minus) return one_minus(a);
  const auto side = broadcast_side(a.shape(), b.shape());
  const Shape out_shape = side == BroadcastSide::a ? b.shape() : a.shape();
  Tensor out(out_shape);
  const std::size_t c = out_shape[0];
  const std::size_t plane = side == BroadcastSide::none ? out.numel() : out.numel() / c;
  const std::size_t channels = side == BroadcastSide::none ? 1 : c;
  auto index_a = [&](std::size_t ch, std::size_t p) { return side == BroadcastSide::a ? p : ch * plane + p; };
  auto index_b = [&](std::size_t ch, std::size_t p) { return side == BroadcastSide::b ? p : ch * plane + p; };

  const auto da = a.data(), db = b.data();
  auto o = out.mutable_data();
  for (std::size_t ch = 0; ch < channels; ++ch) {
    for (std::size_t p = 0; p < plane; ++p) {
      const double x = da[index_a(ch, p)], y = db[index_b(ch, p)];
      double r = 0.0;
      switch (kind) {
        case ElementwiseKind::mul: r = x * y; break;
        case ElementwiseKind::add: r = x + y; break;
        case ElementwiseKind::sub: r = x - y; break;
        case ElementwiseKind::one_minus: break;
      }
      o[ch * plane + p] = r;
    }
  }
  Graph::record(out, {a, b}, [a, b, kind, side, plane, channels](std::span<const double> g) {
    auto ia = [&](std::size_t ch, std::size_t p) { return side == BroadcastSide::a ? p : ch * plane + p; };
    auto ib = [&](std::size_t ch, std::size_t p) { return side == BroadcastSide::b ? p : ch * plane + p; };
    accumulate(a, [&](std::span<double> ga) {
      const auto db = b.data();
      for (std::size_t ch = 0; ch < channels; ++ch)
        for (std::size_t p = 0; p < plane; ++p) {
          const double go = g[ch * plane + p];
          ga[ia(ch, p)] += kind == ElementwiseKind::mul ? go * db[ib(ch, p)] : go;
        }
    });
    accumulate(b, [&](std::span<double> gb) {
      const auto da = a.data();
      for (std::size_t ch = 0; ch < channels; ++ch)
        for (std::size_t p = 0; p < plane; ++p) {
          const double go = g[ch * plane + p];
          double d = go;
          if (kind == ElementwiseKind::mul) d = go * da[ia(ch, p)];
          if (kind == ElementwiseKind::sub) d = -go;
          gb[ib(ch, p)] += d;
        }
    });
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(a, b, ElementwiseKind::mul); }
Tensor add(const Tensor& a, const Tensor& b) { return elementwise(a, b, ElementwiseKind::add); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(a, b, ElementwiseKind::sub); }

Tensor one_minus(const Tensor& a) {
  Tensor out(a.shape());
  auto o = out.mutable_data();
  const auto in = a.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = 1.0 - in[i];
  Graph::record(out, {a}, [a](std::span<const double> g) {
    accumulate(a, [&](std::span<double> ga) {
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] -= g[i];
    });
  });
  return out;
}

Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_channels needs at least one part");
  for (const auto& p : parts) require_rank3(p, "concat_channels");
  const std::size_t h = parts[0].dim(1), w = parts[0].dim(2);
  std::size_t channels = 0;
  for (const auto& p : parts) {
    if (p.dim(1) != h || p.dim(2) != w) {
      throw DimensionError("concat_channels spatial mismatch: " + shape_string(parts[0].shape()) + " vs " +
                           shape_string(p.shape()));
    }
    channels += p.dim(0);
  }
  Tensor out(Shape{channels, h, w});
  auto o = out.mutable_data();
  std::size_t offset = 0;
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), o.begin() + static_cast<std::ptrdiff_t>(offset));
    offset += p.numel();
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  Graph::record(out, inputs, [inputs](std::span<const double> g) {
    std::size_t offset = 0;
    for (const auto& p : inputs) {
      accumulate(p, [&](std::span<double> gp) {
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offset + i];
      });
      offset += p.numel();
    }
  });
  return out;
}

Tensor concat_channels(std::initializer_list<Tensor> parts) {
  return concat_channels(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor slice_channels(const Tensor& input, std::size_t begin, std::size_t count) {
  require_rank3(input, "slice_channels");
  if (count == 0 || begin + count > input.dim(0)) throw DimensionError("slice_channels range out of bounds");
  const std::size_t plane = input.dim(1) * input.dim(2);
  Tensor out(Shape{count, input.dim(1), input.dim(2)});
  const auto in = input.data();
  std::copy(in.begin() + static_cast<std::ptrdiff_t>(begin * plane),
            in.begin() + static_cast<std::ptrdiff_t>((begin + count) * plane), out.mutable_data().begin());
  Graph::record(out, {input}, [input, begin, plane](std::span<const double> g) {
    accumulate(input, [&](std::span<double> gi) {
      for (std::size_t i = 0; i < g.size(); ++i) gi[begin * plane + i] += g[i];
    });
  });
  return out;
}

Tensor sum(const Tensor& input) {
  double acc = 0.0;
  for (double v : input.data()) acc += v;
  Tensor out = Tensor::scalar(acc);
  Graph::record(out, {input}, [input](std::span<const double> g) {
    accumulate(input, [&](std::span<double> gi) {
      for (auto& v : gi) v += g[0];
    });
  });
  return out;
}

Tensor scale(const Tensor& input, double factor) {
  Tensor out(input.shape());
  auto o = out.mutable_data();
  const auto in = input.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] * factor;
  Graph::record(out, {input}, [input, factor](std::span<const double> g) {
    accumulate(input, [&](std::span<double> gi) {
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g[i] * factor;
    });
  });
  return out;
}

}  // namespace cobnet
