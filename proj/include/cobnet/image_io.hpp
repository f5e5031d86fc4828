#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cobnet/mask.hpp"
#include "cobnet/tensor.hpp"

namespace cobnet {

/// 8-bit raster with 1 (graymap) or 3 (pixmap) interleaved channels.
struct Raster {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> pixels;

  bool operator==(const Raster&) const = default;
};

/// Binary P5/P6 files with maxval 255.
void write_netpbm(const std::filesystem::path& path, const Raster& raster);
Raster read_netpbm(const std::filesystem::path& path);

/// Rounds v·255 after clamping to [0, 1].
std::uint8_t to_byte(double v);

Raster image_raster(const Tensor& image);  // 3×H×W in [0, 1]
Raster mask_raster(const Mask& mask);      // 0 / 255
Mask raster_mask(const Raster& raster);    // nonzero → 1
Raster heat_raster(const Tensor& map);     // 1×H×W in [0, 1] → gray
Raster overlay_raster(const Tensor& image, const Mask& mask);

}  // namespace cobnet
