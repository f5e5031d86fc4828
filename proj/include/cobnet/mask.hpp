#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace cobnet {

/// Binary H×W mask stored row-major, one byte per pixel (0 or 1).
struct Mask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> values;

  Mask() = default;
  Mask(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), values(h * w, fill) {}

  static Mask ones(std::size_t h, std::size_t w) { return Mask(h, w, 1); }

  std::uint8_t at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
  std::uint8_t& at(std::size_t y, std::size_t x) { return values[y * width + x]; }
  std::size_t size() const { return values.size(); }

  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : values) n += (v != 0);
    return n;
  }

  bool operator==(const Mask&) const = default;
};

}  // namespace cobnet
