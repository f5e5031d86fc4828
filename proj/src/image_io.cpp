#include "cobnet/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "cobnet/error.hpp"

namespace cobnet {

void write_netpbm(const std::filesystem::path& path, const Raster& raster) {
  if (raster.channels != 1 && raster.channels != 3) throw UsageError("netpbm rasters have 1 or 3 channels");
  if (raster.pixels.size() != raster.width * raster.height * raster.channels) {
    throw DimensionError("raster pixel count does not match its size");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << (raster.channels == 1 ? "P5" : "P6") << '\n' << raster.width << ' ' << raster.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(raster.pixels.data()), static_cast<std::streamsize>(raster.pixels.size()));
  if (!out) throw FormatError("failed writing " + path.string());
}

namespace {

std::size_t read_header_number(std::istream& in, const std::string& where) {
  // Skips whitespace and '#' comments between header fields.
  for (;;) {
    const int c = in.peek();
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else if (c != EOF && std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  std::size_t value = 0;
  if (!(in >> value)) throw FormatError(where + ": malformed netpbm header");
  return value;
}

}  // namespace

Raster read_netpbm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot open " + path.string());
  char magic[2] = {};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
    throw FormatError(path.string() + ": not a binary PGM/PPM file");
  }
  Raster r;
  r.channels = magic[1] == '5' ? 1 : 3;
  r.width = read_header_number(in, path.string());
  r.height = read_header_number(in, path.string());
  const std::size_t maxval = read_header_number(in, path.string());
  if (maxval != 255) throw FormatError(path.string() + ": only maxval 255 is supported");
  in.get();
  r.pixels.resize(r.width * r.height * r.channels);
  in.read(reinterpret_cast<char*>(r.pixels.data()), static_cast<std::streamsize>(r.pixels.size()));
  if (!in) throw FormatError(path.string() + ": truncated pixel data");
  return r;
}

std::uint8_t to_byte(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

Raster image_raster(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) throw DimensionError("image raster needs a 3×H×W tensor");
  Raster r{image.dim(2), image.dim(1), 3, {}};
  r.pixels.resize(r.width * r.height * 3);
  for (std::size_t y = 0; y < r.height; ++y) {
    for (std::size_t x = 0; x < r.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) r.pixels[(y * r.width + x) * 3 + c] = to_byte(image.at(c, y, x));
    }
  }
  return r;
}

Raster mask_raster(const Mask& mask) {
  Raster r{mask.width, mask.height, 1, {}};
  r.pixels.reserve(mask.values.size());
  for (auto v : mask.values) r.pixels.push_back(v ? 255 : 0);
  return r;
}

Mask raster_mask(const Raster& raster) {
  if (raster.channels != 1) throw DimensionError("masks are read from graymaps");
  Mask m(raster.height, raster.width, 0);
  for (std::size_t i = 0; i < raster.pixels.size(); ++i) m.values[i] = raster.pixels[i] ? 1 : 0;
  return m;
}

Raster heat_raster(const Tensor& map) {
  if (map.rank() != 3 || map.dim(0) != 1) throw DimensionError("heat map needs a 1×H×W tensor");
  Raster r{map.dim(2), map.dim(1), 1, {}};
  r.pixels.reserve(map.numel());
  for (double v : map.data()) r.pixels.push_back(to_byte(v));
  return r;
}

Raster overlay_raster(const Tensor& image, const Mask& mask) {
  Raster r = image_raster(image);
  if (mask.height != r.height || mask.width != r.width) throw DimensionError("overlay mask does not match image");
  for (std::size_t i = 0; i < mask.values.size(); ++i) {
    if (!mask.values[i]) continue;
    auto* px = &r.pixels[i * 3];
    px[0] = static_cast<std::uint8_t>((px[0] + 255) / 2);
    px[1] = static_cast<std::uint8_t>(px[1] / 2);
    px[2] = static_cast<std::uint8_t>(px[2] / 2);
  }
  return r;
}

}  // namespace cobnet
