#pragma once

#include <filesystem>
#include <iosfwd>

#include "cobnet/tensor.hpp"

namespace cobnet {

// CBT1 layout: the magic bytes "CBT1", a little-endian u32 rank, `rank`
// little-endian u32 dimensions, then the values as little-endian IEEE-754
// doubles in row-major order.

void write_tensor(std::ostream& out, const Tensor& tensor);
Tensor read_tensor(std::istream& in);

void save_tensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace cobnet
