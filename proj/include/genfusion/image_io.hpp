#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "genfusion/tensor.hpp"

namespace genfusion {

/// Model space <-> 8-bit: pixel = round_half_away((v + 1) * 127.5), clamped.
std::uint8_t quantize_model_value(double v);
double dequantize_model_value(std::uint8_t p);

/// 8-bit PNG with 1 (grey) or 3 (RGB) channels, values read as model space.
void write_png(const std::filesystem::path& path, const ImageTensor& image);
ImageTensor read_png(const std::filesystem::path& path);

/// Snap every value to the nearest representable 8-bit level.
ImageTensor quantize_to_8bit(const ImageTensor& image);

}  // namespace genfusion
