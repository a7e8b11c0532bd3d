#pragma once

// 8-bit PNG persistence. Byte b maps to b / 255; writing rounds half up.

#include "svia/image.hpp"

#include <cstdint>
#include <filesystem>

namespace svia {

std::uint8_t to_byte(float v) noexcept;
float from_byte(std::uint8_t b) noexcept;

/// Rounds every intensity to the nearest representable 8-bit value.
void quantize_8bit(ImageTensor& x);

void write_png(const std::filesystem::path& path, const ImageTensor& image);
ImageTensor read_png(const std::filesystem::path& path);

/// Single-channel 8-bit label map.
void write_label_png(const std::filesystem::path& path, const LabelMap& labels);
LabelMap read_label_png(const std::filesystem::path& path);

} // namespace svia
