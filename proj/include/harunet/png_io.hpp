#pragma once

#include <string>
#include <vector>

namespace harunet {

/// 16-bit grayscale PNG. Values are clamped to [0,1] and quantized to the
/// full 16-bit range; read scales back to [0,1].
void write_png16(const std::string& path, const float* pixels, int height, int width);
void read_png16(const std::string& path, std::vector<float>& pixels, int& height, int& width);

/// 1-bit grayscale PNG for binary masks (nonzero -> set).
void write_png1(const std::string& path, const uint8_t* bits, int height, int width);
void read_png1(const std::string& path, std::vector<uint8_t>& bits, int& height, int& width);

}  // namespace harunet
