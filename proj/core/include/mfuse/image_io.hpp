#pragma once

#include <string>

#include "mfuse/image.hpp"

namespace mfuse {

/// Decoded file: exactly one of gray/rgb is populated.
struct LoadedImage {
  bool is_color = false;
  GrayImage gray;
  RgbImage rgb;

  GrayImage to_gray() const { return is_color ? luminance(rgb) : gray; }
};

/// Reads a PNG, PGM or PPM file (format picked by extension). Grayscale
/// files load as gray, color files as RGB; 16-bit sources are reduced to
/// 8 bits. Throws std::runtime_error naming the file on any failure.
LoadedImage load_image(const std::string& path);

/// Convenience wrapper collapsing color to luminance.
GrayImage load_gray(const std::string& path);

/// Writers quantize [0,1] to 8-bit (round half up, clamped). Extension
/// selects the container: .png, or .pgm / .ppm binary.
void save_image(const std::string& path, const GrayImage& img);
void save_image(const std::string& path, const RgbImage& img);

}  // namespace mfuse
