#pragma once

#include <filesystem>

#include <Eigen/Core>

namespace vpdet {

// Single-channel raster, row-major, indexed (row = y, col = x).
using Raster = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct LoadedRaster {
  Raster values;       // raw sample values, color converted to luma
  int max_value = 255; // 255 for 8-bit sources, 65535 for 16-bit
};

// Reads PGM/PPM (P2, P3, P5, P6) or PNG; throws FormatError.
LoadedRaster read_raster(const std::filesystem::path& path);

// Same as read_raster with values scaled to [0, 1].
Raster read_grayscale(const std::filesystem::path& path);

// Binary PGM; values in [0, 1] are quantized to 8 or 16 bits.
void write_pgm(const std::filesystem::path& path, const Raster& image, int max_value = 255);

// Box-filter resampling so that the longer side equals `len`.
Raster resize_longer_side(const Raster& image, int len);

Raster resample(const Raster& image, int width, int height);

}  // namespace vpdet
