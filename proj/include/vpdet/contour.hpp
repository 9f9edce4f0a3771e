#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vpdet/geometry.hpp"
#include "vpdet/image.hpp"

namespace vpdet {

/// Weighted contour map (UCM-style). Weights live in [0, 1].
struct ContourMap {
  std::string image_id;
  Raster weights;

  int width() const { return static_cast<int>(weights.cols()); }
  int height() const { return static_cast<int>(weights.rows()); }
};

/// Sidecar metadata shipped next to a contour-map raster.
struct ContourSidecar {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::optional<int> original_width;
  std::optional<int> original_height;
};

/// Ordered 8-connected pixel chain.
struct Contour {
  Points2d points;
  double arc_length = 0.0;

  const Point2d& front() const { return points.front(); }
  const Point2d& back() const { return points.back(); }
};

ContourSidecar read_sidecar(const std::filesystem::path& path);
void write_sidecar(const std::filesystem::path& path, const ContourSidecar& sidecar);

// Default sidecar location: same stem with a .json extension.
std::filesystem::path default_sidecar_path(const std::filesystem::path& map_path);

/// Loads an 8/16-bit grayscale PGM or PNG, weights = value / max-value.
/// With a sidecar, its dimensions must match the raster (DimensionMismatch).
ContourMap load_contour_map(const std::filesystem::path& path,
                            const std::optional<std::filesystem::path>& sidecar = std::nullopt);

/// Thresholds at w_min, thins to 1-px chains and splits them at junction
/// pixels (three or more neighbors). Closed loops are opened at their
/// weakest pixel. Chains come back sorted by start coordinate (y, then x).
std::vector<Contour> trace_contours(const ContourMap& map, double w_min);

/// Recursively splits the chain at the point farthest from its endpoint
/// chord while that distance exceeds alpha times the chain's arc length.
/// Neighboring edges share the split point.
std::vector<Edge> subdivide(const Contour& contour, double alpha);
std::vector<Edge> subdivide(const Points2d& chain, double alpha);

// Chain indices [first, last] of each subdivided piece.
std::vector<std::pair<std::size_t, std::size_t>> subdivision_ranges(const Points2d& chain, double alpha);

/// Keeps edges strictly longer than l_min.
std::vector<Edge> filter_edges(std::vector<Edge> edges, double l_min);

struct FallbackParams {
  double blur_sigma = 1.0;
  double high_ratio = 0.2;  // of the maximum gradient magnitude
  double low_ratio = 0.4;   // of the high threshold
};

/// Gradient + non-maximum suppression + hysteresis edge map (binary weights).
ContourMap fallback_edge_map(const Raster& image, const FallbackParams& params = {});

/// Edge chains from a raw raster: fallback_edge_map, tracing, subdivision
/// and length filtering.
std::vector<Edge> fallback_edges(const Raster& image, double alpha, double l_min, const FallbackParams& params = {});

/// Traced and subdivided edges of a contour map, length filtered.
std::vector<Edge> contour_edges(const ContourMap& map, double w_min, double alpha, double l_min);

}  // namespace vpdet
