#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vpdet/contour.hpp"
#include "vpdet/jlinkage.hpp"
#include "vpdet/retrieval.hpp"
#include "vpdet/vp_select.hpp"

namespace vpdet {

struct PipelineConfig {
  double alpha = 0.05;
  double l_min = 40.0;
  double phi = 3.0;
  std::size_t hypotheses = 500;  // M
  std::uint64_t seed = 0;
  double tau = 100.0;
  double threshold = 150.0;  // T
  double w_min = 0.1;
  double gamma1 = 0.5;
  double gamma2 = 0.5;
  int pyramid_levels = 6;  // L
  int len = 500;
  std::size_t top_k = 3;
  bool raw_kernel = false;
  bool use_frame = true;  // restrict dominant VPs to the centered 1000x1000 frame
  unsigned workers = 1;

  SelectionConfig selection(int width, int height) const;
  RetrievalParams retrieval() const;
};

/// Applies `key = value` lines ('#' comments). Unknown keys and unparsable
/// values are collected and reported together in one FormatError.
void apply_config_text(PipelineConfig& config, const std::string& text);
void apply_config_file(PipelineConfig& config, const std::filesystem::path& path);

// Recognized keys, in declaration order.
std::vector<std::string> config_keys();

struct DetectionResult {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::vector<Edge> edges;
  std::vector<Hypothesis> hypotheses;
  std::vector<VPDetection> candidates;  // clusters with >= 2 edges, by descending strength
  std::optional<std::size_t> dominant;  // index into candidates
};

/// J-Linkage over the given edges, cluster VP estimation, strength scoring
/// and dominant selection. Fewer than two edges yield no candidates.
DetectionResult detect_vanishing_points(std::vector<Edge> edges, int width, int height, const PipelineConfig& config);

/// Scales a raster so its longer side equals config.len and runs the
/// gradient fallback edge extractor on it.
std::vector<Edge> edges_from_image(const Raster& image, const PipelineConfig& config, int* width, int* height);

/// Traces and subdivides a contour map; coordinates are rescaled to the
/// config.len working resolution when the map has another size.
std::vector<Edge> edges_from_contour_map(const ContourMap& map, const PipelineConfig& config, int* width, int* height);

/// JSON detection record (schema "vpdet.detections/1").
void write_detection_json(const std::filesystem::path& path, const DetectionResult& result,
                          const PipelineConfig& config);
DetectionResult read_detection_json(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace vpdet
