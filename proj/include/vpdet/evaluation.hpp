#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vpdet/geometry.hpp"

namespace vpdet {

struct Segment {
  Point2d a;
  Point2d b;
};

/// Ground truth for one image: two or more segments along 3D-parallel lines.
struct Annotation {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::vector<Segment> segments;
  bool has_dominant = true;

  // Meet of the fitted lines of the first two segments.
  HPointd gt_vp() const;
  // Segments rasterized at 1-px arc steps.
  std::vector<Points2d> gt_edges() const;
};

Annotation read_annotation(const std::filesystem::path& path);
void write_annotation(const std::filesystem::path& path, const Annotation& annotation);

/// Points from a to b at unit arc-length spacing, b included.
Points2d rasterize_segment(const Segment& segment);

/// Mean d_rms of the ground-truth edges w.r.t. the detection.
double consistency_error(std::span<const Points2d> gt_edges, const HPointd& detection);

/// Fraction of errors <= t for each threshold t.
std::vector<double> cumulative_histogram(std::span<const double> errors, std::span<const double> thresholds);

// 0, 0.5, ..., 20 px.
std::vector<double> default_error_thresholds();

/// Per-image mean of `run(seed)` over the seeds. Every run must report the
/// same number of images.
std::vector<double> trial_average(const std::function<std::vector<double>(std::uint64_t)>& run,
                                  std::span<const std::uint64_t> seeds);

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // starts at (0, 0), ends at (1, 1)
  double auc = 0.0;
};

/// ROC by descending score with tied scores grouped; trapezoidal AUC.
/// Throws SingleClass unless both labels occur.
RocCurve roc_auc(std::span<const std::pair<double, bool>> scored);

// Comparison measures for VP strength.
double edge_count_measure(std::span<const Edge> edges);
double edge_length_measure(std::span<const Edge> edges);

}  // namespace vpdet
