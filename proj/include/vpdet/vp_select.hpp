#pragma once

#include <optional>
#include <span>
#include <vector>

#include "vpdet/geometry.hpp"

namespace vpdet {

struct VPDetection {
  HPointd vp;
  std::vector<Edge> edges;
  double strength = 0.0;
  int rank = 0;
  std::size_t cluster_index = 0;
};

/// Axis-aligned region a dominant VP must fall in.
struct Frame {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  bool contains(const HPointd& p) const;
};

// extent x extent square centered on the image center.
Frame centered_frame(int width, int height, double extent = 1000.0);

struct SelectionConfig {
  double tau = 100.0;
  // Absolute strength threshold. With tau = 100 px the per-pixel weight is
  // at most 0.01, so 150 needs tens of thousands of supporting pixels.
  double threshold = 150.0;
  std::optional<Frame> frame;
};

/// Sum over every edge pixel q of 1 / (|q - vp| + tau). Points at infinity
/// score 0.
double strength(const HPointd& vp, std::span<const Edge> edges, double tau);

/// Highest-strength candidate inside the frame whose strength reaches the
/// threshold; ties go to the lower cluster index.
std::optional<VPDetection> select_dominant(std::span<const VPDetection> detections, const SelectionConfig& config);

// Index form of select_dominant.
std::optional<std::size_t> select_dominant_index(std::span<const VPDetection> detections,
                                                 const SelectionConfig& config);

/// The k strongest detections, descending; equal strengths keep cluster order.
std::vector<VPDetection> top_k(std::span<const VPDetection> detections, std::size_t k);

/// Max strength over candidates, 0 without candidates.
double verification_score(std::span<const VPDetection> detections);

}  // namespace vpdet
