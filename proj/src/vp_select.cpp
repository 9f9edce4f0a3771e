#include "vpdet/vp_select.hpp"

#include <algorithm>
#include <numeric>

namespace vpdet {

bool Frame::contains(const HPointd& p) const {
  if (p.is_ideal()) return false;
  const Point2d q = p.euclidean();
  return q.x() >= x_min && q.x() <= x_max && q.y() >= y_min && q.y() <= y_max;
}

Frame centered_frame(int width, int height, double extent) {
  const double cx = 0.5 * width, cy = 0.5 * height, half = 0.5 * extent;
  return {cx - half, cy - half, cx + half, cy + half};
}

double strength(const HPointd& vp, std::span<const Edge> edges, double tau) {
  if (vp.is_ideal()) return 0.0;
  const Point2d v = vp.euclidean();
  double total = 0.0;
  for (const Edge& e : edges)
    for (const Point2d& q : e.points()) total += 1.0 / ((q - v).norm() + tau);
  return total;
}

std::optional<std::size_t> select_dominant_index(std::span<const VPDetection> detections,
                                                 const SelectionConfig& config) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const VPDetection& d = detections[i];
    if (d.vp.is_ideal()) continue;
    if (config.frame && !config.frame->contains(d.vp)) continue;
    if (!(d.strength >= config.threshold)) continue;
    if (!best) {
      best = i;
      continue;
    }
    const VPDetection& b = detections[*best];
    if (d.strength > b.strength || (d.strength == b.strength && d.cluster_index < b.cluster_index)) best = i;
  }
  return best;
}

std::optional<VPDetection> select_dominant(std::span<const VPDetection> detections, const SelectionConfig& config) {
  if (auto i = select_dominant_index(detections, config)) return detections[*i];
  return std::nullopt;
}

std::vector<VPDetection> top_k(std::span<const VPDetection> detections, std::size_t k) {
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (detections[a].strength != detections[b].strength) return detections[a].strength > detections[b].strength;
    return detections[a].cluster_index < detections[b].cluster_index;
  });
  std::vector<VPDetection> out;
  for (std::size_t i = 0; i < std::min(k, order.size()); ++i) out.push_back(detections[order[i]]);
  return out;
}

double verification_score(std::span<const VPDetection> detections) {
  double best = 0.0;
  for (const auto& d : detections) best = std::max(best, d.strength);
  return best;
}

}  // namespace vpdet
