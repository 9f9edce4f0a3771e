#include "vpdet/evaluation.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "vpdet/errors.hpp"

namespace vpdet {

namespace {
constexpr const char* kAnnotationSchema = "vpdet.annotation/1";
}

HPointd Annotation::gt_vp() const {
  if (segments.size() < 2) throw NoGroundTruth("annotation '" + image_id + "' has fewer than two segments");
  const HLined l1 = HLined::through(segments[0].a, segments[0].b);
  const HLined l2 = HLined::through(segments[1].a, segments[1].b);
  return intersect(l1, l2);
}

std::vector<Points2d> Annotation::gt_edges() const {
  std::vector<Points2d> edges;
  for (const auto& s : segments) edges.push_back(rasterize_segment(s));
  return edges;
}

Annotation read_annotation(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open annotation " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    if (j.at("schema").get<std::string>() != kAnnotationSchema)
      throw VersionMismatch("unsupported annotation schema in " + path.string());
    Annotation a;
    a.image_id = j.at("image_id").get<std::string>();
    a.width = j.at("width").get<int>();
    a.height = j.at("height").get<int>();
    a.has_dominant = j.at("has_dominant").get<bool>();
    for (const auto& s : j.at("segments")) {
      const auto v = s.get<std::vector<double>>();
      if (v.size() != 4) throw FormatError("segment must be [x1, y1, x2, y2] in " + path.string());
      a.segments.push_back({Point2d(v[0], v[1]), Point2d(v[2], v[3])});
    }
    if (a.has_dominant && a.segments.size() < 2)
      throw FormatError("annotation with a dominant VP needs at least two segments: " + path.string());
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed annotation " + path.string() + ": " + e.what());
  }
}

void write_annotation(const std::filesystem::path& path, const Annotation& annotation) {
  nlohmann::json j;
  j["schema"] = kAnnotationSchema;
  j["image_id"] = annotation.image_id;
  j["width"] = annotation.width;
  j["height"] = annotation.height;
  j["has_dominant"] = annotation.has_dominant;
  j["segments"] = nlohmann::json::array();
  for (const auto& s : annotation.segments) j["segments"].push_back({s.a.x(), s.a.y(), s.b.x(), s.b.y()});
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

Points2d rasterize_segment(const Segment& segment) {
  const Point2d d = segment.b - segment.a;
  const double len = d.norm();
  Points2d pts;
  if (len == 0.0) return {segment.a};
  const Point2d u = d / len;
  const int steps = static_cast<int>(std::floor(len));
  for (int k = 0; k <= steps; ++k) pts.push_back(segment.a + k * u);
  if (len - steps > 1e-9) pts.push_back(segment.b);
  return pts;
}

double consistency_error(std::span<const Points2d> gt_edges, const HPointd& detection) {
  if (gt_edges.empty()) throw NoGroundTruth("consistency error needs at least one ground-truth edge");
  double total = 0.0;
  for (const auto& e : gt_edges) total += d_rms(e, detection);
  return total / double(gt_edges.size());
}

std::vector<double> cumulative_histogram(std::span<const double> errors, std::span<const double> thresholds) {
  std::vector<double> sorted(errors.begin(), errors.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> curve;
  curve.reserve(thresholds.size());
  for (double t : thresholds) {
    if (sorted.empty()) {
      curve.push_back(0.0);
      continue;
    }
    const auto below = std::upper_bound(sorted.begin(), sorted.end(), t) - sorted.begin();
    curve.push_back(double(below) / double(sorted.size()));
  }
  return curve;
}

std::vector<double> default_error_thresholds() {
  std::vector<double> t;
  for (int i = 0; i <= 40; ++i) t.push_back(0.5 * i);
  return t;
}

std::vector<double> trial_average(const std::function<std::vector<double>(std::uint64_t)>& run,
                                  std::span<const std::uint64_t> seeds) {
  std::vector<double> sum;
  for (std::size_t t = 0; t < seeds.size(); ++t) {
    const std::vector<double> errors = run(seeds[t]);
    if (t == 0) {
      sum.assign(errors.size(), 0.0);
    } else if (errors.size() != sum.size()) {
      throw DimensionMismatch("trial " + std::to_string(t) + " reported a different number of images");
    }
    for (std::size_t i = 0; i < errors.size(); ++i) sum[i] += errors[i];
  }
  for (double& s : sum) s /= double(seeds.size());
  return sum;
}

RocCurve roc_auc(std::span<const std::pair<double, bool>> scored) {
  std::size_t positives = 0;
  for (const auto& s : scored) positives += s.second;
  const std::size_t negatives = scored.size() - positives;
  if (positives == 0 || negatives == 0) throw SingleClass("ROC needs both positive and negative samples");

  std::vector<std::pair<double, bool>> sorted(scored.begin(), scored.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  RocCurve curve;
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    const double score = sorted[i].first;
    for (; i < sorted.size() && sorted[i].first == score; ++i) (sorted[i].second ? tp : fp)++;
    const RocPoint next{score, double(fp) / negatives, double(tp) / positives};
    const RocPoint& prev = curve.points.back();
    curve.auc += (next.fpr - prev.fpr) * (next.tpr + prev.tpr) / 2.0;
    curve.points.push_back(next);
  }
  return curve;
}

double edge_count_measure(std::span<const Edge> edges) { return double(edges.size()); }

double edge_length_measure(std::span<const Edge> edges) {
  double total = 0.0;
  for (const auto& e : edges) total += e.length();
  return total;
}

}  // namespace vpdet
