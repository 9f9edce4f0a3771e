#include "vpdet/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <Eigen/Geometry>
#include <json.hpp>

#include "vpdet/errors.hpp"

namespace vpdet {

Eigen::Matrix3d PinholeCamera::intrinsics() const {
  Eigen::Matrix3d k;
  k << focal, 0.0, principal.x(), 0.0, focal, principal.y(), 0.0, 0.0, 1.0;
  return k;
}

Eigen::Matrix<double, 3, 4> PinholeCamera::projection() const {
  Eigen::Matrix<double, 3, 4> rt = Eigen::Matrix<double, 3, 4>::Zero();
  rt.leftCols<3>() = rotation;
  return intrinsics() * rt;
}

Eigen::Vector3d PinholeCamera::back_project(const Point2d& pixel) const {
  return rotation.transpose() * intrinsics().inverse() * Eigen::Vector3d(pixel.x(), pixel.y(), 1.0);
}

namespace {

constexpr double kMargin = 2.0;
constexpr double kOutlierVpClearance = 25.0;
constexpr double kMinFamilyAngle = 10.0 * std::numbers::pi / 180.0;

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

bool inside(const Point2d& p, int width, int height) {
  return p.x() >= kMargin && p.x() <= width - 1 - kMargin && p.y() >= kMargin && p.y() <= height - 1 - kMargin;
}

PinholeCamera random_camera(Rng& rng, const SceneSpec& spec) {
  PinholeCamera cam;
  cam.focal = spec.focal;
  cam.principal = Point2d(0.5 * spec.width, 0.5 * spec.height);
  const double yaw = uniform(rng, -0.15, 0.15);
  const double pitch = uniform(rng, -0.15, 0.15);
  const double roll = uniform(rng, -0.1, 0.1);
  cam.rotation = (Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitZ()) * Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitX()) *
                  Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitY()))
                     .toRotationMatrix();
  return cam;
}

Point2d project(const Eigen::Matrix<double, 3, 4>& p, const Eigen::Vector3d& point) {
  const Eigen::Vector3d h = p * point.homogeneous();
  return h.hnormalized();
}

double angular_gap(double a, double b) {
  double d = std::fmod(std::abs(a - b), 2.0 * std::numbers::pi);
  return std::min(d, 2.0 * std::numbers::pi - d);
}

struct FamilyParams {
  int count = 0;
  double length_min = 0.0, length_max = 0.0;
  double near_min = 0.0, near_max = 0.0;
};

// Segments on 3D lines Q = A + lambda * D, with A on the plane z_camera = 1
// and D scaled to z_camera = 1, so that q = a + lambda * v homogeneously.
std::vector<SyntheticEdge> make_family(Rng& rng, const PinholeCamera& camera, const Point2d& vp,
                                       const FamilyParams& fp, double sigma, int width, int height) {
  const Eigen::Matrix<double, 3, 4> projection = camera.projection();
  const Eigen::Vector3d direction = camera.back_project(vp);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<SyntheticEdge> edges;
  std::vector<double> angles;
  double shrink = 1.0;
  int attempts = 0;
  while (static_cast<int>(edges.size()) < fp.count && shrink > 0.2) {
    if (++attempts > 400) {
      attempts = 0;
      shrink *= 0.8;
    }
    const double theta = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double length = shrink * uniform(rng, fp.length_min, fp.length_max);
    const double near = shrink * uniform(rng, fp.near_min, fp.near_max);
    const Point2d u(std::cos(theta), std::sin(theta));
    const double far = near + length;
    if (!inside(vp + near * u, width, height) || !inside(vp + far * u, width, height)) continue;
    if (std::any_of(angles.begin(), angles.end(), [&](double a) { return angular_gap(a, theta) < kMinFamilyAngle; }))
      continue;

    SyntheticEdge e;
    e.reference = vp + far * u;
    const Eigen::Vector3d anchor = camera.back_project(e.reference);
    const Point2d normal(-u.y(), u.x());
    const int steps = static_cast<int>(std::floor(length));
    for (int s = 0; s <= steps; ++s) {
      const double l_q = far - s;
      const double lambda = far / l_q - 1.0;
      const Point2d q = project(projection, anchor + lambda * direction);
      e.clean.push_back(q);
      e.depths.push_back(lambda);
      e.points.push_back(q + sigma * noise(rng) * normal);
    }
    angles.push_back(theta);
    edges.push_back(std::move(e));
  }
  return edges;
}

std::vector<SyntheticEdge> make_outliers(Rng& rng, const SceneSpec& spec, const std::vector<Point2d>& avoid) {
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<SyntheticEdge> edges;
  int attempts = 0;
  while (static_cast<int>(edges.size()) < spec.n_outliers && attempts < 100000) {
    ++attempts;
    const Point2d c(uniform(rng, 0.0, spec.width), uniform(rng, 0.0, spec.height));
    const double theta = uniform(rng, 0.0, std::numbers::pi);
    const double length = uniform(rng, spec.outlier_length_min, spec.outlier_length_max);
    const Point2d u(std::cos(theta), std::sin(theta));
    const Point2d a = c - 0.5 * length * u, b = c + 0.5 * length * u;
    if (!inside(a, spec.width, spec.height) || !inside(b, spec.width, spec.height)) continue;
    const HLined line = HLined::through(a, b);
    if (std::any_of(avoid.begin(), avoid.end(),
                    [&](const Point2d& v) { return point_line_distance(v, line) < kOutlierVpClearance; }))
      continue;

    SyntheticEdge e;
    e.reference = a;
    const Point2d normal(-u.y(), u.x());
    const int steps = static_cast<int>(std::floor(length));
    for (int s = 0; s <= steps; ++s) {
      const Point2d q = a + double(s) * u;
      e.clean.push_back(q);
      e.points.push_back(q + spec.sigma * noise(rng) * normal);
    }
    edges.push_back(std::move(e));
  }
  return edges;
}

Point2d default_vp(Rng& rng, const SceneSpec& spec) {
  return Point2d(uniform(rng, 0.2 * spec.width, 0.8 * spec.width), uniform(rng, 0.25 * spec.height, 0.55 * spec.height));
}

std::vector<Edge> to_edges(const std::vector<SyntheticEdge>& family) {
  std::vector<Edge> edges;
  for (const auto& e : family) edges.emplace_back(e.points);
  return edges;
}

}  // namespace

std::vector<Points2d> SyntheticScene::chains() const {
  std::vector<Points2d> out;
  for (const auto* family : {&inliers, &distractors, &outliers})
    for (const auto& e : *family) out.push_back(e.points);
  return out;
}

std::vector<Edge> SyntheticScene::inlier_edges() const { return to_edges(inliers); }
std::vector<Edge> SyntheticScene::distractor_edges() const { return to_edges(distractors); }
std::vector<Edge> SyntheticScene::outlier_edges() const { return to_edges(outliers); }

Annotation SyntheticScene::annotation() const {
  Annotation a;
  a.image_id = id;
  a.width = width;
  a.height = height;
  a.has_dominant = gt_vp.has_value();
  for (const auto& e : inliers) a.segments.push_back({e.clean.front(), e.clean.back()});
  return a;
}

SyntheticScene generate_scene(const SceneSpec& spec) {
  if (spec.n_inliers < 2) throw DegenerateInput("a synthetic scene needs at least two inlier edges");
  Rng rng(spec.seed);
  SyntheticScene scene;
  scene.id = spec.id;
  scene.width = spec.width;
  scene.height = spec.height;
  scene.noise_sigma = spec.sigma;
  scene.camera = random_camera(rng, spec);
  const Point2d vp = spec.vp ? *spec.vp : default_vp(rng, spec);
  scene.direction = scene.camera.back_project(vp);
  scene.gt_vp = HPointd(scene.camera.projection() * Eigen::Vector4d(scene.direction->x(), scene.direction->y(),
                                                                     scene.direction->z(), 0.0));
  const FamilyParams fp{spec.n_inliers, spec.inlier_length_min, spec.inlier_length_max, spec.near_min, spec.near_max};
  scene.inliers = make_family(rng, scene.camera, vp, fp, spec.sigma, spec.width, spec.height);
  scene.outliers = make_outliers(rng, spec, {vp});
  return scene;
}

SyntheticScene generate_clutter(const SceneSpec& spec) {
  Rng rng(spec.seed);
  SyntheticScene scene;
  scene.id = spec.id;
  scene.width = spec.width;
  scene.height = spec.height;
  scene.noise_sigma = spec.sigma;
  scene.camera = random_camera(rng, spec);
  scene.outliers = make_outliers(rng, spec, {});
  return scene;
}

SyntheticScene generate_two_cluster_scene(const TwoClusterSpec& spec) {
  const SceneSpec& base = spec.base;
  Rng rng(base.seed);
  SyntheticScene scene;
  scene.id = base.id;
  scene.width = base.width;
  scene.height = base.height;
  scene.noise_sigma = base.sigma;
  scene.camera = random_camera(rng, base);
  const Point2d vp = base.vp ? *base.vp : default_vp(rng, base);
  Point2d other = vp;
  for (int i = 0; i < 10000 && (other - vp).norm() < spec.min_vp_separation; ++i)
    other = Point2d(uniform(rng, 0.1 * base.width, 0.9 * base.width), uniform(rng, 0.1 * base.height, 0.9 * base.height));

  scene.direction = scene.camera.back_project(vp);
  scene.gt_vp = HPointd::finite(vp);
  scene.distractor_vp = HPointd::finite(other);
  const FamilyParams truth{base.n_inliers, base.inlier_length_min, base.inlier_length_max, base.near_min, base.near_max};
  const FamilyParams decoy{spec.n_distractors, spec.distractor_length_min, spec.distractor_length_max,
                           spec.distractor_near_min, spec.distractor_near_max};
  scene.inliers = make_family(rng, scene.camera, vp, truth, base.sigma, base.width, base.height);
  scene.distractors = make_family(rng, scene.camera, other, decoy, base.sigma, base.width, base.height);
  scene.outliers = make_outliers(rng, base, {vp, other});
  return scene;
}

SyntheticScene generate_far_family_clutter(const FarFamilySpec& spec) {
  const SceneSpec& base = spec.base;
  Rng rng(base.seed);
  SyntheticScene scene;
  scene.id = base.id;
  scene.width = base.width;
  scene.height = base.height;
  scene.noise_sigma = base.sigma;
  scene.camera = random_camera(rng, base);

  const Point2d center(0.5 * base.width, 0.5 * base.height);
  const double phi = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const Point2d vp = center + uniform(rng, spec.vp_distance_min, spec.vp_distance_max) * Point2d(std::cos(phi), std::sin(phi));
  scene.distractor_vp = HPointd::finite(vp);

  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<HLined> lines;
  for (int attempts = 0; static_cast<int>(scene.distractors.size()) < spec.n_family && attempts < 100000; ++attempts) {
    const Point2d c(uniform(rng, 0.0, base.width), uniform(rng, 0.0, base.height));
    const Point2d u = (c - vp).normalized();
    const double length = uniform(rng, spec.family_length_min, spec.family_length_max);
    const Point2d a = c - 0.5 * length * u, b = c + 0.5 * length * u;
    if (!inside(a, base.width, base.height) || !inside(b, base.width, base.height)) continue;
    // keep members on visibly distinct lines
    if (std::any_of(lines.begin(), lines.end(), [&](const HLined& l) { return point_line_distance(c, l) < 8.0; })) continue;
    lines.push_back(HLined::through(a, b));

    SyntheticEdge e;
    e.reference = a;
    const Point2d normal(-u.y(), u.x());
    const int steps = static_cast<int>(std::floor(length));
    for (int s = 0; s <= steps; ++s) {
      const Point2d q = a + double(s) * u;
      e.clean.push_back(q);
      e.points.push_back(q + base.sigma * noise(rng) * normal);
    }
    scene.distractors.push_back(std::move(e));
  }
  scene.outliers = make_outliers(rng, base, {});
  return scene;
}

namespace {

void draw_line(Raster& r, int x0, int y0, int x1, int y1, double weight) {
  const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  for (;;) {
    if (x0 >= 0 && y0 >= 0 && x0 < r.cols() && y0 < r.rows()) r(y0, x0) = std::max(r(y0, x0), weight);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

}  // namespace

ContourMap render_contour_map(const SyntheticScene& scene) {
  ContourMap map;
  map.image_id = scene.id;
  map.weights = Raster::Zero(scene.height, scene.width);
  const auto chains = scene.chains();
  for (std::size_t c = 0; c < chains.size(); ++c) {
    // Deterministic spread of UCM-like strengths in [0.4, 1].
    const double weight = 0.4 + 0.6 * std::fmod(0.5 + c * 0.6180339887498949, 1.0);
    const auto& pts = chains[c];
    for (std::size_t i = 0; i + 1 < pts.size(); ++i)
      draw_line(map.weights, static_cast<int>(std::lround(pts[i].x())), static_cast<int>(std::lround(pts[i].y())),
                static_cast<int>(std::lround(pts[i + 1].x())), static_cast<int>(std::lround(pts[i + 1].y())), weight);
  }
  return map;
}

RoadImage render_road_image(int width, int height, const Point2d& vp, std::uint64_t seed) {
  Rng rng(seed);
  const Point2d left_bottom(uniform(rng, 0.1, 0.3) * width, height);
  const Point2d right_bottom(uniform(rng, 0.7, 0.9) * width, height);
  const Point2d lane_bottom = 0.5 * (left_bottom + right_bottom);
  // the lane marking only starts some way down, like a painted stripe
  const double lane_top = vp.y() + uniform(rng, 0.35, 0.5) * (height - vp.y());

  auto border_x = [&](const Point2d& bottom, double y) {
    const double t = (y - bottom.y()) / (vp.y() - bottom.y());
    return bottom.x() + t * (vp.x() - bottom.x());
  };

  constexpr int kSamples = 4;
  std::normal_distribution<double> grain(0.0, 0.02);
  RoadImage out;
  out.image.resize(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      int road = 0, lane = 0;
      for (int sy = 0; sy < kSamples; ++sy)
        for (int sx = 0; sx < kSamples; ++sx) {
          const double px = x + (sx + 0.5) / kSamples, py = y + (sy + 0.5) / kSamples;
          if (py < vp.y()) continue;
          if (px >= border_x(left_bottom, py) && px <= border_x(right_bottom, py)) ++road;
          if (py >= lane_top && std::abs(px - border_x(lane_bottom, py)) <= 0.025 * (py - vp.y())) ++lane;
        }
      const double n = kSamples * kSamples;
      out.image(y, x) = std::clamp(0.15 + 0.45 * road / n + 0.35 * lane / n + grain(rng), 0.0, 1.0);
    }

  out.annotation.image_id = "road";
  out.annotation.width = width;
  out.annotation.height = height;
  out.annotation.has_dominant = true;
  const double top = vp.y() + 0.3 * (height - vp.y());
  out.annotation.segments = {{left_bottom, Point2d(border_x(left_bottom, top), top)},
                             {right_bottom, Point2d(border_x(right_bottom, top), top)}};
  return out;
}

void write_scene_json(const std::filesystem::path& path, const SyntheticScene& scene) {
  using nlohmann::json;
  auto points = [](const Points2d& pts) {
    json a = json::array();
    for (const auto& p : pts) a.push_back({p.x(), p.y()});
    return a;
  };
  auto family = [&](const std::vector<SyntheticEdge>& edges) {
    json a = json::array();
    for (const auto& e : edges) {
      json j;
      j["points"] = points(e.points);
      j["clean"] = points(e.clean);
      j["depths"] = e.depths;
      j["reference"] = {e.reference.x(), e.reference.y()};
      a.push_back(std::move(j));
    }
    return a;
  };

  json j;
  j["schema"] = "vpdet.scene/1";
  j["id"] = scene.id;
  j["width"] = scene.width;
  j["height"] = scene.height;
  j["noise_sigma"] = scene.noise_sigma;
  json cam;
  cam["focal"] = scene.camera.focal;
  cam["principal"] = {scene.camera.principal.x(), scene.camera.principal.y()};
  cam["rotation"] = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) cam["rotation"].push_back(scene.camera.rotation(r, c));
  j["camera"] = cam;
  if (scene.direction) j["direction"] = {scene.direction->x(), scene.direction->y(), scene.direction->z()};
  if (scene.gt_vp) j["gt_vp"] = {scene.gt_vp->coords().x(), scene.gt_vp->coords().y(), scene.gt_vp->coords().z()};
  if (scene.distractor_vp)
    j["distractor_vp"] = {scene.distractor_vp->coords().x(), scene.distractor_vp->coords().y(),
                          scene.distractor_vp->coords().z()};
  j["inliers"] = family(scene.inliers);
  j["distractors"] = family(scene.distractors);
  j["outliers"] = family(scene.outliers);

  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump() << '\n';
}

}  // namespace vpdet
