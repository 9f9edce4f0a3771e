#pragma once

// Synthetic scenes with known vanishing points, generated by projecting
// 3D-parallel segments through a pinhole camera. Used as ground truth for
// tests, benchmarks and the `synth` command.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vpdet/contour.hpp"
#include "vpdet/evaluation.hpp"
#include "vpdet/geometry.hpp"

namespace vpdet {

struct PinholeCamera {
  double focal = 500.0;
  Point2d principal{250.0, 187.5};
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();  // world -> camera, centered at the origin

  Eigen::Matrix3d intrinsics() const;
  Eigen::Matrix<double, 3, 4> projection() const;
  // 3D point on the plane z_camera = 1 that images to `pixel`.
  Eigen::Vector3d back_project(const Point2d& pixel) const;
};

struct SceneSpec {
  std::string id = "scene";
  int width = 500;
  int height = 375;
  double sigma = 1.0;  // perpendicular pixel noise
  int n_inliers = 6;
  int n_outliers = 10;
  std::optional<Point2d> vp;  // drawn inside the image when unset
  double inlier_length_min = 70.0;
  double inlier_length_max = 180.0;
  double near_min = 15.0;  // VP distance of an inlier's near end
  double near_max = 80.0;
  double outlier_length_min = 50.0;
  double outlier_length_max = 150.0;
  double focal = 500.0;
  std::uint64_t seed = 0;
};

struct SyntheticEdge {
  Points2d points;             // noisy chain at ~1 px spacing
  Points2d clean;              // noise-free projection
  std::vector<double> depths;  // relative depth lambda of each clean point
  Point2d reference{0, 0};     // image of the lambda = 0 point
};

struct SyntheticScene {
  std::string id;
  int width = 0;
  int height = 0;
  double noise_sigma = 0.0;
  PinholeCamera camera;
  std::optional<Eigen::Vector3d> direction;  // 3D direction of the inliers
  std::optional<HPointd> gt_vp;              // projection of direction
  std::vector<SyntheticEdge> inliers;
  std::vector<SyntheticEdge> distractors;  // second convergent family, if any
  std::optional<HPointd> distractor_vp;
  std::vector<SyntheticEdge> outliers;

  // All noisy chains: inliers, distractors, outliers.
  std::vector<Points2d> chains() const;
  std::vector<Edge> inlier_edges() const;
  std::vector<Edge> distractor_edges() const;
  std::vector<Edge> outlier_edges() const;
  // Noise-free inlier segments as ground truth.
  Annotation annotation() const;
};

/// Scene with one convergent family plus random non-convergent outliers.
SyntheticScene generate_scene(const SceneSpec& spec);

/// Outliers only; no vanishing point.
SyntheticScene generate_clutter(const SceneSpec& spec);

struct TwoClusterSpec {
  SceneSpec base;  // base.n_inliers edges form the true family
  int n_distractors = 8;
  double distractor_length_min = 50.0;
  double distractor_length_max = 80.0;
  double distractor_near_min = 160.0;
  double distractor_near_max = 240.0;
  double min_vp_separation = 150.0;
};

/// Long near edges toward the true VP plus a more numerous family of short,
/// distant edges toward a second VP.
SyntheticScene generate_two_cluster_scene(const TwoClusterSpec& spec);

struct FarFamilySpec {
  SceneSpec base;  // base.n_outliers random edges; base.n_inliers unused
  int n_family = 8;
  double family_length_min = 60.0;
  double family_length_max = 160.0;
  double vp_distance_min = 1500.0;  // from the image center
  double vp_distance_max = 4000.0;
};

/// Outliers plus a family of edges converging far outside the image, as on
/// a facade seen nearly head-on. Much structure, but no dominant VP.
SyntheticScene generate_far_family_clutter(const FarFamilySpec& spec);

/// Contour map with every chain drawn as an 8-connected path.
ContourMap render_contour_map(const SyntheticScene& scene);

struct RoadImage {
  Raster image;
  Annotation annotation;  // the two road borders
};

/// Bright road wedge on a dark ground whose borders converge on `vp`.
RoadImage render_road_image(int width, int height, const Point2d& vp, std::uint64_t seed);

void write_scene_json(const std::filesystem::path& path, const SyntheticScene& scene);

}  // namespace vpdet
