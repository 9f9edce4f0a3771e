#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numeric>

#include "oracles.hpp"
#include "vpdet/errors.hpp"
#include "vpdet/evaluation.hpp"
#include "vpdet/synthetic.hpp"
#include "vpdet/vp_select.hpp"

using namespace vpdet;
namespace fs = std::filesystem;

TEST_CASE("annotation") {
  Annotation a;
  a.image_id = "img";
  a.width = 500;
  a.height = 375;
  a.segments = {{{0, 0}, {250, 100}}, {{500, 0}, {250, 100}}, {{100, 375}, {200, 200}}};
  CHECK((a.gt_vp().euclidean() - Point2d(250, 100)).norm() < 1e-9);

  const fs::path p = fs::temp_directory_path() / "vpdet_ann.json";
  write_annotation(p, a);
  const Annotation b = read_annotation(p);
  CHECK(b.image_id == "img");
  CHECK(b.width == 500);
  CHECK(b.segments.size() == 3);
  CHECK(b.segments[2].b == Point2d(200, 200));
  CHECK(b.has_dominant);

  std::ofstream(p) << R"({"schema": "vpdet.annotation/1", "image_id": "x", "width": 5, "height": 5, "segments": [[0,0,1,1]], "has_dominant": true})";
  CHECK_THROWS_AS(read_annotation(p), FormatError);  // needs two segments
  std::ofstream(p) << "{not json";
  CHECK_THROWS_AS(read_annotation(p), FormatError);
}

TEST_CASE("rasterize_segment") {
  const Points2d r = rasterize_segment({{0, 0}, {10, 0}});
  CHECK(r.size() == 11);
  CHECK(r.back() == Point2d(10, 0));
  const Points2d s = rasterize_segment({{0, 0}, {3, 4}});
  CHECK(s.size() == 6);
  for (std::size_t i = 1; i < s.size(); ++i) CHECK((s[i] - s[i - 1]).norm() <= 1.0 + 1e-12);
  CHECK(rasterize_segment({{2, 2}, {2.4, 2}}).size() == 2);
}

TEST_CASE("consistency_error") {
  const std::vector<Points2d> gt = {rasterize_segment({{0, 0}, {250, 100}}), rasterize_segment({{500, 0}, {250, 100}})};
  CHECK(consistency_error(gt, HPointd::finite(250, 100)) < 1e-9);
  CHECK_THROWS_AS(consistency_error({}, HPointd::finite(0, 0)), NoGroundTruth);

  // two edges whose d_rms against the origin are 1 and 3 (ideal: spread across direction)
  const std::vector<Points2d> spread = {{{0, 1}, {5, -1}}, {{0, 3}, {9, -3}}};
  CHECK(consistency_error(spread, HPointd::at_infinity(1, 0)) == doctest::Approx(2.0));

  oracle::Gen g(12);
  for (int t = 0; t < 100; ++t) {
    std::vector<Points2d> edges;
    for (int k = 0; k < g.integer(1, 5); ++k) edges.push_back(g.noisy_segment(g.integer(2, 50), 2.0));
    const Point2d v(g.uniform(-300, 800), g.uniform(-300, 800));
    double want = 0;
    for (const auto& e : edges) want += oracle::angle_sweep_drms({e.begin(), e.end()}, v);
    want /= edges.size();
    CHECK(std::abs(consistency_error(edges, HPointd::finite(v)) - want) < 1e-6);
    CHECK(consistency_error(gt, HPointd::finite(250, 100)) <= consistency_error(gt, HPointd::finite(v)));
  }
}

TEST_CASE("cumulative_histogram") {
  const std::vector<double> e = {1, 2, 3};
  const std::vector<double> t = {0.5, 2, 10};
  const auto c = cumulative_histogram(e, t);
  CHECK(c[0] == 0.0);
  CHECK(c[1] == doctest::Approx(2.0 / 3));
  CHECK(c[2] == 1.0);
  const auto th = default_error_thresholds();
  CHECK(th.size() == 41);
  CHECK(th.front() == 0.0);
  CHECK(th.back() == 20.0);
  const std::vector<double> inf = {std::numeric_limits<double>::infinity(), 0.0};
  const auto ci = cumulative_histogram(inf, th);
  CHECK(std::is_sorted(ci.begin(), ci.end()));
  CHECK(ci.back() == 0.5);
}

TEST_CASE("trial_average") {
  const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  const auto mean = trial_average([](std::uint64_t s) { return std::vector<double>{double(s), 2.0 * s, 7.0}; }, seeds);
  CHECK(mean == std::vector<double>{3.0, 6.0, 7.0});
  const std::vector<std::uint64_t> one = {9};
  CHECK(trial_average([](std::uint64_t) { return std::vector<double>{4, 5}; }, one) == std::vector<double>{4, 5});
  CHECK_THROWS(trial_average([](std::uint64_t s) { return std::vector<double>(s, 0.0); }, seeds));
}

TEST_CASE("roc_auc") {
  using S = std::vector<std::pair<double, bool>>;
  CHECK(roc_auc(S{{3, true}, {2, true}, {1, false}, {0, false}}).auc == 1.0);
  CHECK(roc_auc(S{{1, true}, {1, false}}).auc == 0.5);
  CHECK_THROWS_AS(roc_auc(S{{1, true}, {2, true}}), SingleClass);

  const RocCurve c = roc_auc(S{{0.9, true}, {0.8, false}, {0.7, true}, {0.1, false}});
  CHECK(c.points.front().fpr == 0.0);
  CHECK(c.points.front().tpr == 0.0);
  CHECK(c.points.back().fpr == 1.0);
  CHECK(c.points.back().tpr == 1.0);
  CHECK(c.auc == doctest::Approx(0.75));

  oracle::Gen g(13);
  for (int t = 0; t < 50; ++t) {
    S s, neg;
    for (int i = 0; i < g.integer(2, 60); ++i) s.emplace_back(double(g.integer(0, 10)), g.coin());
    s.emplace_back(1.0, true), s.emplace_back(2.0, false);
    for (auto [x, l] : s) neg.emplace_back(-x, l);
    const double auc = roc_auc(s).auc;
    CHECK(auc == doctest::Approx(oracle::pairwise_auc(s)).epsilon(1e-12));
    CHECK(roc_auc(neg).auc == doctest::Approx(1.0 - auc).epsilon(1e-12));
  }

  S noise;
  for (int i = 0; i < 4000; ++i) noise.emplace_back(g.uniform(0, 1), g.coin());
  CHECK(std::abs(roc_auc(noise).auc - 0.5) < 0.05);
}

TEST_CASE("synthetic scenes") {
  SceneSpec spec;
  spec.seed = 4;
  SUBCASE("noise free scenes are exactly consistent") {
    spec.sigma = 0;
    spec.n_outliers = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      spec.seed = seed;
      const SyntheticScene s = generate_scene(spec);
      REQUIRE(s.gt_vp);
      CHECK(s.inliers.size() == 6);
      CHECK(s.outliers.empty());
      for (const auto& e : s.inlier_edges()) CHECK(d_rms(e, *s.gt_vp) <= 1e-6);
      // gt_vp = P D
      const Eigen::Vector3d pd = s.camera.projection() * Eigen::Vector4d(s.direction->x(), s.direction->y(), s.direction->z(), 0);
      CHECK((HPointd(pd).coords() - s.gt_vp->coords()).norm() < 1e-9);
      CHECK(s.gt_vp->euclidean().x() >= 0);
      CHECK(s.gt_vp->euclidean().x() <= 500);
    }
  }
  SUBCASE("relative depth identity") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      spec.seed = seed;
      const SyntheticScene s = generate_scene(spec);
      const Point2d v = s.gt_vp->euclidean();
      for (const auto& e : s.inliers) {
        const double la = (e.reference - v).norm();
        REQUIRE(e.depths.size() == e.clean.size());
        for (std::size_t i = 0; i < e.clean.size(); ++i)
          CHECK(std::abs(e.depths[i] - (la / (e.clean[i] - v).norm() - 1.0)) < 1e-6);
      }
    }
  }
  SUBCASE("determinism and counts") {
    const SyntheticScene a = generate_scene(spec), b = generate_scene(spec);
    REQUIRE(a.chains().size() == 16);
    for (std::size_t i = 0; i < 16; ++i) CHECK(a.chains()[i] == b.chains()[i]);
    const fs::path p1 = fs::temp_directory_path() / "vpdet_s1.json", p2 = fs::temp_directory_path() / "vpdet_s2.json";
    write_scene_json(p1, a), write_scene_json(p2, b);
    std::ifstream f1(p1), f2(p2);
    CHECK(std::string(std::istreambuf_iterator<char>(f1), {}) == std::string(std::istreambuf_iterator<char>(f2), {}));

    for (const auto& e : a.outlier_edges()) CHECK(d_rms(e, *a.gt_vp) > 3.0);
    for (const auto& c : a.chains())
      for (const auto& p : c) {
        CHECK(p.x() >= 0);
        CHECK(p.x() <= 500);
        CHECK(p.y() >= 0);
        CHECK(p.y() <= 375);
      }
    spec.n_inliers = 1;
    CHECK_THROWS(generate_scene(spec));
  }
  SUBCASE("annotation from a scene") {
    const SyntheticScene s = generate_scene(spec);
    const Annotation a = s.annotation();
    CHECK(a.has_dominant);
    CHECK(a.segments.size() == 6);
    CHECK((a.gt_vp().euclidean() - s.gt_vp->euclidean()).norm() < 1e-6);
    CHECK(consistency_error(a.gt_edges(), *s.gt_vp) < 1e-6);
  }
  SUBCASE("clutter and two-cluster scenes") {
    const SyntheticScene c = generate_clutter(spec);
    CHECK_FALSE(c.gt_vp);
    CHECK_FALSE(c.annotation().has_dominant);
    CHECK(c.outliers.size() == 10);

    TwoClusterSpec ts;
    ts.base = spec;
    const SyntheticScene t = generate_two_cluster_scene(ts);
    REQUIRE(t.distractor_vp);
    CHECK(t.distractors.size() == 8);
    CHECK((t.distractor_vp->euclidean() - t.gt_vp->euclidean()).norm() >= 150);
    double true_len = 0, distractor_len = 0;
    for (const auto& e : t.inlier_edges()) true_len += e.length();
    for (const auto& e : t.distractor_edges()) distractor_len += e.length();
    CHECK(t.distractors.size() > t.inliers.size());
    CHECK(true_len / t.inliers.size() > distractor_len / t.distractors.size());

    FarFamilySpec fs_;
    fs_.base = spec;
    const SyntheticScene f = generate_far_family_clutter(fs_);
    CHECK_FALSE(f.gt_vp);
    CHECK_FALSE(f.annotation().has_dominant);
    REQUIRE(f.distractor_vp);
    const Point2d off = f.distractor_vp->euclidean() - Point2d(250, 187.5);
    CHECK(off.norm() >= 1500);
    CHECK(off.norm() <= 4000);
    CHECK(f.distractors.size() == 8);
    CHECK(f.outliers.size() == 10);
    for (const auto& e : f.distractor_edges()) CHECK(d_rms(e, *f.distractor_vp) < 4.0);
    // far VP: the family barely registers in strength
    CHECK(strength(*f.distractor_vp, f.distractor_edges(), 100.0) < 0.5);
  }
  SUBCASE("contour map rendering") {
    const SyntheticScene s = generate_scene(spec);
    const ContourMap m = render_contour_map(s);
    CHECK(m.width() == 500);
    CHECK(m.height() == 375);
    CHECK(m.weights.maxCoeff() <= 1.0);
    CHECK(m.weights.minCoeff() >= 0.0);
    CHECK((m.weights > 0).count() > 500);
  }
  SUBCASE("road image") {
    const RoadImage r = render_road_image(500, 375, {260, 120}, 3);
    CHECK(r.image.cols() == 500);
    CHECK(r.image.rows() == 375);
    CHECK(r.annotation.segments.size() == 2);
    CHECK((r.annotation.gt_vp().euclidean() - Point2d(260, 120)).norm() < 1e-6);
  }
}
