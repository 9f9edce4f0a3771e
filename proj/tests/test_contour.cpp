#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "oracles.hpp"
#include "vpdet/contour.hpp"
#include "vpdet/errors.hpp"
#include "vpdet/image.hpp"

using namespace vpdet;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("vpdet_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// 8-connected digital line, both ends included.
std::vector<std::pair<int, int>> digital_line(int x0, int y0, int x1, int y1) {
  std::vector<std::pair<int, int>> px;
  const int n = std::max(std::abs(x1 - x0), std::abs(y1 - y0));
  for (int i = 0; i <= n; ++i) {
    const double t = n ? double(i) / n : 0.0;
    px.emplace_back(int(std::lround(x0 + t * (x1 - x0))), int(std::lround(y0 + t * (y1 - y0))));
  }
  return px;
}

ContourMap blank(int w, int h) { return {"m", Raster::Zero(h, w)}; }

void draw(ContourMap& m, const std::vector<std::pair<int, int>>& px, double w = 1.0) {
  for (auto [x, y] : px) m.weights(y, x) = w;
}

std::size_t count_pixels(const ContourMap& m) { return std::size_t((m.weights > 0).count()); }

std::set<std::pair<int, int>> chain_pixels(const std::vector<Contour>& cs) {
  std::set<std::pair<int, int>> s;
  for (const auto& c : cs)
    for (const auto& p : c.points) s.emplace(int(std::lround(p.x())), int(std::lround(p.y())));
  return s;
}

bool eight_connected(const Contour& c) {
  for (std::size_t i = 1; i < c.points.size(); ++i) {
    const Point2d d = (c.points[i] - c.points[i - 1]).cwiseAbs();
    if (d.maxCoeff() != 1.0 && !(d.x() == 1 && d.y() == 1)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("contour map loading") {
  const fs::path dir = temp_dir("load");
  Raster r = Raster::Zero(4, 6);
  r(1, 2) = 1.0;
  r(3, 5) = 0.5;
  write_pgm(dir / "a.pgm", r);
  write_sidecar(dir / "a.json", {"img_a", 6, 4, 1200, 800});

  const ContourMap m = load_contour_map(dir / "a.pgm", dir / "a.json");
  CHECK(m.image_id == "img_a");
  CHECK(m.width() == 6);
  CHECK(m.height() == 4);
  CHECK(m.weights(1, 2) == 1.0);
  CHECK(m.weights(3, 5) == doctest::Approx(128.0 / 255.0));
  CHECK(m.weights.minCoeff() >= 0.0);

  const ContourSidecar s = read_sidecar(dir / "a.json");
  CHECK(s.original_width == 1200);
  CHECK(s.original_height == 800);

  SUBCASE("16-bit") {
    write_pgm(dir / "b.pgm", r, 65535);
    const ContourMap m16 = load_contour_map(dir / "b.pgm");
    CHECK(m16.weights(1, 2) == 1.0);
    CHECK(m16.weights(3, 5) == doctest::Approx(0.5).epsilon(1e-4));
    CHECK(m16.image_id == "b");
  }
  SUBCASE("sidecar dimension mismatch") {
    write_sidecar(dir / "bad.json", {"img_a", 7, 4, std::nullopt, std::nullopt});
    CHECK_THROWS_AS(load_contour_map(dir / "a.pgm", dir / "bad.json"), DimensionMismatch);
  }
  SUBCASE("not an image") {
    std::ofstream(dir / "junk.pgm") << "hello";
    CHECK_THROWS_AS(load_contour_map(dir / "junk.pgm"), FormatError);
    CHECK_THROWS_AS(load_contour_map(dir / "missing.pgm"), FormatError);
  }
  SUBCASE("default sidecar path") { CHECK(default_sidecar_path("x/y/m.png") == fs::path("x/y/m.json")); }
}

TEST_CASE("trace_contours basics") {
  SUBCASE("all zero") { CHECK(trace_contours(blank(30, 20), 0.1).empty()); }
  SUBCASE("single straight segment") {
    ContourMap m = blank(100, 50);
    draw(m, digital_line(5, 10, 90, 30));
    const auto cs = trace_contours(m, 0.1);
    REQUIRE(cs.size() == 1);
    CHECK(cs[0].points.size() == count_pixels(m));
    CHECK(eight_connected(cs[0]));
    CHECK(cs[0].arc_length == doctest::Approx(arc_length(cs[0].points)));
  }
  SUBCASE("weights below w_min are dropped") {
    ContourMap m = blank(100, 50);
    draw(m, digital_line(5, 10, 90, 10), 0.05);
    CHECK(trace_contours(m, 0.1).empty());
    CHECK(trace_contours(m, 0.0).size() == 1);
  }
  SUBCASE("plus figure splits at the junction") {
    ContourMap m = blank(61, 61);
    draw(m, digital_line(5, 30, 55, 30));
    draw(m, digital_line(30, 5, 30, 55));
    const auto cs = trace_contours(m, 0.1);
    CHECK(cs.size() == 4);
    for (const auto& c : cs) {
      CHECK(eight_connected(c));
      // every arm runs into the junction cluster around the center
      const double reach = std::min((c.front() - Point2d(30, 30)).norm(), (c.back() - Point2d(30, 30)).norm());
      CHECK(reach <= 1.0);
    }
    CHECK(double(chain_pixels(cs).size()) >= 0.99 * double(count_pixels(m)));
  }
  SUBCASE("closed loop is cut at its weakest pixel") {
    ContourMap m = blank(60, 60);
    for (auto seg : {digital_line(10, 10, 50, 10), digital_line(50, 10, 50, 50), digital_line(50, 50, 10, 50),
                     digital_line(10, 50, 10, 10)})
      draw(m, seg, 0.9);
    m.weights(50, 30) = 0.3;
    const auto cs = trace_contours(m, 0.1);
    REQUIRE(cs.size() == 1);
    CHECK(eight_connected(cs[0]));
    const auto& pts = cs[0].points;
    std::set<std::pair<int, int>> uniq;
    for (const auto& p : pts) uniq.emplace(int(p.x()), int(p.y()));
    CHECK(uniq.size() == pts.size());
    // the weak pixel is gone from the interior: it sits at an end or was removed
    const auto is_weak = [](const Point2d& p) { return p.x() == 30 && p.y() == 50; };
    for (std::size_t i = 1; i + 1 < pts.size(); ++i) CHECK_FALSE(is_weak(pts[i]));
  }
}

TEST_CASE("trace_contours recovers drawn polylines") {
  SUBCASE("two known polylines") {
    ContourMap m = blank(200, 150);
    draw(m, digital_line(10, 20, 120, 40));
    draw(m, digital_line(120, 40, 180, 100));
    draw(m, digital_line(20, 130, 150, 120));
    const auto cs = trace_contours(m, 0.1);
    CHECK(cs.size() == 2);
    CHECK(double(chain_pixels(cs).size()) >= 0.99 * double(count_pixels(m)));
  }
  SUBCASE("random separated polylines") {
    oracle::Gen g(21);
    for (int trial = 0; trial < 20; ++trial) {
      const int k = g.integer(1, 6);
      ContourMap m = blank(400, 7 + 50 * k);
      for (int i = 0; i < k; ++i) {
        // each polyline lives in its own 40-px band
        const int y0 = 10 + 50 * i;
        int x = g.integer(5, 40), y = y0 + g.integer(0, 35);
        const int corners = g.integer(1, 4);
        for (int c = 0; c < corners; ++c) {
          const int nx = std::min(395, x + g.integer(30, 110)), ny = y0 + g.integer(0, 35);
          draw(m, digital_line(x, y, nx, ny), g.uniform(0.2, 1.0));
          x = nx, y = ny;
        }
      }
      const auto cs = trace_contours(m, 0.1);
      CHECK(cs.size() == std::size_t(k));
    }
  }
}

TEST_CASE("trace_contours output is deterministic and node-disjoint away from junctions") {
  ContourMap m = blank(80, 80);
  draw(m, digital_line(5, 40, 75, 40));
  draw(m, digital_line(40, 5, 40, 75));
  draw(m, digital_line(5, 5, 30, 25));
  const auto a = trace_contours(m, 0.1), b = trace_contours(m, 0.1);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].points == b[i].points);
  for (std::size_t i = 1; i < a.size(); ++i)
    CHECK(std::make_pair(a[i - 1].front().y(), a[i - 1].front().x()) <= std::make_pair(a[i].front().y(), a[i].front().x()));

  std::map<std::pair<int, int>, int> uses;
  for (const auto& c : a)
    for (std::size_t i = 1; i + 1 < c.points.size(); ++i) ++uses[{int(c.points[i].x()), int(c.points[i].y())}];
  for (const auto& [p, n] : uses) CHECK(n == 1);
}

TEST_CASE("subdivide") {
  SUBCASE("straight chain") {
    Points2d c;
    for (int i = 0; i <= 100; ++i) c.emplace_back(i, 7);
    CHECK(subdivide(c, 0.05).size() == 1);
  }
  SUBCASE("L shape") {
    Points2d c;
    for (int i = 0; i <= 50; ++i) c.emplace_back(i, 0);
    for (int i = 1; i <= 50; ++i) c.emplace_back(50, i);
    const auto edges = subdivide(c, 0.05);
    REQUIRE(edges.size() == 2);
    CHECK(edges[0].points().back() == Point2d(50, 0));
    CHECK(edges[1].points().front() == Point2d(50, 0));
  }
  SUBCASE("shallow arc") {
    const double r = 2000.0, half = std::asin(50.0 / r);
    Points2d c;
    for (int i = 0; i <= 100; ++i) {
      const double t = -half + 2 * half * i / 100;
      c.emplace_back(r * std::sin(t), r * std::cos(t));
    }
    const double sagitta = r - std::sqrt(r * r - 50.0 * 50.0);
    CHECK(sagitta == doctest::Approx(0.625).epsilon(1e-3));
    CHECK(subdivide(c, 0.05).size() == 1);
  }
  SUBCASE("short chains") {
    CHECK(subdivide(Points2d{{0, 0}, {1, 1}}, 0.05).size() == 1);
    CHECK(subdivide(Points2d{{0, 0}}, 0.05).empty());
  }
}

TEST_CASE("subdivide properties on random polylines") {
  oracle::Gen g(8);
  for (int trial = 0; trial < 100; ++trial) {
    const Points2d chain = g.polyline(g.integer(2, 6));
    const double alpha = g.uniform(0.01, 0.2);
    const auto ranges = subdivision_ranges(chain, alpha);

    std::vector<std::pair<std::size_t, std::size_t>> want;
    oracle::naive_split(chain, 0, chain.size() - 1, alpha, want);
    CHECK(ranges == want);

    // pieces tile the chain, sharing split points
    REQUIRE_FALSE(ranges.empty());
    CHECK(ranges.front().first == 0);
    CHECK(ranges.back().second == chain.size() - 1);
    for (std::size_t i = 1; i < ranges.size(); ++i) CHECK(ranges[i].first == ranges[i - 1].second);

    for (const auto& [lo, hi] : ranges) {
      if (hi - lo + 1 < 3) continue;
      double arc = 0.0, dev = 0.0;
      for (std::size_t i = lo + 1; i <= hi; ++i) arc += (chain[i] - chain[i - 1]).norm();
      for (std::size_t i = lo; i <= hi; ++i) dev = std::max(dev, oracle::dist_to_segment(chain[i], chain[lo], chain[hi]));
      CHECK(dev <= alpha * arc + 1e-9);
    }

    for (double s : {0.5, 2.0, 3.0}) {
      Points2d scaled;
      for (const auto& p : chain) scaled.push_back(s * p);
      CHECK(subdivision_ranges(scaled, alpha) == ranges);
    }
  }
}

TEST_CASE("filter_edges") {
  const auto make = [](double len) { return Edge({{0, 0}, {len, 0}}); };
  const std::vector<Edge> edges = {make(10), make(39), make(41)};
  const auto kept = filter_edges(edges, 40);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].length() == 41);
  CHECK(filter_edges(edges, 0).size() == 3);
  CHECK(filter_edges(edges, 100).empty());
  CHECK(filter_edges({make(40)}, 40).empty());
}

TEST_CASE("fallback edges") {
  SUBCASE("blank image has no edges") {
    CHECK(fallback_edges(Raster::Constant(100, 120, 0.5), 0.05, 40).empty());
    CHECK(count_pixels(fallback_edge_map(Raster::Zero(50, 50))) == 0);
  }
  SUBCASE("a step edge yields one long straight edge") {
    Raster img = Raster::Zero(100, 200);
    img.leftCols(100).setConstant(1.0);
    const auto edges = fallback_edges(img, 0.05, 40);
    REQUIRE_FALSE(edges.empty());
    double longest = 0;
    for (const auto& e : edges) {
      longest = std::max(longest, e.length());
      for (const auto& p : e.points()) CHECK(std::abs(p.x() - 99.5) <= 1.0);
    }
    CHECK(longest > 80);
  }
}

TEST_CASE("raster io round trip") {
  const fs::path dir = temp_dir("raster");
  Raster r(3, 4);
  r << 0, 0.2, 0.4, 0.6, 0.8, 1, 0, 0.5, 1, 1, 1, 0;
  write_pgm(dir / "r.pgm", r);
  const LoadedRaster l = read_raster(dir / "r.pgm");
  CHECK(l.max_value == 255);
  CHECK((l.values / 255.0 - r).abs().maxCoeff() <= 0.5 / 255.0 + 1e-12);

  CHECK(resize_longer_side(Raster::Zero(50, 100), 500).cols() == 500);
  CHECK(resize_longer_side(Raster::Zero(50, 100), 500).rows() == 250);
  const Raster half = resample(Raster::Constant(10, 10, 0.7), 5, 5);
  CHECK((half - 0.7).abs().maxCoeff() < 1e-12);
}
