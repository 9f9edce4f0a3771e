#include "vpdet/contour.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <functional>

#include <json.hpp>

#include "vpdet/errors.hpp"

namespace vpdet {

namespace {

constexpr const char* kSidecarSchema = "vpdet.contour-sidecar/1";

// 8-neighborhood, 4-neighbors first so that chain walking prefers them.
constexpr std::array<std::array<int, 2>, 8> kNeighbors = {{
    {0, -1}, {1, 0}, {0, 1}, {-1, 0},    // N E S W
    {1, -1}, {1, 1}, {-1, 1}, {-1, -1},  // NE SE SW NW
}};

// Binary pixel grid with a one-pixel zero border around the image.
class Mask {
 public:
  Mask(int width, int height) : width_(width), height_(height), cells_(std::size_t(width + 2) * (height + 2), 0) {}

  int width() const { return width_; }
  int height() const { return height_; }

  bool get(int x, int y) const { return cells_[index(x, y)] != 0; }
  void set(int x, int y, bool on) { cells_[index(x, y)] = on ? 1 : 0; }

  int count_neighbors(int x, int y) const {
    int n = 0;
    for (const auto& d : kNeighbors) n += get(x + d[0], y + d[1]);
    return n;
  }

 private:
  std::size_t index(int x, int y) const { return std::size_t(y + 1) * (width_ + 2) + (x + 1); }

  int width_;
  int height_;
  std::vector<unsigned char> cells_;
};

// Zhang-Suen thinning.
void thin(Mask& mask) {
  const int w = mask.width(), h = mask.height();
  std::vector<std::pair<int, int>> removals;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      removals.clear();
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          if (!mask.get(x, y)) continue;
          // P2..P9 clockwise from north.
          const int p[8] = {mask.get(x, y - 1),     mask.get(x + 1, y - 1), mask.get(x + 1, y),
                            mask.get(x + 1, y + 1), mask.get(x, y + 1),     mask.get(x - 1, y + 1),
                            mask.get(x - 1, y),     mask.get(x - 1, y - 1)};
          int b = 0, a = 0;
          for (int i = 0; i < 8; ++i) {
            b += p[i];
            a += (p[i] == 0 && p[(i + 1) % 8] == 1);
          }
          if (b < 2 || b > 6 || a != 1) continue;
          if (pass == 0 && (p[0] * p[2] * p[4] != 0 || p[2] * p[4] * p[6] != 0)) continue;
          if (pass == 1 && (p[0] * p[2] * p[6] != 0 || p[0] * p[4] * p[6] != 0)) continue;
          removals.emplace_back(x, y);
        }
      for (const auto& [x, y] : removals) mask.set(x, y, false);
      changed = changed || !removals.empty();
    }
  }
}

// True if the set neighbors of (x, y) form a single 8-connected group
// inside the 3x3 window, i.e. removing the pixel keeps them connected.
bool neighbors_connected(const Mask& mask, int x, int y) {
  std::array<int, 8> members{};
  int count = 0;
  for (int i = 0; i < 8; ++i)
    if (mask.get(x + kNeighbors[i][0], y + kNeighbors[i][1])) members[count++] = i;
  if (count == 0) return false;
  std::array<bool, 8> reached{};
  reached[0] = true;
  bool grew = true;
  while (grew) {
    grew = false;
    for (int i = 0; i < count; ++i) {
      if (!reached[i]) continue;
      for (int j = 0; j < count; ++j) {
        if (reached[j]) continue;
        const auto& a = kNeighbors[members[i]];
        const auto& b = kNeighbors[members[j]];
        if (std::abs(a[0] - b[0]) <= 1 && std::abs(a[1] - b[1]) <= 1) {
          reached[j] = true;
          grew = true;
        }
      }
    }
  }
  for (int i = 0; i < count; ++i)
    if (!reached[i]) return false;
  return true;
}

// Drops the redundant corner pixels of 4-connected staircases that Zhang-Suen
// leaves behind; otherwise they read as junctions.
void remove_staircases(Mask& mask) {
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.get(x, y)) continue;
      const int n = mask.count_neighbors(x, y);
      if ((n == 2 || n == 3) && neighbors_connected(mask, x, y)) mask.set(x, y, false);
    }
}

struct Pixel {
  int x;
  int y;
};

bool raster_less(const Point2d& a, const Point2d& b) {
  return a.y() != b.y() ? a.y() < b.y() : a.x() < b.x();
}

Contour make_contour(Points2d points) {
  Contour c;
  c.arc_length = arc_length(points);
  c.points = std::move(points);
  return c;
}

}  // namespace

ContourSidecar read_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open sidecar " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    if (j.at("schema").get<std::string>() != kSidecarSchema) throw VersionMismatch("unsupported sidecar schema in " + path.string());
    ContourSidecar s;
    s.image_id = j.at("image_id").get<std::string>();
    s.width = j.at("width").get<int>();
    s.height = j.at("height").get<int>();
    if (j.contains("original_width")) s.original_width = j.at("original_width").get<int>();
    if (j.contains("original_height")) s.original_height = j.at("original_height").get<int>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed sidecar " + path.string() + ": " + e.what());
  }
}

void write_sidecar(const std::filesystem::path& path, const ContourSidecar& sidecar) {
  nlohmann::json j;
  j["schema"] = kSidecarSchema;
  j["image_id"] = sidecar.image_id;
  j["width"] = sidecar.width;
  j["height"] = sidecar.height;
  if (sidecar.original_width) j["original_width"] = *sidecar.original_width;
  if (sidecar.original_height) j["original_height"] = *sidecar.original_height;
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::filesystem::path default_sidecar_path(const std::filesystem::path& map_path) {
  auto p = map_path;
  p.replace_extension(".json");
  return p;
}

ContourMap load_contour_map(const std::filesystem::path& path, const std::optional<std::filesystem::path>& sidecar) {
  LoadedRaster raster = read_raster(path);
  ContourMap map;
  map.weights = raster.values / double(raster.max_value);
  map.image_id = path.stem().string();
  if (sidecar) {
    const ContourSidecar meta = read_sidecar(*sidecar);
    if (meta.width != map.width() || meta.height != map.height())
      throw DimensionMismatch("contour map is " + std::to_string(map.width()) + "x" + std::to_string(map.height()) +
                              " but sidecar declares " + std::to_string(meta.width) + "x" + std::to_string(meta.height));
    map.image_id = meta.image_id;
  }
  return map;
}

std::vector<Contour> trace_contours(const ContourMap& map, double w_min) {
  const int w = map.width(), h = map.height();
  Mask mask(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (map.weights(y, x) > 0.0 && map.weights(y, x) >= w_min) mask.set(x, y, true);

  thin(mask);
  remove_staircases(mask);

  Mask junction(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (mask.get(x, y) && mask.count_neighbors(x, y) >= 3) junction.set(x, y, true);

  Mask visited(w, h);
  auto is_free = [&](int x, int y) { return mask.get(x, y) && !junction.get(x, y) && !visited.get(x, y); };
  auto free_degree = [&](int x, int y) {
    int n = 0;
    for (const auto& d : kNeighbors) n += mask.get(x + d[0], y + d[1]) && !junction.get(x + d[0], y + d[1]);
    return n;
  };
  auto junction_neighbor = [&](const Point2d& p) -> std::optional<Point2d> {
    const int x = static_cast<int>(p.x()), y = static_cast<int>(p.y());
    for (const auto& d : kNeighbors)
      if (junction.get(x + d[0], y + d[1])) return Point2d(x + d[0], y + d[1]);
    return std::nullopt;
  };

  auto walk = [&](Pixel start) {
    Points2d chain;
    Pixel cur = start;
    visited.set(cur.x, cur.y, true);
    chain.emplace_back(cur.x, cur.y);
    for (;;) {
      bool moved = false;
      for (const auto& d : kNeighbors) {
        if (is_free(cur.x + d[0], cur.y + d[1])) {
          cur = {cur.x + d[0], cur.y + d[1]};
          visited.set(cur.x, cur.y, true);
          chain.emplace_back(cur.x, cur.y);
          moved = true;
          break;
        }
      }
      if (!moved) break;
    }
    return chain;
  };

  std::vector<Contour> contours;
  auto emit = [&](Points2d chain) {
    if (auto j = junction_neighbor(chain.front())) chain.insert(chain.begin(), *j);
    if (auto j = junction_neighbor(chain.back()); j && (chain.size() > 2 || *j != chain.front())) chain.push_back(*j);
    if (chain.size() < 2) return;
    if (raster_less(chain.back(), chain.front())) std::reverse(chain.begin(), chain.end());
    contours.push_back(make_contour(std::move(chain)));
  };

  // Open chains start at pixels with at most one non-junction neighbor.
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (is_free(x, y) && free_degree(x, y) <= 1) emit(walk({x, y}));

  // What remains are closed loops; open each at its weakest pixel.
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!is_free(x, y)) continue;
      std::vector<Pixel> component;
      std::vector<Pixel> stack{{x, y}};
      Mask seen(w, h);
      seen.set(x, y, true);
      while (!stack.empty()) {
        const Pixel p = stack.back();
        stack.pop_back();
        component.push_back(p);
        for (const auto& d : kNeighbors) {
          const int nx = p.x + d[0], ny = p.y + d[1];
          if (is_free(nx, ny) && !seen.get(nx, ny)) {
            seen.set(nx, ny, true);
            stack.push_back({nx, ny});
          }
        }
      }
      Pixel weakest = component.front();
      for (const Pixel& p : component) {
        const double wp = map.weights(p.y, p.x), ww = map.weights(weakest.y, weakest.x);
        if (wp < ww || (wp == ww && (p.y < weakest.y || (p.y == weakest.y && p.x < weakest.x)))) weakest = p;
      }
      emit(walk(weakest));
    }

  std::sort(contours.begin(), contours.end(), [](const Contour& a, const Contour& b) {
    if (a.front() != b.front()) return raster_less(a.front(), b.front());
    if (a.back() != b.back()) return raster_less(a.back(), b.back());
    return a.points.size() < b.points.size();
  });
  return contours;
}

std::vector<std::pair<std::size_t, std::size_t>> subdivision_ranges(const Points2d& chain, double alpha) {
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  if (chain.size() < 2) return ranges;

  std::vector<double> cumulative(chain.size(), 0.0);
  for (std::size_t i = 1; i < chain.size(); ++i) cumulative[i] = cumulative[i - 1] + (chain[i] - chain[i - 1]).norm();

  auto distance_to_chord = [&](const Point2d& p, const Point2d& a, const Point2d& b) {
    const Point2d ab = b - a;
    const double len2 = ab.squaredNorm();
    if (len2 == 0.0) return (p - a).norm();
    const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
    return (p - (a + t * ab)).norm();
  };

  std::function<void(std::size_t, std::size_t)> split = [&](std::size_t first, std::size_t last) {
    if (last - first + 1 < 3) {
      ranges.emplace_back(first, last);
      return;
    }
    std::size_t farthest = first + 1;
    double max_dist = -1.0;
    for (std::size_t i = first + 1; i < last; ++i) {
      const double d = distance_to_chord(chain[i], chain[first], chain[last]);
      if (d > max_dist) {
        max_dist = d;
        farthest = i;
      }
    }
    if (max_dist > alpha * (cumulative[last] - cumulative[first])) {
      split(first, farthest);
      split(farthest, last);
    } else {
      ranges.emplace_back(first, last);
    }
  };
  split(0, chain.size() - 1);
  return ranges;
}

std::vector<Edge> subdivide(const Points2d& chain, double alpha) {
  std::vector<Edge> edges;
  for (const auto& [first, last] : subdivision_ranges(chain, alpha)) {
    Points2d piece(chain.begin() + first, chain.begin() + last + 1);
    try {
      edges.emplace_back(std::move(piece));
    } catch (const DegenerateInput&) {
      // zero-length piece (repeated point), carries no direction
    }
  }
  return edges;
}

std::vector<Edge> subdivide(const Contour& contour, double alpha) { return subdivide(contour.points, alpha); }

std::vector<Edge> filter_edges(std::vector<Edge> edges, double l_min) {
  std::erase_if(edges, [l_min](const Edge& e) { return !(e.length() > l_min); });
  return edges;
}

namespace {

Raster gaussian_blur(const Raster& image, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  Eigen::ArrayXd kernel(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  kernel /= kernel.sum();

  const int h = static_cast<int>(image.rows()), w = static_cast<int>(image.cols());
  auto clampi = [](int v, int lo, int hi) { return std::min(std::max(v, lo), hi); };
  Raster tmp(h, w), out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * image(y, clampi(x + i, 0, w - 1));
      tmp(y, x) = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * tmp(clampi(y + i, 0, h - 1), x);
      out(y, x) = acc;
    }
  return out;
}

}  // namespace

ContourMap fallback_edge_map(const Raster& image, const FallbackParams& params) {
  const int h = static_cast<int>(image.rows()), w = static_cast<int>(image.cols());
  ContourMap map;
  map.weights = Raster::Zero(h, w);
  if (h < 3 || w < 3) return map;

  const Raster smooth = gaussian_blur(image, params.blur_sigma);
  Raster gx = Raster::Zero(h, w), gy = Raster::Zero(h, w), mag = Raster::Zero(h, w);
  for (int y = 1; y < h - 1; ++y)
    for (int x = 1; x < w - 1; ++x) {
      gx(y, x) = (smooth(y - 1, x + 1) + 2 * smooth(y, x + 1) + smooth(y + 1, x + 1) - smooth(y - 1, x - 1) -
                  2 * smooth(y, x - 1) - smooth(y + 1, x - 1)) / 8.0;
      gy(y, x) = (smooth(y + 1, x - 1) + 2 * smooth(y + 1, x) + smooth(y + 1, x + 1) - smooth(y - 1, x - 1) -
                  2 * smooth(y - 1, x) - smooth(y - 1, x + 1)) / 8.0;
      mag(y, x) = std::hypot(gx(y, x), gy(y, x));
    }

  const double max_mag = mag.maxCoeff();
  if (!(max_mag > 1e-9)) return map;
  const double high = params.high_ratio * max_mag;
  const double low = params.low_ratio * high;

  // Non-maximum suppression along the quantized gradient direction.
  Raster nms = Raster::Zero(h, w);
  for (int y = 1; y < h - 1; ++y)
    for (int x = 1; x < w - 1; ++x) {
      const double m = mag(y, x);
      if (m < low) continue;
      double angle = std::atan2(gy(y, x), gx(y, x)) * 180.0 / M_PI;
      if (angle < 0) angle += 180.0;
      int dx, dy;
      if (angle < 22.5 || angle >= 157.5) {
        dx = 1, dy = 0;
      } else if (angle < 67.5) {
        dx = 1, dy = 1;
      } else if (angle < 112.5) {
        dx = 0, dy = 1;
      } else {
        dx = -1, dy = 1;
      }
      if (m >= mag(y + dy, x + dx) && m > mag(y - dy, x - dx)) nms(y, x) = m;
    }

  // Hysteresis: weak pixels survive only when connected to a strong one.
  std::vector<Pixel> stack;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (nms(y, x) >= high) {
        map.weights(y, x) = 1.0;
        stack.push_back({x, y});
      }
  while (!stack.empty()) {
    const Pixel p = stack.back();
    stack.pop_back();
    for (const auto& d : kNeighbors) {
      const int nx = p.x + d[0], ny = p.y + d[1];
      if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
      if (map.weights(ny, nx) == 0.0 && nms(ny, nx) >= low) {
        map.weights(ny, nx) = 1.0;
        stack.push_back({nx, ny});
      }
    }
  }
  return map;
}

std::vector<Edge> contour_edges(const ContourMap& map, double w_min, double alpha, double l_min) {
  std::vector<Edge> edges;
  for (const Contour& c : trace_contours(map, w_min))
    for (Edge& e : subdivide(c, alpha)) edges.push_back(std::move(e));
  return filter_edges(std::move(edges), l_min);
}

std::vector<Edge> fallback_edges(const Raster& image, double alpha, double l_min, const FallbackParams& params) {
  return contour_edges(fallback_edge_map(image, params), 0.5, alpha, l_min);
}

}  // namespace vpdet
