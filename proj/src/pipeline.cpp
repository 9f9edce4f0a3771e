#include "vpdet/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "vpdet/errors.hpp"

namespace vpdet {

namespace {

constexpr const char* kDetectionSchema = "vpdet.detections/1";

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
bool parse_number(const std::string& text, T& out) {
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

bool parse_bool(const std::string& text, bool& out) {
  if (text == "true" || text == "1" || text == "yes") return out = true, true;
  if (text == "false" || text == "0" || text == "no") return out = false, true;
  return false;
}

using Setter = std::function<bool(PipelineConfig&, const std::string&)>;

const std::vector<std::pair<std::string, Setter>>& setters() {
  static const std::vector<std::pair<std::string, Setter>> table = {
      {"alpha", [](PipelineConfig& c, const std::string& v) { return parse_number(v, c.alpha) && c.alpha > 0; }},
      {"l_min", [](PipelineConfig& c, const std::string& v) { return parse_number(v, c.l_min) && c.l_min >= 0; }},
      {"phi", [](PipelineConfig& c, const std::string& v) { return parse_number(v, c.phi) && c.phi > 0; }},
      {"M", [](PipelineConfig& c, const std::string& v) { return parse_number(v, c.hypotheses) && c.hypotheses >= 1; }},
      {"seed", [](PipelineConfig& c, const std::string& v) { return parse_number(v, c.seed); }},
      {"tau", [](PipelineConfig& c, const std::string& v) { return parse_number(v, c.tau) && c.tau > 0; }},
      {"threshold_T", [](PipelineConfig& c, const std::string& v) { return parse_number(v, c.threshold) && c.threshold >= 0; }},
      {"w_min", [](PipelineConfig& c, const std::string& v) { return parse_number(v, c.w_min) && c.w_min >= 0 && c.w_min <= 1; }},
      {"gamma1", [](PipelineConfig& c, const std::string& v) { return parse_number(v, c.gamma1); }},
      {"gamma2", [](PipelineConfig& c, const std::string& v) { return parse_number(v, c.gamma2); }},
      {"L", [](PipelineConfig& c, const std::string& v) { return parse_number(v, c.pyramid_levels) && c.pyramid_levels >= 0 && c.pyramid_levels <= 12; }},
      {"len", [](PipelineConfig& c, const std::string& v) { return parse_number(v, c.len) && c.len > 0; }},
      {"top_k", [](PipelineConfig& c, const std::string& v) { return parse_number(v, c.top_k) && c.top_k >= 1; }},
      {"raw_kernel", [](PipelineConfig& c, const std::string& v) { return parse_bool(v, c.raw_kernel); }},
      {"use_frame", [](PipelineConfig& c, const std::string& v) { return parse_bool(v, c.use_frame); }},
      {"workers", [](PipelineConfig& c, const std::string& v) { return parse_number(v, c.workers) && c.workers >= 1; }},
  };
  return table;
}

nlohmann::json points_json(const Points2d& pts) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& p : pts) a.push_back({p.x(), p.y()});
  return a;
}

Points2d points_from_json(const nlohmann::json& a) {
  Points2d pts;
  for (const auto& p : a) pts.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
  return pts;
}

nlohmann::json vp_json(const HPointd& vp) {
  nlohmann::json j;
  j["x"] = vp.coords().x();
  j["y"] = vp.coords().y();
  j["ideal"] = vp.is_ideal();
  return j;
}

HPointd vp_from_json(const nlohmann::json& j) {
  const double x = j.at("x").get<double>(), y = j.at("y").get<double>();
  return j.at("ideal").get<bool>() ? HPointd::at_infinity(x, y) : HPointd::finite(x, y);
}

}  // namespace

SelectionConfig PipelineConfig::selection(int width, int height) const {
  SelectionConfig s;
  s.tau = tau;
  s.threshold = threshold;
  if (use_frame) s.frame = centered_frame(width, height);
  return s;
}

RetrievalParams PipelineConfig::retrieval() const {
  return RetrievalParams{gamma1, gamma2, pyramid_levels, double(len), raw_kernel};
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : setters()) keys.push_back(k);
  return keys;
}

void apply_config_text(PipelineConfig& config, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> bad;
  PipelineConfig updated = config;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      bad.push_back(line);
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto& table = setters();
    const auto it = std::find_if(table.begin(), table.end(), [&](const auto& kv) { return kv.first == key; });
    if (it == table.end() || !it->second(updated, value)) bad.push_back(key);
  }
  if (!bad.empty()) {
    std::string msg = "invalid configuration keys:";
    for (const auto& k : bad) msg += " " + k;
    throw FormatError(msg);
  }
  config = updated;
}

void apply_config_file(PipelineConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(config, ss.str());
}

DetectionResult detect_vanishing_points(std::vector<Edge> edges, int width, int height, const PipelineConfig& config) {
  DetectionResult result;
  result.width = width;
  result.height = height;
  result.edges = std::move(edges);
  if (result.edges.size() < 2) return result;

  try {
    result.hypotheses = sample_hypotheses(result.edges, config.hypotheses, config.seed);
  } catch (const DegenerateConfiguration&) {
    return result;
  }
  const PreferenceMatrix preferences =
      build_preference_matrix(result.edges, result.hypotheses, config.phi, config.workers);
  const std::vector<EdgeCluster> clusters = cluster(preferences);

  std::vector<VPDetection> candidates;
  for (std::size_t ci = 0; ci < clusters.size(); ++ci) {
    const EdgeCluster& c = clusters[ci];
    if (c.members.size() < 2) continue;  // outliers
    VPDetection d{estimate_cluster_vp(c, result.edges, result.hypotheses), {}, 0.0, 0, ci};
    for (std::size_t m : c.members) d.edges.push_back(result.edges[m]);
    d.strength = strength(d.vp, d.edges, config.tau);
    candidates.push_back(std::move(d));
  }
  result.candidates = top_k(candidates, candidates.size());
  for (std::size_t i = 0; i < result.candidates.size(); ++i) result.candidates[i].rank = static_cast<int>(i + 1);
  result.dominant = select_dominant_index(result.candidates, config.selection(width, height));
  return result;
}

std::vector<Edge> edges_from_image(const Raster& image, const PipelineConfig& config, int* width, int* height) {
  const Raster resized = resize_longer_side(image, config.len);
  if (width) *width = static_cast<int>(resized.cols());
  if (height) *height = static_cast<int>(resized.rows());
  return fallback_edges(resized, config.alpha, config.l_min);
}

std::vector<Edge> edges_from_contour_map(const ContourMap& map, const PipelineConfig& config, int* width, int* height) {
  const int longer = std::max(map.width(), map.height());
  const double scale = longer > 0 ? double(config.len) / longer : 1.0;
  if (width) *width = static_cast<int>(std::lround(map.width() * scale));
  if (height) *height = static_cast<int>(std::lround(map.height() * scale));

  std::vector<Edge> edges;
  for (Contour& c : trace_contours(map, config.w_min)) {
    if (scale != 1.0)
      for (auto& p : c.points) p *= scale;
    for (Edge& e : subdivide(c.points, config.alpha)) edges.push_back(std::move(e));
  }
  return filter_edges(std::move(edges), config.l_min);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw FormatError("cannot write " + tmp.string());
    out << contents;
    if (!out) throw FormatError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_detection_json(const std::filesystem::path& path, const DetectionResult& result,
                          const PipelineConfig& config) {
  using nlohmann::json;
  json j;
  j["schema"] = kDetectionSchema;
  j["image_id"] = result.image_id;
  j["width"] = result.width;
  j["height"] = result.height;
  j["params"] = {{"alpha", config.alpha}, {"l_min", config.l_min}, {"phi", config.phi},
                 {"M", config.hypotheses}, {"seed", config.seed},  {"tau", config.tau},
                 {"threshold_T", config.threshold}, {"w_min", config.w_min}};
  j["n_edges"] = result.edges.size();
  j["candidates"] = json::array();
  for (const auto& d : result.candidates) {
    json c;
    c["rank"] = d.rank;
    c["cluster_index"] = d.cluster_index;
    c["vp"] = vp_json(d.vp);
    c["strength"] = d.strength;
    c["edges"] = json::array();
    for (const auto& e : d.edges) c["edges"].push_back(points_json(e.points()));
    j["candidates"].push_back(std::move(c));
  }
  if (result.dominant) {
    j["dominant"] = *result.dominant;
    j["dominant_vp"] = vp_json(result.candidates[*result.dominant].vp);
    j["dominant_strength"] = result.candidates[*result.dominant].strength;
  } else {
    j["dominant"] = nullptr;
    j["dominant_vp"] = nullptr;
    j["dominant_strength"] = nullptr;
  }
  write_file_atomic(path, j.dump(1) + "\n");
}

DetectionResult read_detection_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open detections " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    if (j.at("schema").get<std::string>() != kDetectionSchema)
      throw VersionMismatch("unsupported detection schema in " + path.string());
    DetectionResult r;
    r.image_id = j.at("image_id").get<std::string>();
    r.width = j.at("width").get<int>();
    r.height = j.at("height").get<int>();
    for (const auto& c : j.at("candidates")) {
      VPDetection d{vp_from_json(c.at("vp")), {}, c.at("strength").get<double>(), c.at("rank").get<int>(),
                    c.at("cluster_index").get<std::size_t>()};
      for (const auto& e : c.at("edges")) d.edges.emplace_back(points_from_json(e));
      r.candidates.push_back(std::move(d));
    }
    if (!j.at("dominant").is_null()) {
      const auto idx = j.at("dominant").get<std::size_t>();
      if (idx >= r.candidates.size()) throw FormatError("dominant index out of range in " + path.string());
      r.dominant = idx;
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed detections " + path.string() + ": " + e.what());
  }
}

}  // namespace vpdet
