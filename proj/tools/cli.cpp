#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "vpdet/contour.hpp"
#include "vpdet/errors.hpp"
#include "vpdet/evaluation.hpp"
#include "vpdet/pipeline.hpp"
#include "vpdet/retrieval.hpp"
#include "vpdet/synthetic.hpp"

namespace vpdet::cli {

namespace fs = std::filesystem;

namespace {

// Flags shared by every command; unset flags leave the config untouched.
struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha, l_min, phi, tau, threshold, gamma1, gamma2, w_min;
  std::optional<std::size_t> top_k, hypotheses;
  std::optional<int> pyramid_levels;
  std::optional<unsigned> workers;
  bool raw_kernel = false;
  bool no_frame = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "key = value configuration file");
    app->add_option("--seed", seed, "random seed");
    app->add_option("--alpha", alpha, "contour subdivision fraction");
    app->add_option("--l-min", l_min, "minimum edge length (px)");
    app->add_option("--phi", phi, "consistency threshold (px)");
    app->add_option("--hypotheses", hypotheses, "number of sampled VP hypotheses (M)");
    app->add_option("--tau", tau, "strength distance offset (px)");
    app->add_option("--threshold", threshold, "dominant VP strength threshold T");
    app->add_option("--w-min", w_min, "contour weight threshold");
    app->add_option("--top-k", top_k, "number of results / detections to keep");
    app->add_option("--gamma1", gamma1, "weight of the VP location term");
    app->add_option("--gamma2", gamma2, "weight of the pyramid layout term");
    app->add_option("--pyramid-levels", pyramid_levels, "spatial pyramid depth L");
    app->add_option("--workers", workers, "worker threads");
    app->add_flag("--raw-kernel", raw_kernel, "disable pyramid kernel normalization");
    app->add_flag("--no-frame", no_frame, "do not restrict dominant VPs to the 1000x1000 frame");
  }

  PipelineConfig resolve() const {
    PipelineConfig c;
    std::string path = config_path;
    if (path.empty())
      if (const char* env = std::getenv(kConfigEnv); env && *env) path = env;
    if (!path.empty()) apply_config_file(c, path);
    if (seed) c.seed = *seed;
    if (alpha) c.alpha = *alpha;
    if (l_min) c.l_min = *l_min;
    if (phi) c.phi = *phi;
    if (hypotheses) c.hypotheses = *hypotheses;
    if (tau) c.tau = *tau;
    if (threshold) c.threshold = *threshold;
    if (w_min) c.w_min = *w_min;
    if (top_k) c.top_k = *top_k;
    if (gamma1) c.gamma1 = *gamma1;
    if (gamma2) c.gamma2 = *gamma2;
    if (pyramid_levels) c.pyramid_levels = *pyramid_levels;
    if (workers) c.workers = *workers;
    if (raw_kernel) c.raw_kernel = true;
    if (no_frame) c.use_frame = false;
    return c;
  }
};

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::vector<fs::path> json_files(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  return files;
}

std::map<std::string, DetectionResult> load_detections(const fs::path& dir, std::ostream& err) {
  std::map<std::string, DetectionResult> out;
  for (const auto& f : json_files(dir)) {
    try {
      DetectionResult d = read_detection_json(f);
      std::string id = d.image_id;
      out.emplace(std::move(id), std::move(d));
    } catch (const VersionMismatch&) {
      // another kind of JSON file
    } catch (const FormatError&) {
      if (f.string().find(".annotation.") == std::string::npos)
        err << "warning: skipping unreadable detection file " << f << '\n';
    }
  }
  return out;
}

DominantVP dominant_of(const DetectionResult& d) {
  const VPDetection& best = d.candidates[*d.dominant];
  DominantVP dom;
  dom.vp = best.vp.euclidean();
  dom.strength = best.strength;
  for (const auto& e : best.edges) dom.pixels.insert(dom.pixels.end(), e.points().begin(), e.points().end());
  return dom;
}

ImageRecord record_from(const std::string& id, const Eigen::VectorXd& feature, const DetectionResult* detection,
                        const PipelineConfig& config) {
  int width = config.len, height = config.len;
  std::optional<DominantVP> dom;
  if (detection) {
    width = detection->width;
    height = detection->height;
    if (detection->dominant && !detection->candidates[*detection->dominant].vp.is_ideal()) dom = dominant_of(*detection);
  }
  return make_record(id, width, height, feature, std::move(dom), config.retrieval());
}

int cmd_detect(const std::string& input, const std::string& output, const std::string& sidecar,
               const std::string& id_override, const std::string& dump_path, bool fallback,
               const PipelineConfig& config, std::ostream& err) {
  int width = 0, height = 0;
  std::vector<Edge> edges;
  std::string image_id = fs::path(input).stem().string();
  if (fallback) {
    edges = edges_from_image(read_grayscale(input), config, &width, &height);
  } else {
    std::optional<fs::path> meta;
    if (!sidecar.empty()) {
      meta = sidecar;
    } else if (fs::exists(default_sidecar_path(input))) {
      meta = default_sidecar_path(input);
    }
    const ContourMap map = load_contour_map(input, meta);
    image_id = map.image_id;
    edges = edges_from_contour_map(map, config, &width, &height);
  }
  if (!id_override.empty()) image_id = id_override;

  DetectionResult result = detect_vanishing_points(std::move(edges), width, height, config);
  result.image_id = image_id;
  write_detection_json(output, result, config);
  if (!dump_path.empty()) {
    const PreferenceMatrix p = build_preference_matrix(result.edges, result.hypotheses, config.phi, config.workers);
    write_preference_matrix(dump_path, p, config.phi, config.seed);
  }
  if (!result.dominant) {
    err << image_id << ": no dominant vanishing point (" << result.candidates.size() << " candidates)\n";
    return kExitNoDominant;
  }
  return kExitOk;
}

int cmd_index(const std::string& detections_dir, const std::string& features_path, const std::string& output,
              const PipelineConfig& config, std::ostream& err) {
  const auto detections = load_detections(detections_dir, err);
  std::vector<FeatureRecord> features = read_features(features_path);
  std::sort(features.begin(), features.end(), [](const auto& a, const auto& b) { return a.id < b.id; });

  RetrievalIndex index(config.retrieval());
  std::map<std::string, bool> has_feature;
  for (const auto& f : features) {
    if (has_feature[f.id]) throw FormatError("duplicate feature id '" + f.id + "'");
    has_feature[f.id] = true;
    const auto it = detections.find(f.id);
    index.add(record_from(f.id, f.values, it == detections.end() ? nullptr : &it->second, config));
  }
  for (const auto& [id, _] : detections)
    if (!has_feature.count(id)) err << "warning: detection '" << id << "' has no semantic feature; rejected\n";

  const fs::path tmp = fs::path(output).string() + ".tmp";
  save_index(index, tmp);
  fs::rename(tmp, output);
  return kExitOk;
}

int cmd_query(const std::string& index_path, const std::string& id, const std::string& detection_path,
              const std::string& features_path, std::size_t k, bool exclude_self, const PipelineConfig& config,
              std::ostream& out) {
  const RetrievalIndex index = load_index(index_path);
  ImageRecord q;
  if (!detection_path.empty()) {
    if (features_path.empty()) throw FormatError("--detection needs --features for the query image");
    const DetectionResult det = read_detection_json(detection_path);
    const std::string qid = id.empty() ? det.image_id : id;
    std::optional<FeatureRecord> feature;
    for (auto& f : read_features(features_path))
      if (f.id == qid) feature = std::move(f);
    if (!feature) throw FormatError("no feature vector for query '" + qid + "'");
    PipelineConfig c = config;
    c.gamma1 = index.params().gamma1;
    c.gamma2 = index.params().gamma2;
    c.pyramid_levels = index.params().levels;
    c.raw_kernel = index.params().raw_kernel;
    q = record_from(qid, feature->values, &det, c);
  } else {
    const ImageRecord* found = index.find(id);
    if (!found) throw FormatError("id '" + id + "' is not in the index");
    q = *found;
  }

  nlohmann::json j;
  j["schema"] = "vpdet.ranking/1";
  j["query"] = q.id;
  j["results"] = nlohmann::json::array();
  int rank = 1;
  for (const auto& s : query(index, q, k, exclude_self))
    j["results"].push_back({{"rank", rank++}, {"id", s.id}, {"score", s.score}});
  out << j.dump(2) << '\n';
  return kExitOk;
}

struct ImageEvaluation {
  std::string id;
  bool has_dominant = false;
  std::vector<double> errors;       // per trial
  std::vector<double> topk_errors;  // best of the top-k candidates, per trial
  std::vector<double> strengths;
  std::vector<std::optional<Point2d>> vps;
};

int cmd_evaluate(const std::vector<std::string>& detection_dirs, const std::string& annotations_dir,
                 const std::string& output_dir, const PipelineConfig& config, std::ostream& err) {
  std::vector<Annotation> annotations;
  for (const auto& f : json_files(annotations_dir)) {
    try {
      annotations.push_back(read_annotation(f));
    } catch (const Error&) {
    }
  }
  std::sort(annotations.begin(), annotations.end(), [](const auto& a, const auto& b) { return a.image_id < b.image_id; });
  if (annotations.empty()) throw NoGroundTruth("no annotation files in " + annotations_dir);

  std::vector<std::map<std::string, DetectionResult>> trials;
  for (const auto& dir : detection_dirs) trials.push_back(load_detections(dir, err));

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<ImageEvaluation> evals;
  for (const auto& a : annotations) {
    ImageEvaluation ev;
    ev.id = a.image_id;
    ev.has_dominant = a.has_dominant;
    const auto gt = a.gt_edges();
    for (const auto& trial : trials) {
      const auto it = trial.find(a.image_id);
      const DetectionResult* det = it == trial.end() ? nullptr : &it->second;
      double error = inf, topk_error = inf, score = 0.0;
      std::optional<Point2d> vp;
      if (det) {
        score = verification_score(det->candidates);
        if (a.has_dominant && det->dominant) {
          const auto& d = det->candidates[*det->dominant];
          error = consistency_error(gt, d.vp);
          if (!d.vp.is_ideal()) vp = d.vp.euclidean();
        }
        if (a.has_dominant)
          for (const auto& c : top_k(det->candidates, config.top_k)) topk_error = std::min(topk_error, consistency_error(gt, c.vp));
      }
      ev.errors.push_back(error);
      ev.topk_errors.push_back(topk_error);
      ev.strengths.push_back(score);
      ev.vps.push_back(vp);
    }
    evals.push_back(std::move(ev));
  }

  fs::create_directories(output_dir);
  std::ostringstream results;
  results << "image_id,trial,error,topk_error,strength,vp_x,vp_y\n";
  std::vector<double> mean_errors;
  std::vector<std::pair<double, bool>> verification;
  for (const auto& ev : evals) {
    for (std::size_t t = 0; t < ev.errors.size(); ++t) {
      results << ev.id << ',' << t << ',' << format_double(ev.errors[t]) << ',' << format_double(ev.topk_errors[t]) << ','
              << format_double(ev.strengths[t]) << ',';
      if (ev.vps[t]) {
        results << format_double(ev.vps[t]->x()) << ',' << format_double(ev.vps[t]->y());
      } else {
        results << ',';
      }
      results << '\n';
    }
    double mean_strength = 0.0;
    for (double s : ev.strengths) mean_strength += s / ev.strengths.size();
    verification.emplace_back(mean_strength, ev.has_dominant);
    if (!ev.has_dominant) continue;
    double mean = 0.0;
    for (double e : ev.errors) mean += e / ev.errors.size();
    mean_errors.push_back(mean);
  }
  write_file_atomic(fs::path(output_dir) / "results.csv", results.str());

  const auto thresholds = default_error_thresholds();
  const auto curve = cumulative_histogram(mean_errors, thresholds);
  std::ostringstream cumulative;
  cumulative << "threshold,fraction\n";
  for (std::size_t i = 0; i < thresholds.size(); ++i)
    cumulative << format_double(thresholds[i]) << ',' << format_double(curve[i]) << '\n';
  write_file_atomic(fs::path(output_dir) / "cumulative.csv", cumulative.str());

  std::ostringstream summary;
  summary << "metric,value\n";
  summary << "images," << evals.size() << '\n';
  summary << "trials," << trials.size() << '\n';
  if (!mean_errors.empty()) {
    std::vector<double> sorted = mean_errors;
    std::sort(sorted.begin(), sorted.end());
    const auto quantile = [&](double q) {
      const std::size_t i = std::min(sorted.size() - 1, static_cast<std::size_t>(std::ceil(q * sorted.size())) - (q > 0 ? 1 : 0));
      return sorted[i];
    };
    summary << "median_error," << format_double(quantile(0.5)) << '\n';
    summary << "p90_error," << format_double(quantile(0.9)) << '\n';
  }
  try {
    const RocCurve roc = roc_auc(verification);
    std::ostringstream roc_csv;
    roc_csv << "threshold,fpr,tpr\n";
    for (const auto& p : roc.points)
      roc_csv << format_double(p.threshold) << ',' << format_double(p.fpr) << ',' << format_double(p.tpr) << '\n';
    write_file_atomic(fs::path(output_dir) / "roc.csv", roc_csv.str());
    summary << "auc," << format_double(roc.auc) << '\n';
  } catch (const SingleClass&) {
    // ROC undefined with one class
  }
  write_file_atomic(fs::path(output_dir) / "summary.csv", summary.str());
  return kExitOk;
}

int cmd_synth(const std::string& output_dir, int count, int inliers, int outliers, double sigma, bool road,
              bool clutter, const PipelineConfig& config) {
  fs::create_directories(output_dir);
  const fs::path dir(output_dir);
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "scene_%04d", i);
    const std::uint64_t seed = config.seed * 1000003ULL + static_cast<std::uint64_t>(i);

    if (road) {
      std::mt19937_64 rng(seed);
      const Point2d vp(std::uniform_real_distribution<double>(150.0, 350.0)(rng),
                       std::uniform_real_distribution<double>(80.0, 160.0)(rng));
      RoadImage img = render_road_image(500, 375, vp, seed);
      img.annotation.image_id = name;
      write_pgm(dir / (std::string(name) + ".pgm"), img.image);
      write_annotation(dir / (std::string(name) + ".annotation.json"), img.annotation);
      continue;
    }

    SceneSpec spec;
    spec.id = name;
    spec.seed = seed;
    spec.sigma = sigma;
    spec.n_inliers = inliers;
    spec.n_outliers = outliers;
    const SyntheticScene scene = clutter ? generate_clutter(spec) : generate_scene(spec);
    const ContourMap map = render_contour_map(scene);
    write_pgm(dir / (std::string(name) + ".pgm"), map.weights);
    write_sidecar(dir / (std::string(name) + ".json"), {name, map.width(), map.height(), std::nullopt, std::nullopt});
    write_annotation(dir / (std::string(name) + ".annotation.json"), scene.annotation());
    write_scene_json(dir / (std::string(name) + ".scene.json"), scene);
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"vpdet: dominant vanishing point detection and viewpoint-specific retrieval"};
  app.require_subcommand(1);

  CommonFlags detect_flags, index_flags, query_flags, eval_flags, synth_flags;

  std::string input, output, sidecar, id_override, dump_path;
  bool fallback = false;
  auto* detect = app.add_subcommand("detect", "detect vanishing points in a contour map or image");
  detect->add_option("input", input, "contour map (PGM/PNG) or, with --fallback-edges, an image")->required();
  detect->add_option("-o,--output", output, "detection JSON to write")->required();
  detect->add_option("--sidecar", sidecar, "contour-map sidecar JSON (default: <input>.json)");
  detect->add_option("--id", id_override, "image id recorded in the output");
  detect->add_option("--dump-preferences", dump_path, "write the preference matrix for auditing");
  detect->add_flag("--fallback-edges", fallback, "extract edges from the raw image instead of a contour map");
  detect_flags.attach(detect);

  std::string detections_dir, features_path, index_out;
  auto* index = app.add_subcommand("index", "build a retrieval index");
  index->add_option("--detections", detections_dir, "directory of detection JSON files")->required();
  index->add_option("--features", features_path, "feature-vector file (CSV or binary)")->required();
  index->add_option("-o,--output", index_out, "index file to write")->required();
  index_flags.attach(index);

  std::string index_path, query_id, query_detection, query_features;
  std::size_t k = 10;
  bool exclude_self = false;
  auto* query_cmd = app.add_subcommand("query", "rank indexed images against a query");
  query_cmd->add_option("index", index_path, "index file")->required();
  query_cmd->add_option("--id", query_id, "id of an indexed image to use as the query");
  query_cmd->add_option("--detection", query_detection, "detection JSON of an external query image");
  query_cmd->add_option("--features", query_features, "feature file holding the external query's vector");
  query_cmd->add_option("-k", k, "number of results");
  query_cmd->add_flag("--exclude-self", exclude_self, "drop results whose id equals the query id");
  query_flags.attach(query_cmd);

  std::vector<std::string> eval_detections;
  std::string annotations_dir, eval_out;
  auto* evaluate = app.add_subcommand("evaluate", "consistency error, cumulative curves and ROC");
  evaluate->add_option("--detections", eval_detections, "detection directory; repeat once per trial")->required();
  evaluate->add_option("--annotations", annotations_dir, "directory of annotation JSON files")->required();
  evaluate->add_option("-o,--output", eval_out, "directory for the metrics CSV files")->required();
  eval_flags.attach(evaluate);

  std::string synth_out;
  int count = 1, inliers = 6, outliers = 10;
  double sigma = 1.0;
  bool road = false, clutter = false;
  auto* synth = app.add_subcommand("synth", "generate synthetic scenes with ground truth");
  synth->add_option("-o,--output", synth_out, "output directory")->required();
  synth->add_option("--count", count, "number of scenes")->check(CLI::PositiveNumber);
  synth->add_option("--inliers", inliers, "edges converging to the VP")->check(CLI::Range(2, 1000));
  synth->add_option("--outliers", outliers, "random non-convergent edges")->check(CLI::NonNegativeNumber);
  synth->add_option("--sigma", sigma, "perpendicular pixel noise")->check(CLI::NonNegativeNumber);
  synth->add_flag("--road", road, "render road images instead of contour maps");
  synth->add_flag("--clutter", clutter, "scenes without a vanishing point");
  synth_flags.attach(synth);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitFailure;
  }

  try {
    if (*detect)
      return cmd_detect(input, output, sidecar, id_override, dump_path, fallback, detect_flags.resolve(), err);
    if (*index) return cmd_index(detections_dir, features_path, index_out, index_flags.resolve(), err);
    if (*query_cmd) {
      if (query_id.empty() && query_detection.empty()) throw FormatError("query needs --id or --detection");
      return cmd_query(index_path, query_id, query_detection, query_features, k, exclude_self, query_flags.resolve(), out);
    }
    if (*evaluate) return cmd_evaluate(eval_detections, annotations_dir, eval_out, eval_flags.resolve(), err);
    if (*synth) return cmd_synth(synth_out, count, inliers, outliers, sigma, road, clutter, synth_flags.resolve());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace vpdet::cli
