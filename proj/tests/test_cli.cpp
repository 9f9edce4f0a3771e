#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "vpdet/image.hpp"
#include "vpdet/pipeline.hpp"
#include "vpdet/retrieval.hpp"
#include "vpdet/synthetic.hpp"

using namespace vpdet;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run vpdet_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "vpdet");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("vpdet_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::map<std::string, std::string> summary(const fs::path& p) {
  std::map<std::string, std::string> m;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) m[line.substr(0, line.find(','))] = line.substr(line.find(',') + 1);
  return m;
}

}  // namespace

TEST_CASE("cli usage errors") {
  CHECK(vpdet_cli({}).code == cli::kExitFailure);
  CHECK(vpdet_cli({"--help"}).code == cli::kExitOk);
  CHECK(vpdet_cli({"frobnicate"}).code == cli::kExitFailure);
  CHECK(vpdet_cli({"detect", "/nonexistent/x.pgm", "-o", "/tmp/x.json"}).code == cli::kExitFailure);

  const fs::path dir = fresh("cfg");
  std::ofstream(dir / "bad.cfg") << "alpha = nope\nwhat = 3\n";
  const Run r = vpdet_cli({"synth", "-o", (dir / "s").string(), "--config", (dir / "bad.cfg").string()});
  CHECK(r.code == cli::kExitFailure);
  CHECK(r.err.find("alpha") != std::string::npos);
  CHECK(r.err.find("what") != std::string::npos);
}

TEST_CASE("cli synth, detect, evaluate") {
  const fs::path dir = fresh("e2e");
  REQUIRE(vpdet_cli({"synth", "-o", (dir / "scenes").string(), "--count", "6", "--seed", "5"}).code == 0);
  fs::create_directories(dir / "det");
  for (int i = 0; i < 6; ++i) {
    const std::string id = "scene_000" + std::to_string(i);
    const Run r = vpdet_cli({"detect", (dir / "scenes" / (id + ".pgm")).string(), "-o", (dir / "det" / (id + ".json")).string(),
                             "--threshold", "0"});
    CHECK(r.code == 0);
  }
  REQUIRE(vpdet_cli({"evaluate", "--detections", (dir / "det").string(), "--annotations", (dir / "scenes").string(), "-o",
                     (dir / "eval").string()})
              .code == 0);
  auto s = summary(dir / "eval" / "summary.csv");
  CHECK(std::stod(s["median_error"]) < 2.0);
  CHECK(s["images"] == "6");
  CHECK(fs::exists(dir / "eval" / "cumulative.csv"));
  CHECK(fs::exists(dir / "eval" / "results.csv"));

  SUBCASE("determinism across runs and workers") {
    const fs::path in = dir / "scenes" / "scene_0000.pgm";
    vpdet_cli({"detect", in.string(), "-o", (dir / "a.json").string(), "--threshold", "0", "--dump-preferences", (dir / "a.pm").string()});
    vpdet_cli({"detect", in.string(), "-o", (dir / "b.json").string(), "--threshold", "0", "--workers", "4",
               "--dump-preferences", (dir / "b.pm").string()});
    CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));
    CHECK(slurp(dir / "a.pm") == slurp(dir / "b.pm"));
    CHECK_FALSE(slurp(dir / "a.json").empty());
  }
  SUBCASE("default threshold reports no dominant VP") {
    const Run r = vpdet_cli({"detect", (dir / "scenes" / "scene_0001.pgm").string(), "-o", (dir / "c.json").string()});
    CHECK(r.code == cli::kExitNoDominant);
    const auto j = nlohmann::json::parse(slurp(dir / "c.json"));
    CHECK(j["dominant"].is_null());
    CHECK_FALSE(j["candidates"].empty());
  }
  SUBCASE("config file, environment and flag precedence") {
    std::ofstream(dir / "t.cfg") << "threshold_T = 0\n";
    const std::string in = (dir / "scenes" / "scene_0002.pgm").string();
    CHECK(vpdet_cli({"detect", in, "-o", (dir / "d.json").string(), "--config", (dir / "t.cfg").string()}).code == 0);
    CHECK(vpdet_cli({"detect", in, "-o", (dir / "d.json").string(), "--config", (dir / "t.cfg").string(), "--threshold", "1e9"})
              .code == cli::kExitNoDominant);
    setenv(cli::kConfigEnv, (dir / "t.cfg").c_str(), 1);
    CHECK(vpdet_cli({"detect", in, "-o", (dir / "d.json").string()}).code == 0);
    unsetenv(cli::kConfigEnv);
  }
}

TEST_CASE("cli detect edge cases") {
  const fs::path dir = fresh("blank");
  write_pgm(dir / "blank.pgm", Raster::Zero(375, 500));
  const Run r = vpdet_cli({"detect", (dir / "blank.pgm").string(), "-o", (dir / "blank.json").string()});
  CHECK(r.code == cli::kExitNoDominant);
  const auto j = nlohmann::json::parse(slurp(dir / "blank.json"));
  CHECK(j["candidates"].empty());
  CHECK(j["image_id"] == "blank");

  const Run f = vpdet_cli({"detect", (dir / "blank.pgm").string(), "-o", (dir / "blank2.json").string(), "--fallback-edges"});
  CHECK(f.code == cli::kExitNoDominant);
}

TEST_CASE("cli road image") {
  const fs::path dir = fresh("road");
  REQUIRE(vpdet_cli({"synth", "-o", dir.string(), "--road", "--count", "3", "--seed", "1"}).code == 0);
  for (int i = 0; i < 3; ++i) {
    const std::string id = "scene_000" + std::to_string(i);
    const Run r = vpdet_cli({"detect", (dir / (id + ".pgm")).string(), "-o", (dir / (id + ".det.json")).string(),
                             "--fallback-edges", "--threshold", "0"});
    REQUIRE(r.code == 0);
    const DetectionResult d = read_detection_json(dir / (id + ".det.json"));
    const auto ann = nlohmann::json::parse(slurp(dir / (id + ".annotation.json")));
    std::vector<Segment> segs;
    for (const auto& s : ann["segments"]) segs.push_back({Point2d(s[0].get<double>(), s[1].get<double>()), Point2d(s[2].get<double>(), s[3].get<double>())});
    const Point2d gt = intersect(HLined::through(segs[0].a, segs[0].b), HLined::through(segs[1].a, segs[1].b)).euclidean();
    CHECK((d.candidates[*d.dominant].vp.euclidean() - gt).norm() < 5.0);
  }
}

TEST_CASE("cli index and query") {
  const fs::path dir = fresh("retrieval");
  REQUIRE(vpdet_cli({"synth", "-o", (dir / "scenes").string(), "--count", "5", "--seed", "9"}).code == 0);
  fs::create_directories(dir / "det");
  std::vector<FeatureRecord> feats;
  for (int i = 0; i < 5; ++i) {
    const std::string id = "scene_000" + std::to_string(i);
    vpdet_cli({"detect", (dir / "scenes" / (id + ".pgm")).string(), "-o", (dir / "det" / (id + ".json")).string(), "--threshold", "0"});
    Eigen::VectorXd v(4);
    v << 1 + i, 2, 3 - i, 0.5 * i;
    feats.push_back({id, v});
  }
  feats.push_back({"no_detection", Eigen::Vector4d(1, 0, 0, 0)});
  write_features_csv(dir / "features.csv", feats);
  const Run idx = vpdet_cli({"index", "--detections", (dir / "det").string(), "--features", (dir / "features.csv").string(), "-o",
                             (dir / "corpus.idx").string()});
  REQUIRE(idx.code == 0);
  const RetrievalIndex index = load_index(dir / "corpus.idx");
  CHECK(index.size() == 6);
  CHECK(index.find("scene_0003")->dominant);
  CHECK_FALSE(index.find("no_detection")->dominant);

  const Run q = vpdet_cli({"query", (dir / "corpus.idx").string(), "--id", "scene_0002", "-k", "3"});
  REQUIRE(q.code == 0);
  const auto j = nlohmann::json::parse(q.out);
  CHECK(j["schema"] == "vpdet.ranking/1");
  CHECK(j["results"].size() == 3);
  CHECK(j["results"][0]["id"] == "scene_0002");
  CHECK(j["results"][0]["score"].get<double>() == doctest::Approx(2.0));

  const Run qx = vpdet_cli({"query", (dir / "corpus.idx").string(), "--id", "scene_0002", "--exclude-self"});
  CHECK(nlohmann::json::parse(qx.out)["results"][0]["id"] != "scene_0002");

  const Run qe = vpdet_cli({"query", (dir / "corpus.idx").string(), "--detection", (dir / "det" / "scene_0004.json").string(),
                            "--features", (dir / "features.csv").string()});
  REQUIRE(qe.code == 0);
  CHECK(nlohmann::json::parse(qe.out)["results"][0]["id"] == "scene_0004");

  CHECK(vpdet_cli({"query", (dir / "corpus.idx").string(), "--id", "missing"}).code == cli::kExitFailure);
  CHECK(vpdet_cli({"query", (dir / "corpus.idx").string()}).code == cli::kExitFailure);
}

TEST_CASE("cli evaluate on exact detections") {
  const fs::path dir = fresh("exact");
  fs::create_directories(dir / "ann");
  fs::create_directories(dir / "det");
  PipelineConfig c;
  for (int i = 0; i < 5; ++i) {
    SceneSpec spec;
    spec.id = "s" + std::to_string(i);
    spec.seed = 100 + i;
    spec.sigma = 0;
    const SyntheticScene s = generate_scene(spec);
    write_annotation(dir / "ann" / (spec.id + ".json"), s.annotation());
    DetectionResult d;
    d.image_id = spec.id;
    d.width = 500;
    d.height = 375;
    d.candidates.push_back({*s.gt_vp, s.inlier_edges(), 10.0, 1, 0});
    d.dominant = 0;
    write_detection_json(dir / "det" / (spec.id + ".json"), d, c);
  }
  SceneSpec neg;
  neg.id = "clutter";
  write_annotation(dir / "ann" / "clutter.json", generate_clutter(neg).annotation());

  REQUIRE(vpdet_cli({"evaluate", "--detections", (dir / "det").string(), "--detections", (dir / "det").string(), "--annotations",
                     (dir / "ann").string(), "-o", (dir / "out").string()})
              .code == 0);
  auto s = summary(dir / "out" / "summary.csv");
  CHECK(std::stod(s["median_error"]) < 1e-6);
  CHECK(s["trials"] == "2");
  CHECK(std::stod(s["auc"]) == 1.0);
  CHECK(fs::exists(dir / "out" / "roc.csv"));
}
