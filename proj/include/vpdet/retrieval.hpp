#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vpdet/geometry.hpp"

namespace vpdet {

/// Multi-resolution grid counts: level l has 2^l x 2^l cells, stored as
/// (cell row, cell column). Cell boundaries scale with the image size, so
/// pyramids of differently shaped images are comparable.
struct PyramidHistogram {
  int levels = 0;  // L; levels 0..L are present
  std::vector<Eigen::ArrayXXi> counts;
  std::uint64_t total_points = 0;
};

/// Points must lie in [0, width] x [0, height]; the far boundary clamps into
/// the last cell, anything outside throws PointOutOfFrame.
PyramidHistogram build_pyramid(std::span<const Point2d> points, int width, int height, int levels);

/// Sum over cells of min(Hi, Hj) at one level.
std::uint64_t histogram_intersection(const PyramidHistogram& a, const PyramidHistogram& b, int level);

/// I^0 / 2^L + sum_{l=1..L} I^l / 2^(L-l+1).
double pyramid_match(const PyramidHistogram& a, const PyramidHistogram& b);

/// pyramid_match scaled by sqrt(K(a,a) K(b,b)) = sqrt(|a| |b|) into [0, 1].
double normalized_pyramid_match(const PyramidHistogram& a, const PyramidHistogram& b);

struct RetrievalParams {
  double gamma1 = 0.5;
  double gamma2 = 0.5;
  int levels = 6;
  double len = 500.0;
  bool raw_kernel = false;  // use the unnormalized pyramid score

  bool operator==(const RetrievalParams&) const = default;
};

struct DominantVP {
  Point2d vp;
  double strength = 0.0;
  Points2d pixels;  // pixels of the edges supporting vp
};

struct ImageRecord {
  std::string id;
  int width = 0;
  int height = 0;
  Eigen::VectorXd semantic;  // unit norm
  std::optional<DominantVP> dominant;
  std::optional<PyramidHistogram> pyramid;  // present iff dominant is
};

/// Builds a record: normalizes the feature (zero vectors throw
/// DegenerateInput) and bins the dominant pixels that fall inside the frame.
ImageRecord make_record(std::string id, int width, int height, const Eigen::VectorXd& feature,
                        std::optional<DominantVP> dominant, const RetrievalParams& params);

/// gamma1 * max(1 - |vi - vj| / len, 0) + gamma2 * K; 0 if either record has
/// no dominant VP.
double perspective_similarity(const ImageRecord& a, const ImageRecord& b, const RetrievalParams& params);

/// Cosine similarity of the semantic vectors plus perspective_similarity.
double total_similarity(const ImageRecord& a, const ImageRecord& b, const RetrievalParams& params);

class RetrievalIndex {
 public:
  RetrievalIndex() = default;
  explicit RetrievalIndex(RetrievalParams params) : params_(params) {}

  const RetrievalParams& params() const { return params_; }
  const std::vector<ImageRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const ImageRecord* find(const std::string& id) const;

  // Throws DimensionMismatch on a feature size or working resolution that
  // differs from the records already present.
  void add(ImageRecord record);

 private:
  RetrievalParams params_;
  std::vector<ImageRecord> records_;
};

struct ScoredId {
  std::string id;
  double score = 0.0;
};

/// Top-k records by total_similarity, ties by id. exclude_self drops records
/// whose id equals the query's.
std::vector<ScoredId> query(const RetrievalIndex& index, const ImageRecord& query_record, std::size_t k,
                            bool exclude_self = false);

/// Binary container: "VPDINDEX", u32 version, params, then one block per
/// record. All numbers little-endian, reals as IEEE-754 binary64.
void save_index(const RetrievalIndex& index, const std::filesystem::path& path);
RetrievalIndex load_index(const std::filesystem::path& path);

inline constexpr std::uint32_t kIndexVersion = 1;

struct FeatureRecord {
  std::string id;
  Eigen::VectorXd values;
};

/// Feature files: CSV ("id,d,v1,...,vd" per line, '#' comments) or binary
/// ("VPDFEAT1" then per record: u32 id length, id bytes, u32 d, d float32),
/// little-endian. The format is detected from the first bytes.
std::vector<FeatureRecord> read_features(const std::filesystem::path& path);
void write_features_csv(const std::filesystem::path& path, std::span<const FeatureRecord> features);
void write_features_binary(const std::filesystem::path& path, std::span<const FeatureRecord> features);

}  // namespace vpdet
