#include "vpdet/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "vpdet/errors.hpp"

namespace vpdet {

PyramidHistogram build_pyramid(std::span<const Point2d> points, int width, int height, int levels) {
  if (levels < 0) throw LevelMismatch("pyramid needs at least level 0");
  if (width <= 0 || height <= 0) throw DimensionMismatch("pyramid frame must be non-empty");
  PyramidHistogram h;
  h.levels = levels;
  for (int l = 0; l <= levels; ++l) h.counts.push_back(Eigen::ArrayXXi::Zero(1 << l, 1 << l));

  for (const Point2d& p : points) {
    if (!(p.x() >= 0.0 && p.x() <= width && p.y() >= 0.0 && p.y() <= height))
      throw PointOutOfFrame("point (" + std::to_string(p.x()) + ", " + std::to_string(p.y()) + ") outside frame");
    for (int l = 0; l <= levels; ++l) {
      const int cells = 1 << l;
      const int cx = std::min(cells - 1, static_cast<int>(std::floor(p.x() * cells / width)));
      const int cy = std::min(cells - 1, static_cast<int>(std::floor(p.y() * cells / height)));
      ++h.counts[l](cy, cx);
    }
  }
  h.total_points = points.size();
  return h;
}

std::uint64_t histogram_intersection(const PyramidHistogram& a, const PyramidHistogram& b, int level) {
  if (a.levels != b.levels) throw LevelMismatch("pyramids have different depths");
  if (level < 0 || level > a.levels) throw LevelMismatch("level out of range");
  return static_cast<std::uint64_t>(a.counts[level].min(b.counts[level]).template cast<std::int64_t>().sum());
}

double pyramid_match(const PyramidHistogram& a, const PyramidHistogram& b) {
  if (a.levels != b.levels) throw LevelMismatch("pyramids have different depths");
  const int L = a.levels;
  double score = std::ldexp(double(histogram_intersection(a, b, 0)), -L);
  for (int l = 1; l <= L; ++l) score += std::ldexp(double(histogram_intersection(a, b, l)), -(L - l + 1));
  return score;
}

double normalized_pyramid_match(const PyramidHistogram& a, const PyramidHistogram& b) {
  if (a.total_points == 0 || b.total_points == 0) return 0.0;
  return pyramid_match(a, b) / std::sqrt(double(a.total_points) * double(b.total_points));
}

ImageRecord make_record(std::string id, int width, int height, const Eigen::VectorXd& feature,
                        std::optional<DominantVP> dominant, const RetrievalParams& params) {
  const double norm = feature.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) throw DegenerateInput("semantic feature of '" + id + "' has no direction");
  ImageRecord r;
  r.id = std::move(id);
  r.width = width;
  r.height = height;
  r.semantic = feature / norm;
  if (dominant) {
    std::erase_if(dominant->pixels, [&](const Point2d& p) {
      return !(p.x() >= 0.0 && p.x() <= width && p.y() >= 0.0 && p.y() <= height);
    });
    r.pyramid = build_pyramid(dominant->pixels, width, height, params.levels);
    r.dominant = std::move(dominant);
  }
  return r;
}

double perspective_similarity(const ImageRecord& a, const ImageRecord& b, const RetrievalParams& params) {
  if (!a.dominant || !b.dominant || !a.pyramid || !b.pyramid) return 0.0;
  const double location = std::max(1.0 - (a.dominant->vp - b.dominant->vp).norm() / params.len, 0.0);
  const double layout =
      params.raw_kernel ? pyramid_match(*a.pyramid, *b.pyramid) : normalized_pyramid_match(*a.pyramid, *b.pyramid);
  return params.gamma1 * location + params.gamma2 * layout;
}

double total_similarity(const ImageRecord& a, const ImageRecord& b, const RetrievalParams& params) {
  if (a.semantic.size() != b.semantic.size())
    throw DimensionMismatch("feature dimensions differ: " + std::to_string(a.semantic.size()) + " vs " +
                            std::to_string(b.semantic.size()));
  return a.semantic.dot(b.semantic) + perspective_similarity(a, b, params);
}

const ImageRecord* RetrievalIndex::find(const std::string& id) const {
  for (const auto& r : records_)
    if (r.id == id) return &r;
  return nullptr;
}

void RetrievalIndex::add(ImageRecord record) {
  if (!records_.empty() && records_.front().semantic.size() != record.semantic.size())
    throw DimensionMismatch("record '" + record.id + "' has feature dimension " +
                            std::to_string(record.semantic.size()));
  if (std::max(record.width, record.height) != static_cast<int>(std::lround(params_.len)))
    throw DimensionMismatch("record '" + record.id + "' is not at the index working resolution");
  if (record.pyramid && record.pyramid->levels != params_.levels)
    throw LevelMismatch("record '" + record.id + "' pyramid depth differs from the index");
  records_.push_back(std::move(record));
}

std::vector<ScoredId> query(const RetrievalIndex& index, const ImageRecord& query_record, std::size_t k,
                            bool exclude_self) {
  if (index.empty()) throw EmptyIndex("query against an empty index");
  std::vector<ScoredId> scored;
  scored.reserve(index.size());
  for (const auto& r : index.records()) {
    if (exclude_self && r.id == query_record.id) continue;
    scored.push_back({r.id, total_similarity(query_record, r, index.params())});
  }
  auto better = [](const ScoredId& a, const ScoredId& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  };
  const std::size_t keep = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + keep, scored.end(), better);
  scored.resize(keep);
  return scored;
}

namespace {

constexpr char kIndexMagic[8] = {'V', 'P', 'D', 'I', 'N', 'D', 'E', 'X'};
constexpr char kFeatureMagic[8] = {'V', 'P', 'D', 'F', 'E', 'A', 'T', '1'};

class ByteWriter {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    buffer_.insert(buffer_.end(), p, p + n);
  }
  void u8(std::uint8_t v) { buffer_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buffer_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buffer_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

  void flush_to(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(buffer_.data()), static_cast<std::streamsize>(buffer_.size()));
    if (!out) throw FormatError("write failed for " + path.string());
  }

 private:
  std::vector<unsigned char> buffer_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    buffer_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }

  bool at_end() const { return pos_ == buffer_.size(); }
  std::size_t remaining() const { return buffer_.size() - pos_; }

  const unsigned char* take(std::size_t n) {
    if (remaining() < n) throw FormatError("unexpected end of file");
    const unsigned char* p = buffer_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint8_t u8() { return *take(1); }
  std::uint32_t u32() {
    const unsigned char* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const unsigned char* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const std::uint32_t n = u32();
    const unsigned char* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }

  const std::vector<unsigned char>& buffer() const { return buffer_; }

 private:
  std::vector<unsigned char> buffer_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_index(const RetrievalIndex& index, const std::filesystem::path& path) {
  const auto& p = index.params();
  ByteWriter w;
  w.bytes(kIndexMagic, sizeof kIndexMagic);
  w.u32(kIndexVersion);
  w.f64(p.gamma1);
  w.f64(p.gamma2);
  w.f64(p.len);
  w.u32(static_cast<std::uint32_t>(p.levels));
  w.u8(p.raw_kernel ? 1 : 0);
  w.u64(index.size());
  for (const auto& r : index.records()) {
    w.str(r.id);
    w.u32(static_cast<std::uint32_t>(r.width));
    w.u32(static_cast<std::uint32_t>(r.height));
    w.u32(static_cast<std::uint32_t>(r.semantic.size()));
    for (Eigen::Index i = 0; i < r.semantic.size(); ++i) w.f64(r.semantic[i]);
    w.u8(r.dominant ? 1 : 0);
    if (r.dominant) {
      w.f64(r.dominant->vp.x());
      w.f64(r.dominant->vp.y());
      w.f64(r.dominant->strength);
      w.u64(r.dominant->pixels.size());
      for (const auto& q : r.dominant->pixels) {
        w.f64(q.x());
        w.f64(q.y());
      }
    }
  }
  w.flush_to(path);
}

RetrievalIndex load_index(const std::filesystem::path& path) {
  ByteReader r(path);
  if (r.remaining() < sizeof kIndexMagic + 4) throw VersionMismatch("index header is truncated: " + path.string());
  if (std::memcmp(r.take(sizeof kIndexMagic), kIndexMagic, sizeof kIndexMagic) != 0)
    throw VersionMismatch("not a vpdet index (bad magic): " + path.string());
  const std::uint32_t version = r.u32();
  if (version != kIndexVersion)
    throw VersionMismatch("index version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kIndexVersion) + ")");

  RetrievalParams p;
  p.gamma1 = r.f64();
  p.gamma2 = r.f64();
  p.len = r.f64();
  p.levels = static_cast<int>(r.u32());
  const std::uint8_t raw = r.u8();
  if (raw > 1 || p.levels > 16) throw FormatError("corrupt index parameters");
  p.raw_kernel = raw == 1;

  RetrievalIndex index(p);
  const std::uint64_t count = r.u64();
  for (std::uint64_t n = 0; n < count; ++n) {
    ImageRecord rec;
    rec.id = r.str();
    rec.width = static_cast<int>(r.u32());
    rec.height = static_cast<int>(r.u32());
    const std::uint32_t dim = r.u32();
    if (std::uint64_t(dim) * 8 > r.remaining()) throw FormatError("corrupt feature block");
    rec.semantic.resize(dim);
    for (std::uint32_t i = 0; i < dim; ++i) rec.semantic[i] = r.f64();
    const std::uint8_t has_dominant = r.u8();
    if (has_dominant > 1) throw FormatError("corrupt record flag");
    if (has_dominant) {
      DominantVP d;
      d.vp.x() = r.f64();
      d.vp.y() = r.f64();
      d.strength = r.f64();
      const std::uint64_t n_pixels = r.u64();
      if (n_pixels > r.remaining() / 16) throw FormatError("corrupt pixel block");
      d.pixels.resize(n_pixels);
      for (auto& q : d.pixels) {
        q.x() = r.f64();
        q.y() = r.f64();
      }
      rec.pyramid = build_pyramid(d.pixels, rec.width, rec.height, p.levels);
      rec.dominant = std::move(d);
    }
    index.add(std::move(rec));
  }
  if (!r.at_end()) throw FormatError("trailing bytes after index records");
  return index;
}

std::vector<FeatureRecord> read_features(const std::filesystem::path& path) {
  ByteReader r(path);
  std::vector<FeatureRecord> out;
  const auto& buf = r.buffer();
  if (buf.size() >= sizeof kFeatureMagic && std::memcmp(buf.data(), kFeatureMagic, sizeof kFeatureMagic) == 0) {
    r.take(sizeof kFeatureMagic);
    while (!r.at_end()) {
      FeatureRecord f;
      f.id = r.str();
      const std::uint32_t dim = r.u32();
      if (std::uint64_t(dim) * 4 > r.remaining()) throw FormatError("truncated feature vector for " + f.id);
      f.values.resize(dim);
      for (std::uint32_t i = 0; i < dim; ++i) f.values[i] = r.f32();
      out.push_back(std::move(f));
    }
    return out;
  }

  std::istringstream text(std::string(buf.begin(), buf.end()));
  std::string line;
  int line_no = 0;
  while (std::getline(text, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    auto fail = [&](const std::string& why) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + why);
    };
    if (fields.size() < 2) fail("expected id,d,values...");
    FeatureRecord f;
    f.id = fields[0];
    long dim = 0;
    try {
      dim = std::stol(fields[1]);
    } catch (const std::exception&) {
      fail("bad dimension");
    }
    if (dim < 0 || static_cast<std::size_t>(dim) != fields.size() - 2) fail("dimension does not match value count");
    f.values.resize(dim);
    for (long i = 0; i < dim; ++i) {
      try {
        std::size_t used = 0;
        f.values[i] = std::stod(fields[i + 2], &used);
      } catch (const std::exception&) {
        fail("bad value");
      }
    }
    out.push_back(std::move(f));
  }
  return out;
}

void write_features_csv(const std::filesystem::path& path, std::span<const FeatureRecord> features) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "# id,d,values\n";
  char buf[32];
  for (const auto& f : features) {
    out << f.id << ',' << f.values.size();
    for (Eigen::Index i = 0; i < f.values.size(); ++i) {
      const auto res = std::to_chars(buf, buf + sizeof buf, f.values[i]);
      out << ',' << std::string_view(buf, res.ptr - buf);
    }
    out << '\n';
  }
}

void write_features_binary(const std::filesystem::path& path, std::span<const FeatureRecord> features) {
  ByteWriter w;
  w.bytes(kFeatureMagic, sizeof kFeatureMagic);
  for (const auto& f : features) {
    w.str(f.id);
    w.u32(static_cast<std::uint32_t>(f.values.size()));
    for (Eigen::Index i = 0; i < f.values.size(); ++i) w.f32(static_cast<float>(f.values[i]));
  }
  w.flush_to(path);
}

}  // namespace vpdet
