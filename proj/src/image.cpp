#include "vpdet/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <png.h>

#include "vpdet/errors.hpp"

namespace vpdet {

namespace {

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class PnmReader {
 public:
  explicit PnmReader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

  int next_int() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) throw FormatError("malformed PNM header");
    long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_++] - '0');
      if (value > 1 << 24) throw FormatError("PNM header value out of range");
    }
    return static_cast<int>(value);
  }

  // Exactly one whitespace byte separates the header from binary samples.
  void skip_single_space() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) throw FormatError("malformed PNM header");
    ++pos_;
  }

  std::size_t position() const { return pos_; }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 2;
};

double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

LoadedRaster read_pnm(const std::vector<unsigned char>& bytes) {
  const char kind = static_cast<char>(bytes[1]);
  const bool color = kind == '3' || kind == '6';
  const bool binary = kind == '5' || kind == '6';
  if (kind != '2' && kind != '3' && kind != '5' && kind != '6') throw FormatError("unsupported PNM variant");

  PnmReader reader(bytes);
  const int width = reader.next_int();
  const int height = reader.next_int();
  const int maxval = reader.next_int();
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535) throw FormatError("bad PNM dimensions");
  const int channels = color ? 3 : 1;

  LoadedRaster out;
  out.max_value = maxval;
  out.values.resize(height, width);

  if (binary) {
    reader.skip_single_space();
    const std::size_t sample_bytes = maxval > 255 ? 2 : 1;
    const std::size_t needed = std::size_t(width) * height * channels * sample_bytes;
    std::size_t pos = reader.position();
    if (bytes.size() - pos < needed) throw FormatError("truncated PNM data");
    auto sample = [&]() -> double {
      if (sample_bytes == 1) return bytes[pos++];
      const int v = (bytes[pos] << 8) | bytes[pos + 1];  // big-endian
      pos += 2;
      return v;
    };
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        if (color) {
          const double r = sample(), g = sample(), b = sample();
          out.values(y, x) = luma(r, g, b);
        } else {
          out.values(y, x) = sample();
        }
      }
  } else {
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        if (color) {
          const double r = reader.next_int(), g = reader.next_int(), b = reader.next_int();
          out.values(y, x) = luma(r, g, b);
        } else {
          out.values(y, x) = reader.next_int();
        }
      }
  }
  if ((out.values > maxval).any()) throw FormatError("PNM sample exceeds maxval");
  return out;
}

LoadedRaster read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str()))
    throw FormatError("cannot read PNG " + path.string() + ": " + image.message);

  const bool sixteen = (image.format & PNG_FORMAT_FLAG_LINEAR) != 0;
  image.format = sixteen ? PNG_FORMAT_LINEAR_Y : PNG_FORMAT_GRAY;
  const int width = static_cast<int>(image.width);
  const int height = static_cast<int>(image.height);

  LoadedRaster out;
  out.values.resize(height, width);
  if (sixteen) {
    std::vector<png_uint_16> buffer(PNG_IMAGE_SIZE(image) / sizeof(png_uint_16));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr))
      throw FormatError("cannot decode PNG " + path.string() + ": " + image.message);
    out.max_value = 65535;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) out.values(y, x) = buffer[std::size_t(y) * width + x];
  } else {
    std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr))
      throw FormatError("cannot decode PNG " + path.string() + ": " + image.message);
    out.max_value = 255;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) out.values(y, x) = buffer[std::size_t(y) * width + x];
  }
  return out;
}

// Resamples each row of `in` to `out_len` columns with a box filter.
Raster resample_rows(const Raster& in, int out_len) {
  const int in_len = static_cast<int>(in.cols());
  Raster out(in.rows(), out_len);
  const double scale = double(in_len) / out_len;
  for (int i = 0; i < out_len; ++i) {
    const double lo = i * scale;
    const double hi = (i + 1) * scale;
    const int k0 = static_cast<int>(std::floor(lo));
    const int k1 = std::min(in_len - 1, static_cast<int>(std::ceil(hi)) - 1);
    Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(in.rows());
    double total = 0.0;
    for (int k = k0; k <= k1; ++k) {
      const double w = std::min(hi, k + 1.0) - std::max(lo, double(k));
      if (w <= 0.0) continue;
      acc += w * in.col(k);
      total += w;
    }
    out.col(i) = acc / total;
  }
  return out;
}

}  // namespace

LoadedRaster read_raster(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  if (bytes.size() >= 8 && bytes[0] == 0x89 && bytes[1] == 'P' && bytes[2] == 'N' && bytes[3] == 'G') return read_png(path);
  if (bytes.size() >= 3 && bytes[0] == 'P') return read_pnm(bytes);
  throw FormatError("unrecognized raster format: " + path.string());
}

Raster read_grayscale(const std::filesystem::path& path) {
  LoadedRaster raster = read_raster(path);
  return raster.values / double(raster.max_value);
}

void write_pgm(const std::filesystem::path& path, const Raster& image, int max_value) {
  if (max_value != 255 && max_value != 65535) throw FormatError("PGM max value must be 255 or 65535");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "P5\n" << image.cols() << ' ' << image.rows() << '\n' << max_value << '\n';
  for (Eigen::Index y = 0; y < image.rows(); ++y)
    for (Eigen::Index x = 0; x < image.cols(); ++x) {
      const double v = std::clamp(image(y, x), 0.0, 1.0);
      const int q = static_cast<int>(std::lround(v * max_value));
      if (max_value == 255) {
        out.put(static_cast<char>(q));
      } else {
        out.put(static_cast<char>(q >> 8));
        out.put(static_cast<char>(q & 0xff));
      }
    }
}

Raster resample(const Raster& image, int width, int height) {
  if (width <= 0 || height <= 0) throw DimensionMismatch("resample target must be positive");
  if (image.cols() == width && image.rows() == height) return image;
  Raster horizontal = resample_rows(image, width);
  Raster transposed = horizontal.transpose();
  Raster vertical = resample_rows(transposed, height);
  return vertical.transpose();
}

Raster resize_longer_side(const Raster& image, int len) {
  const double longer = double(std::max(image.rows(), image.cols()));
  const double scale = len / longer;
  const int width = std::max(1, static_cast<int>(std::lround(image.cols() * scale)));
  const int height = std::max(1, static_cast<int>(std::lround(image.rows() * scale)));
  return resample(image, width, height);
}

}  // namespace vpdet
