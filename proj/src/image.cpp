#include "copyforge/image.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "copyforge/error.hpp"

namespace copyforge {
namespace {

std::size_t pixel_count(int height, int width) {
  return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
         ImageBuffer::kChannels;
}

void check_dims(int height, int width) {
  if (height < ImageBuffer::kMinSide || width < ImageBuffer::kMinSide) {
    fail(ErrorKind::Shape, "image must be at least 8x8, got " +
                               std::to_string(height) + "x" +
                               std::to_string(width));
  }
}

std::string lower_extension(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char ch) { return std::tolower(ch); });
  return ext;
}

// Netpbm header tokens, skipping whitespace and '#' comments.
class PnmReader {
 public:
  explicit PnmReader(std::string data) : data_(std::move(data)) {}

  std::string token() {
    skip_space();
    std::string out;
    while (pos_ < data_.size() &&
           !std::isspace(static_cast<unsigned char>(data_[pos_]))) {
      out.push_back(data_[pos_++]);
    }
    return out;
  }

  long number(const std::filesystem::path& path) {
    const auto text = token();
    if (text.empty() ||
        !std::all_of(text.begin(), text.end(),
                     [](unsigned char ch) { return std::isdigit(ch); })) {
      fail(ErrorKind::Data, "malformed netpbm header in " + path.string());
    }
    return std::stol(text);
  }

  // A single whitespace byte separates the header from binary samples.
  void skip_one() { ++pos_; }

  std::size_t remaining() const { return data_.size() - std::min(pos_, data_.size()); }
  const unsigned char* cursor() const {
    return reinterpret_cast<const unsigned char*>(data_.data()) + pos_;
  }

 private:
  void skip_space() {
    while (pos_ < data_.size()) {
      if (data_[pos_] == '#') {
        while (pos_ < data_.size() && data_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(data_[pos_]))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::string data_;
  std::size_t pos_ = 0;
};

ImageBuffer load_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open image " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  PnmReader reader(std::move(data));
  const auto magic = reader.token();
  const bool gray = magic == "P2" || magic == "P5";
  const bool ascii = magic == "P2" || magic == "P3";
  if (magic != "P2" && magic != "P3" && magic != "P5" && magic != "P6") {
    fail(ErrorKind::Data, "unsupported netpbm variant '" + magic + "' in " +
                              path.string());
  }
  const long width = reader.number(path);
  const long height = reader.number(path);
  const long maxval = reader.number(path);
  if (maxval <= 0 || maxval > 65535 || width > 1 << 16 || height > 1 << 16) {
    fail(ErrorKind::Data, "netpbm header out of range in " + path.string());
  }
  check_dims(static_cast<int>(height), static_cast<int>(width));
  const std::size_t samples_per_pixel = gray ? 1 : 3;
  const std::size_t sample_count =
      static_cast<std::size_t>(width) * height * samples_per_pixel;
  std::vector<double> samples;
  samples.reserve(sample_count);
  if (ascii) {
    for (std::size_t i = 0; i < sample_count; ++i) {
      samples.push_back(static_cast<double>(reader.number(path)));
    }
  } else {
    reader.skip_one();
    const std::size_t bytes_per_sample = maxval > 255 ? 2 : 1;
    if (reader.remaining() < sample_count * bytes_per_sample) {
      fail(ErrorKind::Data, "truncated pixel data in " + path.string());
    }
    const unsigned char* p = reader.cursor();
    for (std::size_t i = 0; i < sample_count; ++i) {
      if (bytes_per_sample == 2) {
        samples.push_back(static_cast<double>((p[2 * i] << 8) | p[2 * i + 1]));
      } else {
        samples.push_back(static_cast<double>(p[i]));
      }
    }
  }
  std::vector<float> pixels(pixel_count(static_cast<int>(height),
                                        static_cast<int>(width)));
  const double scale = 1.0 / static_cast<double>(maxval);
  for (std::size_t px = 0; px < static_cast<std::size_t>(width) * height; ++px) {
    for (int c = 0; c < 3; ++c) {
      const double v = gray ? samples[px] : samples[px * 3 + c];
      pixels[px * 3 + c] = static_cast<float>(std::min(1.0, v * scale));
    }
  }
  return ImageBuffer(static_cast<int>(height), static_cast<int>(width),
                     std::move(pixels));
}

ImageBuffer load_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    const std::string reason = image.message;
    png_image_free(&image);
    fail(ErrorKind::Io, "cannot read PNG " + path.string() + ": " + reason);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string reason = image.message;
    png_image_free(&image);
    fail(ErrorKind::Data, "cannot decode PNG " + path.string() + ": " + reason);
  }
  const int height = static_cast<int>(image.height);
  const int width = static_cast<int>(image.width);
  check_dims(height, width);
  std::vector<float> pixels(buffer.size());
  std::transform(buffer.begin(), buffer.end(), pixels.begin(),
                 [](png_byte b) { return static_cast<float>(b) / 255.0f; });
  return ImageBuffer(height, width, std::move(pixels));
}

std::vector<std::uint8_t> quantize(const ImageBuffer& image) {
  std::vector<std::uint8_t> out(image.pixels().size());
  std::transform(image.pixels().begin(), image.pixels().end(), out.begin(),
                 [](float v) {
                   return static_cast<std::uint8_t>(
                       std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
                 });
  return out;
}

}  // namespace

ImageBuffer::ImageBuffer(int height, int width)
    : height_(height), width_(width) {
  check_dims(height, width);
  pixels_.assign(pixel_count(height, width), 0.0f);
}

ImageBuffer::ImageBuffer(int height, int width, std::vector<float> pixels)
    : height_(height), width_(width), pixels_(std::move(pixels)) {
  check_dims(height, width);
  if (pixels_.size() != pixel_count(height, width)) {
    fail(ErrorKind::Shape, "pixel buffer holds " + std::to_string(pixels_.size()) +
                               " values, expected " +
                               std::to_string(pixel_count(height, width)));
  }
  for (float v : pixels_) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      fail(ErrorKind::Numeric, "pixel intensity outside [0,1]");
    }
  }
}

void ImageBuffer::clamp01() noexcept {
  for (float& v : pixels_) v = std::isnan(v) ? 0.0f : std::clamp(v, 0.0f, 1.0f);
}

ImageBuffer load_image(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    fail(ErrorKind::Io, "no such image file: " + path.string());
  }
  const auto ext = lower_extension(path);
  if (ext == ".png") return load_png(path);
  if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") return load_pnm(path);
  fail(ErrorKind::Data, "unsupported image format '" + ext + "': " + path.string());
}

void save_image(const ImageBuffer& image, const std::filesystem::path& path) {
  const auto bytes = quantize(image);
  const auto ext = lower_extension(path);
  if (ext == ".png") {
    png_image out{};
    out.version = PNG_IMAGE_VERSION;
    out.width = static_cast<png_uint_32>(image.width());
    out.height = static_cast<png_uint_32>(image.height());
    out.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&out, path.c_str(), 0, bytes.data(), 0,
                                 nullptr)) {
      const std::string reason = out.message;
      png_image_free(&out);
      fail(ErrorKind::Io, "cannot write PNG " + path.string() + ": " + reason);
    }
    return;
  }
  if (ext != ".ppm" && ext != ".pnm") {
    fail(ErrorKind::Data, "unsupported output format '" + ext + "'");
  }
  std::ofstream outf(path, std::ios::binary);
  if (!outf) fail(ErrorKind::Io, "cannot write image " + path.string());
  outf << "P6\n" << image.width() << ' ' << image.height() << "\n255\n";
  outf.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
  if (!outf) fail(ErrorKind::Io, "short write to " + path.string());
}

std::vector<std::byte> canonical_bytes(const ImageBuffer& image) {
  std::vector<std::byte> out;
  out.reserve(8 + image.pixels().size() * 4);
  auto put_u32 = [&out](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xffu));
  };
  put_u32(static_cast<std::uint32_t>(image.height()));
  put_u32(static_cast<std::uint32_t>(image.width()));
  for (float v : image.pixels()) put_u32(std::bit_cast<std::uint32_t>(v));
  return out;
}

}  // namespace copyforge
