#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace copyforge {

// RGB image with float intensities in [0,1], stored row-major as H x W x 3.
class ImageBuffer {
 public:
  static constexpr int kChannels = 3;
  static constexpr int kMinSide = 8;

  // Black image of the given size.
  ImageBuffer(int height, int width);
  // Takes ownership of `pixels` (H*W*3 values) after validating range and size.
  ImageBuffer(int height, int width, std::vector<float> pixels);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }

  float at(int y, int x, int c) const noexcept {
    return pixels_[index(y, x, c)];
  }
  float& at(int y, int x, int c) noexcept { return pixels_[index(y, x, c)]; }

  std::span<const float> pixels() const noexcept { return pixels_; }
  std::span<float> pixels() noexcept { return pixels_; }

  // Clamps every intensity into [0,1]; NaN becomes 0.
  void clamp01() noexcept;

  bool operator==(const ImageBuffer& other) const = default;

 private:
  std::size_t index(int y, int x, int c) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * kChannels + c;
  }

  int height_;
  int width_;
  std::vector<float> pixels_;
};

// Supported formats: binary/ASCII PPM and PGM, and PNG (8/16-bit, any colour
// type; alpha is dropped). Chosen by file extension on save.
ImageBuffer load_image(const std::filesystem::path& path);
void save_image(const ImageBuffer& image, const std::filesystem::path& path);

// Little-endian serialization of (height, width, pixels) used for content
// digests of in-memory images.
std::vector<std::byte> canonical_bytes(const ImageBuffer& image);

}  // namespace copyforge
