#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "copyforge/image.hpp"

namespace testing_support {

using copyforge::ImageBuffer;

// Square checkerboard with `cell`-pixel squares, white in the top-left.
inline ImageBuffer checkerboard(int side = 16, int cell = 4, bool inverted = false) {
  ImageBuffer img(side, side);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const bool white = ((y / cell + x / cell) % 2 == 0) != inverted;
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = white ? 1.0f : 0.0f;
    }
  }
  return img;
}

inline ImageBuffer constant(int h, int w, float v) {
  ImageBuffer img(h, w);
  for (float& p : img.pixels()) p = v;
  return img;
}

inline ImageBuffer uniform_noise(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  ImageBuffer img(h, w);
  for (float& p : img.pixels()) p = u(rng);
  return img;
}

// Flat background with a few solid discs; loosely resembles object photos.
inline ImageBuffer blobs(int side, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageBuffer img(side, side);
  double bg[3] = {u(rng), u(rng), u(rng)};
  struct Disc {
    double cx, cy, r, col[3];
  };
  Disc discs[4];
  for (auto& d : discs) {
    d.cx = u(rng) * side;
    d.cy = u(rng) * side;
    d.r = side * (0.08 + 0.25 * u(rng));
    for (double& c : d.col) c = u(rng);
  }
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      for (int c = 0; c < 3; ++c) {
        double v = bg[c];
        for (const auto& d : discs) {
          if (std::hypot(x - d.cx, y - d.cy) < d.r) v = d.col[c];
        }
        img.at(y, x, c) = static_cast<float>(v);
      }
    }
  }
  return img;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("copyforge-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing_support
