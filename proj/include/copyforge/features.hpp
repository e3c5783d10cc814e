#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "copyforge/image.hpp"

namespace copyforge {

using Vector = std::vector<float>;

// Per-image descriptors: visual (patch layout), global semantic, and texture.
struct FeatureTriple {
  Vector vis;
  Vector clip;
  Vector tex;

  std::size_t dim() const noexcept { return vis.size(); }
  // Throws Shape on unequal/empty streams and Numeric on non-finite entries.
  void validate() const;

  bool operator==(const FeatureTriple&) const = default;
};

struct TextEmbedding {
  Vector vec;
  std::string source_text;
};

// cos(a, b) = a.b / (|a| |b|), accumulated in double. A zero vector has no
// direction, so it raises UndefinedSimilarity instead of returning 0.
double cosine(std::span<const float> a, std::span<const float> b);

// Contract for the three feature extractors plus the joint text/image
// encoder used by prompt scoring. Implementations must be deterministic.
class EmbedderBackend {
 public:
  virtual ~EmbedderBackend() = default;

  // Stable identifier; part of every cache key.
  virtual std::string id() const = 0;
  // Common stream dimension d.
  virtual std::size_t dim() const = 0;

  virtual FeatureTriple embed_image(const ImageBuffer& image) const = 0;
  virtual TextEmbedding embed_text(std::string_view text) const = 0;
  // Image side of the text/image consistency score; same space as embed_text.
  virtual Vector embed_image_global(const ImageBuffer& image) const = 0;

  // False if callers must not invoke this backend from several threads.
  virtual bool thread_safe() const { return true; }
};

// Backend with no learned weights. Streams are fixed random projections of
// simple image statistics:
//   vis  - per-cell channel means on a 4x4 grid
//   clip - 16-bin histogram per channel
//   tex  - 16-bin histogram of luminance gradient magnitude
// Text is embedded by signed feature hashing of character trigrams and words.
class SyntheticEmbedder final : public EmbedderBackend {
 public:
  static constexpr std::size_t kMinDim = 4;

  SyntheticEmbedder(std::size_t dim, std::uint64_t seed);

  std::string id() const override;
  std::size_t dim() const override { return dim_; }
  std::uint64_t seed() const noexcept { return seed_; }

  FeatureTriple embed_image(const ImageBuffer& image) const override;
  TextEmbedding embed_text(std::string_view text) const override;
  Vector embed_image_global(const ImageBuffer& image) const override;

 private:
  struct Projection {
    std::size_t in = 0;
    std::vector<double> weights;  // dim x in, row-major
  };

  Vector project(const Projection& p, std::span<const double> stats) const;

  std::size_t dim_;
  std::uint64_t seed_;
  Projection vis_;
  Projection clip_;
  Projection tex_;
  Projection global_;
};

FeatureTriple synthetic_embed(const ImageBuffer& image, std::size_t dim,
                              std::uint64_t seed);

// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

}  // namespace copyforge
