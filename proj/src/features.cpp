#include "copyforge/features.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <random>

#include "copyforge/error.hpp"

namespace copyforge {
namespace {

constexpr int kCellGrid = 4;
constexpr int kHistBins = 16;
// Statistics are centered on their value for a flat mid-grey image so that
// unrelated images do not share a large common direction. The small bias
// keeps every projection nonzero.
constexpr double kBias = 0.1;

// Tags keep the four projections independent under one seed.
enum StreamTag : std::uint32_t { kVisTag = 1, kClipTag = 2, kTexTag = 3, kGlobalTag = 4 };

std::vector<double> cell_means(const ImageBuffer& image) {
  std::vector<double> stats;
  stats.reserve(kCellGrid * kCellGrid * 3 + 1);
  const int h = image.height();
  const int w = image.width();
  for (int r = 0; r < kCellGrid; ++r) {
    const int y0 = r * h / kCellGrid;
    const int y1 = (r + 1) * h / kCellGrid;
    for (int c = 0; c < kCellGrid; ++c) {
      const int x0 = c * w / kCellGrid;
      const int x1 = (c + 1) * w / kCellGrid;
      std::array<double, 3> sum{};
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          for (int ch = 0; ch < 3; ++ch) sum[ch] += image.at(y, x, ch);
        }
      }
      const double n = static_cast<double>((y1 - y0) * (x1 - x0));
      for (double s : sum) stats.push_back(s / n - 0.5);
    }
  }
  stats.push_back(kBias);
  return stats;
}

std::vector<double> channel_histograms(const ImageBuffer& image) {
  std::vector<double> stats(3 * kHistBins + 1, 0.0);
  const auto px = image.pixels();
  const double n = static_cast<double>(px.size() / 3);
  for (std::size_t i = 0; i < px.size(); ++i) {
    const int ch = static_cast<int>(i % 3);
    const int bin = std::min(kHistBins - 1, static_cast<int>(px[i] * kHistBins));
    stats[ch * kHistBins + bin] += 1.0 / n;
  }
  for (int i = 0; i < 3 * kHistBins; ++i) stats[i] -= 1.0 / kHistBins;
  stats.back() = kBias;
  return stats;
}

std::vector<double> gradient_histogram(const ImageBuffer& image) {
  const int h = image.height();
  const int w = image.width();
  std::vector<double> luma(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      luma[static_cast<std::size_t>(y) * w + x] =
          0.299 * image.at(y, x, 0) + 0.587 * image.at(y, x, 1) +
          0.114 * image.at(y, x, 2);
    }
  }
  std::vector<double> stats(kHistBins + 1, 0.0);
  const double n = static_cast<double>((h - 1) * (w - 1));
  const double max_mag = std::sqrt(2.0);
  for (int y = 0; y + 1 < h; ++y) {
    for (int x = 0; x + 1 < w; ++x) {
      const double here = luma[static_cast<std::size_t>(y) * w + x];
      const double gx = luma[static_cast<std::size_t>(y) * w + x + 1] - here;
      const double gy = luma[static_cast<std::size_t>(y + 1) * w + x] - here;
      const double mag = std::sqrt(gx * gx + gy * gy) / max_mag;
      // sqrt spreads the mass that natural images put near zero gradient
      const int bin = std::min(kHistBins - 1,
                               static_cast<int>(std::sqrt(mag) * kHistBins));
      stats[bin] += 1.0 / n;
    }
  }
  for (int i = 0; i < kHistBins; ++i) stats[i] -= 1.0 / kHistBins;
  stats.back() = kBias;
  return stats;
}

}  // namespace

void FeatureTriple::validate() const {
  if (vis.empty() || vis.size() != clip.size() || vis.size() != tex.size()) {
    fail(ErrorKind::Shape, "feature streams must share a nonzero dimension (vis=" +
                               std::to_string(vis.size()) + ", clip=" +
                               std::to_string(clip.size()) + ", tex=" +
                               std::to_string(tex.size()) + ")");
  }
  for (const Vector* v : {&vis, &clip, &tex}) {
    if (!std::all_of(v->begin(), v->end(), [](float x) { return std::isfinite(x); })) {
      fail(ErrorKind::Numeric, "feature triple contains a non-finite entry");
    }
  }
}

double cosine(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    fail(ErrorKind::Shape, "cosine of vectors with lengths " +
                               std::to_string(a.size()) + " and " +
                               std::to_string(b.size()));
  }
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i];
    const double y = b[i];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 || nb == 0.0) {
    fail(ErrorKind::UndefinedSimilarity, "cosine similarity with a zero vector");
  }
  if (!std::isfinite(dot) || !std::isfinite(na) || !std::isfinite(nb)) {
    fail(ErrorKind::Numeric, "cosine similarity of non-finite vectors");
  }
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

SyntheticEmbedder::SyntheticEmbedder(std::size_t dim, std::uint64_t seed)
    : dim_(dim), seed_(seed) {
  if (dim < kMinDim) {
    fail(ErrorKind::Configuration,
         "embedding dimension must be >= 4, got " + std::to_string(dim));
  }
  auto make = [&](std::size_t in, std::uint32_t tag) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                      static_cast<std::uint32_t>(seed >> 32), tag};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
    Projection p;
    p.in = in;
    p.weights.resize(dim * in);
    for (double& w : p.weights) w = normal(rng);
    return p;
  };
  vis_ = make(kCellGrid * kCellGrid * 3 + 1, kVisTag);
  clip_ = make(3 * kHistBins + 1, kClipTag);
  tex_ = make(kHistBins + 1, kTexTag);
  global_ = make(3 * kHistBins + kCellGrid * kCellGrid * 3 + 1, kGlobalTag);
}

std::string SyntheticEmbedder::id() const {
  return "synthetic-v1-s" + std::to_string(seed_);
}

Vector SyntheticEmbedder::project(const Projection& p,
                                  std::span<const double> stats) const {
  Vector out(dim_);
  for (std::size_t r = 0; r < dim_; ++r) {
    const double* row = p.weights.data() + r * p.in;
    double acc = 0.0;
    for (std::size_t k = 0; k < p.in; ++k) acc += row[k] * stats[k];
    out[r] = static_cast<float>(acc);
  }
  return out;
}

FeatureTriple SyntheticEmbedder::embed_image(const ImageBuffer& image) const {
  FeatureTriple t;
  t.vis = project(vis_, cell_means(image));
  t.clip = project(clip_, channel_histograms(image));
  t.tex = project(tex_, gradient_histogram(image));
  return t;
}

Vector SyntheticEmbedder::embed_image_global(const ImageBuffer& image) const {
  auto hist = channel_histograms(image);
  hist.pop_back();
  const auto cells = cell_means(image);
  hist.insert(hist.end(), cells.begin(), cells.end());
  return project(global_, hist);
}

TextEmbedding SyntheticEmbedder::embed_text(std::string_view text) const {
  if (text.empty()) fail(ErrorKind::Data, "cannot embed empty text");
  std::string norm(text);
  std::transform(norm.begin(), norm.end(), norm.begin(),
                 [](unsigned char ch) { return std::tolower(ch); });
  std::vector<double> acc(dim_, 0.0);
  const std::string salt = std::to_string(seed_) + ":";
  auto add = [&](std::string_view kind, std::string_view feature, double weight) {
    const auto h = fnv1a64(salt + std::string(kind) + std::string(feature));
    const double sign = (h >> 63) ? -1.0 : 1.0;
    acc[h % dim_] += sign * weight;
  };
  const std::string padded = " " + norm + " ";
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
    add("c3:", std::string_view(padded).substr(i, 3), 1.0);
  }
  std::string word;
  for (char ch : norm + " ") {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      word.push_back(ch);
    } else if (!word.empty()) {
      add("w:", word, 2.0);
      word.clear();
    }
  }
  TextEmbedding out;
  out.vec.assign(acc.begin(), acc.end());
  out.source_text = std::string(text);
  return out;
}

FeatureTriple synthetic_embed(const ImageBuffer& image, std::size_t dim,
                              std::uint64_t seed) {
  return SyntheticEmbedder(dim, seed).embed_image(image);
}

}  // namespace copyforge
