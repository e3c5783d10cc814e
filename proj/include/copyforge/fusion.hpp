#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

#include <json.hpp>

#include "copyforge/features.hpp"

namespace copyforge {

enum class Pooling { Mean, FirstToken };

std::string_view to_string(Pooling pooling) noexcept;
Pooling pooling_from_string(std::string_view name);

struct FusionConfig {
  std::size_t input_dim = 512;  // length of each incoming stream
  std::size_t d_model = 512;
  std::size_t num_layers = 1;
  std::size_t num_heads = 4;
  std::uint64_t seed = 0;
  Pooling pooling = Pooling::Mean;

  // Throws Configuration on any violated invariant.
  void validate() const;

  nlohmann::ordered_json to_json() const;
  // Missing keys keep their defaults; unknown keys are rejected.
  static FusionConfig from_json(const nlohmann::json& doc);

  // SHA-256 of the canonical JSON form. Indexes built under one digest are
  // stale under any other.
  std::string digest() const;

  bool operator==(const FusionConfig&) const = default;
};

struct FusedEmbedding {
  Vector vec;  // unit L2 norm
};

// Frozen attention fusion of a feature triple:
//   1. per-stream linear projection input_dim -> d_model
//   2. per-token layer norm, then fixed sinusoidal slot offsets scaled by 0.1
//   3. num_layers pre-norm encoder blocks (multi-head self-attention, GELU
//      feed-forward of width 2*d_model, residuals, no dropout)
//   4. final layer norm, pooling over the three tokens, L2 normalization
// Weights are drawn once from the configured seed (Xavier-uniform, zero
// biases). A Fuser is immutable and safe to share across threads.
class Fuser {
 public:
  explicit Fuser(const FusionConfig& config);

  FusedEmbedding fuse(const FeatureTriple& triple) const;

  const FusionConfig& config() const noexcept { return config_; }
  const std::string& digest() const noexcept { return digest_; }

 private:
  struct Weights;

  FusionConfig config_;
  std::string digest_;
  std::shared_ptr<const Weights> weights_;
};

Fuser build_fuser(const FusionConfig& config);

// Cosine of the two fused embeddings.
double fused_similarity(const Fuser& fuser, const FeatureTriple& a,
                        const FeatureTriple& b);
double fused_similarity(const Fuser& fuser, const EmbedderBackend& backend,
                        const ImageBuffer& a, const ImageBuffer& b);

}  // namespace copyforge
