#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "copyforge/features.hpp"
#include "copyforge/fusion.hpp"

namespace copyforge {

using StreamWeights = std::array<double, 3>;  // (vis, clip, tex)

inline constexpr double kWeightSumTolerance = 1e-9;

struct DecisionConfig {
  double tau1 = 0.938;  // copy gate on fused similarity
  double tau2 = 0.970;  // retrieve/style boundary on the weighted score
  StreamWeights omega{0.24, 0.38, 0.38};

  nlohmann::ordered_json to_json() const;
  static DecisionConfig from_json(const nlohmann::json& doc);
  // Reads the fields without range checks; pair with validate_config().
  static DecisionConfig from_json_unchecked(const nlohmann::json& doc);

  bool operator==(const DecisionConfig&) const = default;
};

// Every violated invariant, one message each. Empty means valid.
std::vector<std::string> validate_config(const DecisionConfig& config);
// Throws Configuration listing all violations.
void require_valid(const DecisionConfig& config);

enum class CopyType { Retrieve, Style, NotCopy };

std::string_view to_string(CopyType type) noexcept;

struct StreamSimilarities {
  double s_fus = 0.0;
  double s_vis = 0.0;
  double s_clip = 0.0;
  double s_tex = 0.0;
  // Present only when the fused gate passed.
  std::optional<double> s_bar;
};

struct CopyVerdict {
  bool is_copy = false;
  CopyType copy_type = CopyType::NotCopy;
  StreamSimilarities scores;
};

// omega . (s_vis, s_clip, s_tex). Throws Configuration when the weights are
// negative or do not sum to 1.
double weighted_score(const StreamWeights& streams, const StreamWeights& omega);

// Gate and type rule on precomputed similarities:
//   s_fus <= tau1            -> not a copy
//   s_bar >  tau2            -> retrieve copy
//   otherwise                -> style copy
CopyVerdict classify(double s_fus, const StreamWeights& streams,
                     const DecisionConfig& config);

// Full pair decision. Stream similarities are taken on the raw triples, the
// gate on their fused embeddings.
CopyVerdict decide(const FeatureTriple& g, const FeatureTriple& r,
                   const Fuser& fuser, const DecisionConfig& config);
CopyVerdict decide(const ImageBuffer& g, const ImageBuffer& r,
                   const EmbedderBackend& backend, const Fuser& fuser,
                   const DecisionConfig& config);

// {query, reference, s_fus, s_vis, s_clip, s_tex, s_bar|null, is_copy, copy_type}
nlohmann::ordered_json verdict_to_json(const CopyVerdict& verdict,
                                       std::string_view query,
                                       std::string_view reference);

}  // namespace copyforge
