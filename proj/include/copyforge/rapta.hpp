#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "copyforge/features.hpp"
#include "copyforge/image.hpp"

namespace copyforge {

// Region-aware prompt augmentation: detector boxes -> NMS -> confidence
// filter -> coarse grid positions -> template instantiation -> consistency
// scoring -> temperature sampling of one caption variant.

struct Box {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double area() const noexcept;
  bool operator==(const Box&) const = default;
};

double iou(const Box& a, const Box& b) noexcept;

struct RegionProposal {
  Box box;
  std::string class_label;
  double confidence = 0.0;

  // Throws Data unless x1 < x2, y1 < y2, the box lies inside width x height
  // and confidence is in [0,1].
  void validate(int width, int height) const;
  bool operator==(const RegionProposal&) const = default;
};

// Greedy suppression by descending confidence (stable for equal scores):
// keep the best remaining box, drop every other box with IoU > tau_nms.
std::vector<RegionProposal> nms(std::vector<RegionProposal> proposals, double tau_nms);

// Confidence strictly above tau_b, then the first top_m by confidence.
std::vector<RegionProposal> filter_and_rank(std::vector<RegionProposal> proposals,
                                            double tau_b, std::size_t top_m);

struct GridSpec {
  int rows = 3;
  int cols = 3;
};

// Cell of the normalized box center. Coordinates on an interior boundary go
// to the higher cell; 1.0 belongs to the last cell. On a 3x3 grid the tokens
// are top-left ... bottom-right, otherwise "row<r>-col<c>" (1-based).
std::string grid_position(const Box& box, int width, int height, GridSpec grid = {});

// Fill-in template over the placeholders <p>, <c>, <c'>, <pos>, written with
// either mathematical angle brackets (U+27E8/U+27E9) or ASCII < >.
// A template uses <c> and either <pos> (single region) or <c'> (two regions).
class PromptTemplate {
 public:
  static PromptTemplate parse(std::string_view text);

  const std::string& text() const noexcept { return text_; }
  bool two_object() const noexcept { return two_object_; }

  std::string instantiate(std::string_view prompt, std::string_view cls,
                          std::string_view pos_or_second_class) const;

 private:
  enum class Slot { Literal, Prompt, Class, SecondClass, Position };
  struct Piece {
    Slot slot;
    std::string literal;
  };

  std::string text_;
  bool two_object_ = false;
  std::vector<Piece> pieces_;
};

// One template per non-blank line; '#' starts a comment line. Errors name
// the 1-based line.
std::vector<PromptTemplate> load_templates(std::istream& in);
std::vector<PromptTemplate> default_templates();

struct PositionedRegion {
  RegionProposal proposal;
  std::string position;
};

struct PromptVariant {
  enum class Source { Base, Template };

  std::string text;
  Source source = Source::Base;
  int template_index = -1;   // index into the template list
  std::vector<int> regions;  // indices into the kept regions
  double consistency = 0.0;  // S_v
  double weight = 0.0;       // (S_v)_+^gamma
  double probability = 0.0;  // pi(v)
};

// Base prompt first, then every (region, single-region template) pair, then
// each two-object template for one seeded ordered pair i != i' (only with at
// least two regions). Variants whose text repeats an earlier one are dropped.
std::vector<PromptVariant> build_variant_pool(std::string_view prompt,
                                              std::span<const PositionedRegion> regions,
                                              std::span<const PromptTemplate> templates,
                                              std::uint64_t seed);

struct SamplingDistribution {
  std::vector<double> weights;
  std::vector<double> probabilities;
  bool fallback = false;  // every weight was zero; all mass on the base prompt
};

// w = max(S, 0)^gamma, pi = w / sum(w). `base_index` receives the mass when
// all weights vanish.
SamplingDistribution sampling_distribution(std::span<const double> scores, double gamma,
                                           std::size_t base_index = 0);

struct SampleResult {
  std::size_t index = 0;
  std::string text;
  TextEmbedding embedding;
  std::vector<PromptVariant> pool;  // annotated with S_v, w_v, pi
  bool fallback = false;
};

SampleResult score_and_sample(std::vector<PromptVariant> pool, const ImageBuffer& image,
                              const EmbedderBackend& backend, double gamma,
                              std::uint64_t seed);

// Mean squared error between the injected noise and the prediction.
double diffusion_loss(std::span<const double> noise, std::span<const double> prediction);

class DetectorBackend {
 public:
  virtual ~DetectorBackend() = default;
  virtual std::vector<RegionProposal> detect(const ImageBuffer& image) const = 0;
};

// Returns a fixed list of proposals for every image.
class ScriptedDetector final : public DetectorBackend {
 public:
  ScriptedDetector() = default;
  explicit ScriptedDetector(std::vector<RegionProposal> proposals)
      : proposals_(std::move(proposals)) {}
  // [{"box": [x1, y1, x2, y2], "label": "dog", "confidence": 0.9}, ...]
  static ScriptedDetector from_json(const nlohmann::json& doc);

  std::vector<RegionProposal> detect(const ImageBuffer&) const override { return proposals_; }

 private:
  std::vector<RegionProposal> proposals_;
};

struct RaptaConfig {
  double tau_nms = 0.5;
  double tau_b = 0.7;
  std::size_t top_m = 3;
  std::vector<std::string> templates{"⟨p⟩, with a ⟨c⟩ in the ⟨pos⟩",
                                     "⟨p⟩, featuring ⟨c⟩ and ⟨c'⟩"};
  double gamma = 2.0;
  GridSpec grid{};

  void validate() const;
  nlohmann::ordered_json to_json() const;
  static RaptaConfig from_json(const nlohmann::json& doc);
};

struct AugmentTrace {
  std::string prompt;
  std::vector<RegionProposal> proposals;
  std::vector<PositionedRegion> kept;
  SampleResult sample;

  nlohmann::ordered_json to_json() const;
};

// One pass of the augmentation procedure for a training pair (image, prompt).
AugmentTrace augment(const ImageBuffer& image, std::string_view prompt,
                     const DetectorBackend& detector, const EmbedderBackend& backend,
                     const RaptaConfig& config, std::span<const PromptTemplate> templates,
                     std::uint64_t seed);

}  // namespace copyforge
