#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "copyforge/decision.hpp"
#include "copyforge/features.hpp"
#include "copyforge/fusion.hpp"
#include "copyforge/image.hpp"

namespace copyforge {

enum class AttackKind {
  GaussianNoise,
  GaussianBlur,
  Poisson,
  SaltPepper,
  Speckle,
  Crop,
  FlipH,
  FlipV,
  Occlude,
  Rotate,
};

std::string_view to_string(AttackKind kind) noexcept;
AttackKind attack_from_string(std::string_view name);

// Parameters per kind (defaults in parentheses):
//   gaussian_noise  sigma (0.1)
//   gaussian_blur   kernel (5, odd), sigma (1.5)
//   poisson         scale (255): counts ~ Poisson(scale * x), x' = counts / scale
//   salt_pepper     amount (0.05): fraction of pixels, half salt, half pepper
//   speckle         variance (0.05): x' = x + x * n, n ~ N(0, variance)
//   crop            fraction (0.20): centered window of floor((1-f)H) x floor((1-f)W)
//   flip_h, flip_v  none
//   occlude         fraction (0.10): black square of that area at a seeded position
//   rotate          degrees (30): counter-clockwise about the center, same canvas,
//                   black corners, bilinear sampling
struct PerturbationSpec {
  AttackKind kind = AttackKind::GaussianNoise;
  std::map<std::string, double> params;
  std::uint64_t seed = 0;

  // Spec for `kind` with every parameter at its default.
  static PerturbationSpec make(AttackKind kind, std::uint64_t seed = 0);

  // Parameter value, falling back to the default for the kind.
  double param(const std::string& name) const;
  // Throws Configuration on unknown keys or out-of-range values.
  void validate() const;
  // Attack label used in reports, e.g. "crop20%" or "rotate30".
  std::string label() const;

  nlohmann::ordered_json to_json() const;
  static PerturbationSpec from_json(const nlohmann::json& doc);
};

// Pure, seeded transform. Output intensities are clipped to [0,1].
ImageBuffer apply(const ImageBuffer& image, const PerturbationSpec& spec);

// The ten standard attacks in report order: gaussian_noise, gaussian_blur,
// poisson, salt_pepper, speckle, crop(0.20), flip_h, flip_v, occlude(0.10),
// rotate(30).
std::vector<PerturbationSpec> standard_suite(std::uint64_t seed = 0);

enum class Side { Query, Reference };

std::string_view to_string(Side side) noexcept;
Side side_from_string(std::string_view name);

struct RobustnessRow {
  std::string attack;  // "clean" for the unperturbed pair
  CopyVerdict verdict;
};

// Clean row first, then one row per spec with the chosen side perturbed.
std::vector<RobustnessRow> robustness_report(const ImageBuffer& g, const ImageBuffer& r,
                                             const std::vector<PerturbationSpec>& suite,
                                             const EmbedderBackend& backend,
                                             const Fuser& fuser, const DecisionConfig& config,
                                             Side side = Side::Query);

// attack,s_fus,s_vis,s_clip,s_tex,s_bar,verdict (s_bar empty when the gate failed)
void write_robustness_csv(std::ostream& out, const std::vector<RobustnessRow>& rows);

}  // namespace copyforge
