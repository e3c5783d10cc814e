#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <istream>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "copyforge/decision.hpp"

namespace copyforge {

enum class Label { Copy, NonCopy, Retrieve, Style };

std::string_view to_string(Label label) noexcept;
Label label_from_string(std::string_view name);
// Copy, Retrieve and Style are positive for the copy gate.
inline bool is_positive(Label label) noexcept { return label != Label::NonCopy; }

struct ScoreEntry {
  double s_fus = 0.0;
  double s_vis = 0.0;
  double s_clip = 0.0;
  double s_tex = 0.0;
  Label label = Label::NonCopy;
};

struct LabeledScoreSet {
  std::vector<ScoreEntry> entries;

  // One JSON object per line: {s_fus, s_vis, s_clip, s_tex, label}. Blank
  // lines are skipped; errors name the offending line number.
  static LabeledScoreSet from_jsonl(std::istream& in);
  // Throws Numeric when a score lies outside [-1, 1].
  void validate_ranges() const;
};

enum class Objective { Accuracy, F1 };

std::string_view to_string(Objective objective) noexcept;
Objective objective_from_string(std::string_view name);

struct SweepPoint {
  double tau = 0.0;
  double accuracy = 0.0;
  double f1 = 0.0;
};

struct SweepResult {
  std::vector<SweepPoint> grid;
  Objective objective = Objective::Accuracy;
  double best_tau = 0.0;
  double best_accuracy = 0.0;  // accuracy at best_tau
  double best_f1 = 0.0;        // F1 at best_tau
};

// Ascending thresholds lo, lo+step, ..., hi computed as lo + i*step and
// rounded to 12 decimals so that e.g. 0.9 is the literal double 0.9.
std::vector<double> make_grid(double lo, double hi, double step);

// Accuracy/F1 of the rule positive = [score > tau] at every grid point.
// The best point maximizes the objective; ties go to the smallest tau.
SweepResult sweep_threshold(std::span<const double> scores,
                            std::span<const bool> positive,
                            std::span<const double> grid,
                            Objective objective = Objective::Accuracy);
// Sweep over s_fus with copy/noncopy labels.
SweepResult sweep_threshold(const LabeledScoreSet& scores,
                            std::span<const double> grid,
                            Objective objective = Objective::Accuracy);

struct WeightCell {
  StreamWeights w{};  // (w_vis, w_clip, w_tex)
  double tau = 0.0;
  double accuracy = 0.0;
  double f1 = 0.0;
};

struct WeightGridResult {
  std::vector<WeightCell> cells;  // lexicographic in (w_vis, w_clip)
  WeightCell best;
  Objective objective = Objective::Accuracy;
};

// Exhaustive search over the simplex w_vis + w_clip + w_tex = 1 with the
// given step. For each cell the weighted score is swept over tau_grid and
// the best threshold recorded. Ties go to the lexicographically smallest
// (w_vis, w_clip).
WeightGridResult grid_search_weights(const LabeledScoreSet& scores, double step,
                                     std::span<const double> tau_grid,
                                     Objective objective = Objective::Accuracy,
                                     unsigned workers = 1);

struct TypeThreshold {
  double tau = 0.0;
  bool clean = false;  // retrieve and style scores are linearly separable
  double accuracy = 0.0;
};

// Retrieve/style boundary on the weighted score. Entries labelled copy or
// noncopy are ignored. The threshold always lies in (0, 1); DegenerateData is
// raised when a class is missing or no such threshold exists.
TypeThreshold select_type_threshold(const LabeledScoreSet& scores,
                                    const StreamWeights& omega);

// CSV: tau,accuracy,f1 / w_vis,w_clip,accuracy. When image_path is given a
// PPM plot is rendered as well. Nothing is written for an empty result.
void emit_curves(const SweepResult& result, const std::filesystem::path& csv_path,
                 const std::optional<std::filesystem::path>& image_path = std::nullopt);
void emit_curves(const WeightGridResult& result, const std::filesystem::path& csv_path,
                 const std::optional<std::filesystem::path>& image_path = std::nullopt);

}  // namespace copyforge
