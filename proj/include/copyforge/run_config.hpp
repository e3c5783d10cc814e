#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "copyforge/calibration.hpp"
#include "copyforge/decision.hpp"
#include "copyforge/features.hpp"
#include "copyforge/fusion.hpp"
#include "copyforge/perturb.hpp"
#include "copyforge/rapta.hpp"

namespace copyforge {

struct BackendSettings {
  std::string kind = "synthetic";
  std::size_t dim = 512;
  std::uint64_t seed = 0;
};

struct CalibrationSettings {
  double tau_lo = 0.5;
  double tau_hi = 1.0;
  double tau_step = 0.001;
  double weight_step = 0.02;
  Objective objective = Objective::Accuracy;
};

struct PerturbSettings {
  Side side = Side::Query;
  // Per-attack parameter overrides, e.g. {"crop": {"fraction": 0.3}}.
  std::map<std::string, std::map<std::string, double>> params;
};

// Everything a command needs, loaded from one JSON document:
//
//   {"backend": {...}, "fusion": {...}, "decision": {...}, "rapta": {...},
//    "perturb": {...}, "calibration": {...}, "seed": 0, "workers": 1,
//    "cache_dir": null}
//
// Missing keys keep defaults, unknown keys are rejected at every level.
// fusion.input_dim follows backend.dim unless given explicitly, in which
// case the two must agree.
struct RunConfig {
  BackendSettings backend;
  FusionConfig fusion;
  DecisionConfig decision;
  RaptaConfig rapta;
  PerturbSettings perturb;
  CalibrationSettings calibration;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  std::optional<std::string> cache_dir;

  RunConfig();

  // Throws Configuration listing the first violated invariant.
  void validate() const;

  nlohmann::ordered_json to_json() const;
  static RunConfig from_json(const nlohmann::json& doc);
  static RunConfig parse(std::string_view text);

  // Backend described by `backend`, wrapped in the embedding cache when
  // cache_dir is set.
  std::shared_ptr<const EmbedderBackend> make_backend() const;
  // The ten standard attacks seeded with `seed`, overrides applied.
  std::vector<PerturbationSpec> attack_suite() const;
  std::vector<double> tau_grid() const;
};

}  // namespace copyforge
