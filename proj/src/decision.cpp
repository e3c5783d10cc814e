#include "copyforge/decision.hpp"

#include <cmath>
#include <sstream>

#include "copyforge/error.hpp"

namespace copyforge {

nlohmann::ordered_json DecisionConfig::to_json() const {
  nlohmann::ordered_json j;
  j["tau1"] = tau1;
  j["tau2"] = tau2;
  j["omega"] = omega;
  return j;
}

DecisionConfig DecisionConfig::from_json(const nlohmann::json& doc) {
  DecisionConfig cfg = from_json_unchecked(doc);
  require_valid(cfg);
  return cfg;
}

DecisionConfig DecisionConfig::from_json_unchecked(const nlohmann::json& doc) {
  if (!doc.is_object()) fail(ErrorKind::Configuration, "decision config must be a JSON object");
  DecisionConfig cfg;
  for (const auto& [key, value] : doc.items()) {
    try {
      if (key == "tau1") cfg.tau1 = value.get<double>();
      else if (key == "tau2") cfg.tau2 = value.get<double>();
      else if (key == "omega") {
        const auto w = value.get<std::vector<double>>();
        if (w.size() != 3) fail(ErrorKind::Configuration, "omega must have exactly 3 weights");
        cfg.omega = {w[0], w[1], w[2]};
      } else {
        fail(ErrorKind::Configuration, "unknown decision config key '" + key + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Configuration, "decision config key '" + key + "': " + e.what());
    }
  }
  return cfg;
}

std::vector<std::string> validate_config(const DecisionConfig& config) {
  std::vector<std::string> violations;
  auto in_open_unit = [&](double v, const char* name) {
    if (!(v > 0.0 && v < 1.0)) {
      std::ostringstream msg;
      msg << name << " = " << v << " is outside (0, 1)";
      violations.push_back(msg.str());
    }
  };
  in_open_unit(config.tau1, "tau1");
  in_open_unit(config.tau2, "tau2");
  double sum = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    if (!(config.omega[i] >= 0.0) || !std::isfinite(config.omega[i])) {
      std::ostringstream msg;
      msg << "omega[" << i << "] = " << config.omega[i] << " is negative or not finite";
      violations.push_back(msg.str());
    }
    sum += config.omega[i];
  }
  if (!(std::abs(sum - 1.0) <= kWeightSumTolerance)) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "omega sums to " << sum << ", expected 1";
    violations.push_back(msg.str());
  }
  return violations;
}

void require_valid(const DecisionConfig& config) {
  const auto violations = validate_config(config);
  if (violations.empty()) return;
  std::string msg = "invalid decision config:";
  for (const auto& v : violations) msg += " " + v + ";";
  fail(ErrorKind::Configuration, msg);
}

std::string_view to_string(CopyType type) noexcept {
  switch (type) {
    case CopyType::Retrieve: return "retrieve";
    case CopyType::Style: return "style";
    case CopyType::NotCopy: return "not_copy";
  }
  return "not_copy";
}

double weighted_score(const StreamWeights& streams, const StreamWeights& omega) {
  double sum = 0.0;
  for (double w : omega) {
    if (!(w >= 0.0)) fail(ErrorKind::Configuration, "stream weights must be nonnegative");
    sum += w;
  }
  if (!(std::abs(sum - 1.0) <= kWeightSumTolerance)) {
    fail(ErrorKind::Configuration, "stream weights must sum to 1");
  }
  return omega[0] * streams[0] + omega[1] * streams[1] + omega[2] * streams[2];
}

CopyVerdict classify(double s_fus, const StreamWeights& streams,
                     const DecisionConfig& config) {
  require_valid(config);
  CopyVerdict v;
  v.scores.s_fus = s_fus;
  v.scores.s_vis = streams[0];
  v.scores.s_clip = streams[1];
  v.scores.s_tex = streams[2];
  if (s_fus <= config.tau1) {
    v.is_copy = false;
    v.copy_type = CopyType::NotCopy;
    return v;
  }
  const double s_bar = weighted_score(streams, config.omega);
  v.scores.s_bar = s_bar;
  v.is_copy = true;
  v.copy_type = s_bar > config.tau2 ? CopyType::Retrieve : CopyType::Style;
  return v;
}

CopyVerdict decide(const FeatureTriple& g, const FeatureTriple& r,
                   const Fuser& fuser, const DecisionConfig& config) {
  require_valid(config);
  const double s_fus = cosine(fuser.fuse(g).vec, fuser.fuse(r).vec);
  const StreamWeights streams{cosine(g.vis, r.vis), cosine(g.clip, r.clip),
                              cosine(g.tex, r.tex)};
  return classify(s_fus, streams, config);
}

CopyVerdict decide(const ImageBuffer& g, const ImageBuffer& r,
                   const EmbedderBackend& backend, const Fuser& fuser,
                   const DecisionConfig& config) {
  require_valid(config);
  return decide(backend.embed_image(g), backend.embed_image(r), fuser, config);
}

nlohmann::ordered_json verdict_to_json(const CopyVerdict& verdict,
                                       std::string_view query,
                                       std::string_view reference) {
  nlohmann::ordered_json j;
  j["query"] = query;
  j["reference"] = reference;
  j["s_fus"] = verdict.scores.s_fus;
  j["s_vis"] = verdict.scores.s_vis;
  j["s_clip"] = verdict.scores.s_clip;
  j["s_tex"] = verdict.scores.s_tex;
  if (verdict.scores.s_bar) {
    j["s_bar"] = *verdict.scores.s_bar;
  } else {
    j["s_bar"] = nullptr;
  }
  j["is_copy"] = verdict.is_copy;
  j["copy_type"] = std::string(to_string(verdict.copy_type));
  return j;
}

}  // namespace copyforge
