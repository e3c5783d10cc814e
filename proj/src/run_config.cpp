#include "copyforge/run_config.hpp"

#include "copyforge/cache.hpp"
#include "copyforge/error.hpp"

namespace copyforge {
namespace {

using Json = nlohmann::json;

template <typename T>
T field(const Json& value, const std::string& where) {
  try {
    return value.get<T>();
  } catch (const Json::exception& e) {
    fail(ErrorKind::Configuration, where + ": " + e.what());
  }
}

void require_object(const Json& doc, const std::string& where) {
  if (!doc.is_object()) fail(ErrorKind::Configuration, where + " must be a JSON object");
}

BackendSettings backend_from_json(const Json& doc) {
  require_object(doc, "backend");
  BackendSettings b;
  for (const auto& [key, value] : doc.items()) {
    if (key == "kind") b.kind = field<std::string>(value, "backend.kind");
    else if (key == "dim") b.dim = field<std::size_t>(value, "backend.dim");
    else if (key == "seed") b.seed = field<std::uint64_t>(value, "backend.seed");
    else fail(ErrorKind::Configuration, "unknown backend key '" + key + "'");
  }
  return b;
}

CalibrationSettings calibration_from_json(const Json& doc) {
  require_object(doc, "calibration");
  CalibrationSettings c;
  for (const auto& [key, value] : doc.items()) {
    if (key == "tau_lo") c.tau_lo = field<double>(value, "calibration.tau_lo");
    else if (key == "tau_hi") c.tau_hi = field<double>(value, "calibration.tau_hi");
    else if (key == "tau_step") c.tau_step = field<double>(value, "calibration.tau_step");
    else if (key == "weight_step") c.weight_step = field<double>(value, "calibration.weight_step");
    else if (key == "objective") {
      try {
        c.objective = objective_from_string(field<std::string>(value, "calibration.objective"));
      } catch (const Error& e) {
        fail(ErrorKind::Configuration, e.what());
      }
    } else {
      fail(ErrorKind::Configuration, "unknown calibration key '" + key + "'");
    }
  }
  return c;
}

PerturbSettings perturb_from_json(const Json& doc) {
  require_object(doc, "perturb");
  PerturbSettings p;
  for (const auto& [key, value] : doc.items()) {
    if (key == "side") {
      p.side = side_from_string(field<std::string>(value, "perturb.side"));
    } else if (key == "params") {
      p.params = field<std::map<std::string, std::map<std::string, double>>>(value,
                                                                             "perturb.params");
    } else {
      fail(ErrorKind::Configuration, "unknown perturb key '" + key + "'");
    }
  }
  return p;
}

}  // namespace

RunConfig::RunConfig() { fusion.input_dim = backend.dim; }

void RunConfig::validate() const {
  if (backend.kind != "synthetic") {
    fail(ErrorKind::Configuration,
         "backend.kind '" + backend.kind + "' is not available (supported: synthetic)");
  }
  if (backend.dim < SyntheticEmbedder::kMinDim || backend.dim > 65535) {
    fail(ErrorKind::Configuration, "backend.dim must be in [4, 65535]");
  }
  if (fusion.input_dim != backend.dim) {
    fail(ErrorKind::Configuration, "fusion.input_dim (" + std::to_string(fusion.input_dim) +
                                       ") must equal backend.dim (" +
                                       std::to_string(backend.dim) + ")");
  }
  if (fusion.d_model > 65535) fail(ErrorKind::Configuration, "fusion.d_model must be <= 65535");
  fusion.validate();
  require_valid(decision);
  rapta.validate();
  (void)attack_suite();
  const auto& c = calibration;
  if (!(c.tau_lo < c.tau_hi) || !(c.tau_step > 0.0)) {
    fail(ErrorKind::Configuration, "calibration needs tau_lo < tau_hi and tau_step > 0");
  }
  if (!(c.weight_step > 0.0 && c.weight_step <= 1.0)) {
    fail(ErrorKind::Configuration, "calibration.weight_step must be in (0, 1]");
  }
  if (workers == 0) fail(ErrorKind::Configuration, "workers must be at least 1");
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["backend"] = {{"kind", backend.kind}, {"dim", backend.dim}, {"seed", backend.seed}};
  j["fusion"] = fusion.to_json();
  j["decision"] = decision.to_json();
  j["rapta"] = rapta.to_json();
  nlohmann::ordered_json p;
  p["side"] = std::string(to_string(perturb.side));
  p["params"] = nlohmann::ordered_json::object();
  for (const auto& spec : attack_suite()) {
    p["params"][std::string(to_string(spec.kind))] = spec.to_json()["params"];
  }
  j["perturb"] = p;
  nlohmann::ordered_json c;
  c["tau_lo"] = calibration.tau_lo;
  c["tau_hi"] = calibration.tau_hi;
  c["tau_step"] = calibration.tau_step;
  c["weight_step"] = calibration.weight_step;
  c["objective"] = std::string(to_string(calibration.objective));
  j["calibration"] = c;
  j["seed"] = seed;
  j["workers"] = workers;
  j["cache_dir"] = cache_dir ? nlohmann::ordered_json(*cache_dir) : nlohmann::ordered_json();
  return j;
}

RunConfig RunConfig::from_json(const Json& doc) {
  require_object(doc, "configuration");
  RunConfig cfg;
  bool explicit_input_dim = false;
  for (const auto& [key, value] : doc.items()) {
    if (key == "backend") {
      cfg.backend = backend_from_json(value);
    } else if (key == "fusion") {
      require_object(value, "fusion");
      explicit_input_dim = value.contains("input_dim");
      cfg.fusion = FusionConfig::from_json(value);
    } else if (key == "decision") {
      cfg.decision = DecisionConfig::from_json(value);
    } else if (key == "rapta") {
      cfg.rapta = RaptaConfig::from_json(value);
    } else if (key == "perturb") {
      cfg.perturb = perturb_from_json(value);
    } else if (key == "calibration") {
      cfg.calibration = calibration_from_json(value);
    } else if (key == "seed") {
      cfg.seed = field<std::uint64_t>(value, "seed");
    } else if (key == "workers") {
      cfg.workers = field<unsigned>(value, "workers");
    } else if (key == "cache_dir") {
      if (value.is_null()) cfg.cache_dir.reset();
      else cfg.cache_dir = field<std::string>(value, "cache_dir");
    } else {
      fail(ErrorKind::Configuration, "unknown configuration key '" + key + "'");
    }
  }
  if (!explicit_input_dim) cfg.fusion.input_dim = cfg.backend.dim;
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::parse(std::string_view text) {
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) {
    RunConfig cfg;
    cfg.validate();
    return cfg;
  }
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::exception& e) {
    fail(ErrorKind::Configuration, std::string("configuration is not valid JSON: ") + e.what());
  }
  return from_json(doc);
}

std::shared_ptr<const EmbedderBackend> RunConfig::make_backend() const {
  auto base = std::make_shared<const SyntheticEmbedder>(backend.dim, backend.seed);
  if (!cache_dir) return base;
  return std::make_shared<const CachedEmbedder>(base, *cache_dir);
}

std::vector<PerturbationSpec> RunConfig::attack_suite() const {
  auto suite = standard_suite(seed);
  for (const auto& [name, overrides] : perturb.params) {
    AttackKind kind;
    try {
      kind = attack_from_string(name);
    } catch (const Error& e) {
      fail(ErrorKind::Configuration, std::string("perturb.params: ") + e.what());
    }
    for (auto& spec : suite) {
      if (spec.kind != kind) continue;
      for (const auto& [param, value] : overrides) spec.params[param] = value;
      spec.validate();
    }
  }
  return suite;
}

std::vector<double> RunConfig::tau_grid() const {
  return make_grid(calibration.tau_lo, calibration.tau_hi, calibration.tau_step);
}

}  // namespace copyforge
