#include "copyforge.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>

#include "copyforge/calibration.hpp"
#include "copyforge/decision.hpp"
#include "copyforge/error.hpp"
#include "copyforge/features.hpp"
#include "copyforge/fusion.hpp"
#include "copyforge/gallery.hpp"
#include "copyforge/image.hpp"
#include "copyforge/perturb.hpp"
#include "copyforge/rapta.hpp"
#include "copyforge/run_config.hpp"
#include "copyforge/ssim.hpp"

namespace cf = copyforge;
namespace fs = std::filesystem;
using OJson = nlohmann::ordered_json;

struct cf_engine {
  cf::RunConfig config;
  std::shared_ptr<const cf::EmbedderBackend> backend;
  cf::Fuser fuser;
};

struct cf_image {
  cf::ImageBuffer image;
};

struct cf_index {
  cf::GalleryIndex index;
};

namespace {

thread_local std::string g_last_error;

cf_status status_for(cf::ErrorKind kind) {
  switch (kind) {
    case cf::ErrorKind::Configuration:
    case cf::ErrorKind::Template:
      return CF_ERR_CONFIG;
    case cf::ErrorKind::Io:
      return CF_ERR_IO;
    case cf::ErrorKind::StaleIndex:
      return CF_ERR_STALE_INDEX;
    case cf::ErrorKind::Internal:
      return CF_ERR_INTERNAL;
    case cf::ErrorKind::Shape:
    case cf::ErrorKind::Numeric:
    case cf::ErrorKind::UndefinedSimilarity:
    case cf::ErrorKind::Integrity:
    case cf::ErrorKind::DegenerateData:
    case cf::ErrorKind::Data:
      return CF_ERR_DATA;
  }
  return CF_ERR_INTERNAL;
}

cf_status set_error(cf_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

// Runs `body`, translating every exception into a status code.
template <typename Body>
cf_status guarded(Body&& body) noexcept {
  try {
    body();
    return CF_OK;
  } catch (const cf::Error& e) {
    return set_error(status_for(e.kind()),
                     std::string(cf::to_string(e.kind())) + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    return set_error(CF_ERR_INVALID_ARGUMENT, std::string("invalid argument: ") + e.what());
  } catch (const fs::filesystem_error& e) {
    return set_error(CF_ERR_IO, e.what());
  } catch (const nlohmann::json::exception& e) {
    return set_error(CF_ERR_DATA, e.what());
  } catch (const std::bad_alloc&) {
    return set_error(CF_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(CF_ERR_INTERNAL, e.what());
  } catch (...) {
    return set_error(CF_ERR_INTERNAL, "unknown failure");
  }
}

void require(bool condition, const char* what) {
  if (!condition) throw std::invalid_argument(what);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

nlohmann::json parse_json(const char* text, const std::string& what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    cf::fail(cf::ErrorKind::Data, what + " is not valid JSON: " + e.what());
  }
}

OJson detect_summary(const cf::EvalReport& report) {
  std::size_t retrieve = 0, style = 0, not_copy = 0;
  for (const auto& p : report.pairs) {
    switch (p.verdict.copy_type) {
      case cf::CopyType::Retrieve: ++retrieve; break;
      case cf::CopyType::Style: ++style; break;
      case cf::CopyType::NotCopy: ++not_copy; break;
    }
  }
  OJson summary;
  summary["pairs"] = report.total;
  summary["counts"] = {{"retrieve", retrieve}, {"style", style}, {"not_copy", not_copy}};
  summary["evaluation"] = report.to_json();
  return summary;
}

std::vector<cf::PromptTemplate> templates_from(const std::vector<std::string>& texts) {
  std::vector<cf::PromptTemplate> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(cf::PromptTemplate::parse(t));
  return out;
}

}  // namespace

extern "C" {

const char* cf_version(void) { return "0.1.0"; }

const char* cf_last_error(void) { return g_last_error.c_str(); }

const char* cf_status_name(cf_status status) {
  switch (status) {
    case CF_OK: return "ok";
    case CF_ERR_CONFIG: return "configuration error";
    case CF_ERR_DATA: return "data error";
    case CF_ERR_INTERNAL: return "internal error";
    case CF_ERR_IO: return "io error";
    case CF_ERR_STALE_INDEX: return "stale index";
    case CF_ERR_INVALID_ARGUMENT: return "invalid argument";
  }
  return "unknown status";
}

void cf_free_string(char* s) { std::free(s); }

cf_status cf_engine_create(const char* config_json, cf_engine** out) {
  return guarded([&] {
    require(out != nullptr, "out is NULL");
    *out = nullptr;
    auto config = cf::RunConfig::parse(config_json == nullptr ? "" : config_json);
    if (!config.cache_dir) {
      if (const char* env = std::getenv("COPYFORGE_CACHE_DIR"); env != nullptr && *env != '\0') {
        config.cache_dir = env;
      }
    }
    auto backend = config.make_backend();
    cf::Fuser fuser = cf::build_fuser(config.fusion);
    *out = new cf_engine{std::move(config), std::move(backend), std::move(fuser)};
  });
}

void cf_engine_destroy(cf_engine* engine) { delete engine; }

cf_status cf_engine_config_json(const cf_engine* engine, char** out_json) {
  return guarded([&] {
    require(engine != nullptr && out_json != nullptr, "engine and out_json are required");
    *out_json = dup_string(engine->config.to_json().dump());
  });
}

cf_status cf_image_load(const char* path, cf_image** out) {
  return guarded([&] {
    require(path != nullptr && out != nullptr, "path and out are required");
    *out = new cf_image{cf::load_image(path)};
  });
}

cf_status cf_image_from_rgb(int height, int width, const float* rgb, cf_image** out) {
  return guarded([&] {
    require(rgb != nullptr && out != nullptr, "rgb and out are required");
    require(height > 0 && width > 0, "height and width must be positive");
    const std::size_t n = static_cast<std::size_t>(height) * width * cf::ImageBuffer::kChannels;
    *out = new cf_image{cf::ImageBuffer(height, width, std::vector<float>(rgb, rgb + n))};
  });
}

cf_status cf_image_save(const cf_image* image, const char* path) {
  return guarded([&] {
    require(image != nullptr && path != nullptr, "image and path are required");
    cf::save_image(image->image, path);
  });
}

cf_status cf_image_size(const cf_image* image, int* height, int* width) {
  return guarded([&] {
    require(image != nullptr && height != nullptr && width != nullptr, "NULL argument");
    *height = image->image.height();
    *width = image->image.width();
  });
}

cf_status cf_image_pixels(const cf_image* image, float* out, size_t capacity) {
  return guarded([&] {
    require(image != nullptr && out != nullptr, "image and out are required");
    const auto px = image->image.pixels();
    require(capacity >= px.size(), "capacity is smaller than height*width*3");
    std::memcpy(out, px.data(), px.size() * sizeof(float));
  });
}

void cf_image_destroy(cf_image* image) { delete image; }

cf_status cf_decide(const cf_engine* engine, const cf_image* query, const cf_image* reference,
                    const char* query_name, const char* reference_name, char** out_json) {
  return guarded([&] {
    require(engine && query && reference && out_json, "NULL argument");
    const auto verdict = cf::decide(query->image, reference->image, *engine->backend,
                                    engine->fuser, engine->config.decision);
    *out_json = dup_string(cf::verdict_to_json(verdict, query_name ? query_name : "",
                                               reference_name ? reference_name : "")
                               .dump());
  });
}

cf_status cf_classify_scores(const cf_engine* engine, double s_fus, double s_vis, double s_clip,
                             double s_tex, char** out_json) {
  return guarded([&] {
    require(engine && out_json, "NULL argument");
    for (const double s : {s_fus, s_vis, s_clip, s_tex}) {
      if (!(s >= -1.0 && s <= 1.0)) {
        throw cf::Error(cf::ErrorKind::Numeric, "similarity " + std::to_string(s) +
                                                    " is outside [-1, 1]");
      }
    }
    const auto verdict = cf::classify(s_fus, {s_vis, s_clip, s_tex}, engine->config.decision);
    *out_json = dup_string(cf::verdict_to_json(verdict, "", "").dump());
  });
}

cf_status cf_detect_manifest(const cf_engine* engine, const char* manifest_path,
                             char** out_verdicts_jsonl, char** out_summary_json) {
  return guarded([&] {
    require(engine && manifest_path && out_verdicts_jsonl && out_summary_json, "NULL argument");
    const auto manifest = cf::PairManifest::load(manifest_path);
    const auto report = cf::evaluate_manifest(manifest, *engine->backend, engine->fuser,
                                              engine->config.decision, engine->config.workers);
    std::string lines;
    for (const auto& p : report.pairs) {
      lines += cf::verdict_to_json(p.verdict, p.row.query.generic_string(),
                                   p.row.reference.generic_string())
                   .dump();
      lines += '\n';
    }
    char* verdicts = dup_string(lines);
    try {
      *out_summary_json = dup_string(detect_summary(report).dump());
    } catch (...) {
      std::free(verdicts);
      throw;
    }
    *out_verdicts_jsonl = verdicts;
  });
}

cf_status cf_manifest_scores(const cf_engine* engine, const char* manifest_path,
                             char** out_scores_jsonl) {
  return guarded([&] {
    require(engine && manifest_path && out_scores_jsonl, "NULL argument");
    const auto manifest = cf::PairManifest::load(manifest_path);
    const auto report = cf::evaluate_manifest(manifest, *engine->backend, engine->fuser,
                                              engine->config.decision, engine->config.workers);
    std::string lines;
    for (const auto& p : report.pairs) {
      const auto& s = p.verdict.scores;
      OJson j;
      j["s_fus"] = s.s_fus;
      j["s_vis"] = s.s_vis;
      j["s_clip"] = s.s_clip;
      j["s_tex"] = s.s_tex;
      j["label"] = std::string(cf::to_string(p.row.label));
      lines += j.dump();
      lines += '\n';
    }
    *out_scores_jsonl = dup_string(lines);
  });
}

cf_status cf_evaluate_manifest(const cf_engine* engine, const char* manifest_path,
                               char** out_report_json) {
  return guarded([&] {
    require(engine && manifest_path && out_report_json, "NULL argument");
    const auto manifest = cf::PairManifest::load(manifest_path);
    const auto report = cf::evaluate_manifest(manifest, *engine->backend, engine->fuser,
                                              engine->config.decision, engine->config.workers);
    *out_report_json = dup_string(report.to_json().dump());
  });
}

cf_status cf_calibrate(const cf_engine* engine, const char* scores_jsonl, const char* out_dir,
                       int render, char** out_summary_json) {
  return guarded([&] {
    require(engine && scores_jsonl && out_dir && out_summary_json, "NULL argument");
    std::istringstream in(scores_jsonl);
    const auto scores = cf::LabeledScoreSet::from_jsonl(in);
    scores.validate_ranges();
    const auto& settings = engine->config.calibration;
    const auto grid = engine->config.tau_grid();

    const auto sweep = cf::sweep_threshold(scores, grid, settings.objective);
    const auto weights = cf::grid_search_weights(scores, settings.weight_step, grid,
                                                 settings.objective, engine->config.workers);

    cf::DecisionConfig chosen = engine->config.decision;
    chosen.tau1 = sweep.best_tau;
    chosen.omega = weights.best.w;
    OJson type;
    bool has_retrieve = false, has_style = false;
    for (const auto& e : scores.entries) {
      has_retrieve |= e.label == cf::Label::Retrieve;
      has_style |= e.label == cf::Label::Style;
    }
    type = {{"source", "configuration"}};
    if (has_retrieve && has_style) {
      try {
        const auto t = cf::select_type_threshold(scores, chosen.omega);
        chosen.tau2 = t.tau;
        type = {{"source", "calibrated"}, {"clean", t.clean}, {"accuracy", t.accuracy}};
      } catch (const cf::Error& e) {
        if (e.kind() != cf::ErrorKind::DegenerateData) throw;
        type["note"] = e.what();
      }
    }
    cf::require_valid(chosen);

    const fs::path dir(out_dir);
    fs::create_directories(dir);
    std::optional<fs::path> sweep_img, weights_img;
    if (render != 0) {
      sweep_img = dir / "sweep.ppm";
      weights_img = dir / "weights.ppm";
    }
    cf::emit_curves(sweep, dir / "sweep.csv", sweep_img);
    cf::emit_curves(weights, dir / "weights.csv", weights_img);
    {
      OJson fragment;
      fragment["decision"] = chosen.to_json();
      std::ofstream f(dir / "calibration.json", std::ios::trunc);
      if (!f) cf::fail(cf::ErrorKind::Io, "cannot write " + (dir / "calibration.json").string());
      f << fragment.dump(2) << '\n';
    }

    OJson summary;
    summary["entries"] = scores.entries.size();
    summary["objective"] = std::string(cf::to_string(settings.objective));
    summary["tau1"] = {{"value", sweep.best_tau},
                       {"accuracy", sweep.best_accuracy},
                       {"f1", sweep.best_f1}};
    summary["omega"] = {{"value", weights.best.w},
                        {"tau", weights.best.tau},
                        {"accuracy", weights.best.accuracy},
                        {"f1", weights.best.f1}};
    type["value"] = chosen.tau2;
    summary["tau2"] = type;
    summary["decision"] = chosen.to_json();
    *out_summary_json = dup_string(summary.dump());
  });
}

cf_status cf_validate_decision_config(const char* decision_json, char** out_json) {
  return guarded([&] {
    require(decision_json && out_json, "NULL argument");
    const auto doc = parse_json(decision_json, "decision config");
    // Range problems are reported as violations rather than thrown.
    cf::DecisionConfig cfg;
    OJson violations = OJson::array();
    try {
      if (doc.contains("decision")) {
        cfg = cf::DecisionConfig::from_json_unchecked(doc.at("decision"));
      } else {
        cfg = cf::DecisionConfig::from_json_unchecked(doc);
      }
      for (const auto& v : cf::validate_config(cfg)) violations.push_back(v);
    } catch (const cf::Error& e) {
      violations.push_back(e.what());
    }
    *out_json = dup_string(violations.dump());
  });
}

cf_status cf_index_build(const cf_engine* engine, const char* image_dir, const char* index_dir,
                         char** out_report_json) {
  return guarded([&] {
    require(engine && image_dir && index_dir && out_report_json, "NULL argument");
    const auto items = cf::scan_image_dir(image_dir);
    auto result = cf::build_index(items, *engine->backend, engine->fuser, engine->config.workers);
    result.index.save(index_dir);
    OJson report;
    report["entries"] = result.index.size();
    report["fuser_digest"] = result.index.fuser_digest();
    report["d_model"] = result.index.d_model();
    report["failures"] = OJson::array();
    for (const auto& f : result.failures) {
      report["failures"].push_back({{"id", f.id}, {"source", f.source}, {"error", f.message}});
    }
    *out_report_json = dup_string(report.dump());
  });
}

cf_status cf_index_open(const cf_engine* engine, const char* index_dir, cf_index** out) {
  return guarded([&] {
    require(engine && index_dir && out, "NULL argument");
    *out = nullptr;
    *out = new cf_index{cf::GalleryIndex::load(index_dir, engine->fuser.digest())};
  });
}

cf_status cf_index_size(const cf_index* index, size_t* out) {
  return guarded([&] {
    require(index && out, "NULL argument");
    *out = index->index.size();
  });
}

void cf_index_destroy(cf_index* index) { delete index; }

cf_status cf_retrieve(const cf_engine* engine, const cf_index* index, const cf_image* query,
                      size_t k, char** out_json) {
  return guarded([&] {
    require(engine && index && query && out_json, "NULL argument");
    require(k >= 1, "k must be at least 1");
    const auto ranked =
        cf::top_k(query->image, index->index, *engine->backend, engine->fuser, k);
    OJson rows = OJson::array();
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      rows.push_back({{"rank", i + 1}, {"id", ranked[i].id}, {"s_fus", ranked[i].s_fus}});
    }
    *out_json = dup_string(rows.dump());
  });
}

cf_status cf_copy_rate(const cf_engine* engine, const cf_index* index,
                       const char* const* query_paths, size_t count, char** out_json) {
  return guarded([&] {
    require(engine && index && out_json, "NULL argument");
    require(count == 0 || query_paths != nullptr, "query_paths is NULL");
    std::vector<cf::GalleryItem> queries;
    for (std::size_t i = 0; i < count; ++i) {
      require(query_paths[i] != nullptr, "NULL query path");
      queries.push_back({query_paths[i], query_paths[i]});
    }
    const auto result = cf::copy_rate(queries, index->index, *engine->backend, engine->fuser,
                                      engine->config.decision, engine->config.workers);
    OJson j;
    j["rate"] = result.rate;
    j["copies"] = result.copies;
    j["queries"] = result.matches.size();
    j["tau1"] = engine->config.decision.tau1;
    j["matches"] = OJson::array();
    for (const auto& m : result.matches) {
      j["matches"].push_back(
          {{"query", m.query}, {"match", m.match_id}, {"s_fus", m.s_fus}, {"is_copy", m.is_copy}});
    }
    *out_json = dup_string(j.dump());
  });
}

cf_status cf_standard_suite_json(const cf_engine* engine, char** out_json) {
  return guarded([&] {
    require(engine && out_json, "NULL argument");
    OJson list = OJson::array();
    for (const auto& spec : engine->config.attack_suite()) {
      auto j = spec.to_json();
      j["label"] = spec.label();
      list.push_back(std::move(j));
    }
    *out_json = dup_string(list.dump());
  });
}

cf_status cf_perturb(const cf_image* image, const char* spec_json, cf_image** out) {
  return guarded([&] {
    require(image && spec_json && out, "NULL argument");
    const auto doc = parse_json(spec_json, "perturbation spec");
    const auto spec = cf::PerturbationSpec::from_json(doc);
    *out = new cf_image{cf::apply(image->image, spec)};
  });
}

cf_status cf_robustness(const cf_engine* engine, const cf_image* query, const cf_image* reference,
                        const char* side, char** out_csv) {
  return guarded([&] {
    require(engine && query && reference && out_csv, "NULL argument");
    const cf::Side chosen = side ? cf::side_from_string(side) : engine->config.perturb.side;
    const auto rows =
        cf::robustness_report(query->image, reference->image, engine->config.attack_suite(),
                              *engine->backend, engine->fuser, engine->config.decision, chosen);
    std::ostringstream csv;
    cf::write_robustness_csv(csv, rows);
    *out_csv = dup_string(csv.str());
  });
}

cf_status cf_augment(const cf_engine* engine, const cf_image* image, const char* prompt,
                     const char* detections_json, const char* templates_text,
                     char** out_trace_json) {
  return guarded([&] {
    require(engine && image && prompt && out_trace_json, "NULL argument");
    cf::ScriptedDetector detector;
    if (detections_json != nullptr) {
      detector = cf::ScriptedDetector::from_json(parse_json(detections_json, "detections"));
    }
    std::vector<cf::PromptTemplate> templates;
    if (templates_text != nullptr) {
      std::istringstream in(templates_text);
      templates = cf::load_templates(in);
    } else {
      templates = templates_from(engine->config.rapta.templates);
    }
    const auto trace = cf::augment(image->image, prompt, detector, *engine->backend,
                                   engine->config.rapta, templates, engine->config.seed);
    *out_trace_json = dup_string(trace.to_json().dump());
  });
}

cf_status cf_ssim(const cf_image* a, const cf_image* b, double* out) {
  return guarded([&] {
    require(a && b && out, "NULL argument");
    *out = cf::ssim(a->image, b->image);
  });
}

cf_status cf_cosine(const float* a, const float* b, size_t n, double* out) {
  return guarded([&] {
    require(a && b && out, "NULL argument");
    require(n > 0, "n must be positive");
    *out = cf::cosine(std::span<const float>(a, n), std::span<const float>(b, n));
  });
}

cf_status cf_weighted_score(const double streams[3], const double omega[3], double* out) {
  return guarded([&] {
    require(streams && omega && out, "NULL argument");
    *out = cf::weighted_score({streams[0], streams[1], streams[2]},
                              {omega[0], omega[1], omega[2]});
  });
}

cf_status cf_diffusion_loss(const double* noise, const double* prediction, size_t n,
                            double* out) {
  return guarded([&] {
    require(noise && prediction && out, "NULL argument");
    *out = cf::diffusion_loss(std::span<const double>(noise, n),
                              std::span<const double>(prediction, n));
  });
}

}  // extern "C"
