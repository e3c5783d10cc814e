// Command-line front end. Talks to the library only through copyforge.h.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "copyforge.h"

namespace fs = std::filesystem;
using OJson = nlohmann::ordered_json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kInternal = 3 };

int exit_code(cf_status status) {
  switch (status) {
    case CF_OK: return kOk;
    case CF_ERR_CONFIG:
    case CF_ERR_INVALID_ARGUMENT: return kUsage;
    case CF_ERR_DATA:
    case CF_ERR_IO:
    case CF_ERR_STALE_INDEX: return kData;
    case CF_ERR_INTERNAL: return kInternal;
  }
  return kInternal;
}

// Thrown to unwind out of a command with a specific exit code.
struct CommandError {
  int code;
  std::string message;
};

void check(cf_status status, const std::string& context = {}) {
  if (status == CF_OK) return;
  std::string msg = cf_last_error();
  if (!context.empty()) msg = context + ": " + msg;
  if (status == CF_ERR_STALE_INDEX) {
    msg += "\nhint: rebuild the index with `copyforge index --images <dir> --index <dir>` "
           "under the current configuration";
  }
  throw CommandError{exit_code(status), msg};
}

// Owning wrappers for C handles and strings.
struct StringDeleter {
  void operator()(char* s) const { cf_free_string(s); }
};
using CString = std::unique_ptr<char, StringDeleter>;

std::string take(char* s) {
  CString owner(s);
  return s ? std::string(s) : std::string();
}

struct EngineDeleter {
  void operator()(cf_engine* e) const { cf_engine_destroy(e); }
};
struct ImageDeleter {
  void operator()(cf_image* i) const { cf_image_destroy(i); }
};
struct IndexDeleter {
  void operator()(cf_index* i) const { cf_index_destroy(i); }
};
using Engine = std::unique_ptr<cf_engine, EngineDeleter>;
using Image = std::unique_ptr<cf_image, ImageDeleter>;
using Index = std::unique_ptr<cf_index, IndexDeleter>;

Image load(const std::string& path) {
  cf_image* img = nullptr;
  check(cf_image_load(path.c_str(), &img));
  return Image(img);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CommandError{kData, "io error: cannot read " + path};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::string out;
};

class Session {
 public:
  explicit Session(const Globals& g) : out_(g.out) {
    nlohmann::json doc = nlohmann::json::object();
    if (!g.config_path.empty()) {
      const std::string text = read_text(g.config_path);
      try {
        doc = nlohmann::json::parse(text);
      } catch (const nlohmann::json::exception& e) {
        throw CommandError{kUsage, "configuration error: " + g.config_path + ": " + e.what()};
      }
      if (!doc.is_object()) {
        throw CommandError{kUsage, "configuration error: " + g.config_path +
                                       " must hold a JSON object"};
      }
    }
    if (g.seed) doc["seed"] = *g.seed;
    if (g.workers) doc["workers"] = *g.workers;
    cf_engine* e = nullptr;
    check(cf_engine_create(doc.dump().c_str(), &e));
    engine_.reset(e);
    config_ = OJson::parse(take([&] {
      char* s = nullptr;
      check(cf_engine_config_json(engine_.get(), &s));
      return s;
    }()));
    if (!out_.empty()) {
      std::error_code ec;
      fs::create_directories(out_, ec);
      if (ec) throw CommandError{kData, "io error: cannot create " + out_.string()};
    }
  }

  cf_engine* engine() const { return engine_.get(); }
  const OJson& config() const { return config_; }
  bool has_out() const { return !out_.empty(); }
  fs::path out_path(const std::string& name) const { return out_ / name; }

  // Writes `content` to <out>/<name> when --out is set, else to stdout.
  void emit(const std::string& name, const std::string& content) const {
    if (out_.empty()) {
      std::cout << content;
      if (!content.empty() && content.back() != '\n') std::cout << '\n';
      return;
    }
    write_file(out_ / name, content);
  }

  // summary.json: command name, effective configuration, results.
  void summary(const std::string& command, OJson results) const {
    OJson doc;
    doc["command"] = command;
    doc["config"] = config_;
    doc["results"] = std::move(results);
    if (out_.empty()) {
      std::cerr << doc.dump() << '\n';
    } else {
      write_file(out_ / "summary.json", doc.dump(2) + "\n");
    }
  }

  static void write_file(const fs::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw CommandError{kData, "io error: cannot write " + path.string()};
    f << content;
  }

 private:
  fs::path out_;
  Engine engine_;
  OJson config_;
};

// ---- commands ---------------------------------------------------------------

struct DetectArgs {
  std::string query, reference, manifest;
};

void run_detect(const Session& s, const DetectArgs& a) {
  if (!a.manifest.empty()) {
    char* lines = nullptr;
    char* summary = nullptr;
    check(cf_detect_manifest(s.engine(), a.manifest.c_str(), &lines, &summary));
    const std::string verdicts = take(lines);
    const auto results = OJson::parse(take(summary));
    s.emit("verdicts.jsonl", verdicts);
    s.summary("detect", results);
    return;
  }
  if (a.query.empty() || a.reference.empty()) {
    throw CommandError{kUsage, "detect needs --manifest or both --query and --reference"};
  }
  const Image g = load(a.query);
  const Image r = load(a.reference);
  char* json = nullptr;
  check(cf_decide(s.engine(), g.get(), r.get(), a.query.c_str(), a.reference.c_str(), &json));
  const auto verdict = OJson::parse(take(json));
  s.emit("verdicts.jsonl", verdict.dump() + "\n");
  OJson results;
  results["pairs"] = 1;
  const std::string type = verdict.at("copy_type").get<std::string>();
  results["counts"] = {{"retrieve", type == "retrieve" ? 1 : 0},
                       {"style", type == "style" ? 1 : 0},
                       {"not_copy", type == "not_copy" ? 1 : 0}};
  s.summary("detect", results);
}

struct CalibrateArgs {
  std::string scores, manifest;
  bool render = false;
};

void run_calibrate(const Session& s, const CalibrateArgs& a) {
  if (!s.has_out()) throw CommandError{kUsage, "calibrate needs --out for its curve files"};
  std::string scores;
  if (!a.scores.empty()) {
    scores = read_text(a.scores);
  } else if (!a.manifest.empty()) {
    char* text = nullptr;
    check(cf_manifest_scores(s.engine(), a.manifest.c_str(), &text));
    scores = take(text);
    Session::write_file(s.out_path("scores.jsonl"), scores);
  } else {
    throw CommandError{kUsage, "calibrate needs --scores or --manifest"};
  }
  char* summary = nullptr;
  const std::string dir = s.out_path("").string();
  check(cf_calibrate(s.engine(), scores.c_str(), dir.c_str(), a.render ? 1 : 0, &summary));
  s.summary("calibrate", OJson::parse(take(summary)));
}

struct IndexArgs {
  std::string images, index;
};

void run_index(const Session& s, const IndexArgs& a) {
  char* report = nullptr;
  check(cf_index_build(s.engine(), a.images.c_str(), a.index.c_str(), &report));
  const auto results = OJson::parse(take(report));
  for (const auto& f : results.at("failures")) {
    std::cerr << "warning: skipped " << f.at("source").get<std::string>() << ": "
              << f.at("error").get<std::string>() << '\n';
  }
  s.summary("index", results);
}

struct RetrieveArgs {
  std::string index;
  std::vector<std::string> queries;
  std::size_t k = 5;
};

void run_retrieve(const Session& s, const RetrieveArgs& a) {
  cf_index* raw = nullptr;
  check(cf_index_open(s.engine(), a.index.c_str(), &raw));
  const Index index(raw);
  std::string csv = "query,rank,id,s_fus\n";
  for (const auto& q : a.queries) {
    const Image img = load(q);
    char* json = nullptr;
    check(cf_retrieve(s.engine(), index.get(), img.get(), a.k, &json));
    for (const auto& row : OJson::parse(take(json))) {
      csv += q + "," + std::to_string(row.at("rank").get<std::size_t>()) + "," +
             row.at("id").get<std::string>() + "," + row.at("s_fus").dump() + "\n";
    }
  }
  s.emit("retrieval.csv", csv);

  std::vector<const char*> paths;
  for (const auto& q : a.queries) paths.push_back(q.c_str());
  char* rate = nullptr;
  check(cf_copy_rate(s.engine(), index.get(), paths.data(), paths.size(), &rate));
  s.summary("retrieve", OJson{{"k", a.k}, {"copy_rate", OJson::parse(take(rate))}});
}

struct RobustnessArgs {
  std::string query, reference, side;
};

void run_robustness(const Session& s, const RobustnessArgs& a) {
  const Image g = load(a.query);
  const Image r = load(a.reference);
  char* csv = nullptr;
  check(cf_robustness(s.engine(), g.get(), r.get(), a.side.empty() ? nullptr : a.side.c_str(),
                      &csv));
  const std::string table = take(csv);
  s.emit("robustness.csv", table);
  char* suite = nullptr;
  check(cf_standard_suite_json(s.engine(), &suite));
  OJson results;
  results["side"] = a.side.empty() ? s.config().at("perturb").at("side") : OJson(a.side);
  results["attacks"] = OJson::parse(take(suite));
  s.summary("robustness", results);
}

struct AugmentArgs {
  std::string image, prompt, detections, templates;
};

void run_augment(const Session& s, const AugmentArgs& a) {
  const Image img = load(a.image);
  const std::string detections = a.detections.empty() ? std::string() : read_text(a.detections);
  const std::string templates = a.templates.empty() ? std::string() : read_text(a.templates);
  char* trace = nullptr;
  check(cf_augment(s.engine(), img.get(), a.prompt.c_str(),
                   a.detections.empty() ? nullptr : detections.c_str(),
                   a.templates.empty() ? nullptr : templates.c_str(), &trace),
        a.templates.empty() ? std::string() : a.templates);
  const auto doc = OJson::parse(take(trace));
  s.emit("trace.jsonl", doc.dump() + "\n");
  s.summary("augment", OJson{{"sampled", doc.at("sampled")}, {"fallback", doc.at("fallback")}});
}

struct PerturbArgs {
  std::string image, attack = "all", format = "png";
};

void run_perturb(const Session& s, const PerturbArgs& a) {
  if (!s.has_out()) throw CommandError{kUsage, "perturb needs --out for the perturbed images"};
  if (a.format != "png" && a.format != "ppm") {
    throw CommandError{kUsage, "--format must be png or ppm"};
  }
  const Image img = load(a.image);
  char* suite_text = nullptr;
  check(cf_standard_suite_json(s.engine(), &suite_text));
  const auto suite = OJson::parse(take(suite_text));
  OJson written = OJson::array();
  bool matched = false;
  for (const auto& spec : suite) {
    if (a.attack != "all" && spec.at("kind").get<std::string>() != a.attack) continue;
    matched = true;
    OJson bare = spec;
    bare.erase("label");
    cf_image* out = nullptr;
    check(cf_perturb(img.get(), bare.dump().c_str(), &out));
    const Image result(out);
    const std::string name = spec.at("label").get<std::string>() + "." + a.format;
    check(cf_image_save(result.get(), s.out_path(name).string().c_str()));
    written.push_back({{"file", name}, {"spec", bare}});
  }
  if (!matched) throw CommandError{kUsage, "unknown attack '" + a.attack + "'"};
  s.summary("perturb", OJson{{"image", a.image}, {"outputs", written}});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"copyforge: copy detection, prompt augmentation and robustness tooling"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(cf_version()));

  Globals globals;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  app.add_option("--config", globals.config_path, "JSON configuration file");
  auto* seed_opt = app.add_option("--seed", seed, "Seed for perturbations and sampling");
  auto* workers_opt = app.add_option("--workers", workers, "Worker threads")
                          ->check(CLI::PositiveNumber);
  app.add_option("--out", globals.out, "Output directory (stdout when omitted)");

  DetectArgs detect;
  auto* detect_cmd = app.add_subcommand("detect", "Decide copy / type for a pair or manifest");
  detect_cmd->add_option("--query", detect.query, "Query (generated) image");
  detect_cmd->add_option("--reference", detect.reference, "Reference image");
  detect_cmd->add_option("--manifest", detect.manifest, "JSONL manifest {query, reference, label}");

  CalibrateArgs calibrate;
  auto* calibrate_cmd = app.add_subcommand("calibrate", "Tune tau1, omega and tau2");
  calibrate_cmd->add_option("--scores", calibrate.scores, "Labelled score JSONL");
  calibrate_cmd->add_option("--manifest", calibrate.manifest, "Manifest to score first");
  calibrate_cmd->add_flag("--render", calibrate.render, "Also write PPM plots");

  IndexArgs index;
  auto* index_cmd = app.add_subcommand("index", "Build a gallery index from an image directory");
  index_cmd->add_option("--images", index.images, "Directory of reference images")->required();
  index_cmd->add_option("--index", index.index, "Index directory to write")->required();

  RetrieveArgs retrieve;
  auto* retrieve_cmd = app.add_subcommand("retrieve", "Top-k retrieval and copy rate");
  retrieve_cmd->add_option("--index", retrieve.index, "Index directory")->required();
  retrieve_cmd->add_option("--query", retrieve.queries, "Query image (repeatable)")->required();
  retrieve_cmd->add_option("-k,--k", retrieve.k, "Matches per query")->check(CLI::PositiveNumber);

  RobustnessArgs robust;
  auto* robust_cmd = app.add_subcommand("robustness", "Verdicts under the ten standard attacks");
  robust_cmd->add_option("--query", robust.query, "Query image")->required();
  robust_cmd->add_option("--reference", robust.reference, "Reference image")->required();
  robust_cmd->add_option("--side", robust.side, "Side to attack")
      ->check(CLI::IsMember({"query", "reference"}));

  AugmentArgs augment;
  auto* augment_cmd = app.add_subcommand("augment", "Region-aware prompt augmentation trace");
  augment_cmd->add_option("--image", augment.image, "Training image")->required();
  augment_cmd->add_option("--prompt", augment.prompt, "Base caption")->required();
  augment_cmd->add_option("--detections", augment.detections,
                          "JSON list of {box, label, confidence}");
  augment_cmd->add_option("--templates", augment.templates, "Template file, one per line");

  PerturbArgs perturb;
  auto* perturb_cmd = app.add_subcommand("perturb", "Write perturbed copies of an image");
  perturb_cmd->add_option("--image", perturb.image, "Input image")->required();
  perturb_cmd->add_option("--attack", perturb.attack, "Attack kind or 'all'");
  perturb_cmd->add_option("--format", perturb.format, "png or ppm");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  if (*seed_opt) globals.seed = seed;
  if (*workers_opt) globals.workers = workers;

  try {
    const Session session(globals);
    if (*detect_cmd) run_detect(session, detect);
    else if (*calibrate_cmd) run_calibrate(session, calibrate);
    else if (*index_cmd) run_index(session, index);
    else if (*retrieve_cmd) run_retrieve(session, retrieve);
    else if (*robust_cmd) run_robustness(session, robust);
    else if (*augment_cmd) run_augment(session, augment);
    else if (*perturb_cmd) run_perturb(session, perturb);
    return kOk;
  } catch (const CommandError& e) {
    std::cerr << "copyforge: " << e.message << '\n';
    return e.code;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "copyforge: internal error: " << e.what() << '\n';
    return kInternal;
  } catch (const std::exception& e) {
    std::cerr << "copyforge: internal error: " << e.what() << '\n';
    return kInternal;
  }
}
