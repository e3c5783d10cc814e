#include "copyforge/rapta.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "copyforge/error.hpp"

namespace copyforge {
namespace {

constexpr std::string_view kOpenAngle = "\xE2\x9F\xA8";   // U+27E8
constexpr std::string_view kCloseAngle = "\xE2\x9F\xA9";  // U+27E9
constexpr std::uint64_t kSamplerSalt = 0x9E3779B97F4A7C15ull;

const std::vector<std::string>& grid3_tokens() {
  static const std::vector<std::string> tokens{
      "top-left",    "top-center",    "top-right",
      "middle-left", "center",        "middle-right",
      "bottom-left", "bottom-center", "bottom-right"};
  return tokens;
}

void stable_sort_by_confidence(std::vector<RegionProposal>& proposals) {
  std::stable_sort(proposals.begin(), proposals.end(),
                   [](const RegionProposal& a, const RegionProposal& b) {
                     return a.confidence > b.confidence;
                   });
}

nlohmann::ordered_json box_json(const Box& b) { return {b.x1, b.y1, b.x2, b.y2}; }

nlohmann::ordered_json proposal_json(const RegionProposal& p) {
  nlohmann::ordered_json j;
  j["box"] = box_json(p.box);
  j["label"] = p.class_label;
  j["confidence"] = p.confidence;
  return j;
}

}  // namespace

double Box::area() const noexcept {
  return std::max(0.0, x2 - x1) * std::max(0.0, y2 - y1);
}

double iou(const Box& a, const Box& b) noexcept {
  const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

void RegionProposal::validate(int width, int height) const {
  if (!(box.x1 < box.x2 && box.y1 < box.y2)) {
    fail(ErrorKind::Data, "degenerate box for '" + class_label + "'");
  }
  if (box.x1 < 0.0 || box.y1 < 0.0 || box.x2 > width || box.y2 > height) {
    fail(ErrorKind::Data, "box for '" + class_label + "' lies outside the " +
                              std::to_string(width) + "x" + std::to_string(height) + " image");
  }
  if (!(confidence >= 0.0 && confidence <= 1.0)) {
    fail(ErrorKind::Data, "confidence for '" + class_label + "' is outside [0,1]");
  }
}

std::vector<RegionProposal> nms(std::vector<RegionProposal> proposals, double tau_nms) {
  stable_sort_by_confidence(proposals);
  std::vector<RegionProposal> kept;
  std::vector<bool> suppressed(proposals.size(), false);
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    if (suppressed[i]) continue;
    kept.push_back(proposals[i]);
    for (std::size_t j = i + 1; j < proposals.size(); ++j) {
      if (!suppressed[j] && iou(proposals[i].box, proposals[j].box) > tau_nms) {
        suppressed[j] = true;
      }
    }
  }
  return kept;
}

std::vector<RegionProposal> filter_and_rank(std::vector<RegionProposal> proposals,
                                            double tau_b, std::size_t top_m) {
  std::erase_if(proposals, [tau_b](const RegionProposal& p) { return !(p.confidence > tau_b); });
  stable_sort_by_confidence(proposals);
  if (proposals.size() > top_m) proposals.resize(top_m);
  return proposals;
}

std::string grid_position(const Box& box, int width, int height, GridSpec grid) {
  if (grid.rows < 1 || grid.cols < 1) fail(ErrorKind::Configuration, "grid must be at least 1x1");
  if (width <= 0 || height <= 0) fail(ErrorKind::Data, "image dimensions must be positive");
  if (!(box.x1 < box.x2 && box.y1 < box.y2)) fail(ErrorKind::Data, "degenerate box");
  if (box.x1 < 0.0 || box.y1 < 0.0 || box.x2 > width || box.y2 > height) {
    fail(ErrorKind::Data, "box lies outside the image");
  }
  // (x1 + x2) / (2W) scaled by the cell count, kept as one division so exact
  // thirds land on integers.
  const auto cell = [](double lo, double hi, int extent, int cells) {
    const double scaled = (lo + hi) * cells / (2.0 * extent);
    return std::clamp(static_cast<int>(std::floor(scaled)), 0, cells - 1);
  };
  const int col = cell(box.x1, box.x2, width, grid.cols);
  const int row = cell(box.y1, box.y2, height, grid.rows);
  if (grid.rows == 3 && grid.cols == 3) return grid3_tokens()[row * 3 + col];
  return "row" + std::to_string(row + 1) + "-col" + std::to_string(col + 1);
}

PromptTemplate PromptTemplate::parse(std::string_view text) {
  PromptTemplate t;
  t.text_ = std::string(text);
  std::string literal;
  bool has_class = false;
  bool has_second = false;
  bool has_position = false;
  auto flush = [&] {
    if (!literal.empty()) t.pieces_.push_back({Slot::Literal, std::move(literal)});
    literal.clear();
  };
  std::size_t i = 0;
  while (i < text.size()) {
    std::string_view close;
    std::size_t open_len = 0;
    if (text.substr(i).starts_with(kOpenAngle)) {
      close = kCloseAngle;
      open_len = kOpenAngle.size();
    } else if (text[i] == '<') {
      close = ">";
      open_len = 1;
    } else {
      literal.push_back(text[i++]);
      continue;
    }
    const auto end = text.find(close, i + open_len);
    if (end == std::string_view::npos) {
      fail(ErrorKind::Template, "unterminated placeholder '" + std::string(text.substr(i)) + "'");
    }
    const auto name = text.substr(i + open_len, end - i - open_len);
    const auto whole = std::string(text.substr(i, end + close.size() - i));
    Slot slot;
    if (name == "p") {
      slot = Slot::Prompt;
    } else if (name == "c") {
      slot = Slot::Class;
      has_class = true;
    } else if (name == "c'" || name == "c\xE2\x80\xB2") {
      slot = Slot::SecondClass;
      has_second = true;
    } else if (name == "pos") {
      slot = Slot::Position;
      has_position = true;
    } else {
      fail(ErrorKind::Template, "unknown placeholder '" + whole + "'");
    }
    flush();
    t.pieces_.push_back({slot, {}});
    i = end + close.size();
  }
  flush();
  if (!has_class) fail(ErrorKind::Template, "template does not reference the class placeholder ⟨c⟩");
  if (has_second && has_position) {
    fail(ErrorKind::Template, "template mixes ⟨c'⟩ and ⟨pos⟩; use one or the other");
  }
  t.two_object_ = has_second;
  return t;
}

std::string PromptTemplate::instantiate(std::string_view prompt, std::string_view cls,
                                        std::string_view pos_or_second_class) const {
  std::string out;
  for (const auto& piece : pieces_) {
    switch (piece.slot) {
      case Slot::Literal: out += piece.literal; break;
      case Slot::Prompt: out += prompt; break;
      case Slot::Class: out += cls; break;
      case Slot::SecondClass:
      case Slot::Position: out += pos_or_second_class; break;
    }
  }
  return out;
}

std::vector<PromptTemplate> load_templates(std::istream& in) {
  std::vector<PromptTemplate> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    try {
      out.push_back(PromptTemplate::parse(line));
    } catch (const Error& e) {
      fail(ErrorKind::Template, "template line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (out.empty()) fail(ErrorKind::Template, "template file contains no templates");
  return out;
}

std::vector<PromptTemplate> default_templates() {
  std::vector<PromptTemplate> out;
  for (const auto& t : RaptaConfig{}.templates) out.push_back(PromptTemplate::parse(t));
  return out;
}

std::vector<PromptVariant> build_variant_pool(std::string_view prompt,
                                              std::span<const PositionedRegion> regions,
                                              std::span<const PromptTemplate> templates,
                                              std::uint64_t seed) {
  std::vector<PromptVariant> pool;
  std::set<std::string> seen;
  auto add = [&](PromptVariant v) {
    if (seen.insert(v.text).second) pool.push_back(std::move(v));
  };
  add({std::string(prompt), PromptVariant::Source::Base, -1, {}, 0.0, 0.0, 0.0});

  for (std::size_t r = 0; r < regions.size(); ++r) {
    for (std::size_t j = 0; j < templates.size(); ++j) {
      if (templates[j].two_object()) continue;
      add({templates[j].instantiate(prompt, regions[r].proposal.class_label, regions[r].position),
           PromptVariant::Source::Template, static_cast<int>(j), {static_cast<int>(r)}, 0.0, 0.0,
           0.0});
    }
  }

  const bool any_pair_template = std::any_of(templates.begin(), templates.end(),
                                             [](const auto& t) { return t.two_object(); });
  if (regions.size() >= 2 && any_pair_template) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> first(0, regions.size() - 1);
    std::uniform_int_distribution<std::size_t> second(0, regions.size() - 2);
    const std::size_t i = first(rng);
    std::size_t k = second(rng);
    if (k >= i) ++k;
    for (std::size_t j = 0; j < templates.size(); ++j) {
      if (!templates[j].two_object()) continue;
      add({templates[j].instantiate(prompt, regions[i].proposal.class_label,
                                    regions[k].proposal.class_label),
           PromptVariant::Source::Template, static_cast<int>(j),
           {static_cast<int>(i), static_cast<int>(k)}, 0.0, 0.0, 0.0});
    }
  }
  return pool;
}

SamplingDistribution sampling_distribution(std::span<const double> scores, double gamma,
                                           std::size_t base_index) {
  if (!(gamma > 0.0)) fail(ErrorKind::Configuration, "temperature gamma must be > 0");
  if (scores.empty()) fail(ErrorKind::Data, "cannot sample from an empty pool");
  if (base_index >= scores.size()) fail(ErrorKind::Internal, "base index out of range");
  SamplingDistribution d;
  d.weights.resize(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    d.weights[i] = std::pow(std::max(scores[i], 0.0), gamma);
    total += d.weights[i];
  }
  d.probabilities.assign(scores.size(), 0.0);
  if (!(total > 0.0) || !std::isfinite(total)) {
    d.fallback = true;
    d.probabilities[base_index] = 1.0;
    return d;
  }
  for (std::size_t i = 0; i < scores.size(); ++i) d.probabilities[i] = d.weights[i] / total;
  return d;
}

SampleResult score_and_sample(std::vector<PromptVariant> pool, const ImageBuffer& image,
                              const EmbedderBackend& backend, double gamma,
                              std::uint64_t seed) {
  if (pool.empty()) fail(ErrorKind::Data, "cannot sample from an empty prompt pool");
  const Vector image_vec = backend.embed_image_global(image);
  std::vector<double> scores(pool.size());
  std::vector<TextEmbedding> text_vecs;
  text_vecs.reserve(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    text_vecs.push_back(backend.embed_text(pool[i].text));
    scores[i] = cosine(image_vec, text_vecs.back().vec);
  }
  std::size_t base = 0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].source == PromptVariant::Source::Base) {
      base = i;
      break;
    }
  }
  const auto dist = sampling_distribution(scores, gamma, base);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    pool[i].consistency = scores[i];
    pool[i].weight = dist.weights[i];
    pool[i].probability = dist.probabilities[i];
  }

  std::mt19937_64 rng(seed);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  std::size_t pick = 0;
  double cumulative = 0.0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (dist.probabilities[i] <= 0.0) continue;
    pick = i;
    cumulative += dist.probabilities[i];
    if (u < cumulative) break;
  }

  SampleResult out;
  out.index = pick;
  out.text = pool[pick].text;
  out.embedding = std::move(text_vecs[pick]);
  out.pool = std::move(pool);
  out.fallback = dist.fallback;
  return out;
}

double diffusion_loss(std::span<const double> noise, std::span<const double> prediction) {
  if (noise.size() != prediction.size()) {
    fail(ErrorKind::Shape, "noise has " + std::to_string(noise.size()) +
                               " elements, prediction has " +
                               std::to_string(prediction.size()));
  }
  if (noise.empty()) fail(ErrorKind::Shape, "diffusion loss of empty tensors");
  double sum = 0.0;
  for (std::size_t i = 0; i < noise.size(); ++i) {
    const double diff = noise[i] - prediction[i];
    sum += diff * diff;
  }
  return sum / static_cast<double>(noise.size());
}

ScriptedDetector ScriptedDetector::from_json(const nlohmann::json& doc) {
  if (!doc.is_array()) fail(ErrorKind::Data, "detections must be a JSON array");
  std::vector<RegionProposal> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    try {
      const auto& item = doc[i];
      const auto b = item.at("box").get<std::vector<double>>();
      if (b.size() != 4) fail(ErrorKind::Data, "box needs 4 coordinates");
      RegionProposal p;
      p.box = {b[0], b[1], b[2], b[3]};
      p.class_label = item.at("label").get<std::string>();
      p.confidence = item.at("confidence").get<double>();
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Data, "detection " + std::to_string(i) + ": " + e.what());
    } catch (const Error& e) {
      fail(e.kind(), "detection " + std::to_string(i) + ": " + e.what());
    }
  }
  return ScriptedDetector(std::move(out));
}

void RaptaConfig::validate() const {
  if (!(tau_nms > 0.0 && tau_nms <= 1.0)) fail(ErrorKind::Configuration, "tau_nms must be in (0, 1]");
  if (!(tau_b >= 0.0 && tau_b < 1.0)) fail(ErrorKind::Configuration, "tau_b must be in [0, 1)");
  if (top_m < 1) fail(ErrorKind::Configuration, "top_m must be >= 1");
  if (templates.empty()) fail(ErrorKind::Configuration, "at least one template is required");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) fail(ErrorKind::Configuration, "gamma must be > 0");
  if (grid.rows < 1 || grid.cols < 1) fail(ErrorKind::Configuration, "grid must be at least 1x1");
  for (const auto& t : templates) PromptTemplate::parse(t);
}

nlohmann::ordered_json RaptaConfig::to_json() const {
  nlohmann::ordered_json j;
  j["tau_nms"] = tau_nms;
  j["tau_b"] = tau_b;
  j["top_m"] = top_m;
  j["templates"] = templates;
  j["gamma"] = gamma;
  j["grid_rows"] = grid.rows;
  j["grid_cols"] = grid.cols;
  return j;
}

RaptaConfig RaptaConfig::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) fail(ErrorKind::Configuration, "rapta config must be a JSON object");
  RaptaConfig cfg;
  for (const auto& [key, value] : doc.items()) {
    try {
      if (key == "tau_nms") cfg.tau_nms = value.get<double>();
      else if (key == "tau_b") cfg.tau_b = value.get<double>();
      else if (key == "top_m") cfg.top_m = value.get<std::size_t>();
      else if (key == "templates") cfg.templates = value.get<std::vector<std::string>>();
      else if (key == "gamma") cfg.gamma = value.get<double>();
      else if (key == "grid_rows") cfg.grid.rows = value.get<int>();
      else if (key == "grid_cols") cfg.grid.cols = value.get<int>();
      else fail(ErrorKind::Configuration, "unknown rapta config key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Configuration, "rapta config key '" + key + "': " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

nlohmann::ordered_json AugmentTrace::to_json() const {
  nlohmann::ordered_json j;
  j["prompt"] = prompt;
  j["proposals"] = nlohmann::ordered_json::array();
  for (const auto& p : proposals) j["proposals"].push_back(proposal_json(p));
  j["kept"] = nlohmann::ordered_json::array();
  for (const auto& r : kept) {
    auto k = proposal_json(r.proposal);
    k["position"] = r.position;
    j["kept"].push_back(std::move(k));
  }
  j["pool"] = nlohmann::ordered_json::array();
  for (const auto& v : sample.pool) {
    nlohmann::ordered_json e;
    e["text"] = v.text;
    e["source"] = v.source == PromptVariant::Source::Base ? "base" : "template";
    if (v.source == PromptVariant::Source::Template) {
      e["template"] = v.template_index;
      e["regions"] = v.regions;
    }
    e["s_v"] = v.consistency;
    e["w_v"] = v.weight;
    e["pi"] = v.probability;
    j["pool"].push_back(std::move(e));
  }
  j["sampled"] = {{"index", sample.index}, {"text", sample.text}};
  j["fallback"] = sample.fallback;
  j["embedding_dim"] = sample.embedding.vec.size();
  return j;
}

AugmentTrace augment(const ImageBuffer& image, std::string_view prompt,
                     const DetectorBackend& detector, const EmbedderBackend& backend,
                     const RaptaConfig& config, std::span<const PromptTemplate> templates,
                     std::uint64_t seed) {
  config.validate();
  if (prompt.empty()) fail(ErrorKind::Data, "base prompt must not be empty");
  AugmentTrace trace;
  trace.prompt = std::string(prompt);
  trace.proposals = detector.detect(image);
  for (const auto& p : trace.proposals) p.validate(image.width(), image.height());

  const auto kept = filter_and_rank(nms(trace.proposals, config.tau_nms), config.tau_b, config.top_m);
  for (const auto& p : kept) {
    trace.kept.push_back({p, grid_position(p.box, image.width(), image.height(), config.grid)});
  }
  auto pool = build_variant_pool(prompt, trace.kept, templates, seed);
  trace.sample = score_and_sample(std::move(pool), image, backend, config.gamma, seed ^ kSamplerSalt);
  return trace;
}

}  // namespace copyforge
