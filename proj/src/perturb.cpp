#include "copyforge/perturb.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <random>

#include "copyforge/error.hpp"

namespace copyforge {
namespace {

struct KindInfo {
  AttackKind kind;
  std::string_view name;
  std::map<std::string, double> defaults;
};

const std::vector<KindInfo>& kinds() {
  static const std::vector<KindInfo> table{
      {AttackKind::GaussianNoise, "gaussian_noise", {{"sigma", 0.1}}},
      {AttackKind::GaussianBlur, "gaussian_blur", {{"kernel", 5.0}, {"sigma", 1.5}}},
      {AttackKind::Poisson, "poisson", {{"scale", 255.0}}},
      {AttackKind::SaltPepper, "salt_pepper", {{"amount", 0.05}}},
      {AttackKind::Speckle, "speckle", {{"variance", 0.05}}},
      {AttackKind::Crop, "crop", {{"fraction", 0.20}}},
      {AttackKind::FlipH, "flip_h", {}},
      {AttackKind::FlipV, "flip_v", {}},
      {AttackKind::Occlude, "occlude", {{"fraction", 0.10}}},
      {AttackKind::Rotate, "rotate", {{"degrees", 30.0}}},
  };
  return table;
}

const KindInfo& info(AttackKind kind) {
  for (const auto& k : kinds()) {
    if (k.kind == kind) return k;
  }
  fail(ErrorKind::Internal, "unknown attack kind");
}

std::mt19937_64 make_rng(const PerturbationSpec& spec) {
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed & 0xffffffffu),
                    static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(spec.kind)};
  return std::mt19937_64(seq);
}

std::string compact(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

ImageBuffer blur(const ImageBuffer& in, int kernel, double sigma) {
  const int radius = kernel / 2;
  std::vector<double> taps(kernel);
  double total = 0.0;
  for (int i = 0; i < kernel; ++i) {
    const double d = i - radius;
    taps[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    total += taps[i];
  }
  for (double& t : taps) t /= total;
  const int h = in.height();
  const int w = in.width();
  std::vector<double> tmp(static_cast<std::size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int k = 0; k < kernel; ++k) {
          const int xx = std::clamp(x + k - radius, 0, w - 1);
          acc += taps[k] * in.at(y, xx, c);
        }
        tmp[(static_cast<std::size_t>(y) * w + x) * 3 + c] = acc;
      }
    }
  }
  ImageBuffer out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int k = 0; k < kernel; ++k) {
          const int yy = std::clamp(y + k - radius, 0, h - 1);
          acc += taps[k] * tmp[(static_cast<std::size_t>(yy) * w + x) * 3 + c];
        }
        out.at(y, x, c) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

ImageBuffer rotate(const ImageBuffer& in, double degrees) {
  const int h = in.height();
  const int w = in.width();
  const double theta = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(theta);
  const double sn = std::sin(theta);
  const double cx = (w - 1) / 2.0;
  const double cy = (h - 1) / 2.0;
  ImageBuffer out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = x - cx;
      const double dy = y - cy;
      // inverse of a counter-clockwise turn in y-down coordinates
      double sx = cx + cs * dx - sn * dy;
      double sy = cy + sn * dx + cs * dy;
      // rounding in sin/cos must not push border pixels off the canvas
      constexpr double kEdge = 1e-9;
      if (sx < 0.0 && sx > -kEdge) sx = 0.0;
      if (sy < 0.0 && sy > -kEdge) sy = 0.0;
      if (sx > w - 1 && sx < w - 1 + kEdge) sx = w - 1;
      if (sy > h - 1 && sy < h - 1 + kEdge) sy = h - 1;
      if (sx < 0.0 || sy < 0.0 || sx > w - 1 || sy > h - 1) continue;
      const int x0 = std::min(static_cast<int>(sx), w - 2);
      const int y0 = std::min(static_cast<int>(sy), h - 2);
      const double fx = sx - x0;
      const double fy = sy - y0;
      for (int c = 0; c < 3; ++c) {
        const double top = (1 - fx) * in.at(y0, x0, c) + fx * in.at(y0, x0 + 1, c);
        const double bottom = (1 - fx) * in.at(y0 + 1, x0, c) + fx * in.at(y0 + 1, x0 + 1, c);
        out.at(y, x, c) = static_cast<float>((1 - fy) * top + fy * bottom);
      }
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(AttackKind kind) noexcept {
  for (const auto& k : kinds()) {
    if (k.kind == kind) return k.name;
  }
  return "unknown";
}

AttackKind attack_from_string(std::string_view name) {
  for (const auto& k : kinds()) {
    if (k.name == name) return k.kind;
  }
  fail(ErrorKind::Configuration, "unknown attack '" + std::string(name) + "'");
}

PerturbationSpec PerturbationSpec::make(AttackKind kind, std::uint64_t seed) {
  return {kind, info(kind).defaults, seed};
}

double PerturbationSpec::param(const std::string& name) const {
  if (auto it = params.find(name); it != params.end()) return it->second;
  const auto& defaults = info(kind).defaults;
  if (auto it = defaults.find(name); it != defaults.end()) return it->second;
  fail(ErrorKind::Configuration, std::string(to_string(kind)) + " has no parameter '" + name + "'");
}

void PerturbationSpec::validate() const {
  const auto& defaults = info(kind).defaults;
  for (const auto& [key, value] : params) {
    if (!defaults.contains(key)) {
      fail(ErrorKind::Configuration,
           "unknown parameter '" + key + "' for " + std::string(to_string(kind)));
    }
    if (!std::isfinite(value)) {
      fail(ErrorKind::Configuration, "parameter '" + key + "' must be finite");
    }
  }
  auto bad = [&](const std::string& why) {
    fail(ErrorKind::Configuration, std::string(to_string(kind)) + ": " + why);
  };
  switch (kind) {
    case AttackKind::GaussianNoise:
      if (param("sigma") < 0.0) bad("sigma must be >= 0");
      break;
    case AttackKind::GaussianBlur: {
      const double k = param("kernel");
      if (k < 1.0 || std::floor(k) != k || static_cast<long>(k) % 2 == 0) {
        bad("kernel must be a positive odd integer");
      }
      if (!(param("sigma") > 0.0)) bad("sigma must be > 0");
      break;
    }
    case AttackKind::Poisson:
      if (!(param("scale") > 0.0)) bad("scale must be > 0");
      break;
    case AttackKind::SaltPepper:
      if (!(param("amount") >= 0.0 && param("amount") <= 1.0)) bad("amount must be in [0, 1]");
      break;
    case AttackKind::Speckle:
      if (param("variance") < 0.0) bad("variance must be >= 0");
      break;
    case AttackKind::Crop:
    case AttackKind::Occlude:
      if (!(param("fraction") > 0.0 && param("fraction") < 1.0)) bad("fraction must be in (0, 1)");
      break;
    case AttackKind::FlipH:
    case AttackKind::FlipV:
    case AttackKind::Rotate:
      break;
  }
}

std::string PerturbationSpec::label() const {
  switch (kind) {
    case AttackKind::Crop: return "crop" + compact(param("fraction") * 100.0) + "%";
    case AttackKind::Occlude: return "occlude" + compact(param("fraction") * 100.0) + "%";
    case AttackKind::Rotate: return "rotate" + compact(param("degrees"));
    default: return std::string(to_string(kind));
  }
}

nlohmann::ordered_json PerturbationSpec::to_json() const {
  nlohmann::ordered_json j;
  j["kind"] = std::string(to_string(kind));
  nlohmann::ordered_json p = nlohmann::ordered_json::object();
  for (const auto& [key, value] : info(kind).defaults) p[key] = param(key);
  j["params"] = p;
  j["seed"] = seed;
  return j;
}

PerturbationSpec PerturbationSpec::from_json(const nlohmann::json& doc) {
  try {
    PerturbationSpec spec;
    spec.kind = attack_from_string(doc.at("kind").get<std::string>());
    if (doc.contains("params")) {
      spec.params = doc.at("params").get<std::map<std::string, double>>();
    }
    if (doc.contains("seed")) spec.seed = doc.at("seed").get<std::uint64_t>();
    for (const auto& [key, value] : doc.items()) {
      if (key != "kind" && key != "params" && key != "seed") {
        fail(ErrorKind::Configuration, "unknown perturbation key '" + key + "'");
      }
    }
    spec.validate();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Configuration, std::string("perturbation spec: ") + e.what());
  }
}

ImageBuffer apply(const ImageBuffer& image, const PerturbationSpec& spec) {
  spec.validate();
  const int h = image.height();
  const int w = image.width();
  auto rng = make_rng(spec);
  ImageBuffer out = image;
  auto pixels = out.pixels();

  switch (spec.kind) {
    case AttackKind::GaussianNoise: {
      std::normal_distribution<double> noise(0.0, spec.param("sigma"));
      for (float& v : pixels) v = static_cast<float>(v + noise(rng));
      break;
    }
    case AttackKind::GaussianBlur:
      out = blur(image, static_cast<int>(spec.param("kernel")), spec.param("sigma"));
      break;
    case AttackKind::Poisson: {
      const double scale = spec.param("scale");
      for (float& v : pixels) {
        const double mean = scale * v;
        if (mean <= 0.0) {
          v = 0.0f;
          continue;
        }
        std::poisson_distribution<long> counts(mean);
        v = static_cast<float>(static_cast<double>(counts(rng)) / scale);
      }
      break;
    }
    case AttackKind::SaltPepper: {
      const double amount = spec.param("amount");
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          if (u(rng) >= amount) continue;
          const float value = u(rng) < 0.5 ? 1.0f : 0.0f;
          for (int c = 0; c < 3; ++c) out.at(y, x, c) = value;
        }
      }
      break;
    }
    case AttackKind::Speckle: {
      std::normal_distribution<double> noise(0.0, std::sqrt(spec.param("variance")));
      for (float& v : pixels) v = static_cast<float>(v + v * noise(rng));
      break;
    }
    case AttackKind::Crop: {
      const double keep = 1.0 - spec.param("fraction");
      const int ch = static_cast<int>(std::floor(keep * h + 1e-9));
      const int cw = static_cast<int>(std::floor(keep * w + 1e-9));
      if (ch < ImageBuffer::kMinSide || cw < ImageBuffer::kMinSide) {
        fail(ErrorKind::Shape, "crop would leave a " + std::to_string(ch) + "x" +
                                   std::to_string(cw) + " image");
      }
      const int top = (h - ch) / 2;
      const int left = (w - cw) / 2;
      ImageBuffer cropped(ch, cw);
      for (int y = 0; y < ch; ++y) {
        for (int x = 0; x < cw; ++x) {
          for (int c = 0; c < 3; ++c) cropped.at(y, x, c) = image.at(top + y, left + x, c);
        }
      }
      out = std::move(cropped);
      break;
    }
    case AttackKind::FlipH:
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          for (int c = 0; c < 3; ++c) out.at(y, x, c) = image.at(y, w - 1 - x, c);
        }
      }
      break;
    case AttackKind::FlipV:
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          for (int c = 0; c < 3; ++c) out.at(y, x, c) = image.at(h - 1 - y, x, c);
        }
      }
      break;
    case AttackKind::Occlude: {
      const double area = spec.param("fraction") * h * w;
      const int side = std::clamp(static_cast<int>(std::lround(std::sqrt(area))), 1, std::min(h, w));
      std::uniform_int_distribution<int> ys(0, h - side);
      std::uniform_int_distribution<int> xs(0, w - side);
      const int y0 = ys(rng);
      const int x0 = xs(rng);
      for (int y = y0; y < y0 + side; ++y) {
        for (int x = x0; x < x0 + side; ++x) {
          for (int c = 0; c < 3; ++c) out.at(y, x, c) = 0.0f;
        }
      }
      break;
    }
    case AttackKind::Rotate:
      out = rotate(image, spec.param("degrees"));
      break;
  }
  out.clamp01();
  return out;
}

std::vector<PerturbationSpec> standard_suite(std::uint64_t seed) {
  std::vector<PerturbationSpec> suite;
  for (const auto& k : kinds()) suite.push_back(PerturbationSpec::make(k.kind, seed));
  return suite;
}

std::string_view to_string(Side side) noexcept {
  return side == Side::Query ? "query" : "reference";
}

Side side_from_string(std::string_view name) {
  if (name == "query" || name == "g") return Side::Query;
  if (name == "reference" || name == "r") return Side::Reference;
  fail(ErrorKind::Configuration, "side must be 'query' or 'reference', got '" + std::string(name) + "'");
}

std::vector<RobustnessRow> robustness_report(const ImageBuffer& g, const ImageBuffer& r,
                                             const std::vector<PerturbationSpec>& suite,
                                             const EmbedderBackend& backend,
                                             const Fuser& fuser, const DecisionConfig& config,
                                             Side side) {
  if (suite.empty()) fail(ErrorKind::Configuration, "robustness suite is empty");
  require_valid(config);
  const auto g_triple = backend.embed_image(g);
  const auto r_triple = backend.embed_image(r);
  std::vector<RobustnessRow> rows;
  rows.push_back({"clean", decide(g_triple, r_triple, fuser, config)});
  for (const auto& spec : suite) {
    if (side == Side::Query) {
      const auto attacked = backend.embed_image(apply(g, spec));
      rows.push_back({spec.label(), decide(attacked, r_triple, fuser, config)});
    } else {
      const auto attacked = backend.embed_image(apply(r, spec));
      rows.push_back({spec.label(), decide(g_triple, attacked, fuser, config)});
    }
  }
  return rows;
}

void write_robustness_csv(std::ostream& out, const std::vector<RobustnessRow>& rows) {
  out << "attack,s_fus,s_vis,s_clip,s_tex,s_bar,verdict\n";
  for (const auto& row : rows) {
    const auto& s = row.verdict.scores;
    out << row.attack << ',' << compact(s.s_fus) << ',' << compact(s.s_vis) << ','
        << compact(s.s_clip) << ',' << compact(s.s_tex) << ','
        << (s.s_bar ? compact(*s.s_bar) : std::string()) << ','
        << to_string(row.verdict.copy_type) << '\n';
  }
}

}  // namespace copyforge
