#include "copyforge/fusion.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <random>

#include "copyforge/cache.hpp"
#include "copyforge/error.hpp"

namespace copyforge {
namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;

constexpr std::size_t kStreams = 3;
constexpr double kLayerNormEps = 1e-5;
constexpr double kOffsetScale = 0.1;

// Xavier-uniform, filled row by row so the draw order is independent of the
// matrix storage layout.
Matrix xavier(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = dist(rng);
  }
  return m;
}

Matrix layer_norm(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    out.row(r) = (x.row(r).array() - mean) / std::sqrt(var + kLayerNormEps);
  }
  return out;
}

double gelu(double v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); }

}  // namespace

struct Fuser::Weights {
  struct Layer {
    Matrix wq, wk, wv, wo;  // d_model x d_model
    Matrix w1;              // 2*d_model x d_model
    Matrix w2;              // d_model x 2*d_model
  };
  std::array<Matrix, kStreams> projection;  // d_model x input_dim
  Matrix slot_offsets;                      // kStreams x d_model
  std::vector<Layer> layers;
};

std::string_view to_string(Pooling pooling) noexcept {
  return pooling == Pooling::Mean ? "mean" : "first_token";
}

Pooling pooling_from_string(std::string_view name) {
  if (name == "mean") return Pooling::Mean;
  if (name == "first_token") return Pooling::FirstToken;
  fail(ErrorKind::Configuration, "unknown pooling '" + std::string(name) +
                                     "' (expected mean or first_token)");
}

void FusionConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) fail(ErrorKind::Configuration, std::string(name) + " must be positive");
  };
  positive(input_dim, "input_dim");
  positive(d_model, "d_model");
  positive(num_layers, "num_layers");
  positive(num_heads, "num_heads");
  if (d_model % num_heads != 0) {
    fail(ErrorKind::Configuration, "d_model (" + std::to_string(d_model) +
                                       ") is not divisible by num_heads (" +
                                       std::to_string(num_heads) + ")");
  }
}

nlohmann::ordered_json FusionConfig::to_json() const {
  nlohmann::ordered_json j;
  j["input_dim"] = input_dim;
  j["d_model"] = d_model;
  j["num_layers"] = num_layers;
  j["num_heads"] = num_heads;
  j["seed"] = seed;
  j["pooling"] = std::string(to_string(pooling));
  return j;
}

FusionConfig FusionConfig::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) fail(ErrorKind::Configuration, "fusion config must be a JSON object");
  FusionConfig cfg;
  for (const auto& [key, value] : doc.items()) {
    try {
      if (key == "input_dim") cfg.input_dim = value.get<std::size_t>();
      else if (key == "d_model") cfg.d_model = value.get<std::size_t>();
      else if (key == "num_layers") cfg.num_layers = value.get<std::size_t>();
      else if (key == "num_heads") cfg.num_heads = value.get<std::size_t>();
      else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else if (key == "pooling") cfg.pooling = pooling_from_string(value.get<std::string>());
      else fail(ErrorKind::Configuration, "unknown fusion config key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Configuration, "fusion config key '" + key + "': " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

std::string FusionConfig::digest() const { return sha256_hex(to_json().dump()); }

Fuser::Fuser(const FusionConfig& config) : config_(config) {
  config_.validate();
  digest_ = config_.digest();

  std::seed_seq seq{static_cast<std::uint32_t>(config_.seed & 0xffffffffu),
                    static_cast<std::uint32_t>(config_.seed >> 32), 0xF05Eu};
  std::mt19937_64 rng(seq);
  const auto d = config_.d_model;
  auto w = std::make_shared<Weights>();
  for (auto& p : w->projection) p = xavier(rng, d, config_.input_dim);
  w->layers.resize(config_.num_layers);
  for (auto& layer : w->layers) {
    layer.wq = xavier(rng, d, d);
    layer.wk = xavier(rng, d, d);
    layer.wv = xavier(rng, d, d);
    layer.wo = xavier(rng, d, d);
    layer.w1 = xavier(rng, 2 * d, d);
    layer.w2 = xavier(rng, d, 2 * d);
  }
  w->slot_offsets.resize(kStreams, d);
  for (std::size_t pos = 0; pos < kStreams; ++pos) {
    for (std::size_t i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, static_cast<double>(2 * (i / 2)) /
                                                static_cast<double>(d));
      const double angle = static_cast<double>(pos) / rate;
      w->slot_offsets(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  weights_ = std::move(w);
}

FusedEmbedding Fuser::fuse(const FeatureTriple& triple) const {
  triple.validate();
  if (triple.dim() != config_.input_dim) {
    fail(ErrorKind::Shape, "feature dimension " + std::to_string(triple.dim()) +
                               " does not match fuser input dimension " +
                               std::to_string(config_.input_dim));
  }
  const auto& w = *weights_;
  const auto d = static_cast<Eigen::Index>(config_.d_model);
  const auto heads = static_cast<Eigen::Index>(config_.num_heads);
  const Eigen::Index head_dim = d / heads;

  Matrix x(kStreams, d);
  const std::array<const Vector*, kStreams> streams{&triple.vis, &triple.clip, &triple.tex};
  for (std::size_t s = 0; s < kStreams; ++s) {
    const Eigen::VectorXd f =
        Eigen::Map<const Eigen::VectorXf>(streams[s]->data(),
                                          static_cast<Eigen::Index>(streams[s]->size()))
            .cast<double>();
    x.row(static_cast<Eigen::Index>(s)) = (w.projection[s] * f).transpose();
  }
  // Tokens are normalized before the slot offsets are added so that feature
  // content, not the shared offsets, sets the direction of the fused vector.
  x = layer_norm(x) + kOffsetScale * w.slot_offsets;

  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  for (const auto& layer : w.layers) {
    const Matrix h = layer_norm(x);
    const Matrix q = h * layer.wq.transpose();
    const Matrix k = h * layer.wk.transpose();
    const Matrix v = h * layer.wv.transpose();
    Matrix attended(kStreams, d);
    for (Eigen::Index hd = 0; hd < heads; ++hd) {
      const auto cols = Eigen::seqN(hd * head_dim, head_dim);
      Matrix scores = (q(Eigen::all, cols) * k(Eigen::all, cols).transpose()) * scale;
      for (Eigen::Index r = 0; r < scores.rows(); ++r) {
        const double top = scores.row(r).maxCoeff();
        scores.row(r) = (scores.row(r).array() - top).exp();
        scores.row(r) /= scores.row(r).sum();
      }
      attended(Eigen::all, cols) = scores * v(Eigen::all, cols);
    }
    x += attended * layer.wo.transpose();

    Matrix hidden = layer_norm(x) * layer.w1.transpose();
    hidden = hidden.unaryExpr(&gelu);
    x += hidden * layer.w2.transpose();
  }
  x = layer_norm(x);

  RowVector pooled = config_.pooling == Pooling::Mean ? RowVector(x.colwise().mean())
                                                      : RowVector(x.row(0));
  const double norm = pooled.norm();
  if (!std::isfinite(norm) || norm == 0.0) {
    fail(ErrorKind::Numeric, "fused vector has zero or non-finite norm");
  }
  pooled /= norm;
  FusedEmbedding out;
  out.vec.resize(config_.d_model);
  for (Eigen::Index i = 0; i < d; ++i) out.vec[i] = static_cast<float>(pooled(i));
  return out;
}

Fuser build_fuser(const FusionConfig& config) { return Fuser(config); }

double fused_similarity(const Fuser& fuser, const FeatureTriple& a,
                        const FeatureTriple& b) {
  return cosine(fuser.fuse(a).vec, fuser.fuse(b).vec);
}

double fused_similarity(const Fuser& fuser, const EmbedderBackend& backend,
                        const ImageBuffer& a, const ImageBuffer& b) {
  return fused_similarity(fuser, backend.embed_image(a), backend.embed_image(b));
}

}  // namespace copyforge
