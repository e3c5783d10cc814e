#include <gtest/gtest.h>

#include "copyforge/cache.hpp"
#include "copyforge/error.hpp"
#include "copyforge/run_config.hpp"
#include "support.hpp"

namespace cf = copyforge;

namespace {

cf::ErrorKind kind_of(std::string_view text) {
  try {
    cf::RunConfig::parse(text);
  } catch (const cf::Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "accepted: " << text;
  return cf::ErrorKind::Internal;
}

}  // namespace

TEST(RunConfig, EmptyTextGivesDefaults) {
  const auto c = cf::RunConfig::parse("");
  EXPECT_EQ(c.backend.kind, "synthetic");
  EXPECT_EQ(c.backend.dim, 512u);
  EXPECT_EQ(c.fusion.input_dim, 512u);
  EXPECT_EQ(c.decision, cf::DecisionConfig{});
  EXPECT_EQ(c.workers, 1u);
  EXPECT_FALSE(c.cache_dir.has_value());
  EXPECT_EQ(c.tau_grid().size(), 501u);
  EXPECT_EQ(c.attack_suite().size(), 10u);
}

TEST(RunConfig, InputDimFollowsBackend) {
  const auto c = cf::RunConfig::parse(R"({"backend": {"dim": 64}, "fusion": {"d_model": 32}})");
  EXPECT_EQ(c.fusion.input_dim, 64u);
  EXPECT_EQ(c.fusion.d_model, 32u);
  EXPECT_EQ(kind_of(R"({"backend": {"dim": 64}, "fusion": {"input_dim": 32}})"),
            cf::ErrorKind::Configuration);
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
  EXPECT_EQ(kind_of(R"({"bakend": {}})"), cf::ErrorKind::Configuration);
  EXPECT_EQ(kind_of(R"({"backend": {"kind": "clip"}})"), cf::ErrorKind::Configuration);
  EXPECT_EQ(kind_of(R"({"decision": {"tau1": 1.5}})"), cf::ErrorKind::Configuration);
  EXPECT_EQ(kind_of(R"({"decision": {"omega": [0.5, 0.5, 0.5]}})"), cf::ErrorKind::Configuration);
  EXPECT_EQ(kind_of(R"({"workers": 0})"), cf::ErrorKind::Configuration);
  EXPECT_EQ(kind_of(R"({"perturb": {"params": {"crop": {"fraction": 2}}}})"),
            cf::ErrorKind::Configuration);
  EXPECT_EQ(kind_of(R"({"calibration": {"tau_lo": 0.9, "tau_hi": 0.8}})"),
            cf::ErrorKind::Configuration);
  EXPECT_EQ(kind_of("{not json"), cf::ErrorKind::Configuration);
}

TEST(RunConfig, JsonRoundTripIsStable) {
  const auto c = cf::RunConfig::parse(
      R"({"backend": {"dim": 32, "seed": 4}, "seed": 9, "workers": 3,
          "perturb": {"side": "reference", "params": {"crop": {"fraction": 0.3}}},
          "calibration": {"objective": "f1", "tau_step": 0.01}})");
  const std::string once = c.to_json().dump();
  const std::string twice = cf::RunConfig::parse(once).to_json().dump();
  EXPECT_EQ(once, twice);
  EXPECT_EQ(c.perturb.side, cf::Side::Reference);
  const auto suite = c.attack_suite();
  EXPECT_EQ(suite[5].label(), "crop30%");
  EXPECT_EQ(suite[0].seed, 9u);
  EXPECT_EQ(c.calibration.objective, cf::Objective::F1);
}

TEST(RunConfig, CacheDirWrapsBackend) {
  testing_support::TempDir dir;
  auto c = cf::RunConfig::parse(R"({"backend": {"dim": 16}})");
  const auto plain = c.make_backend();
  c.cache_dir = dir.path().string();
  const auto cached = c.make_backend();
  EXPECT_NE(dynamic_cast<const cf::CachedEmbedder*>(cached.get()), nullptr);
  EXPECT_EQ(dynamic_cast<const cf::CachedEmbedder*>(plain.get()), nullptr);
  const auto img = testing_support::blobs(24, 1);
  EXPECT_EQ(plain->embed_image(img).clip, cached->embed_image(img).clip);
  EXPECT_EQ(plain->id(), cached->id());
}
