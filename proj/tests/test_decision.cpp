#include <gtest/gtest.h>

#include <random>

#include "copyforge/decision.hpp"
#include "copyforge/error.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace cf = copyforge;

TEST(DecisionConfig, DefaultsAreThePaperOperatingPoint) {
  const cf::DecisionConfig c;
  EXPECT_EQ(c.tau1, 0.938);
  EXPECT_EQ(c.tau2, 0.970);
  EXPECT_EQ(c.omega, (cf::StreamWeights{0.24, 0.38, 0.38}));
  EXPECT_NEAR(c.omega[0] + c.omega[1] + c.omega[2], 1.0, 1e-9);
  EXPECT_TRUE(cf::validate_config(c).empty());
}

TEST(DecisionConfig, ViolationsAreAllListed) {
  cf::DecisionConfig c;
  c.tau1 = 1.2;
  c.omega = {0.5, 0.5, 0.5};
  const auto v = cf::validate_config(c);
  EXPECT_EQ(v.size(), 2u);
  c = cf::DecisionConfig{};
  c.omega = {-0.1, 0.6, 0.5};
  EXPECT_FALSE(cf::validate_config(c).empty());
  EXPECT_THROW(cf::require_valid(c), cf::Error);
}

TEST(DecisionConfig, JsonRoundTripAndUnknownKey) {
  cf::DecisionConfig c;
  c.tau1 = 0.9;
  EXPECT_EQ(cf::DecisionConfig::from_json(c.to_json()), c);
  EXPECT_THROW(cf::DecisionConfig::from_json(nlohmann::json{{"tau3", 0.5}}), cf::Error);
}

TEST(WeightedScore, HandArithmetic) {
  const cf::StreamWeights omega{0.24, 0.38, 0.38};
  EXPECT_NEAR(cf::weighted_score({0.5, 0.8, 0.2}, omega), 0.50, 1e-12);
  EXPECT_NEAR(cf::weighted_score({0.90, 0.95, 0.95}, omega), 0.938, 1e-9);
  EXPECT_THROW(cf::weighted_score({1, 1, 1}, {0.5, 0.5, 0.5}), cf::Error);
  EXPECT_THROW(cf::weighted_score({1, 1, 1}, {-0.5, 0.5, 1.0}), cf::Error);
}

TEST(Classify, WorkedExamples) {
  const cf::DecisionConfig c;
  const auto style = cf::classify(0.959, {0.90, 0.95, 0.95}, c);
  EXPECT_TRUE(style.is_copy);
  EXPECT_EQ(style.copy_type, cf::CopyType::Style);
  ASSERT_TRUE(style.scores.s_bar.has_value());
  EXPECT_NEAR(*style.scores.s_bar, 0.938, 1e-9);

  const auto retrieve = cf::classify(1.0, {1, 1, 1}, c);
  EXPECT_EQ(retrieve.copy_type, cf::CopyType::Retrieve);
}

TEST(Classify, GateTieFailsAndOmitsSBar) {
  const cf::DecisionConfig c;
  const auto v = cf::classify(0.938, {1, 1, 1}, c);
  EXPECT_FALSE(v.is_copy);
  EXPECT_EQ(v.copy_type, cf::CopyType::NotCopy);
  EXPECT_FALSE(v.scores.s_bar.has_value());
  const auto json = cf::verdict_to_json(v, "g", "r");
  EXPECT_TRUE(json.at("s_bar").is_null());
}

TEST(Classify, TypeTieIsStyle) {
  cf::DecisionConfig c;
  c.omega = {1.0, 0.0, 0.0};
  EXPECT_EQ(cf::classify(0.99, {0.970, 0.0, 0.0}, c).copy_type, cf::CopyType::Style);
}

TEST(Classify, MatchesStraightLineOracle) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> hi(0.9, 1.0);
  const cf::DecisionConfig c;
  for (int i = 0; i < 5000; ++i) {
    double s[4];
    for (double& x : s) x = (i % 2 == 0) ? u(rng) : hi(rng);
    if (i % 97 == 0) s[0] = c.tau1;
    const auto got = cf::classify(s[0], {s[1], s[2], s[3]}, c);
    const auto want = oracle::straight_line_decide(s[0], s[1], s[2], s[3], c.tau1, c.tau2, c.omega[0],
                                         c.omega[1], c.omega[2]);
    ASSERT_EQ(got.is_copy, want.copy);
    ASSERT_EQ(std::string(cf::to_string(got.copy_type)), want.type);
    ASSERT_EQ(got.scores.s_bar.has_value(), want.has_s_bar);
    if (want.has_s_bar) {
      ASSERT_EQ(*got.scores.s_bar, want.s_bar);
    }
  }
}

TEST(Decide, IdenticalImagesAreRetrieveCopies) {
  const cf::SyntheticEmbedder backend(32, 0);
  cf::FusionConfig fc;
  fc.input_dim = 32;
  fc.d_model = 32;
  const cf::Fuser fuser(fc);
  const auto img = testing_support::blobs(32, 4);
  const auto v = cf::decide(img, img, backend, fuser, cf::DecisionConfig{});
  EXPECT_TRUE(v.is_copy);
  EXPECT_EQ(v.copy_type, cf::CopyType::Retrieve);
  EXPECT_NEAR(v.scores.s_fus, 1.0, 1e-9);
}

TEST(VerdictJson, KeyOrderIsFixed) {
  const auto j = cf::verdict_to_json(cf::classify(0.99, {1, 1, 1}, cf::DecisionConfig{}), "q", "r");
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"query", "reference", "s_fus", "s_vis", "s_clip",
                                            "s_tex", "s_bar", "is_copy", "copy_type"}));
}
