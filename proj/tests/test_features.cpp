#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "copyforge/error.hpp"
#include "copyforge/features.hpp"
#include "copyforge/image.hpp"
#include "support.hpp"

namespace cf = copyforge;
using testing_support::checkerboard;

namespace {

nlohmann::json goldens() {
  std::ifstream in(COPYFORGE_FIXTURE_DIR "/goldens.json");
  return nlohmann::json::parse(in);
}

cf::ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const cf::Error& e) {
    return e.kind();
  }
  return cf::ErrorKind::Internal;
}

}  // namespace

TEST(Cosine, HandArithmetic) {
  const std::vector<float> a{1, 1};
  const std::vector<float> b{1, 0};
  EXPECT_NEAR(cf::cosine(a, b), 1.0 / std::sqrt(2.0), 1e-6);
}

TEST(Cosine, SymmetricBoundedAndSelfOne) {
  std::mt19937_64 rng(7);
  std::normal_distribution<float> n(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<float> a(17), b(17);
    for (auto& v : a) v = n(rng);
    for (auto& v : b) v = n(rng);
    const double ab = cf::cosine(a, b);
    EXPECT_EQ(ab, cf::cosine(b, a));
    EXPECT_GE(ab, -1.0);
    EXPECT_LE(ab, 1.0);
    EXPECT_NEAR(cf::cosine(a, a), 1.0, 1e-12);
  }
}

TEST(Cosine, ZeroVectorIsUndefined) {
  const std::vector<float> zero{0, 0, 0};
  const std::vector<float> one{1, 2, 3};
  EXPECT_EQ(kind_of([&] { cf::cosine(zero, one); }), cf::ErrorKind::UndefinedSimilarity);
}

TEST(Cosine, LengthMismatchIsShapeError) {
  const std::vector<float> a{1, 2};
  const std::vector<float> b{1, 2, 3};
  EXPECT_EQ(kind_of([&] { cf::cosine(a, b); }), cf::ErrorKind::Shape);
}

TEST(ImageBuffer, RejectsTinyAndOutOfRange) {
  EXPECT_EQ(kind_of([] { cf::ImageBuffer(4, 16); }), cf::ErrorKind::Shape);
  std::vector<float> px(8 * 8 * 3, 0.5f);
  px[5] = 1.5f;
  EXPECT_EQ(kind_of([&] { cf::ImageBuffer(8, 8, px); }), cf::ErrorKind::Numeric);
}

TEST(ImageIo, PngAndPpmRoundTripAt8Bits) {
  testing_support::TempDir dir;
  const auto img = testing_support::blobs(24, 3);
  for (const char* name : {"a.png", "a.ppm"}) {
    cf::save_image(img, dir / name);
    const auto back = cf::load_image(dir / name);
    ASSERT_EQ(back.height(), 24);
    ASSERT_EQ(back.width(), 24);
    for (std::size_t i = 0; i < img.pixels().size(); ++i) {
      EXPECT_NEAR(back.pixels()[i], img.pixels()[i], 0.5 / 255 + 1e-6);
    }
  }
}

TEST(ImageIo, MissingFileNamesPath) {
  try {
    cf::load_image("/nonexistent/where.png");
    FAIL();
  } catch (const cf::Error& e) {
    EXPECT_EQ(e.kind(), cf::ErrorKind::Io);
    EXPECT_NE(std::string(e.what()).find("/nonexistent/where.png"), std::string::npos);
  }
}

TEST(SyntheticEmbedder, ShapesAndDeterminism) {
  const cf::SyntheticEmbedder a(32, 1);
  const cf::SyntheticEmbedder b(32, 1);
  const auto img = testing_support::blobs(40, 11);
  const auto ta = a.embed_image(img);
  EXPECT_EQ(ta.vis.size(), 32u);
  EXPECT_EQ(ta.clip.size(), 32u);
  EXPECT_EQ(ta.tex.size(), 32u);
  EXPECT_EQ(ta, b.embed_image(img));
  EXPECT_NE(ta, cf::SyntheticEmbedder(32, 2).embed_image(img));
}

TEST(SyntheticEmbedder, FlatGreyImageStillHasDirection) {
  const cf::SyntheticEmbedder e(16, 0);
  const auto t = e.embed_image(testing_support::constant(8, 8, 0.5f));
  EXPECT_NO_THROW(t.validate());
  EXPECT_NEAR(cf::cosine(t.vis, t.vis), 1.0, 1e-12);
}

TEST(SyntheticEmbedder, RejectsTinyDimension) {
  EXPECT_EQ(kind_of([] { cf::SyntheticEmbedder(3, 0); }), cf::ErrorKind::Configuration);
}

TEST(SyntheticEmbedder, TextEmbeddingIsDeterministicAndNonEmpty) {
  const cf::SyntheticEmbedder e(64, 0);
  const auto a = e.embed_text("a dog in the park");
  EXPECT_EQ(a.vec, e.embed_text("a dog in the park").vec);
  EXPECT_GT(cf::cosine(a.vec, e.embed_text("a dog in a park").vec),
            cf::cosine(a.vec, e.embed_text("quantum chromodynamics").vec));
  EXPECT_EQ(kind_of([&] { e.embed_text(""); }), cf::ErrorKind::Data);
}

TEST(SyntheticEmbedder, GoldenCheckerboardTriple) {
  const auto g = goldens().at("checkerboard_triple");
  const auto t = cf::synthetic_embed(checkerboard(), g.at("dim").get<std::size_t>(),
                                     g.at("seed").get<std::uint64_t>());
  EXPECT_EQ(t.vis, g.at("vis").get<cf::Vector>());
  EXPECT_EQ(t.clip, g.at("clip").get<cf::Vector>());
  EXPECT_EQ(t.tex, g.at("tex").get<cf::Vector>());
}

TEST(FeatureTriple, ValidateRejectsMismatchAndNan) {
  cf::FeatureTriple t{{1, 2}, {1, 2}, {1}};
  EXPECT_EQ(kind_of([&] { t.validate(); }), cf::ErrorKind::Shape);
  t.tex = {1, NAN};
  EXPECT_EQ(kind_of([&] { t.validate(); }), cf::ErrorKind::Numeric);
}
