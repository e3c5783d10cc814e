#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include <json.hpp>

#include "copyforge/cache.hpp"
#include "copyforge/error.hpp"
#include "copyforge/perturb.hpp"
#include "support.hpp"

namespace cf = copyforge;
namespace fs = std::filesystem;

namespace {

class CountingBackend final : public cf::EmbedderBackend {
 public:
  std::string id() const override { return "counting/v1"; }
  std::size_t dim() const override { return 8; }
  cf::FeatureTriple embed_image(const cf::ImageBuffer& image) const override {
    ++calls;
    return inner.embed_image(image);
  }
  cf::TextEmbedding embed_text(std::string_view t) const override { return inner.embed_text(t); }
  cf::Vector embed_image_global(const cf::ImageBuffer& i) const override {
    return inner.embed_image_global(i);
  }

  mutable std::atomic<int> calls{0};
  cf::SyntheticEmbedder inner{8, 0};
};

}  // namespace

TEST(Record, RoundTripIsExact) {
  const std::vector<cf::Vector> streams{{1.5f, -2.0f, 0.25f}, {0, 1e-30f, 3}, {7, 8, 9}};
  const auto bytes = cf::record::encode(streams);
  EXPECT_EQ(bytes.size(), cf::record::size_of(3, 3));
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "ADMC");
  EXPECT_EQ(cf::record::decode(bytes, 3, "test"), streams);
}

TEST(Record, CorruptionIsDetected) {
  const std::vector<cf::Vector> streams{{1, 2, 3, 4}};
  auto bytes = cf::record::encode(streams);
  auto flipped = bytes;
  flipped.back() ^= 0x01;
  EXPECT_THROW(cf::record::decode(flipped, 1, "t"), cf::Error);
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(cf::record::decode(truncated, 1, "t"), cf::Error);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(cf::record::decode(magic, 1, "t"), cf::Error);
  EXPECT_THROW(cf::record::decode(bytes, 3, "t"), cf::Error);
  try {
    cf::record::decode(flipped, 1, "entry-42");
  } catch (const cf::Error& e) {
    EXPECT_EQ(e.kind(), cf::ErrorKind::Integrity);
    EXPECT_NE(std::string(e.what()).find("entry-42"), std::string::npos);
  }
}

TEST(Digest, KnownSha256) {
  EXPECT_EQ(cf::sha256_hex(std::string_view("abc")),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Digest, DependsOnPixelsBackendAndDim) {
  const auto a = testing_support::checkerboard();
  const auto b = testing_support::checkerboard(16, 4, true);
  const auto base = cf::content_digest(a, "x", 8);
  EXPECT_EQ(base, cf::content_digest(a, "x", 8));
  EXPECT_NE(base, cf::content_digest(b, "x", 8));
  EXPECT_NE(base, cf::content_digest(a, "y", 8));
  EXPECT_NE(base, cf::content_digest(a, "x", 16));
}

TEST(Digest, GoldenGaussianNoiseImage) {
  std::ifstream in(COPYFORGE_FIXTURE_DIR "/goldens.json");
  const auto g = nlohmann::json::parse(in);
  const auto noisy = cf::apply(testing_support::checkerboard(),
                               cf::PerturbationSpec::make(cf::AttackKind::GaussianNoise, 0));
  EXPECT_EQ(cf::sha256_hex(std::span<const std::byte>(cf::canonical_bytes(noisy))),
            g.at("gaussian_noise_digest").get<std::string>());
}

TEST(EmbeddingCache, MissThenHitAndAppendOnly) {
  testing_support::TempDir dir;
  cf::EmbeddingCache cache(dir.path(), "synthetic/v1");
  const std::string key = cf::sha256_hex(std::string_view("k"));
  EXPECT_FALSE(cache.get(key).has_value());
  const cf::FeatureTriple first{{1, 2}, {3, 4}, {5, 6}};
  cache.put(key, first);
  ASSERT_TRUE(cache.get(key).has_value());
  EXPECT_EQ(*cache.get(key), first);
  cache.put(key, cf::FeatureTriple{{9, 9}, {9, 9}, {9, 9}});
  EXPECT_EQ(*cache.get(key), first);
  EXPECT_TRUE(fs::exists(cache.directory() / (key + ".bin")));
  EXPECT_EQ(cache.directory().parent_path(), dir.path());
}

TEST(EmbeddingCache, CorruptEntryRaisesIntegrity) {
  testing_support::TempDir dir;
  cf::EmbeddingCache cache(dir.path(), "b");
  const std::string key = cf::sha256_hex(std::string_view("k"));
  cache.put(key, cf::FeatureTriple{{1, 2}, {3, 4}, {5, 6}});
  {
    std::fstream f(cache.directory() / (key + ".bin"),
                   std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(20);
    f.put('\x7f');
  }
  try {
    cache.get(key);
    FAIL();
  } catch (const cf::Error& e) {
    EXPECT_EQ(e.kind(), cf::ErrorKind::Integrity);
  }
}

TEST(CachedEmbedder, SecondCallIsServedFromDisk) {
  testing_support::TempDir dir;
  auto inner = std::make_shared<CountingBackend>();
  const cf::CachedEmbedder cached(inner, dir.path());
  const auto img = testing_support::blobs(32, 5);
  const auto a = cached.embed_image(img);
  const auto b = cached.embed_image(img);
  EXPECT_EQ(a, b);
  EXPECT_EQ(inner->calls.load(), 1);
  const cf::CachedEmbedder fresh(inner, dir.path());
  EXPECT_EQ(fresh.embed_image(img), a);
  EXPECT_EQ(inner->calls.load(), 1);
}

TEST(CachedEmbedder, ConcurrentReadersAgree) {
  testing_support::TempDir dir;
  auto inner = std::make_shared<CountingBackend>();
  const cf::CachedEmbedder cached(inner, dir.path());
  const auto img = testing_support::blobs(32, 9);
  const auto expected = inner->inner.embed_image(img);
  std::vector<std::jthread> threads;
  std::atomic<int> mismatches{0};
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&] {
      for (int i = 0; i < 10; ++i) {
        if (cached.embed_image(img) != expected) ++mismatches;
      }
    });
  }
  threads.clear();
  EXPECT_EQ(mismatches.load(), 0);
}
