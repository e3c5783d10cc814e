#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "copyforge/features.hpp"

namespace copyforge {

// Binary embedding record, shared by the feature cache and gallery indexes.
//
//   offset  size  field
//   0       4     magic "ADMC"
//   4       2     version (u16 LE) = 1
//   6       2     d (u16 LE)
//   8       1     stream count
//   9       3     reserved, zero
//   12      4     CRC-32 of the payload (u32 LE)
//   16      ...   stream_count * d float32 LE values, stream-major
namespace record {

inline constexpr std::size_t kHeaderSize = 16;
inline constexpr std::uint16_t kVersion = 1;

std::vector<std::uint8_t> encode(std::span<const Vector> streams);
// Throws Integrity (naming `what`) on any header, size, or checksum mismatch.
std::vector<Vector> decode(std::span<const std::uint8_t> bytes,
                           std::size_t expected_streams, std::string_view what);

// Size in bytes of one record holding `streams` vectors of length d.
std::size_t size_of(std::size_t streams, std::size_t d) noexcept;

}  // namespace record

// Hex SHA-256 over arbitrary bytes.
std::string sha256_hex(std::span<const std::byte> bytes);
std::string sha256_hex(std::string_view text);

// Cache key: SHA-256 of image bytes || backend id || d (u32 LE).
std::string content_digest(std::span<const std::byte> image_bytes,
                           std::string_view backend_id, std::size_t dim);
std::string content_digest(const ImageBuffer& image, std::string_view backend_id,
                           std::size_t dim);

// On-disk store of feature triples, one directory per backend id. Entries are
// append-only: a put for an existing key leaves the stored entry untouched.
// Reads may run concurrently; writes are serialized.
class EmbeddingCache {
 public:
  EmbeddingCache(std::filesystem::path root, std::string backend_id);

  std::optional<FeatureTriple> get(const std::string& key) const;
  void put(const std::string& key, const FeatureTriple& triple);

  const std::filesystem::path& directory() const noexcept { return dir_; }

 private:
  std::filesystem::path entry_path(const std::string& key) const;

  std::filesystem::path dir_;
  mutable std::shared_mutex mutex_;
};

// Backend decorator that consults an EmbeddingCache before embedding.
class CachedEmbedder final : public EmbedderBackend {
 public:
  CachedEmbedder(std::shared_ptr<const EmbedderBackend> inner,
                 std::filesystem::path cache_root);

  std::string id() const override { return inner_->id(); }
  std::size_t dim() const override { return inner_->dim(); }
  FeatureTriple embed_image(const ImageBuffer& image) const override;
  TextEmbedding embed_text(std::string_view text) const override {
    return inner_->embed_text(text);
  }
  Vector embed_image_global(const ImageBuffer& image) const override {
    return inner_->embed_image_global(image);
  }
  bool thread_safe() const override { return inner_->thread_safe(); }

 private:
  std::shared_ptr<const EmbedderBackend> inner_;
  mutable EmbeddingCache cache_;
};

}  // namespace copyforge
