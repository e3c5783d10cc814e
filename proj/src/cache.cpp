#include "copyforge/cache.hpp"

#include <openssl/evp.h>
#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>
#include <mutex>

#include "copyforge/error.hpp"

namespace copyforge {
namespace record {
namespace {

void put_u16(std::vector<std::uint8_t>& out, std::size_t at, std::uint16_t v) {
  out[at] = static_cast<std::uint8_t>(v & 0xffu);
  out[at + 1] = static_cast<std::uint8_t>(v >> 8);
}

void put_u32(std::vector<std::uint8_t>& out, std::size_t at, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out[at + i] = static_cast<std::uint8_t>((v >> (8 * i)) & 0xffu);
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

std::uint16_t get_u16(std::span<const std::uint8_t> in, std::size_t at) {
  return static_cast<std::uint16_t>(in[at] | (in[at + 1] << 8));
}

std::uint32_t crc_of(std::span<const std::uint8_t> payload) {
  uLong crc = crc32(0L, Z_NULL, 0);
  return static_cast<std::uint32_t>(
      crc32(crc, payload.data(), static_cast<uInt>(payload.size())));
}

}  // namespace

std::size_t size_of(std::size_t streams, std::size_t d) noexcept {
  return kHeaderSize + streams * d * sizeof(float);
}

std::vector<std::uint8_t> encode(std::span<const Vector> streams) {
  if (streams.empty() || streams.size() > 255) {
    fail(ErrorKind::Internal, "record must hold 1..255 streams");
  }
  const std::size_t d = streams.front().size();
  if (d == 0 || d > 0xffff) {
    fail(ErrorKind::Configuration,
         "record dimension must be in 1..65535, got " + std::to_string(d));
  }
  for (const auto& s : streams) {
    if (s.size() != d) fail(ErrorKind::Shape, "record streams differ in length");
  }
  std::vector<std::uint8_t> out(size_of(streams.size(), d), 0);
  std::memcpy(out.data(), "ADMC", 4);
  put_u16(out, 4, kVersion);
  put_u16(out, 6, static_cast<std::uint16_t>(d));
  out[8] = static_cast<std::uint8_t>(streams.size());
  std::size_t at = kHeaderSize;
  for (const auto& s : streams) {
    for (float v : s) {
      put_u32(out, at, std::bit_cast<std::uint32_t>(v));
      at += 4;
    }
  }
  put_u32(out, 12, crc_of(std::span(out).subspan(kHeaderSize)));
  return out;
}

std::vector<Vector> decode(std::span<const std::uint8_t> bytes,
                           std::size_t expected_streams, std::string_view what) {
  auto corrupt = [&](const std::string& why) {
    fail(ErrorKind::Integrity, "corrupt embedding record " + std::string(what) + ": " + why);
  };
  if (bytes.size() < kHeaderSize) corrupt("truncated header");
  if (std::memcmp(bytes.data(), "ADMC", 4) != 0) corrupt("bad magic");
  if (get_u16(bytes, 4) != kVersion) corrupt("unsupported version");
  const std::size_t d = get_u16(bytes, 6);
  const std::size_t streams = bytes[8];
  if (d == 0 || streams != expected_streams) corrupt("unexpected shape");
  if (bytes.size() != size_of(streams, d)) corrupt("payload length mismatch");
  if (get_u32(bytes, 12) != crc_of(bytes.subspan(kHeaderSize))) corrupt("checksum mismatch");
  std::vector<Vector> out(streams, Vector(d));
  std::size_t at = kHeaderSize;
  for (auto& s : out) {
    for (float& v : s) {
      v = std::bit_cast<float>(get_u32(bytes, at));
      at += 4;
    }
  }
  return out;
}

}  // namespace record

std::string sha256_hex(std::span<const std::byte> bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    fail(ErrorKind::Internal, "SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xf]);
  }
  return out;
}

std::string sha256_hex(std::string_view text) {
  return sha256_hex(std::as_bytes(std::span(text.data(), text.size())));
}

std::string content_digest(std::span<const std::byte> image_bytes,
                           std::string_view backend_id, std::size_t dim) {
  std::vector<std::byte> buf(image_bytes.begin(), image_bytes.end());
  for (char ch : backend_id) buf.push_back(static_cast<std::byte>(ch));
  const auto d = static_cast<std::uint32_t>(dim);
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::byte>((d >> (8 * i)) & 0xffu));
  return sha256_hex(buf);
}

std::string content_digest(const ImageBuffer& image, std::string_view backend_id,
                           std::size_t dim) {
  return content_digest(canonical_bytes(image), backend_id, dim);
}

namespace {

std::string safe_component(std::string_view id) {
  std::string out(id);
  for (char& ch : out) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_' && ch != '.') {
      ch = '_';
    }
  }
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

bool is_hex_key(const std::string& key) {
  return !key.empty() && std::all_of(key.begin(), key.end(), [](unsigned char ch) {
    return std::isxdigit(ch) != 0;
  });
}

}  // namespace

EmbeddingCache::EmbeddingCache(std::filesystem::path root, std::string backend_id)
    : dir_(std::move(root) / safe_component(backend_id)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) fail(ErrorKind::Io, "cannot create cache directory " + dir_.string() + ": " + ec.message());
}

std::filesystem::path EmbeddingCache::entry_path(const std::string& key) const {
  if (!is_hex_key(key)) fail(ErrorKind::Data, "cache key must be a hex digest: '" + key + "'");
  return dir_ / (key + ".bin");
}

std::optional<FeatureTriple> EmbeddingCache::get(const std::string& key) const {
  const auto path = entry_path(key);
  std::shared_lock lock(mutex_);
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  auto streams = record::decode(bytes, 3, key);
  FeatureTriple t{std::move(streams[0]), std::move(streams[1]), std::move(streams[2])};
  return t;
}

void EmbeddingCache::put(const std::string& key, const FeatureTriple& triple) {
  triple.validate();
  const auto path = entry_path(key);
  const std::array<Vector, 3> streams{triple.vis, triple.clip, triple.tex};
  const auto bytes = record::encode(streams);
  std::unique_lock lock(mutex_);
  std::error_code ec;
  if (std::filesystem::exists(path, ec)) return;
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::Io, "cannot write cache entry " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::Io, "cannot commit cache entry " + path.string() + ": " + ec.message());
}

CachedEmbedder::CachedEmbedder(std::shared_ptr<const EmbedderBackend> inner,
                               std::filesystem::path cache_root)
    : inner_(std::move(inner)), cache_(std::move(cache_root), inner_->id()) {}

FeatureTriple CachedEmbedder::embed_image(const ImageBuffer& image) const {
  const auto key = content_digest(image, inner_->id(), inner_->dim());
  if (auto hit = cache_.get(key)) return *std::move(hit);
  auto triple = inner_->embed_image(image);
  cache_.put(key, triple);
  return triple;
}

}  // namespace copyforge
