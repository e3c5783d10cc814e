#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "copyforge/calibration.hpp"
#include "copyforge/decision.hpp"
#include "copyforge/features.hpp"
#include "copyforge/fusion.hpp"

namespace copyforge {

struct GalleryEntry {
  std::string id;
  std::string source;  // path the image was read from, informational
  FusedEmbedding embedding;
  std::string cache_key;  // content digest of the image under the backend
};

// Fused embeddings of a reference set, tied to the fuser that produced them.
//
// On disk an index is a directory holding
//   index.json      {"version", "fuser_digest", "fusion", "d_model", "count",
//                    "entries": [{"id", "source", "cache_key"}, ...]}
//   embeddings.bin  one single-stream embedding record per entry, in order
class GalleryIndex {
 public:
  // Throws Data on duplicate ids, Shape on a wrong embedding length and
  // Numeric when an embedding is not unit-norm.
  GalleryIndex(FusionConfig fusion, std::vector<GalleryEntry> entries);

  const std::vector<GalleryEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  const FusionConfig& fusion() const noexcept { return fusion_; }
  const std::string& fuser_digest() const noexcept { return digest_; }
  std::size_t d_model() const noexcept { return fusion_.d_model; }

  void save(const std::filesystem::path& dir) const;
  // Throws StaleIndex when the stored digest differs from `expected_digest`
  // and Integrity when the files disagree with each other.
  static GalleryIndex load(const std::filesystem::path& dir, const std::string& expected_digest);

 private:
  FusionConfig fusion_;
  std::string digest_;
  std::vector<GalleryEntry> entries_;
};

struct GalleryItem {
  std::string id;
  std::filesystem::path path;
};

// Items named after their file stem, in path order, for every supported
// image file directly inside `dir`.
std::vector<GalleryItem> scan_image_dir(const std::filesystem::path& dir);

struct BuildFailure {
  std::string id;
  std::string source;
  std::string message;
};

struct BuildResult {
  GalleryIndex index;
  std::vector<BuildFailure> failures;
};

// Unreadable images are reported in `failures`; the build itself fails only
// when the item list is empty, ids repeat, or nothing could be embedded.
BuildResult build_index(const std::vector<GalleryItem>& items, const EmbedderBackend& backend,
                        const Fuser& fuser, unsigned workers = 1);

struct RankedMatch {
  std::string id;
  double s_fus = 0.0;
};

// Exact ranking by fused cosine, descending, ties broken by ascending id.
// k is capped at the index size.
std::vector<RankedMatch> top_k(const FusedEmbedding& query, const GalleryIndex& index,
                               std::size_t k);
std::vector<RankedMatch> top_k(const ImageBuffer& query, const GalleryIndex& index,
                               const EmbedderBackend& backend, const Fuser& fuser,
                               std::size_t k);

struct QueryMatch {
  std::string query;
  std::string match_id;
  double s_fus = 0.0;
  bool is_copy = false;
};

struct CopyRate {
  double rate = 0.0;
  std::size_t copies = 0;
  std::vector<QueryMatch> matches;  // in query order
};

// A query is a copy when its top-1 fused similarity exceeds tau1.
CopyRate copy_rate(std::span<const std::string> names, std::span<const FusedEmbedding> queries,
                   const GalleryIndex& index, double tau1, unsigned workers = 1);
CopyRate copy_rate(const std::vector<GalleryItem>& queries, const GalleryIndex& index,
                   const EmbedderBackend& backend, const Fuser& fuser,
                   const DecisionConfig& config, unsigned workers = 1);

struct ManifestRow {
  std::filesystem::path query;
  std::filesystem::path reference;
  Label label = Label::NonCopy;  // retrieve, style or noncopy
};

struct PairManifest {
  std::vector<ManifestRow> rows;

  // JSONL {query, reference, label}; relative paths resolve against `base`.
  // Errors name the line. Missing files raise Io.
  static PairManifest parse(std::istream& in, const std::filesystem::path& base);
  static PairManifest load(const std::filesystem::path& path);
};

struct PairResult {
  ManifestRow row;
  CopyVerdict verdict;
};

struct EvalReport {
  std::size_t total = 0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double copy_rate = 0.0;  // flagged / total
  // Rows: true label retrieve, style, noncopy. Columns: predicted retrieve,
  // style. Only pairs that passed the gate are counted.
  std::array<std::array<std::size_t, 2>, 3> confusion{};
  std::vector<PairResult> pairs;

  nlohmann::ordered_json to_json() const;
};

EvalReport evaluate_manifest(const PairManifest& manifest, const EmbedderBackend& backend,
                             const Fuser& fuser, const DecisionConfig& config,
                             unsigned workers = 1);

// Gate metrics from verdicts already computed.
EvalReport summarize(std::vector<PairResult> pairs);

}  // namespace copyforge
