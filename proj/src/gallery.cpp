#include "copyforge/gallery.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <optional>
#include <set>

#include "copyforge/cache.hpp"
#include "copyforge/error.hpp"
#include "copyforge/parallel.hpp"

namespace copyforge {
namespace fs = std::filesystem;

namespace {

constexpr int kIndexVersion = 1;
constexpr double kNormTolerance = 1e-5;

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::vector<std::uint8_t> read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_atomically(const fs::path& path, std::span<const std::uint8_t> bytes) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::Io, "short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return ext == ".png" || ext == ".ppm" || ext == ".pgm";
}

}  // namespace

GalleryIndex::GalleryIndex(FusionConfig fusion, std::vector<GalleryEntry> entries)
    : fusion_(std::move(fusion)), digest_(fusion_.digest()), entries_(std::move(entries)) {
  std::set<std::string> seen;
  for (const auto& e : entries_) {
    if (!seen.insert(e.id).second) fail(ErrorKind::Data, "duplicate gallery id '" + e.id + "'");
    if (e.embedding.vec.size() != fusion_.d_model) {
      fail(ErrorKind::Shape, "embedding of '" + e.id + "' has length " +
                                 std::to_string(e.embedding.vec.size()) + ", expected " +
                                 std::to_string(fusion_.d_model));
    }
    double sq = 0.0;
    for (float v : e.embedding.vec) sq += static_cast<double>(v) * v;
    if (std::abs(std::sqrt(sq) - 1.0) > kNormTolerance) {
      fail(ErrorKind::Numeric, "embedding of '" + e.id + "' is not unit-norm");
    }
  }
}

void GalleryIndex::save(const fs::path& dir) const {
  fs::create_directories(dir);
  nlohmann::ordered_json header;
  header["version"] = kIndexVersion;
  header["fuser_digest"] = digest_;
  header["fusion"] = fusion_.to_json();
  header["d_model"] = fusion_.d_model;
  header["count"] = entries_.size();
  auto list = nlohmann::ordered_json::array();
  std::vector<std::uint8_t> blob;
  blob.reserve(entries_.size() * record::size_of(1, fusion_.d_model));
  for (const auto& e : entries_) {
    nlohmann::ordered_json item;
    item["id"] = e.id;
    item["source"] = e.source;
    item["cache_key"] = e.cache_key;
    list.push_back(std::move(item));
    const auto rec = record::encode(std::span<const Vector>(&e.embedding.vec, 1));
    blob.insert(blob.end(), rec.begin(), rec.end());
  }
  header["entries"] = std::move(list);
  write_atomically(dir / "embeddings.bin", blob);
  const std::string text = header.dump(2) + "\n";
  write_atomically(dir / "index.json",
                   std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

GalleryIndex GalleryIndex::load(const fs::path& dir, const std::string& expected_digest) {
  const fs::path header_path = dir / "index.json";
  if (!fs::exists(header_path)) fail(ErrorKind::Io, "no gallery index at " + dir.string());
  nlohmann::json header;
  try {
    const auto bytes = read_all(header_path);
    header = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Integrity, header_path.string() + ": " + e.what());
  }
  try {
    if (header.at("version").get<int>() != kIndexVersion) {
      fail(ErrorKind::Integrity, header_path.string() + ": unsupported index version");
    }
    const auto stored = header.at("fuser_digest").get<std::string>();
    if (stored != expected_digest) {
      fail(ErrorKind::StaleIndex, "index at " + dir.string() + " was built with fuser " +
                                      stored + " but the configuration gives " + expected_digest);
    }
    const FusionConfig fusion = FusionConfig::from_json(header.at("fusion"));
    if (fusion.digest() != stored) {
      fail(ErrorKind::Integrity, header_path.string() + ": fusion section does not match digest");
    }
    const auto d = header.at("d_model").get<std::size_t>();
    const auto count = header.at("count").get<std::size_t>();
    const auto& list = header.at("entries");
    if (d != fusion.d_model || list.size() != count) {
      fail(ErrorKind::Integrity, header_path.string() + ": header counts are inconsistent");
    }
    const auto blob = read_all(dir / "embeddings.bin");
    const std::size_t rec = record::size_of(1, d);
    if (blob.size() != rec * count) {
      fail(ErrorKind::Integrity, "embeddings.bin holds " + std::to_string(blob.size()) +
                                     " bytes, expected " + std::to_string(rec * count));
    }
    std::vector<GalleryEntry> entries;
    entries.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      const auto& item = list.at(i);
      GalleryEntry e;
      e.id = item.at("id").get<std::string>();
      e.source = item.at("source").get<std::string>();
      e.cache_key = item.at("cache_key").get<std::string>();
      auto streams = record::decode(std::span(blob).subspan(i * rec, rec), 1,
                                    "gallery entry '" + e.id + "'");
      e.embedding.vec = std::move(streams.front());
      entries.push_back(std::move(e));
    }
    return GalleryIndex(fusion, std::move(entries));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Integrity, header_path.string() + ": " + e.what());
  }
}

std::vector<GalleryItem> scan_image_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorKind::Io, "not a directory: " + dir.string());
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) paths.push_back(entry.path());
  }
  std::sort(paths.begin(), paths.end());
  std::vector<GalleryItem> items;
  for (auto& p : paths) items.push_back({p.stem().string(), p});
  return items;
}

BuildResult build_index(const std::vector<GalleryItem>& items, const EmbedderBackend& backend,
                        const Fuser& fuser, unsigned workers) {
  if (items.empty()) fail(ErrorKind::Data, "cannot build an index from zero images");
  std::set<std::string> ids;
  for (const auto& item : items) {
    if (!ids.insert(item.id).second) fail(ErrorKind::Data, "duplicate gallery id '" + item.id + "'");
  }
  if (!backend.thread_safe()) workers = 1;

  std::vector<std::optional<GalleryEntry>> built(items.size());
  std::vector<std::string> errors(items.size());
  parallel_for(items.size(), workers, [&](std::size_t i) {
    const auto& item = items[i];
    try {
      const ImageBuffer image = load_image(item.path);
      GalleryEntry e;
      e.id = item.id;
      e.source = item.path.generic_string();
      e.embedding = fuser.fuse(backend.embed_image(image));
      e.cache_key = content_digest(image, backend.id(), backend.dim());
      built[i] = std::move(e);
    } catch (const Error& err) {
      errors[i] = err.what();
    }
  });

  std::vector<GalleryEntry> entries;
  std::vector<BuildFailure> failures;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (built[i]) {
      entries.push_back(std::move(*built[i]));
    } else {
      failures.push_back({items[i].id, items[i].path.generic_string(), errors[i]});
    }
  }
  if (entries.empty()) {
    fail(ErrorKind::Data, "no gallery image could be embedded; first error: " +
                              failures.front().message);
  }
  return {GalleryIndex(fuser.config(), std::move(entries)), std::move(failures)};
}

std::vector<RankedMatch> top_k(const FusedEmbedding& query, const GalleryIndex& index,
                               std::size_t k) {
  if (index.size() == 0) fail(ErrorKind::Data, "gallery index is empty");
  if (k == 0) fail(ErrorKind::Configuration, "k must be at least 1");
  if (query.vec.size() != index.d_model()) {
    fail(ErrorKind::Shape, "query embedding has length " + std::to_string(query.vec.size()) +
                               ", index expects " + std::to_string(index.d_model()));
  }
  std::vector<RankedMatch> all;
  all.reserve(index.size());
  for (const auto& e : index.entries()) all.push_back({e.id, cosine(query.vec, e.embedding.vec)});
  const std::size_t keep = std::min(k, all.size());
  auto better = [](const RankedMatch& a, const RankedMatch& b) {
    if (a.s_fus != b.s_fus) return a.s_fus > b.s_fus;
    return a.id < b.id;
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(),
                    better);
  all.resize(keep);
  return all;
}

std::vector<RankedMatch> top_k(const ImageBuffer& query, const GalleryIndex& index,
                               const EmbedderBackend& backend, const Fuser& fuser,
                               std::size_t k) {
  if (fuser.digest() != index.fuser_digest()) {
    fail(ErrorKind::StaleIndex, "index fuser digest differs from the active fuser");
  }
  return top_k(fuser.fuse(backend.embed_image(query)), index, k);
}

CopyRate copy_rate(std::span<const std::string> names, std::span<const FusedEmbedding> queries,
                   const GalleryIndex& index, double tau1, unsigned workers) {
  if (queries.empty()) fail(ErrorKind::Data, "copy rate needs at least one query");
  if (names.size() != queries.size()) fail(ErrorKind::Shape, "names and queries differ in length");
  CopyRate out;
  out.matches.resize(queries.size());
  parallel_for(queries.size(), workers, [&](std::size_t i) {
    const auto best = top_k(queries[i], index, 1).front();
    out.matches[i] = {names[i], best.id, best.s_fus, best.s_fus > tau1};
  });
  for (const auto& m : out.matches) out.copies += m.is_copy ? 1 : 0;
  out.rate = ratio(out.copies, out.matches.size());
  return out;
}

CopyRate copy_rate(const std::vector<GalleryItem>& queries, const GalleryIndex& index,
                   const EmbedderBackend& backend, const Fuser& fuser,
                   const DecisionConfig& config, unsigned workers) {
  require_valid(config);
  if (queries.empty()) fail(ErrorKind::Data, "copy rate needs at least one query");
  if (fuser.digest() != index.fuser_digest()) {
    fail(ErrorKind::StaleIndex, "index fuser digest differs from the active fuser");
  }
  std::vector<std::string> names(queries.size());
  std::vector<FusedEmbedding> embedded(queries.size());
  parallel_for(queries.size(), backend.thread_safe() ? workers : 1, [&](std::size_t i) {
    names[i] = queries[i].id;
    embedded[i] = fuser.fuse(backend.embed_image(load_image(queries[i].path)));
  });
  return copy_rate(names, embedded, index, config.tau1, workers);
}

PairManifest PairManifest::parse(std::istream& in, const fs::path& base) {
  PairManifest manifest;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "manifest line " + std::to_string(number);
    ManifestRow row;
    try {
      const auto j = nlohmann::json::parse(line);
      for (const auto& [key, value] : j.items()) {
        if (key != "query" && key != "reference" && key != "label") {
          fail(ErrorKind::Data, where + ": unknown key '" + key + "'");
        }
      }
      row.query = j.at("query").get<std::string>();
      row.reference = j.at("reference").get<std::string>();
      row.label = label_from_string(j.at("label").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Data, where + ": " + e.what());
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Data) throw;
      fail(ErrorKind::Data, where + ": " + e.what());
    }
    if (row.label == Label::Copy) {
      fail(ErrorKind::Data, where + ": label must be retrieve, style or noncopy");
    }
    for (fs::path* p : {&row.query, &row.reference}) {
      if (p->is_relative()) *p = base / *p;
      if (!fs::exists(*p)) fail(ErrorKind::Io, where + ": no such image file: " + p->string());
    }
    manifest.rows.push_back(std::move(row));
  }
  return manifest;
}

PairManifest PairManifest::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot read manifest " + path.string());
  return parse(in, path.parent_path());
}

nlohmann::ordered_json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["total"] = total;
  j["tp"] = tp;
  j["fp"] = fp;
  j["tn"] = tn;
  j["fn"] = fn;
  j["accuracy"] = accuracy;
  j["precision"] = precision;
  j["recall"] = recall;
  j["f1"] = f1;
  j["copy_rate"] = copy_rate;
  nlohmann::ordered_json confusion;
  const char* rows[] = {"retrieve", "style", "noncopy"};
  for (std::size_t r = 0; r < 3; ++r) {
    nlohmann::ordered_json row;
    row["retrieve"] = this->confusion[r][0];
    row["style"] = this->confusion[r][1];
    confusion[rows[r]] = row;
  }
  j["type_confusion"] = confusion;
  return j;
}

EvalReport summarize(std::vector<PairResult> pairs) {
  if (pairs.empty()) fail(ErrorKind::Data, "manifest has no pairs");
  EvalReport report;
  report.total = pairs.size();
  for (const auto& p : pairs) {
    const bool truth = is_positive(p.row.label);
    const bool flagged = p.verdict.is_copy;
    if (truth && flagged) ++report.tp;
    if (!truth && flagged) ++report.fp;
    if (!truth && !flagged) ++report.tn;
    if (truth && !flagged) ++report.fn;
    if (flagged) {
      const std::size_t row = p.row.label == Label::Retrieve ? 0 : p.row.label == Label::Style ? 1 : 2;
      const std::size_t col = p.verdict.copy_type == CopyType::Retrieve ? 0 : 1;
      ++report.confusion[row][col];
    }
  }
  report.accuracy = ratio(report.tp + report.tn, report.total);
  report.precision = ratio(report.tp, report.tp + report.fp);
  report.recall = ratio(report.tp, report.tp + report.fn);
  report.f1 = ratio(2 * report.tp, 2 * report.tp + report.fp + report.fn);
  report.copy_rate = ratio(report.tp + report.fp, report.total);
  report.pairs = std::move(pairs);
  return report;
}

EvalReport evaluate_manifest(const PairManifest& manifest, const EmbedderBackend& backend,
                             const Fuser& fuser, const DecisionConfig& config, unsigned workers) {
  require_valid(config);
  if (manifest.rows.empty()) fail(ErrorKind::Data, "manifest has no pairs");
  std::vector<PairResult> pairs(manifest.rows.size());
  parallel_for(pairs.size(), backend.thread_safe() ? workers : 1, [&](std::size_t i) {
    const auto& row = manifest.rows[i];
    pairs[i] = {row, decide(load_image(row.query), load_image(row.reference), backend, fuser,
                            config)};
  });
  return summarize(std::move(pairs));
}

}  // namespace copyforge
