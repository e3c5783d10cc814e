#include "copyforge/calibration.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <string>

#include "copyforge/error.hpp"
#include "copyforge/image.hpp"
#include "copyforge/parallel.hpp"

namespace copyforge {
namespace {

struct Counts {
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::int64_t correct() const { return tp + tn; }
  std::int64_t total() const { return tp + fp + tn + fn; }
  double accuracy() const { return static_cast<double>(correct()) / static_cast<double>(total()); }
  // F1 = 2tp / (2tp + fp + fn) kept as an exact fraction for comparisons.
  std::int64_t f1_num() const { return 2 * tp; }
  std::int64_t f1_den() const { return 2 * tp + fp + fn; }
  double f1() const {
    return f1_den() == 0 ? 0.0 : static_cast<double>(f1_num()) / static_cast<double>(f1_den());
  }
};

bool better(const Counts& a, const Counts& b, Objective objective) {
  if (objective == Objective::Accuracy) return a.correct() > b.correct();
  return a.f1_num() * b.f1_den() > b.f1_num() * a.f1_den();
}

void check_grid(std::span<const double> grid) {
  if (grid.size() < 2) fail(ErrorKind::Configuration, "threshold grid needs at least 2 points");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) {
      fail(ErrorKind::Configuration, "threshold grid must be strictly ascending");
    }
  }
}

// Sorted positive and negative scores; counts at any tau via binary search.
class SortedScores {
 public:
  SortedScores(std::span<const double> scores, std::span<const bool> positive) {
    if (scores.size() != positive.size()) {
      fail(ErrorKind::Shape, "scores and labels differ in length");
    }
    for (std::size_t i = 0; i < scores.size(); ++i) {
      (positive[i] ? pos_ : neg_).push_back(scores[i]);
    }
    if (pos_.empty() || neg_.empty()) {
      fail(ErrorKind::DegenerateData,
           "threshold sweep needs both positive and negative examples (got " +
               std::to_string(pos_.size()) + " positive, " +
               std::to_string(neg_.size()) + " negative)");
    }
    std::sort(pos_.begin(), pos_.end());
    std::sort(neg_.begin(), neg_.end());
  }

  Counts at(double tau) const {
    Counts c;
    const auto pos_le = std::upper_bound(pos_.begin(), pos_.end(), tau) - pos_.begin();
    const auto neg_le = std::upper_bound(neg_.begin(), neg_.end(), tau) - neg_.begin();
    c.fn = pos_le;
    c.tp = static_cast<std::int64_t>(pos_.size()) - pos_le;
    c.tn = neg_le;
    c.fp = static_cast<std::int64_t>(neg_.size()) - neg_le;
    return c;
  }

 private:
  std::vector<double> pos_;
  std::vector<double> neg_;
};

struct BestSweep {
  std::size_t index = 0;
  Counts counts;
};

BestSweep sweep_into(const SortedScores& sorted, std::span<const double> grid,
                     Objective objective, std::vector<SweepPoint>* out) {
  BestSweep best;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Counts c = sorted.at(grid[i]);
    if (out) out->push_back({grid[i], c.accuracy(), c.f1()});
    if (i == 0 || better(c, best.counts, objective)) best = {i, c};
  }
  return best;
}

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void commit(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
    out << content;
    if (!out) fail(ErrorKind::Io, "short write to " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::Io, "cannot write " + path.string() + ": " + ec.message());
}

// Blue -> yellow ramp for [0,1].
std::array<float, 3> ramp(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return {static_cast<float>(0.15 + 0.85 * t), static_cast<float>(0.2 + 0.7 * t),
          static_cast<float>(0.6 * (1.0 - t) + 0.1)};
}

void plot_point(ImageBuffer& img, int x, int y, std::array<float, 3> rgb) {
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      const int yy = y + dy;
      const int xx = x + dx;
      if (yy < 0 || xx < 0 || yy >= img.height() || xx >= img.width()) continue;
      for (int c = 0; c < 3; ++c) img.at(yy, xx, c) = rgb[c];
    }
  }
}

}  // namespace

std::string_view to_string(Label label) noexcept {
  switch (label) {
    case Label::Copy: return "copy";
    case Label::NonCopy: return "noncopy";
    case Label::Retrieve: return "retrieve";
    case Label::Style: return "style";
  }
  return "noncopy";
}

Label label_from_string(std::string_view name) {
  if (name == "copy") return Label::Copy;
  if (name == "noncopy" || name == "non_copy" || name == "not_copy") return Label::NonCopy;
  if (name == "retrieve") return Label::Retrieve;
  if (name == "style") return Label::Style;
  fail(ErrorKind::Data, "unknown label '" + std::string(name) +
                            "' (expected copy, noncopy, retrieve or style)");
}

std::string_view to_string(Objective objective) noexcept {
  return objective == Objective::Accuracy ? "accuracy" : "f1";
}

Objective objective_from_string(std::string_view name) {
  if (name == "accuracy") return Objective::Accuracy;
  if (name == "f1") return Objective::F1;
  fail(ErrorKind::Configuration, "unknown objective '" + std::string(name) + "'");
}

LabeledScoreSet LabeledScoreSet::from_jsonl(std::istream& in) {
  LabeledScoreSet set;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ScoreEntry e;
      e.s_fus = j.at("s_fus").get<double>();
      e.s_vis = j.at("s_vis").get<double>();
      e.s_clip = j.at("s_clip").get<double>();
      e.s_tex = j.at("s_tex").get<double>();
      e.label = label_from_string(j.at("label").get<std::string>());
      set.entries.push_back(e);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Data, "scores line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      fail(e.kind(), "scores line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  set.validate_ranges();
  return set;
}

void LabeledScoreSet::validate_ranges() const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    for (double v : {e.s_fus, e.s_vis, e.s_clip, e.s_tex}) {
      if (!(v >= -1.0 && v <= 1.0)) {
        fail(ErrorKind::Numeric, "score entry " + std::to_string(i) + " has a value outside [-1, 1]");
      }
    }
  }
}

std::vector<double> make_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || !(hi > lo)) {
    fail(ErrorKind::Configuration, "grid needs step > 0 and hi > lo");
  }
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> grid;
  grid.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double raw = lo + static_cast<double>(i) * step;
    grid.push_back(std::round(raw * 1e12) / 1e12);
  }
  return grid;
}

SweepResult sweep_threshold(std::span<const double> scores, std::span<const bool> positive,
                            std::span<const double> grid, Objective objective) {
  check_grid(grid);
  const SortedScores sorted(scores, positive);
  SweepResult result;
  result.objective = objective;
  result.grid.reserve(grid.size());
  const auto best = sweep_into(sorted, grid, objective, &result.grid);
  result.best_tau = grid[best.index];
  result.best_accuracy = best.counts.accuracy();
  result.best_f1 = best.counts.f1();
  return result;
}

SweepResult sweep_threshold(const LabeledScoreSet& scores, std::span<const double> grid,
                            Objective objective) {
  const std::size_t m = scores.entries.size();
  std::vector<double> values(m);
  std::unique_ptr<bool[]> flags(new bool[m]);
  for (std::size_t k = 0; k < m; ++k) {
    values[k] = scores.entries[k].s_fus;
    flags[k] = is_positive(scores.entries[k].label);
  }
  return sweep_threshold(values, std::span<const bool>(flags.get(), m), grid, objective);
}

WeightGridResult grid_search_weights(const LabeledScoreSet& scores, double step,
                                     std::span<const double> tau_grid, Objective objective,
                                     unsigned workers) {
  check_grid(tau_grid);
  if (!(step > 0.0) || step > 1.0) {
    fail(ErrorKind::Configuration, "weight step must lie in (0, 1]");
  }
  const long n = std::lround(1.0 / step);
  if (n < 1 || std::abs(static_cast<double>(n) * step - 1.0) > 1e-9) {
    fail(ErrorKind::Configuration, "weight step " + num(step) + " does not divide 1 evenly");
  }
  const std::size_t m = scores.entries.size();
  std::unique_ptr<bool[]> flags(new bool[m]);
  for (std::size_t k = 0; k < m; ++k) flags[k] = is_positive(scores.entries[k].label);
  const std::span<const bool> labels(flags.get(), m);

  WeightGridResult result;
  result.objective = objective;
  for (long i = 0; i <= n; ++i) {
    for (long j = 0; j <= n - i; ++j) {
      WeightCell cell;
      cell.w = {static_cast<double>(i) / static_cast<double>(n),
                static_cast<double>(j) / static_cast<double>(n),
                static_cast<double>(n - i - j) / static_cast<double>(n)};
      result.cells.push_back(cell);
    }
  }

  std::vector<Counts> counts(result.cells.size());
  parallel_for(result.cells.size(), workers, [&](std::size_t c) {
    auto& cell = result.cells[c];
    std::vector<double> weighted(m);
    for (std::size_t k = 0; k < m; ++k) {
      const auto& e = scores.entries[k];
      weighted[k] = cell.w[0] * e.s_vis + cell.w[1] * e.s_clip + cell.w[2] * e.s_tex;
    }
    const SortedScores sorted(weighted, labels);
    const auto best = sweep_into(sorted, tau_grid, objective, nullptr);
    cell.tau = tau_grid[best.index];
    cell.accuracy = best.counts.accuracy();
    cell.f1 = best.counts.f1();
    counts[c] = best.counts;
  });

  // Cells are in lexicographic order, so a strict improvement keeps ties on
  // the smallest (w_vis, w_clip) regardless of evaluation order above.
  std::size_t best = 0;
  for (std::size_t c = 1; c < counts.size(); ++c) {
    if (better(counts[c], counts[best], objective)) best = c;
  }
  result.best = result.cells[best];
  return result;
}

TypeThreshold select_type_threshold(const LabeledScoreSet& scores, const StreamWeights& omega) {
  std::vector<double> values;
  std::vector<char> is_retrieve;
  for (const auto& e : scores.entries) {
    if (e.label != Label::Retrieve && e.label != Label::Style) continue;
    values.push_back(weighted_score({e.s_vis, e.s_clip, e.s_tex}, omega));
    is_retrieve.push_back(e.label == Label::Retrieve);
  }
  double min_retrieve = INFINITY;
  double max_style = -INFINITY;
  std::size_t n_retrieve = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (is_retrieve[i]) {
      min_retrieve = std::min(min_retrieve, values[i]);
      ++n_retrieve;
    } else {
      max_style = std::max(max_style, values[i]);
    }
  }
  if (n_retrieve == 0 || n_retrieve == values.size()) {
    fail(ErrorKind::DegenerateData, "type threshold needs both retrieve and style examples");
  }
  auto admissible = [](double tau) { return tau > 0.0 && tau < 1.0; };
  if (max_style < min_retrieve && admissible(0.5 * (max_style + min_retrieve))) {
    return {0.5 * (max_style + min_retrieve), true, 1.0};
  }

  // Overlap: every distinct partition of the sorted scores is represented by
  // one candidate (midpoints, plus one below the minimum). Candidates outside
  // (0, 1) cannot be used as a decision threshold and are skipped.
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<double> candidates{0.5 * (sorted.front() + std::max(0.0, sorted.front() - 1.0))};
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
    candidates.push_back(0.5 * (sorted[i] + sorted[i + 1]));
  }
  candidates.push_back(sorted.back());
  std::erase_if(candidates, [&](double tau) { return !admissible(tau); });
  if (candidates.empty()) {
    fail(ErrorKind::DegenerateData, "no type threshold in (0, 1) splits the retrieve/style scores");
  }

  TypeThreshold best{candidates.front(), false, -1.0};
  std::size_t best_correct = 0;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      correct += (values[i] > candidates[c]) == static_cast<bool>(is_retrieve[i]);
    }
    if (c == 0 || correct > best_correct) {
      best_correct = correct;
      best.tau = candidates[c];
    }
  }
  best.clean = best_correct == values.size();
  best.accuracy = static_cast<double>(best_correct) / static_cast<double>(values.size());
  return best;
}

void emit_curves(const SweepResult& result, const std::filesystem::path& csv_path,
                 const std::optional<std::filesystem::path>& image_path) {
  if (result.grid.empty()) fail(ErrorKind::Data, "refusing to emit an empty sweep");
  std::string csv = "tau,accuracy,f1\n";
  for (const auto& p : result.grid) {
    csv += num(p.tau) + "," + num(p.accuracy) + "," + num(p.f1) + "\n";
  }
  commit(csv_path, csv);
  if (!image_path) return;

  constexpr int kW = 400;
  constexpr int kH = 300;
  constexpr int kMargin = 20;
  ImageBuffer img(kH, kW, std::vector<float>(static_cast<std::size_t>(kH) * kW * 3, 1.0f));
  for (int x = kMargin; x < kW - kMargin; ++x) plot_point(img, x, kH - kMargin, {0, 0, 0});
  for (int y = kMargin; y < kH - kMargin; ++y) plot_point(img, kMargin, y, {0, 0, 0});
  const double lo = result.grid.front().tau;
  const double span = std::max(result.grid.back().tau - lo, 1e-12);
  for (const auto& p : result.grid) {
    const int x = kMargin + static_cast<int>((p.tau - lo) / span * (kW - 2 * kMargin));
    const auto y_of = [&](double v) {
      return kH - kMargin - static_cast<int>(v * (kH - 2 * kMargin));
    };
    plot_point(img, x, y_of(p.accuracy), {0.1f, 0.3f, 0.9f});
    plot_point(img, x, y_of(p.f1), {0.9f, 0.2f, 0.1f});
  }
  save_image(img, *image_path);
}

void emit_curves(const WeightGridResult& result, const std::filesystem::path& csv_path,
                 const std::optional<std::filesystem::path>& image_path) {
  if (result.cells.empty()) fail(ErrorKind::Data, "refusing to emit an empty weight grid");
  std::string csv = "w_vis,w_clip,accuracy\n";
  for (const auto& c : result.cells) {
    csv += num(c.w[0]) + "," + num(c.w[1]) + "," + num(c.accuracy) + "\n";
  }
  commit(csv_path, csv);
  if (!image_path) return;

  // Heatmap: w_vis along x, w_clip along y (upwards); outside the simplex is white.
  double max_w = 0.0;
  double lo = 1.0;
  double hi = 0.0;
  for (const auto& c : result.cells) {
    max_w = std::max(max_w, c.w[0]);
    lo = std::min(lo, c.accuracy);
    hi = std::max(hi, c.accuracy);
  }
  double step = 1.0;
  for (const auto& c : result.cells) {
    if (c.w[1] > 0.0) step = std::min(step, c.w[1]);
  }
  const int n = static_cast<int>(std::lround(1.0 / step));
  const int cell_px = std::max(2, 400 / (n + 1));
  const int side = std::max(ImageBuffer::kMinSide, cell_px * (n + 1));
  ImageBuffer img(side, side, std::vector<float>(static_cast<std::size_t>(side) * side * 3, 1.0f));
  for (const auto& c : result.cells) {
    const int i = static_cast<int>(std::lround(c.w[0] * n));
    const int j = static_cast<int>(std::lround(c.w[1] * n));
    const auto rgb = ramp(hi > lo ? (c.accuracy - lo) / (hi - lo) : 1.0);
    for (int y = 0; y < cell_px; ++y) {
      for (int x = 0; x < cell_px; ++x) {
        const int py = side - 1 - (j * cell_px + y);
        const int px = i * cell_px + x;
        if (py < 0 || px >= side) continue;
        for (int ch = 0; ch < 3; ++ch) img.at(py, px, ch) = rgb[ch];
      }
    }
  }
  save_image(img, *image_path);
}

}  // namespace copyforge
