#include <gtest/gtest.h>

#include <chrono>
#include <fstream>
#include <random>
#include <sstream>

#include "copyforge/calibration.hpp"
#include "copyforge/error.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace cf = copyforge;

namespace {

// Copies score in [0.95, 1.0], noncopies in [0.5, 0.90].
cf::LabeledScoreSet planted(std::uint64_t seed, int per_class = 100) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> copy(0.95, 1.0);
  std::uniform_real_distribution<double> non(0.5, 0.90);
  std::uniform_real_distribution<double> any(0.0, 1.0);
  cf::LabeledScoreSet set;
  for (int i = 0; i < per_class; ++i) {
    set.entries.push_back({copy(rng), any(rng), any(rng), any(rng), cf::Label::Copy});
    set.entries.push_back({non(rng), any(rng), any(rng), any(rng), cf::Label::NonCopy});
  }
  set.entries.push_back({0.95, 0.5, 0.5, 0.5, cf::Label::Copy});
  set.entries.push_back({0.90, 0.5, 0.5, 0.5, cf::Label::NonCopy});
  return set;
}

// Only s_clip separates the labels, by a 0.002 gap; vis and tex are noise
// over [0, 1], so any weight off the clip axis mixes the classes.
cf::LabeledScoreSet clip_only(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> pos(0.9565, 0.96);
  std::uniform_real_distribution<double> neg(0.95, 0.9535);
  cf::LabeledScoreSet set;
  for (int i = 0; i < 200; ++i) {
    set.entries.push_back({0.99, noise(rng), pos(rng), noise(rng), cf::Label::Copy});
    set.entries.push_back({0.10, noise(rng), neg(rng), noise(rng), cf::Label::NonCopy});
  }
  return set;
}

std::string read(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(MakeGrid, EndpointsAndRounding) {
  const auto g = cf::make_grid(0.5, 1.0, 0.001);
  ASSERT_EQ(g.size(), 501u);
  EXPECT_EQ(g.front(), 0.5);
  EXPECT_EQ(g.back(), 1.0);
  EXPECT_EQ(g[400], 0.9);
  EXPECT_EQ(g[438], 0.938);
  EXPECT_THROW(cf::make_grid(1.0, 0.5, 0.1), cf::Error);
}

TEST(Sweep, PlantedMarginReachesFullAccuracy) {
  const auto set = planted(1);
  const auto grid = cf::make_grid(0.5, 1.0, 0.001);
  const auto r = cf::sweep_threshold(set, grid);
  EXPECT_EQ(r.best_accuracy, 1.0);
  EXPECT_EQ(r.best_f1, 1.0);
  // Strict rule S > tau: any tau in [0.90, 0.95) separates; smallest wins.
  EXPECT_GE(r.best_tau, 0.90);
  EXPECT_LT(r.best_tau, 0.95);
  EXPECT_EQ(r.best_tau, 0.90);
  EXPECT_EQ(r.grid.size(), grid.size());
}

TEST(Sweep, MatchesBruteForceRecount) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.4, 1.0);
  std::bernoulli_distribution coin(0.4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> scores(150);
    std::vector<bool> labels(150);
    std::unique_ptr<bool[]> flags(new bool[150]);
    for (int i = 0; i < 150; ++i) {
      scores[i] = std::round(u(rng) * 1000) / 1000;  // lands on grid points
      labels[i] = coin(rng);
      flags[i] = labels[i];
    }
    labels[0] = flags[0] = true;
    labels[1] = flags[1] = false;
    const auto grid = cf::make_grid(0.5, 1.0, 0.001);
    for (const auto objective : {cf::Objective::Accuracy, cf::Objective::F1}) {
      const auto r = cf::sweep_threshold(scores, std::span<const bool>(flags.get(), 150), grid,
                                         objective);
      double best = -1;
      double best_tau = 0;
      for (std::size_t i = 0; i < grid.size(); ++i) {
        const double acc = oracle::accuracy_at(scores, labels, grid[i]);
        const double f1 = oracle::f1_at(scores, labels, grid[i]);
        ASSERT_NEAR(r.grid[i].accuracy, acc, 1e-15);
        ASSERT_NEAR(r.grid[i].f1, f1, 1e-15);
        const double value = objective == cf::Objective::Accuracy ? acc : f1;
        if (value > best + 1e-15) {
          best = value;
          best_tau = grid[i];
        }
      }
      EXPECT_EQ(r.best_tau, best_tau);
    }
  }
}

TEST(Sweep, SingleLabelIsDegenerate) {
  cf::LabeledScoreSet set;
  set.entries = {{0.9, 0, 0, 0, cf::Label::Copy}, {0.95, 0, 0, 0, cf::Label::Retrieve}};
  try {
    cf::sweep_threshold(set, cf::make_grid(0.5, 1.0, 0.01));
    FAIL();
  } catch (const cf::Error& e) {
    EXPECT_EQ(e.kind(), cf::ErrorKind::DegenerateData);
  }
}

TEST(WeightGrid, StepHalfEnumeratesSixCells) {
  const auto r = cf::grid_search_weights(planted(2), 0.5, cf::make_grid(0.5, 1.0, 0.01));
  ASSERT_EQ(r.cells.size(), 6u);
  const std::vector<std::pair<double, double>> expected{
      {0, 0}, {0, 0.5}, {0, 1}, {0.5, 0}, {0.5, 0.5}, {1, 0}};
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(r.cells[i].w[0], expected[i].first);
    EXPECT_EQ(r.cells[i].w[1], expected[i].second);
    EXPECT_NEAR(r.cells[i].w[0] + r.cells[i].w[1] + r.cells[i].w[2], 1.0, 1e-12);
  }
}

TEST(WeightGrid, StepMustDivideOne) {
  EXPECT_THROW(cf::grid_search_weights(planted(2), 0.3, cf::make_grid(0.5, 1.0, 0.01)),
               cf::Error);
}

TEST(WeightGrid, ClipOnlySetPicksFullClipWeight) {
  const auto set = clip_only(3);
  const auto grid = cf::make_grid(0.5, 1.0, 0.001);
  const auto start = std::chrono::steady_clock::now();
  const auto r = cf::grid_search_weights(set, 0.02, grid);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(secs, 10.0);
  EXPECT_EQ(r.cells.size(), 1326u);
  EXPECT_EQ(r.best.accuracy, 1.0);
  EXPECT_EQ(r.best.w[1], 1.0);
  std::size_t perfect = 0;
  for (const auto& c : r.cells) perfect += c.accuracy == 1.0;
  EXPECT_EQ(perfect, 1u);
}

TEST(WeightGrid, MatchesExhaustiveOracleOnCoarseGrid) {
  const auto set = planted(4, 40);
  const auto grid = cf::make_grid(0.5, 1.0, 0.01);
  const auto r = cf::grid_search_weights(set, 0.1, grid, cf::Objective::Accuracy, 2);
  std::vector<bool> labels;
  for (const auto& e : set.entries) labels.push_back(cf::is_positive(e.label));
  double best_acc = -1;
  std::pair<double, double> best_w{};
  for (const auto& cell : r.cells) {
    std::vector<double> weighted;
    for (const auto& e : set.entries) {
      weighted.push_back(cell.w[0] * e.s_vis + cell.w[1] * e.s_clip + cell.w[2] * e.s_tex);
    }
    double acc = -1;
    for (double tau : grid) acc = std::max(acc, oracle::accuracy_at(weighted, labels, tau));
    EXPECT_NEAR(cell.accuracy, acc, 1e-15);
    if (acc > best_acc + 1e-15) {
      best_acc = acc;
      best_w = {cell.w[0], cell.w[1]};
    }
  }
  EXPECT_EQ(r.best.w[0], best_w.first);
  EXPECT_EQ(r.best.w[1], best_w.second);
}

TEST(WeightGrid, WorkerCountDoesNotChangeResult) {
  const auto set = planted(6, 30);
  const auto grid = cf::make_grid(0.5, 1.0, 0.005);
  const auto a = cf::grid_search_weights(set, 0.05, grid, cf::Objective::F1, 1);
  const auto b = cf::grid_search_weights(set, 0.05, grid, cf::Objective::F1, 4);
  ASSERT_EQ(a.cells.size(), b.cells.size());
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    EXPECT_EQ(a.cells[i].tau, b.cells[i].tau);
    EXPECT_EQ(a.cells[i].f1, b.cells[i].f1);
  }
  EXPECT_EQ(a.best.w, b.best.w);
}

TEST(TypeThreshold, CleanMidpoint) {
  cf::LabeledScoreSet set;
  for (double s : {0.98, 0.99}) set.entries.push_back({0.99, s, s, s, cf::Label::Retrieve});
  for (double s : {0.94, 0.96}) set.entries.push_back({0.99, s, s, s, cf::Label::Style});
  set.entries.push_back({0.1, 0.1, 0.1, 0.1, cf::Label::NonCopy});
  const auto t = cf::select_type_threshold(set, {0.24, 0.38, 0.38});
  EXPECT_TRUE(t.clean);
  EXPECT_NEAR(t.tau, 0.970, 1e-12);
  EXPECT_EQ(t.accuracy, 1.0);
}

TEST(TypeThreshold, OverlapUsesBestCandidate) {
  cf::LabeledScoreSet set;
  const std::vector<double> retrieve{0.90, 0.97, 0.98, 0.99};
  const std::vector<double> style{0.93, 0.94, 0.95, 0.975};
  for (double s : retrieve) set.entries.push_back({1, s, s, s, cf::Label::Retrieve});
  for (double s : style) set.entries.push_back({1, s, s, s, cf::Label::Style});
  const auto t = cf::select_type_threshold(set, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  EXPECT_FALSE(t.clean);
  // Brute force over all candidate cut points.
  std::vector<double> all = retrieve;
  all.insert(all.end(), style.begin(), style.end());
  std::vector<bool> is_r(retrieve.size(), true);
  is_r.resize(all.size(), false);
  double best = 0;
  for (double tau = 0.85; tau <= 1.0; tau += 0.0005) {
    best = std::max(best, oracle::accuracy_at(all, is_r, tau));
  }
  EXPECT_NEAR(t.accuracy, best, 1e-12);
  EXPECT_NEAR(oracle::accuracy_at(all, is_r, t.tau), best, 1e-12);
}

TEST(TypeThreshold, StaysInsideUnitInterval) {
  cf::LabeledScoreSet set;
  set.entries.push_back({1, 1, 1, 1, cf::Label::Retrieve});
  set.entries.push_back({1, 1, 1, 1, cf::Label::Style});
  const auto tied = cf::select_type_threshold(set, {0.24, 0.38, 0.38});
  EXPECT_GT(tied.tau, 0.0);
  EXPECT_LT(tied.tau, 1.0);
  EXPECT_FALSE(tied.clean);
  EXPECT_EQ(tied.accuracy, 0.5);

  cf::LabeledScoreSet nonpositive;
  nonpositive.entries.push_back({1, 0, 0, 0, cf::Label::Retrieve});
  nonpositive.entries.push_back({1, -0.2, -0.2, -0.2, cf::Label::Style});
  try {
    cf::select_type_threshold(nonpositive, {0.24, 0.38, 0.38});
    cf::select_type_threshold(set, {0.24, 0.38, 0.38});
    FAIL();
  } catch (const cf::Error& e) {
    EXPECT_EQ(e.kind(), cf::ErrorKind::DegenerateData);
  }
  set.entries.push_back({1, 0.5, 0.5, 0.5, cf::Label::Style});
  const auto t = cf::select_type_threshold(set, {0.24, 0.38, 0.38});
  EXPECT_GT(t.tau, 0.0);
  EXPECT_LT(t.tau, 1.0);
  EXPECT_NEAR(t.tau, 0.75, 1e-12);
}

TEST(TypeThreshold, NeedsBothClasses) {
  cf::LabeledScoreSet set;
  set.entries.push_back({1, 0.9, 0.9, 0.9, cf::Label::Retrieve});
  EXPECT_THROW(cf::select_type_threshold(set, {0.24, 0.38, 0.38}), cf::Error);
}

TEST(ScoreJsonl, ParsesAndNamesBadLine) {
  std::istringstream good(
      "{\"s_fus\":0.9,\"s_vis\":0.8,\"s_clip\":0.7,\"s_tex\":0.6,\"label\":\"style\"}\n\n"
      "{\"s_fus\":0.1,\"s_vis\":0.2,\"s_clip\":0.3,\"s_tex\":0.4,\"label\":\"noncopy\"}\n");
  const auto set = cf::LabeledScoreSet::from_jsonl(good);
  ASSERT_EQ(set.entries.size(), 2u);
  EXPECT_EQ(set.entries[0].label, cf::Label::Style);
  std::istringstream bad("{\"s_fus\":0.9,\"s_vis\":0.8,\"s_clip\":0.7,\"s_tex\":0.6,"
                         "\"label\":\"style\"}\n{\"s_fus\":0.9}\n");
  try {
    cf::LabeledScoreSet::from_jsonl(bad);
    FAIL();
  } catch (const cf::Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  std::istringstream range("{\"s_fus\":1.5,\"s_vis\":0,\"s_clip\":0,\"s_tex\":0,"
                           "\"label\":\"copy\"}\n");
  EXPECT_THROW(cf::LabeledScoreSet::from_jsonl(range), cf::Error);
}

TEST(EmitCurves, CsvHeadersRowsAndPlots) {
  testing_support::TempDir dir;
  const auto set = planted(7, 20);
  const auto grid = cf::make_grid(0.5, 1.0, 0.1);
  const auto sweep = cf::sweep_threshold(set, grid);
  cf::emit_curves(sweep, dir / "sweep.csv", dir / "sweep.ppm");
  const auto text = read(dir / "sweep.csv");
  EXPECT_EQ(text.substr(0, text.find('\n')), "tau,accuracy,f1");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1 + static_cast<long>(grid.size()));
  EXPECT_NO_THROW(cf::load_image(dir / "sweep.ppm"));

  const auto weights = cf::grid_search_weights(set, 0.5, grid);
  cf::emit_curves(weights, dir / "weights.csv", dir / "weights.ppm");
  const auto wtext = read(dir / "weights.csv");
  EXPECT_EQ(wtext.substr(0, wtext.find('\n')), "w_vis,w_clip,accuracy");
  EXPECT_EQ(std::count(wtext.begin(), wtext.end(), '\n'), 7);
  EXPECT_NO_THROW(cf::load_image(dir / "weights.ppm"));

  EXPECT_THROW(cf::emit_curves(cf::SweepResult{}, dir / "empty.csv"), cf::Error);
  EXPECT_FALSE(std::filesystem::exists(dir / "empty.csv"));
}
