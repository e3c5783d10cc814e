// Drives the command-line tool as a subprocess.
#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

namespace fs = std::filesystem;

namespace {

std::string read(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Smooth binary PPM so the synthetic embedder sees structure.
void write_ppm(const fs::path& p, int side, double phase) {
  std::ofstream out(p, std::ios::binary);
  out << "P6\n" << side << " " << side << "\n255\n";
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = 0.5 + 0.45 * std::sin(0.21 * x * (1 + phase) + 0.13 * y + phase * 3 + c);
        out.put(static_cast<char>(std::lround(v * 255)));
      }
    }
  }
}

class Cli : public ::testing::Test {
 protected:
  static fs::path root;

  static void SetUpTestSuite() {
    root = fs::temp_directory_path() / ("copyforge-cli-" + std::to_string(std::random_device{}()));
    fs::create_directories(root / "gallery");
    write_ppm(root / "a.ppm", 48, 0.1);
    write_ppm(root / "b.ppm", 48, 0.7);
    for (int i = 0; i < 4; ++i) write_ppm(root / "gallery" / ("g" + std::to_string(i) + ".ppm"), 40, 0.2 * i);
    std::ofstream(root / "config.json")
        << R"({"backend": {"dim": 64}, "fusion": {"d_model": 64}, "calibration": {"tau_step": 0.01, "weight_step": 0.1}})";
    std::ofstream(root / "other.json") << R"({"backend": {"dim": 64}, "fusion": {"d_model": 64, "seed": 9}})";
    std::ofstream(root / "pairs.jsonl")
        << "{\"query\":\"a.ppm\",\"reference\":\"a.ppm\",\"label\":\"retrieve\"}\n"
           "{\"query\":\"a.ppm\",\"reference\":\"b.ppm\",\"label\":\"noncopy\"}\n"
           "{\"query\":\"b.ppm\",\"reference\":\"b.ppm\",\"label\":\"style\"}\n";
    std::ofstream(root / "dets.json")
        << R"([{"box": [2, 2, 20, 20], "label": "dog", "confidence": 0.9},
               {"box": [26, 26, 46, 46], "label": "ball", "confidence": 0.8}])";
    std::ofstream(root / "templates.txt") << "<p>, with a <c> in the <pos>\n<p>, featuring <c> and <c'>\n";
    std::ofstream(root / "bad_templates.txt") << "<p>, with a <c> in the <pos>\n<p> and <colour>\n";
  }

  static void TearDownTestSuite() { fs::remove_all(root); }

  // Runs the tool with `args`; stdout and stderr go to files under `tag`.
  static int run(const std::string& args, const std::string& tag) {
    const fs::path log = root / "logs";
    fs::create_directories(log);
    const std::string cmd = std::string("\"") + COPYFORGE_CLI + "\" --config \"" +
                            (root / "config.json").string() + "\" " + args + " >\"" +
                            (log / (tag + ".out")).string() + "\" 2>\"" +
                            (log / (tag + ".err")).string() + "\"";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  static std::string err(const std::string& tag) { return read(root / "logs" / (tag + ".err")); }
  static std::string out(const std::string& tag) { return read(root / "logs" / (tag + ".out")); }

  static std::string p(const std::string& rel) { return "\"" + (root / rel).string() + "\""; }

  // Runs the command twice into separate output directories and requires
  // identical file sets with identical bytes.
  static void expect_reproducible(const std::string& name, const std::string& args) {
    for (const char* run_id : {"1", "2"}) {
      const std::string dir = name + "_" + run_id;
      ASSERT_EQ(run("--seed 5 --out " + p(dir) + " " + args, dir), 0) << err(dir);
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(root / (name + "_1"))) {
      if (e.is_regular_file()) files.push_back(fs::relative(e.path(), root / (name + "_1")));
    }
    ASSERT_FALSE(files.empty());
    for (const auto& f : files) {
      const auto a = read(root / (name + "_1") / f);
      const auto b = read(root / (name + "_2") / f);
      EXPECT_EQ(a, b) << name << ": " << f;
      EXPECT_FALSE(a.empty()) << name << ": " << f;
    }
  }
};

fs::path Cli::root;

}  // namespace

TEST_F(Cli, DetectPairIsReproducible) {
  expect_reproducible("detect", "detect --query " + p("a.ppm") + " --reference " + p("a.ppm"));
  const auto verdict = read(root / "detect_1" / "verdicts.jsonl");
  EXPECT_NE(verdict.find("\"copy_type\":\"retrieve\""), std::string::npos) << verdict;
}

TEST_F(Cli, DetectManifestIsReproducible) {
  expect_reproducible("detect_manifest", "detect --manifest " + p("pairs.jsonl"));
  const auto lines = read(root / "detect_manifest_1" / "verdicts.jsonl");
  EXPECT_EQ(std::count(lines.begin(), lines.end(), '\n'), 3);
}

TEST_F(Cli, CalibrateIsReproducible) {
  expect_reproducible("calibrate", "calibrate --manifest " + p("pairs.jsonl") + " --render");
  EXPECT_TRUE(fs::exists(root / "calibrate_1" / "calibration.json"));
  EXPECT_TRUE(fs::exists(root / "calibrate_1" / "sweep.ppm"));
}

TEST_F(Cli, IndexAndRetrieveAreReproducible) {
  for (const char* id : {"1", "2"}) {
    const std::string tag = std::string("index_") + id;
    ASSERT_EQ(run("index --images " + p("gallery") + " --index " + p(tag), tag), 0) << err(tag);
  }
  for (const char* f : {"index.json", "embeddings.bin"}) {
    EXPECT_EQ(read(root / "index_1" / f), read(root / "index_2" / f)) << f;
  }
  expect_reproducible("retrieve", "retrieve --index " + p("index_1") + " --query " +
                                      p("gallery/g2.ppm") + " --query " + p("b.ppm") + " -k 3");
  const auto csv = read(root / "retrieve_1" / "retrieval.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "query,rank,id,s_fus");
  EXPECT_NE(csv.find(",1,g2,"), std::string::npos) << csv;
}

TEST_F(Cli, RobustnessIsReproducible) {
  expect_reproducible("robustness", "robustness --query " + p("a.ppm") + " --reference " +
                                        p("a.ppm") + " --side reference");
  const auto csv = read(root / "robustness_1" / "robustness.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 12);
}

TEST_F(Cli, AugmentIsReproducible) {
  expect_reproducible("augment", "augment --image " + p("a.ppm") + " --prompt \"a park\" --detections " +
                                     p("dets.json") + " --templates " + p("templates.txt"));
}

TEST_F(Cli, PerturbIsReproducible) {
  expect_reproducible("perturb", "perturb --image " + p("a.ppm") + " --attack all --format ppm");
  int count = 0;
  for (const auto& e : fs::directory_iterator(root / "perturb_1")) count += e.path().extension() == ".ppm";
  EXPECT_EQ(count, 10);
  EXPECT_TRUE(fs::exists(root / "perturb_1" / "crop20%.ppm"));
}

TEST_F(Cli, SeedChangesStochasticOutput) {
  ASSERT_EQ(run("--seed 1 --out " + p("seed_a") + " perturb --image " + p("a.ppm") +
                    " --attack gaussian_noise --format ppm",
                "seed_a"),
            0);
  ASSERT_EQ(run("--seed 2 --out " + p("seed_b") + " perturb --image " + p("a.ppm") +
                    " --attack gaussian_noise --format ppm",
                "seed_b"),
            0);
  EXPECT_NE(read(root / "seed_a" / "gaussian_noise.ppm"), read(root / "seed_b" / "gaussian_noise.ppm"));
}

TEST_F(Cli, StdoutWhenNoOutDirectory) {
  ASSERT_EQ(run("detect --query " + p("a.ppm") + " --reference " + p("b.ppm"), "stdout"), 0);
  EXPECT_NE(out("stdout").find("\"s_fus\""), std::string::npos);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("detect --query " + p("missing.ppm") + " --reference " + p("a.ppm"), "missing"), 2);
  EXPECT_NE(err("missing").find("missing.ppm"), std::string::npos);
  EXPECT_EQ(run("detect --bogus", "bogus"), 1);
  EXPECT_EQ(run("--workers 0 detect --query " + p("a.ppm") + " --reference " + p("a.ppm"), "workers"), 1);
  EXPECT_EQ(run("augment --image " + p("a.ppm") + " --prompt x --templates " + p("bad_templates.txt"),
                "template"),
            1);
  EXPECT_NE(err("template").find("line 2"), std::string::npos) << err("template");
}

TEST_F(Cli, StaleIndexAsksForRebuild) {
  ASSERT_EQ(run("index --images " + p("gallery") + " --index " + p("stale_index"), "stale_build"), 0);
  const std::string cmd = std::string("\"") + COPYFORGE_CLI + "\" --config " + p("other.json") +
                          " retrieve --index " + p("stale_index") + " --query " + p("a.ppm") +
                          " >/dev/null 2>" + p("logs/stale.err");
  const int status = std::system(cmd.c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 2);
  EXPECT_NE(err("stale").find("rebuild"), std::string::npos) << err("stale");
}
