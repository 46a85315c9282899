#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "histonorm/json_io.hpp"

namespace fs = std::filesystem;
using histonorm::Json;

namespace {

struct RunResult {
  int code;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  fs::path root;

  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    root = fs::temp_directory_path() / (std::string("histonorm_cli_") + info->name());
    fs::remove_all(root);
    fs::create_directories(root);
  }
  void TearDown() override { fs::remove_all(root); }

  RunResult run(const std::string& args) {
    const fs::path err = root / "stderr.txt";
    const std::string cmd = std::string(HISTONORM_CLI) + " " + args + " > " + (root / "stdout.txt").string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
  }

  static Json error_record(const RunResult& r) {
    const auto line = r.err.substr(r.err.find('{'));
    return Json::parse(line.substr(0, line.find('\n')));
  }

  fs::path synth(const std::string& name, const std::string& extra) {
    const fs::path dir = root / name;
    const RunResult r = run("synth --out " + dir.string() + " " + extra);
    EXPECT_EQ(r.code, 0) << r.err;
    return dir;
  }

  static std::size_t csv_rows(const fs::path& p) {
    std::istringstream in(slurp(p));
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line))
      if (!line.empty()) ++n;
    return n - 1;
  }
};

std::map<std::string, std::string> tree_bytes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "run_manifest.json")
      out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return out;
}

TEST_F(Cli, NoSubcommandIsUsageError) {
  const RunResult r = run("");
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(error_record(r)["error"]["exit_code"], 2);
}

TEST_F(Cli, UnknownSubcommandAndFlagAreUsageErrors) {
  EXPECT_EQ(run("train-everything").code, 2);
  EXPECT_EQ(run("synth --out x --bogus 3").code, 2);
}

TEST_F(Cli, MissingOutIsUsageError) {
  const RunResult r = run("synth");
  EXPECT_EQ(r.code, 2);
  const Json e = error_record(r)["error"];
  EXPECT_EQ(e["command"], "synth");
  EXPECT_EQ(e["kind"], "usage");
  EXPECT_NE(e["message"].get<std::string>().find("--out"), std::string::npos);
}

TEST_F(Cli, UnknownConfigKeyIsRejected) {
  histonorm::write_text(root / "cfg.json", R"({"out": "x", "tripplets": 5})");
  const RunResult r = run("synth --config " + (root / "cfg.json").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(error_record(r)["error"]["message"].get<std::string>().find("tripplets"), std::string::npos);
}

TEST_F(Cli, MalformedConfigAndFlagValuesAreUsageErrors) {
  histonorm::write_text(root / "bad.json", "{\"out\": ");
  EXPECT_EQ(run("synth --config " + (root / "bad.json").string()).code, 2);
  EXPECT_EQ(run("synth --config " + (root / "missing.json").string()).code, 2);
  EXPECT_EQ(run("synth --out " + (root / "o").string() + " --triplets many").code, 2);
  EXPECT_EQ(run("synth --out " + (root / "o").string() + " --triplets 2.5").code, 2);
  histonorm::write_text(root / "typed.json", R"({"out": "x", "width": "wide"})");
  EXPECT_EQ(run("synth --config " + (root / "typed.json").string()).code, 2);
}

TEST_F(Cli, MissingInputPathIsUsageError) {
  const RunResult r = run("train-mcae --out " + (root / "m").string() + " --data " + (root / "nowhere").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(error_record(r)["error"]["command"], "train-mcae");
}

TEST_F(Cli, CorruptImageIsRuntimeError) {
  const fs::path data = synth("data", "--triplets 4 --width 16 --height 16 --seed 1");
  const Json manifest = histonorm::load_json(data / "manifest.json");
  const fs::path img = data / manifest["triplets"][0]["paths"]["A"].get<std::string>();
  const std::string bytes = slurp(img);
  histonorm::write_text(img, bytes.substr(0, bytes.size() / 2));
  const RunResult r = run("train-mcae --out " + (root / "m").string() + " --data " + data.string() + " --epochs 1");
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(error_record(r)["error"]["exit_code"], 1);
}

TEST_F(Cli, SynthTwiceIsByteIdentical) {
  const fs::path a = synth("a", "--triplets 100 --seed 7");
  const fs::path b = synth("b", "--triplets 100 --seed 7");
  const auto ta = tree_bytes(a), tb = tree_bytes(b);
  EXPECT_EQ(ta.size(), 301u);
  EXPECT_TRUE(ta == tb);
  const fs::path c = synth("c", "--triplets 100 --seed 8");
  EXPECT_FALSE(ta == tree_bytes(c));
}

TEST_F(Cli, ManifestEchoesConfigAndFlagsWin) {
  histonorm::write_text(root / "cfg.json", R"({"triplets": 9, "width": 16, "height": 16, "seed": 3})");
  const fs::path out = root / "s";
  ASSERT_EQ(run("synth --config " + (root / "cfg.json").string() + " --triplets 2 --out " + out.string()).code, 0);
  const Json m = histonorm::load_json(out / "run_manifest.json");
  EXPECT_EQ(m["command"], "synth");
  EXPECT_EQ(m["seed"], 3);
  EXPECT_EQ(m["config"]["triplets"], 2);
  EXPECT_EQ(m["config"]["width"], 16);
  EXPECT_GE(m["duration_s"].get<double>(), 0.0);
  EXPECT_EQ(m["outputs"].size(), 7u);
  for (const auto& p : m["outputs"]) EXPECT_TRUE(fs::exists(p.get<std::string>())) << p;
}

TEST_F(Cli, GradCheckReportsEveryLayerBelowTolerance) {
  const fs::path out = root / "g";
  const RunResult r = run("grad-check --out " + out.string() + " --seed 1");
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(slurp(out / "gradcheck.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "check,max_relative_error,max_absolute_error,checked,passed");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(line.substr(line.rfind(',') + 1), "true") << line;
    const auto first = line.find(',');
    EXPECT_LT(std::stod(line.substr(first + 1, line.find(',', first + 1) - first - 1)), 1e-4) << line;
  }
  EXPECT_EQ(rows, 15u);
}

TEST_F(Cli, EvalNfmseOnUntrainedModelsEmitsOneRowPerTripletPerPair) {
  const fs::path data = synth("data", "--triplets 10 --width 16 --height 16 --seed 2");
  const fs::path m = root / "m", s = root / "s", e = root / "e";
  ASSERT_EQ(run("train-mcae --out " + m.string() + " --data " + data.string() + " --epochs 0 --stride 8").code, 0);
  ASSERT_EQ(run("train-stanosa --out " + s.string() + " --data " + data.string() + " --epochs 0 --stride 8").code, 0);
  const RunResult r = run("eval-nfmse --out " + e.string() + " --data " + data.string() + " --mcae " +
                          (m / "mcae.json").string() + " --stanosa " + (s / "stanosa.json").string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(csv_rows(e / "nfmse_mcae.csv"), 2u * 3u);
  EXPECT_EQ(csv_rows(e / "nfmse_stanosa.csv"), 2u * 3u);
  EXPECT_EQ(slurp(e / "nfmse_mcae.csv").substr(0, 22), "triplet_id,pair,value\n");
  EXPECT_EQ(histonorm::load_json(e / "nfmse_summary.json")["triplets"], 2);
}

TEST_F(Cli, EvalNfmseNeedsAModel) {
  const fs::path data = synth("data", "--triplets 4 --width 16 --height 16");
  EXPECT_EQ(run("eval-nfmse --out " + (root / "e").string() + " --data " + data.string()).code, 2);
}

TEST_F(Cli, EvalHsdWritesScatterAndSsimTables) {
  const fs::path data = synth("data", "--triplets 3 --width 16 --height 16");
  const fs::path out = root / "h";
  ASSERT_EQ(run("eval-hsd --out " + out.string() + " --data " + data.string() + " --n-pixels 200").code, 0);
  EXPECT_EQ(csv_rows(out / "ssim.csv"), 3u);
  const Json summary = histonorm::load_json(out / "hsd_summary.json");
  EXPECT_EQ(summary["requested"], 200);
  EXPECT_EQ(csv_rows(out / "cxcy.csv"), summary["sampled"].get<std::size_t>());
}

TEST_F(Cli, ClassifierPipelineRuns) {
  const fs::path tri = synth("tri", "--triplets 6 --width 16 --height 16");
  const fs::path lab = synth("lab", "--kind labeled --per-class 8 --width 16 --height 16");
  const fs::path m = root / "m", h = root / "h", e = root / "e";
  ASSERT_EQ(run("train-mcae --out " + m.string() + " --data " + tri.string() + " --epochs 1 --stride 8").code, 0);
  const RunResult tr = run("train-clf --out " + h.string() + " --data " + lab.string() + " --model " +
                           (m / "mcae.json").string() + " --epochs 2 --hidden 8");
  ASSERT_EQ(tr.code, 0) << tr.err;
  EXPECT_EQ(csv_rows(h / "clf_log.csv"), 2u);
  const RunResult ev = run("eval-clf --out " + e.string() + " --data " + lab.string() + " --model " +
                           (m / "mcae.json").string() + " --head " + (h / "head.json").string());
  ASSERT_EQ(ev.code, 0) << ev.err;
  const Json summary = histonorm::load_json(e / "classification_summary.json");
  EXPECT_GE(summary["accuracy"].get<double>(), 0.0);
  EXPECT_EQ(slurp(e / "classification_report.csv").substr(0, 34), "class,precision,recall,f1,support\n");
  EXPECT_EQ(run("train-clf --out " + h.string() + " --data " + lab.string() + " --model " +
                (m / "mcae.json").string() + " --pooling median")
                .code,
            2);
}

TEST_F(Cli, CycleGanToyIsReproducible) {
  const fs::path a = root / "a", b = root / "b";
  ASSERT_EQ(run("train-cyclegan-toy --out " + a.string() + " --epochs 3 --samples 32 --seed 4").code, 0);
  ASSERT_EQ(run("train-cyclegan-toy --out " + b.string() + " --epochs 3 --samples 32 --seed 4").code, 0);
  EXPECT_TRUE(tree_bytes(a) == tree_bytes(b));
  EXPECT_EQ(csv_rows(a / "cyclegan_history.csv"), 3u * 2u);
}

}  // namespace
