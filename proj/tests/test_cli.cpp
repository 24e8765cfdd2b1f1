#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace {

namespace fs = std::filesystem;

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("cral-cli-" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(const std::string& args) {
    const std::string cmd = std::string(CRAL_BIN) + " " + args + " >" + (dir_ / "out.txt").string() +
                            " 2>" + (dir_ / "err.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string slurp(const std::string& name) {
    std::ifstream in(dir_ / name);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

const char* kTiny = " --char-embed 4 --char-hidden 3 --modeling-hidden 4 --token-hidden 5 --char-buckets 32";

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("simulate --pool nowhere.conllu"), 2);
  EXPECT_EQ(run("synth --out " + path("a.conllu") + " --variant 9"), 2);
}

TEST_F(Cli, HelpExitsZero) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_NE(slurp("out.txt").find("simulate"), std::string::npos);
}

TEST_F(Cli, EndToEndPretrainSimulateReport) {
  ASSERT_EQ(run("synth --out " + path("src.conllu") + " --variant 1 --sentences 20 --seed 1"), 0);
  ASSERT_EQ(run("synth --out " + path("dev.conllu") + " --variant 1 --sentences 5 --seed 2"), 0);
  ASSERT_EQ(run("synth --out " + path("pool.conllu") + " --sentences 20 --seed 3 --prefix p"), 0);
  ASSERT_EQ(run("synth --out " + path("test.conllu") + " --sentences 5 --seed 4 --prefix t"), 0);
  ASSERT_EQ(run("pretrain --train " + path("src.conllu") + " --langs src --dev " + path("dev.conllu") +
                " --out " + path("model.ckpt") + " --epochs 1 --cvt off" + kTiny),
            0)
      << slurp("err.txt");
  EXPECT_TRUE(fs::exists(path("model.ckpt.json")));

  const std::string sim = "simulate --pool " + path("pool.conllu") + " --test " + path("test.conllu") +
                          " --model " + path("model.ckpt") + " --iterations 1 --batch 3 --ft-epochs 1";
  EXPECT_EQ(run(sim + " --report " + path("r.json")), 2) << "missing --seed must be a usage error";
  ASSERT_EQ(run(sim + " --seed 1 --strategy cral --report " + path("a.json")), 0) << slurp("err.txt");
  ASSERT_EQ(run(sim + " --seed 1 --strategy rand --report " + path("b.json")), 0);
  const auto report = nlohmann::json::parse(slurp("a.json"));
  EXPECT_EQ(report.at("iterations").size(), 2u);
  EXPECT_EQ(report.at("config").at("flags").at("seed"), "1");

  EXPECT_EQ(run("report --in " + path("a.json") + "," + path("b.json") + " --metrics accuracy,wd --csv " +
                path("cmp.csv")),
            0);
  EXPECT_NE(slurp("cmp.csv").find("mean"), std::string::npos);
  EXPECT_TRUE(fs::exists(path("cmp.csv.json")));
  EXPECT_EQ(run("report --in " + path("a.json") + " --metrics nonsense"), 2);
  EXPECT_NE(slurp("err.txt").find("accuracy"), std::string::npos);

  EXPECT_EQ(run(sim + " --seed 1 --strategy cral --dev " + path("missing.conllu")), 2);
}

TEST_F(Cli, RuntimeFailureExitsOne) {
  std::ofstream(path("bad.conllu")) << "1\tonly\tthree\n";
  std::ofstream(path("model.ckpt")) << "not a checkpoint";
  EXPECT_EQ(run("simulate --pool " + path("bad.conllu") + " --test " + path("bad.conllu") + " --model " +
                path("model.ckpt") + " --seed 1 --report " + path("r.json")),
            1);
  EXPECT_NE(slurp("err.txt").find("line 1"), std::string::npos);
}

TEST_F(Cli, ConfigFileSuppliesMissingFlags) {
  std::ofstream(path("cfg.json")) << R"({"synth": {"sentences": 3, "prefix": "cfg"}})";
  ASSERT_EQ(run("synth --out " + path("c.conllu") + " --config " + path("cfg.json")), 0) << slurp("err.txt");
  const std::string text = slurp("c.conllu");
  EXPECT_NE(text.find("cfg-"), std::string::npos);
  std::size_t n = 0;
  for (std::size_t p = text.find("# sent_id"); p != std::string::npos; p = text.find("# sent_id", p + 1)) ++n;
  EXPECT_EQ(n, 3u);
}

}  // namespace
