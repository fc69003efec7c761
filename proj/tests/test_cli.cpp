#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

const fs::path kTmp = fs::temp_directory_path() / "smlab_cli_test";

int run(const std::string& args, std::string* out = nullptr) {
  const fs::path capture = kTmp / "stdout.txt";
  const std::string cmd = std::string(SMLAB_CLI) + " " + args + " > " + capture.string() + " 2> " +
                          (kTmp / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  if (out) {
    std::ifstream in(capture);
    out->assign(std::istreambuf_iterator<char>(in), {});
  }
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string write_tiny(const std::string& env = "noisy_tv") {
  const fs::path p = kTmp / ("tiny_" + env + ".cfg");
  std::ofstream(p) << "env.name = " << env
                   << "\nenv.grid_size = 7\nppo.actors = 2\nppo.horizon = 32\nppo.hidden = 32\n"
                      "ppo.minibatch = 16\nppo.epochs = 2\nsg.n = 8\nsg.hidden = 16\nsm.n_slots = 16\n"
                      "sm.slot_dim = 4\nrun.total_steps = 128\n";
  return p.string();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    fs::remove_all(kTmp);
    fs::create_directories(kTmp);
  }
  void TearDown() override { fs::remove_all(kTmp); }
};

}  // namespace

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("fly"), 2);
  EXPECT_EQ(run("train --bogus-flag"), 2);
  std::ofstream(kTmp / "bad.cfg") << "env.colour = red\n";
  EXPECT_EQ(run("train --config " + (kTmp / "bad.cfg").string()), 2);
  EXPECT_EQ(run("train --config " + write_tiny() + " --set ppo.epochs=zero"), 2);
  EXPECT_EQ(run("verify nonsense"), 2);
  EXPECT_EQ(run("train --config " + (kTmp / "missing.cfg").string()), 2);
}

TEST_F(Cli, HelpExitsZero) { EXPECT_EQ(run("--help"), 0); }

TEST_F(Cli, TinyTrainProducesMetricsAndCheckpoint) {
  const fs::path out = kTmp / "run";
  std::string stdout_text;
  ASSERT_EQ(run("train --quiet --config " + write_tiny("key_door") + " --out " + out.string(), &stdout_text), 0);
  const auto summary = nlohmann::json::parse(stdout_text);
  EXPECT_EQ(summary.at("global_step").get<int>(), 128);
  std::ifstream m(out / "metrics.jsonl");
  std::string line;
  int records = 0;
  while (std::getline(m, line)) {
    EXPECT_TRUE(nlohmann::json::accept(line));
    ++records;
  }
  EXPECT_GE(records, 2);
  const std::string ck = (out / "final.json").string();
  ASSERT_TRUE(fs::exists(ck));

  ASSERT_EQ(run("eval --checkpoint " + ck + " --episodes 2", &stdout_text), 0);
  EXPECT_EQ(nlohmann::json::parse(stdout_text).at("episodes").get<int>(), 2);

  const std::string csv = (kTmp / "map.csv").string();
  ASSERT_EQ(run("mnir-map --checkpoint " + ck + " --csv " + csv), 0);
  std::ifstream c(csv);
  std::getline(c, line);
  EXPECT_EQ(line, "cell,x,y,mnir,kind,r_i");

  ASSERT_EQ(run("probe-repeat --checkpoint " + ck + " --probes 3", &stdout_text), 0);
  EXPECT_EQ(nlohmann::json::parse(stdout_text).at("probes").get<int>(), 3);

  // A config for another environment is refused.
  EXPECT_EQ(run("mnir-map --checkpoint " + ck + " --config " + write_tiny("noisy_tv")), 2);
  EXPECT_EQ(run("eval --checkpoint " + (kTmp / "nope.json").string()), 1);
}

TEST_F(Cli, AblateWritesSummary) {
  const fs::path out = kTmp / "abl";
  std::string text;
  ASSERT_EQ(run("ablate --quiet --config " + write_tiny() + " --out " + out.string() +
                    " --modes full,no_m --sweep 8-2 --seeds 0,1 --steps 64",
                &text),
            0);
  const auto j = nlohmann::json::parse(std::ifstream(out / "ablation.json"));
  ASSERT_EQ(j.size(), 3u);
  EXPECT_EQ(j[2].at("n_slots").get<int>(), 8);
  EXPECT_EQ(j[0].at("seeds").size(), 2u);
  EXPECT_EQ(text.rfind("variant,mode,N,d,seeds", 0), 0u);
}

TEST_F(Cli, NumericBlowupExitsThree) {
  EXPECT_EQ(run("train --quiet --config " + write_tiny() + " --out " + (kTmp / "nan").string() +
                " --set sg.lr=1e300 --set ppo.lr=1e300 --steps 640"),
            3);
}

TEST_F(Cli, VerifyRunsOneCheck) {
  std::string text;
  EXPECT_EQ(run("verify memory", &text), 0);
  const auto j = nlohmann::json::parse(text);
  EXPECT_EQ(j.at("name"), "memory");
  EXPECT_TRUE(j.at("pass").get<bool>());
}
