#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <set>
#include <string>

#include "dag/io.hpp"
#include "../support/temp_dir.hpp"

namespace {

using dag::testing::TempDir;

const std::string kConfigs = DAG_CONFIG_DIR;

int dagctl(const std::string& args) {
  const std::string cmd = std::string(DAGCTL_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::set<std::string> files_in(const std::filesystem::path& dir) {
  std::set<std::string> names;
  for (const auto& e : std::filesystem::directory_iterator(dir)) names.insert(e.path().filename().string());
  return names;
}

TEST(Cli, GuideWritesArtifacts) {
  TempDir dir;
  ASSERT_EQ(dagctl("guide --config " + kConfigs + "/minimal.json --steps 10 --out " + dir.path().string()), 0);
  EXPECT_EQ(files_in(dir.path()), (std::set<std::string>{"final.png", "baseline.png", "metrics.json", "steps.json"}));
}

TEST(Cli, SampleAndEval) {
  TempDir dir;
  const std::string common = "--config " + kConfigs + "/minimal.json --steps 10 --out " + dir.path().string();
  ASSERT_EQ(dagctl("sample " + common), 0);
  EXPECT_EQ(dagctl("eval " + common), 0);
}

TEST(Cli, MissingConfigIsConfigError) {
  TempDir dir;
  EXPECT_EQ(dagctl("guide --config " + (dir / "nope.json").string()), 2);
}

TEST(Cli, BadModuleTokenIsConfigError) {
  TempDir dir;
  EXPECT_EQ(dagctl("guide --config " + kConfigs + "/minimal.json --modules dca,xyz --out " + dir.path().string()), 2);
}

TEST(Cli, MotionModuleWithoutDragIsConfigError) {
  TempDir dir;
  EXPECT_EQ(dagctl("guide --config " + kConfigs + "/minimal.json --modules dma --out " + dir.path().string()), 2);
}

TEST(Cli, BadWeightsAreConfigError) {
  TempDir dir;
  EXPECT_EQ(dagctl("guide --config " + kConfigs + "/minimal.json --weights 1,2 --out " + dir.path().string()), 2);
}

TEST(Cli, UnwritableOutputIsRuntimeError) {
  TempDir dir;
  dag::write_text(dir / "file", "x");
  EXPECT_EQ(dagctl("guide --config " + kConfigs + "/minimal.json --steps 10 --out " + (dir / "file" / "sub").string()),
            3);
}

TEST(Cli, UnknownSubcommandFails) { EXPECT_NE(dagctl("frobnicate"), 0); }

}  // namespace
