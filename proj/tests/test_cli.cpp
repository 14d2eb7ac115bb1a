#include "interdance/cli.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace interdance;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = 0;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "interdance");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("interdance_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }
  std::string path(const std::string& name) const { return (root_ / name).string(); }

  fs::path root_;
};

}  // namespace

TEST_F(CliTest, SynthWritesDuetDirectory) {
  const CliRun r = cli({"synth", "--scenario", "handhold", "--seed", "3", "--duration", "0.5", "--out", path("duet")});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"leader.idm", "follower.idm", "music.idf", "run.json"}) {
    EXPECT_TRUE(fs::exists(root_ / "duet" / f)) << f;
  }
  const MotionSequence m = read_motion(path("duet/leader.idm"));
  EXPECT_EQ(m.frame_count(), 15);
  std::ifstream run_json(path("duet/run.json"));
  const nlohmann::json j = nlohmann::json::parse(run_json);
  EXPECT_EQ(j.at("subcommand"), "synth");
  EXPECT_EQ(j.at("seed"), 3);
}

TEST_F(CliTest, SynthIsReproducible) {
  ASSERT_EQ(cli({"synth", "--seed", "5", "--duration", "0.3", "--out", path("a")}).code, 0);
  ASSERT_EQ(cli({"synth", "--seed", "5", "--duration", "0.3", "--out", path("b")}).code, 0);
  EXPECT_EQ(io::read_file(path("a/follower.idm")), io::read_file(path("b/follower.idm")));
}

TEST_F(CliTest, EncodeDecodeRoundTrip) {
  ASSERT_EQ(cli({"synth", "--scenario", "orbit", "--duration", "0.3", "--out", path("d")}).code, 0);
  ASSERT_EQ(cli({"encode", "--dir", path("d")}).code, 0);
  EXPECT_TRUE(fs::exists(root_ / "d" / "leader.idr"));
  const CliRun r = cli({"decode", "--dir", path("d"), "--report", path("report.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(path("report.json"));
  const nlohmann::json j = nlohmann::json::parse(in);
  EXPECT_LT(j.at("max_error_m").get<double>(), 1e-5);
}

TEST_F(CliTest, TrainSampleEvalPipeline) {
  ASSERT_EQ(cli({"synth", "--duration", "0.3", "--seed", "1", "--out", path("d1")}).code, 0);
  ASSERT_EQ(cli({"synth", "--duration", "0.3", "--seed", "2", "--out", path("d2")}).code, 0);
  for (const char* d : {"d1", "d2"}) ASSERT_EQ(cli({"encode", "--dir", path(d)}).code, 0);
  const CliRun t = cli({"train", "--data", path("d1"), path("d2"), "--out", path("m.idc"), "--epochs", "2", "--width", "8",
                     "--blocks", "1", "--heads", "2", "--ff-width", "16", "--diffusion-steps", "4", "--mode", "duet"});
  ASSERT_EQ(t.code, 0) << t.err;
  const LoadedCheckpoint ck = load_checkpoint(path("m.idc"));
  EXPECT_EQ(ck.config.mode, DenoiserMode::duet);

  const CliRun s = cli({"sample", "--checkpoint", path("m.idc"), "--leader", path("d1"), "--out", path("gen"), "--seed",
                     "4", "--a-con", "0.1", "--trace", path("trace.json")});
  ASSERT_EQ(s.code, 0) << s.err;
  for (const char* f : {"leader.idr", "follower.idr", "music.idf", "run.json"}) {
    EXPECT_TRUE(fs::exists(root_ / "gen" / f)) << f;
  }
  EXPECT_TRUE(fs::exists(path("trace.json")));
  const RepSequence gen = read_rep(path("gen/follower.idr"));
  EXPECT_EQ(gen.frame_count(), 9);
  for (int c = layout::foot_contact; c < layout::channels; ++c) {
    EXPECT_TRUE(gen.data(0, c) == 0.0 || gen.data(0, c) == 1.0);
  }

  const CliRun again = cli({"sample", "--checkpoint", path("m.idc"), "--leader", path("d1"), "--out", path("gen2"),
                         "--seed", "4", "--a-con", "0.1"});
  ASSERT_EQ(again.code, 0);
  EXPECT_EQ(io::read_file(path("gen/follower.idr")), io::read_file(path("gen2/follower.idr")));

  const CliRun e = cli({"eval", "--reference", path("d1"), path("d2"), "--generated", path("gen"), path("gen2"), "--json",
                     path("eval.json")});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_NE(e.out.find("CF="), std::string::npos);
  std::ifstream in(path("eval.json"));
  EXPECT_TRUE(nlohmann::json::parse(in).contains("FID_k"));
}

TEST_F(CliTest, ExportCsvWritesJointRows) {
  ASSERT_EQ(cli({"synth", "--duration", "0.2", "--out", path("d")}).code, 0);
  ASSERT_EQ(cli({"export-csv", "--in", path("d/leader.idm"), "--out", path("l.csv")}).code, 0);
  std::ifstream in(path("l.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "frame,joint,x,y,z");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 6 * kJointCount);
  EXPECT_TRUE(fs::exists(path("l.csv.run.json")));
}

TEST_F(CliTest, GradcheckPasses) {
  const CliRun r = cli({"gradcheck", "--configs", "2", "--seed", "1"});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}

TEST_F(CliTest, UsageErrorsExitWithOne) {
  EXPECT_EQ(cli({"synth", "--bogus"}).code, 1);
  EXPECT_EQ(cli({"frobnicate"}).code, 1);
  EXPECT_EQ(cli({"decode", "--dir", path("missing")}).code, 1);
  EXPECT_EQ(cli({"synth", "--scenario", "tango", "--out", path("x")}).code, 1);
  EXPECT_EQ(cli({"sample", "--mode", "solo"}).code, 1);
}

TEST_F(CliTest, CorruptInputExitsWithTwo) {
  ASSERT_EQ(cli({"synth", "--duration", "0.2", "--out", path("d")}).code, 0);
  io::Bytes b = io::read_file(path("d/leader.idm"));
  b[0] = 'Z';
  io::write_file(path("d/leader.idm"), b);
  const CliRun r = cli({"encode", "--dir", path("d")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("bad_magic"), std::string::npos);
}

TEST_F(CliTest, HelpExitsWithZero) {
  const CliRun r = cli({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("sample"), std::string::npos);
}
