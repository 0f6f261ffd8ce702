#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "oodknn/embedding_store.hpp"
#include "test_util.hpp"

namespace oodknn {
namespace {

using testing::TempDir;

int run(const std::string& args, const TempDir& dir) {
  const std::string cmd = std::string(OODKNN_CLI_PATH) + " " + args + " > " +
                          (dir / "stdout.txt").string() + " 2> " + (dir / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    ASSERT_EQ(run("synth --out-dir " + (dir / "data").string() +
                      " --dim 8 --n-train 250 --n-test 40 --n-ood 30 --seed 3",
                  dir),
              0)
        << slurp(dir / "stderr.txt");
    manifest = (dir / "data" / "manifest.json").string();
  }

  std::string out() const { return slurp(dir / "stdout.txt"); }
  std::string err() const { return slurp(dir / "stderr.txt"); }

  TempDir dir;
  std::string manifest;
};

TEST_F(Cli, EvalMarkdownToStdout) {
  ASSERT_EQ(run("eval --manifest " + manifest + " --threads 2", dir), 0) << err();
  const auto md = out();
  EXPECT_NE(md.find("## Detectors"), std::string::npos) << md;
  EXPECT_NE(md.find("| KNN (k=5) |"), std::string::npos);
  EXPECT_NE(md.find("| MSP |"), std::string::npos);
}

TEST_F(Cli, EvalJsonToFileIsDeterministic) {
  const auto a = (dir / "a.json").string();
  const auto b = (dir / "b.json").string();
  ASSERT_EQ(run("eval --manifest " + manifest + " --format json --threads 1 --out " + a, dir), 0);
  ASSERT_EQ(run("eval --manifest " + manifest + " --format json --threads 4 --out " + b, dir), 0);
  EXPECT_EQ(slurp(a), slurp(b));
  const auto j = nlohmann::json::parse(slurp(a));
  EXPECT_EQ(j.at("results").size(), 8U);
}

TEST_F(Cli, SweepWritesPlotData) {
  const auto report = (dir / "sweep.csv").string();
  ASSERT_EQ(run("sweep-k --manifest " + manifest + " --k-list 1,5,200 --format csv --out " + report,
                dir),
            0)
      << err();
  const auto plot = slurp(dir / "sweep.plot.csv");
  EXPECT_EQ(plot.substr(0, 14), "k,average_fpr\n");
  EXPECT_NE(plot.find("\n200,"), std::string::npos) << plot;
}

TEST_F(Cli, CalibrateThenScore) {
  const auto cal = (dir / "cal.json").string();
  ASSERT_EQ(run("calibrate --manifest " + manifest + " --out " + cal, dir), 0) << err();
  const auto j = nlohmann::json::parse(slurp(cal));
  EXPECT_EQ(j.at("thresholds").size(), 2U);
  const auto emb = (dir / "data" / "ood1.oodb").string();
  const auto logits = (dir / "data" / "ood1_logits.oodb").string();
  ASSERT_EQ(run("score --manifest " + manifest + " --embedding " + emb + " --logits " + logits +
                    " --calibration " + cal,
                dir),
            0)
      << err();
  const auto text = out();
  EXPECT_EQ(text.rfind("id,detector,score,threshold,verdict\n", 0), 0U);
  EXPECT_NE(text.find(",KNN,"), std::string::npos);
  EXPECT_NE(text.find(",MSP,"), std::string::npos);
  EXPECT_NE(text.find(",OOD\n"), std::string::npos);
}

TEST_F(Cli, ScoreWithoutCalibrationUsesIdTest) {
  const auto emb = (dir / "data" / "id_test.oodb").string();
  ASSERT_EQ(run("score --detector knn --manifest " + manifest + " --embedding " + emb, dir), 0)
      << err();
  EXPECT_NE(out().find(",ID\n"), std::string::npos);
}

TEST_F(Cli, IngestCsvRoundTrip) {
  {
    std::ofstream csv(dir / "rows.csv");
    csv << "a,1,2,3\nb,4,5,6\n";
  }
  ASSERT_EQ(run("ingest-csv --in " + (dir / "rows.csv").string() + " --out " +
                    (dir / "rows.oodb").string(),
                dir),
            0)
      << err();
  const auto s = read_embedding_file(dir / "rows.oodb");
  EXPECT_EQ(s.count(), 2U);
  EXPECT_EQ(s.dim(), 3U);
  EXPECT_EQ(s.row(1)[2], 6.0F);
}

TEST_F(Cli, ConfigurationErrorsExitTwo) {
  EXPECT_EQ(run("eval --manifest " + (dir / "none.json").string(), dir), 2);
  EXPECT_EQ(run("eval --manifest " + manifest + " --k 100000", dir), 2);
  EXPECT_NE(err().find("k=100000"), std::string::npos) << err();
  EXPECT_EQ(run("eval --manifest " + manifest + " --detector energy", dir), 2);
  EXPECT_EQ(run("sweep-k --manifest " + manifest + " --k-list 1,x", dir), 2);
  EXPECT_EQ(run("eval", dir), 2);
  EXPECT_EQ(run("bogus", dir), 2);
  EXPECT_EQ(run("score --manifest " + manifest + " --embedding " +
                    (dir / "data" / "ood1.oodb").string() + " --calibration " +
                    (dir / "nope.json").string(),
                dir),
            2);
}

TEST_F(Cli, MspWithoutLogitsExitsTwo) {
  ASSERT_EQ(run("synth --no-logits --out-dir " + (dir / "bare").string() + " --dim 4 --n-train 20 "
                "--n-test 5 --n-ood 5",
                dir),
            0);
  const auto bare = (dir / "bare" / "manifest.json").string();
  EXPECT_EQ(run("eval --manifest " + bare, dir), 2);
  EXPECT_EQ(run("eval --detector knn --manifest " + bare, dir), 0);
}

TEST_F(Cli, DataErrorsExitThree) {
  // Truncate the training file referenced by the manifest.
  const auto train = dir / "data" / "train.oodb";
  std::filesystem::resize_file(train, 30);
  EXPECT_EQ(run("eval --manifest " + manifest, dir), 3);
  {
    std::ofstream csv(dir / "bad.csv");
    csv << "a,1,nan\n";
  }
  EXPECT_EQ(run("ingest-csv --in " + (dir / "bad.csv").string() + " --out " +
                    (dir / "bad.oodb").string(),
                dir),
            3);
}

}  // namespace
}  // namespace oodknn
