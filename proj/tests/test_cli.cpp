#include "diffcharge/bidding.hpp"
#include "diffcharge/csv.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
namespace dc = diffcharge;

namespace {

fs::path scratch() {
  static const fs::path dir = [] {
    const auto d = fs::temp_directory_path() / "diffcharge_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cli(const std::string& args) {
  const auto log = scratch() / "last.log";
  const std::string cmd = std::string(DIFFCHARGE_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> read_report(const fs::path& p) {
  std::map<std::string, std::string> kv;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return kv;
}

std::size_t data_lines(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') ++n;
  return n - 1;  // header
}

// 30 sessions over two stations: a constant bulk stage, then a linear decline.
fs::path session_fixture() {
  const auto path = scratch() / "sessions.csv";
  if (fs::exists(path)) return path;
  std::ofstream out(path);
  out << "session_id,station_id,connection_time,done_charging_time,kwh_delivered,rate_points\n";
  const long day = 1556668800;  // 2019-05-01T00:00:00Z
  for (int i = 0; i < 30; ++i) {
    const long start = day + (i % 5) * 86400 + 6 * 3600 + (i * 37 % 300) * 60;
    const int bulk = 20 + (i * 7) % 25;
    const int tail = 10 + (i * 3) % 10;
    const double rate = (i % 3 == 0) ? 8.0 : (i % 3 == 1 ? 16.0 : 32.0);
    out << 's' << i << ',' << (i % 2 ? "Caltech" : "JPL") << ',' << start << ',' << start + (bulk + tail) * 60 << ",1,";
    for (int m = 0; m < bulk + tail; ++m) {
      const double r = m < bulk ? rate : rate * (1.0 - static_cast<double>(m - bulk + 1) / (tail + 1));
      out << (m ? ";" : "") << start + m * 60 << ':' << r;
    }
    out << '\n';
  }
  return path;
}

const std::string kSmall =
    " --set data.battery_length=60 --set data.station_length=48 --set data.station_resolution_seconds=1800"
    " --set network.hidden=4 --set network.heads=1 --set network.head_width=4"
    " --set train.epochs=3 --set train.patience=3 --set diffusion.steps=10";

fs::path ingested() {
  const auto dir = scratch() / "ingest";
  if (!fs::exists(dir / "battery.csv"))
    EXPECT_EQ(cli("ingest --sessions " + session_fixture().string() + " --out " + dir.string() + kSmall), 0);
  return dir;
}

fs::path trained() {
  const auto dir = scratch() / "train";
  if (!fs::exists(dir / "checkpoint.json"))
    EXPECT_EQ(cli("train --corpus " + (ingested() / "battery.csv").string() + " --seed 3 --out " + dir.string() + kSmall),
              0);
  return dir;
}

TEST(CliIngest, WritesBothCorpora) {
  const auto dir = ingested();
  EXPECT_EQ(data_lines(dir / "battery.csv"), 30u);
  EXPECT_GT(data_lines(dir / "station.csv"), 0u);
  EXPECT_EQ(data_lines(dir / "arrivals.csv"), 30u);
  const auto report = read_report(dir / "ingest_report.txt");
  EXPECT_EQ(report.at("valid_rows"), "30");
  EXPECT_EQ(report.at("seed"), "0");
  EXPECT_EQ(slurp(dir / "battery.csv").rfind("# diffcharge ingest seed=0", 0), 0u);
}

TEST(CliIngest, RerunIsByteIdentical) {
  const auto again = scratch() / "ingest_again";
  ASSERT_EQ(cli("ingest --sessions " + session_fixture().string() + " --out " + again.string() + kSmall), 0);
  for (const char* f : {"battery.csv", "battery_lengths.csv", "station.csv", "arrivals.csv", "ingest_report.txt"})
    EXPECT_EQ(slurp(ingested() / f), slurp(again / f)) << f;
}

TEST(CliIngest, MissingFileFails) {
  EXPECT_NE(cli("ingest --sessions " + (scratch() / "nope.csv").string() + " --out " + (scratch() / "x").string()), 0);
  EXPECT_NE(slurp(scratch() / "last.log").find("does not exist"), std::string::npos);
}

TEST(CliTrain, SmokeRunWritesCheckpointAndLoss) {
  const auto dir = trained();
  EXPECT_TRUE(fs::exists(dir / "checkpoint.json"));
  const auto rows = data_lines(dir / "loss.csv");
  EXPECT_GE(rows, 1u);
  EXPECT_LE(rows, 3u);
}

TEST(CliTrain, FixedSeedReproduces) {
  const auto again = scratch() / "train_again";
  ASSERT_EQ(cli("train --corpus " + (ingested() / "battery.csv").string() + " --seed 3 --out " + again.string() + kSmall),
            0);
  EXPECT_EQ(slurp(trained() / "checkpoint.json"), slurp(again / "checkpoint.json"));
  EXPECT_EQ(slurp(trained() / "loss.csv"), slurp(again / "loss.csv"));
}

TEST(CliTrain, StationTaskWithoutLabelsFails) {
  EXPECT_NE(cli("train --corpus " + (ingested() / "battery.csv").string() + " --set run.task=station --out " +
                (scratch() / "bad_train").string() + kSmall),
            0);
  EXPECT_NE(slurp(scratch() / "last.log").find("labeled corpus"), std::string::npos);
}

TEST(CliTrain, UnknownOverrideFails) {
  EXPECT_NE(cli("train --set train.nonsense=1 --out " + (scratch() / "bad_key").string()), 0);
}

TEST(CliSample, WritesRequestedRowsAndSeedsDiffer) {
  const auto ckpt = (trained() / "checkpoint.json").string();
  const auto a = scratch() / "sample_a", b = scratch() / "sample_b";
  ASSERT_EQ(cli("sample --checkpoint " + ckpt + " -n 10 --seed 1 --out " + a.string()), 0);
  ASSERT_EQ(cli("sample --checkpoint " + ckpt + " -n 10 --seed 2 --out " + b.string()), 0);
  EXPECT_EQ(data_lines(a / "samples.csv"), 10u);
  EXPECT_NE(slurp(a / "samples.csv"), slurp(b / "samples.csv"));
  EXPECT_NE(slurp(a / "samples.csv").find("seed=1"), std::string::npos);
}

TEST(CliSample, ConditionalCheckpointNeedsLabel) {
  const auto dir = scratch() / "train_station";
  ASSERT_EQ(cli("train --corpus " + (ingested() / "station.csv").string() + " --set run.task=station --out " +
                dir.string() + kSmall),
            0);
  const auto ckpt = (dir / "checkpoint.json").string();
  EXPECT_NE(cli("sample --checkpoint " + ckpt + " -n 2 --out " + (scratch() / "s_nolabel").string()), 0);
  ASSERT_EQ(cli("sample --checkpoint " + ckpt + " -n 2 --label Caltech --out " + (scratch() / "s_label").string()), 0);
  const auto batch = dc::read_scenarios(scratch() / "s_label" / "samples_label1.csv");
  EXPECT_EQ(batch.labels, (std::vector<int>{1, 1}));
}

TEST(CliEvaluate, IdenticalCorporaAndReportKeys) {
  const auto real = (ingested() / "battery.csv").string();
  const auto dir = scratch() / "eval";
  ASSERT_EQ(cli("evaluate --real " + real + " --gen " + real + " --real-lengths " +
                (ingested() / "battery_lengths.csv").string() + " --out " + dir.string() + kSmall +
                " --set evaluate.repeats=1 --set evaluate.classifier_epochs=2 --set evaluate.tail_clusters=3"),
            0);
  const auto report = read_report(dir / "metrics.txt");
  EXPECT_DOUBLE_EQ(std::stod(report.at("marginal_score")), 0.0);
  EXPECT_TRUE(report.count("discriminative_score"));
  EXPECT_TRUE(report.count("tail_score"));
  for (const char* f : {"marginal_hist.csv", "acf.csv", "duration_pdf.csv", "bulk_density.csv", "projection_input.csv",
                        "tail_clusters.csv"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
}

TEST(CliEvaluate, MissingInputFails) {
  EXPECT_NE(cli("evaluate --real " + (scratch() / "nope.csv").string() + " --gen " +
                (ingested() / "battery.csv").string() + " --out " + (scratch() / "eval_bad").string()),
            0);
}

fs::path price_file() {
  const auto p = scratch() / "prices.csv";
  std::ofstream(p) << "interval_start,price_per_kwh\n00:00,0.10\n07:00,0.25\n18:00,0.15\n";
  return p;
}

TEST(CliBid, ZeroDemandGivesZeroCostPlan) {
  const auto scen = scratch() / "zero.csv";
  {
    std::ofstream out(scen);
    out << "t0001,t0002,t0003\n";
    for (int i = 0; i < 4; ++i) out << "0,0,0\n";
  }
  const auto dir = scratch() / "bid_zero";
  ASSERT_EQ(cli("bid --scenarios " + scen.string() + " --prices " + price_file().string() + " --arrivals " +
                (ingested() / "arrivals.csv").string() + " --set bidding.evs=4 --out " + dir.string()),
            0);
  const auto report = read_report(dir / "bid_report.txt");
  EXPECT_DOUBLE_EQ(std::stod(report.at("total")), 0.0);
  EXPECT_EQ(data_lines(dir / "plan.csv"), 4u * 288u);
}

TEST(CliBid, RowCountAndCostIdentity) {
  const auto dir = scratch() / "bid";
  ASSERT_EQ(cli("bid --scenarios " + (ingested() / "battery.csv").string() + " --prices " + price_file().string() +
                " --arrivals " + (ingested() / "arrivals.csv").string() + " --actual " +
                (ingested() / "battery.csv").string() + " --set bidding.evs=5 --out " + dir.string() + kSmall),
            0);
  EXPECT_EQ(data_lines(dir / "plan.csv"), 5u * 288u);
  const auto r = read_report(dir / "bid_report.txt");
  EXPECT_NEAR(std::stod(r.at("total")), std::stod(r.at("energy_procurement")) + std::stod(r.at("user_penalty")), 1e-12);
  EXPECT_GT(std::stod(r.at("energy_procurement")), 0.0);
  // The actual curves are the planned ones here.
  EXPECT_DOUBLE_EQ(std::stod(r.at("actual_total")), std::stod(r.at("total")));
}

TEST(CliBid, ReducedScenariosUseWeightedCosts) {
  const auto dir = scratch() / "bid_reduced";
  ASSERT_EQ(cli("bid --scenarios " + (ingested() / "battery.csv").string() + " --prices " + price_file().string() +
                " --arrivals " + (ingested() / "arrivals.csv").string() +
                " --set bidding.evs=6 --set bidding.reduce_k=3 --out " + dir.string() + kSmall),
            0);
  const auto r = read_report(dir / "bid_report.txt");
  EXPECT_EQ(r.at("scenarios"), "3");
  EXPECT_EQ(data_lines(dir / "plan.csv"), 6u * 288u);
}

TEST(CliBid, TooFewCurvesFails) {
  EXPECT_NE(cli("bid --scenarios " + (ingested() / "battery.csv").string() + " --prices " + price_file().string() +
                " --arrivals " + (ingested() / "arrivals.csv").string() + " --set bidding.evs=31 --out " +
                (scratch() / "bid_bad").string() + kSmall),
            0);
}

}  // namespace
