#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "test_support.hpp"

#ifdef LAYERGUARD_CLI_PATH

using layerguard::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string output;
};

CliResult cli(const TempDir& dir, const std::string& args) {
  const fs::path log = dir / "cli.log";
  const std::string cmd = fmt::format("SOURCE_DATE_EPOCH=1700000000 '{}' --out '{}' {} > '{}' 2>&1", LAYERGUARD_CLI_PATH,
                                      dir.path().string(), args, log.string());
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<fs::path> files_ending(const fs::path& dir, const std::string& suffix) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().filename().string().ends_with(suffix)) out.push_back(e.path());
  }
  return out;
}

const std::string kSmall = "--seed 7 --count 2000 --eval-count 300";

}  // namespace

TEST_SUITE("pipeline-cli") {
  TEST_CASE("calibrate twice with one seed is byte identical") {
    TempDir a("cli-cal-a"), b("cli-cal-b");
    const auto ra = cli(a, kSmall + " --layers network,host calibrate");
    const auto rb = cli(b, kSmall + " --layers network,host calibrate");
    REQUIRE_MESSAGE(ra.exit_code == 0, ra.output);
    REQUIRE(rb.exit_code == 0);
    const auto ja = slurp(a / "calibration.json");
    CHECK(!ja.empty());
    CHECK(ja == slurp(b / "calibration.json"));
    const auto doc = nlohmann::json::parse(ja);
    CHECK(doc["layers"].size() == 2);
    CHECK(ra.output.find("output directory: ") != std::string::npos);
    CHECK(ra.output.find("summary: ") != std::string::npos);
  }

  TEST_CASE("static run honours the configured threshold in every layer") {
    TempDir dir("cli-run");
    (void)fs::create_directories(dir / "x");
    { std::ofstream(dir / "table.jsonl"); }
    const auto r = cli(dir, kSmall + fmt::format(" --mock-llm '{}' run --mode static --static-threshold 0.85",
                                                 (dir / "table.jsonl").string()));
    REQUIRE_MESSAGE(r.exit_code == 0, r.output);
    const auto summaries = files_ending(dir.path(), "_static_summary.json");
    REQUIRE(summaries.size() == 1);
    const auto j = nlohmann::json::parse(slurp(summaries[0]));
    REQUIRE(j["layers"].size() == 3);
    for (const auto& l : j["layers"]) CHECK(l["gate1_threshold"] == 0.85);
    CHECK(j["mode"] == "STATIC");
    CHECK(j["started_at"] == "2023-11-14T22:13:20Z");
    CHECK(r.output.find("summary: " + summaries[0].string()) != std::string::npos);
    // An all-UNSURE table confirms nothing, so memory stays empty but is attached.
    CHECK(fs::is_directory(dir / "memory"));
  }

  TEST_CASE("compare writes one cost report and report re-renders it") {
    TempDir dir("cli-compare");
    { std::ofstream(dir / "table.jsonl"); }
    const auto r = cli(dir, kSmall + fmt::format(" --layers host,network --mock-llm '{}' compare",
                                                 (dir / "table.jsonl").string()));
    REQUIRE_MESSAGE(r.exit_code == 0, r.output);
    const auto reports = files_ending(dir.path(), "_cost_report.json");
    REQUIRE(reports.size() == 1);
    const auto cost = nlohmann::json::parse(slurp(reports[0]));
    CHECK(cost["delta"] == cost["n_static"].get<long>() - cost["n_adaptive"].get<long>());
    CHECK(files_ending(dir.path(), "_summary.json").size() == 2);

    const auto rep = cli(dir, "report");
    REQUIRE_MESSAGE(rep.exit_code == 0, rep.output);
    CHECK(files_ending(dir.path(), "_histogram.csv").size() == 2);
  }

  TEST_CASE("adaptive run uses thresholds from a calibration file") {
    TempDir dir("cli-calfile");
    { std::ofstream(dir / "table.jsonl"); }
    const std::string args = kSmall + fmt::format(" --mock-llm '{}'", (dir / "table.jsonl").string());
    REQUIRE(cli(dir, args + " calibrate").exit_code == 0);
    auto cal = nlohmann::json::parse(slurp(dir / "calibration.json"));
    for (auto& l : cal["layers"]) l["learned_threshold"] = 0.93;
    { std::ofstream(dir / "edited.json") << cal.dump(); }
    const auto r = cli(dir, args + fmt::format(" --calibration '{}' run --mode adaptive", (dir / "edited.json").string()));
    REQUIRE_MESSAGE(r.exit_code == 0, r.output);
    const auto summaries = files_ending(dir.path(), "_adaptive_summary.json");
    REQUIRE(summaries.size() == 1);
    const auto j = nlohmann::json::parse(slurp(summaries[0]));
    for (const auto& l : j["layers"]) CHECK(l["gate1_threshold"] == 0.93);
  }

  TEST_CASE("gen writes the three corpora") {
    TempDir dir("cli-gen");
    const auto r = cli(dir, "--seed 3 --count 500 gen");
    REQUIRE_MESSAGE(r.exit_code == 0, r.output);
    for (const char* f : {"network.csv", "host.log", "host_labels.csv", "hypervisor.csv"}) CHECK(fs::exists(dir / f));
    const auto run = cli(dir, fmt::format("--seed 3 --eval-count 200 --layers host --data '{}' calibrate", dir.path().string()));
    CHECK_MESSAGE(run.exit_code == 0, run.output);
  }

  TEST_CASE("usage errors exit with status 2") {
    TempDir dir("cli-usage");
    CHECK(cli(dir, "").exit_code == 2);
    CHECK(cli(dir, "frobnicate").exit_code == 2);
    CHECK(cli(dir, "run --mode sideways").exit_code == 2);
    CHECK(cli(dir, "--layers kernel calibrate").exit_code == 2);
    CHECK(cli(dir, "--static-threshold 1.5 run").exit_code == 2);
    CHECK(cli(dir, "--help").exit_code == 0);
  }

  TEST_CASE("runtime failures exit with status 1") {
    TempDir dir("cli-fail");
    const auto r = cli(dir, "--mock-llm /nonexistent/table.jsonl --layers host --count 500 --eval-count 100 run");
    CHECK(r.exit_code == 1);
    CHECK(r.output.find("IO_READ_FAILURE") != std::string::npos);
  }
}

#endif
