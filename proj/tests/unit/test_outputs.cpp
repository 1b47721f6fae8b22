#include <doctest.h>

#include <fstream>

#include <nlohmann/json.hpp>

#include "layerguard/corpus.hpp"
#include "layerguard/outputs.hpp"
#include "layerguard/pipeline.hpp"
#include "test_support.hpp"

using namespace layerguard;
using layerguard::testing::scored;
using layerguard::testing::TempDir;

namespace {

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

const Clock kFixedClock = [] { return std::int64_t{1700000000}; };

ModeRun replay_run(const std::vector<ScoredEvent>& rows) {
  PipelineConfig cfg;
  std::vector<PreparedLayer> layers{prepare_replay(Layer::network, rows)};
  std::vector<MemoryStore> memories(1);
  MockLlmClient llm;
  return run_mode(Mode::static_threshold, layers, {}, cfg, memories, llm, kFixedClock);
}

}  // namespace

TEST_SUITE("corpus-io") {
  TEST_CASE("three bucketed NIDS events give three review lines") {
    std::vector<ScoredEvent> rows;
    for (int i = 0; i < 10; ++i) {
      const double c = i < 3 ? 0.60 : 0.97;
      rows.push_back(scored("network-" + std::to_string(i), Layer::network, 1, c, 1,
                            "[NIDS FLOW] Dst Port=21, Protocol=6, Idx=" + std::to_string(i)));
    }
    const auto run = replay_run(rows);
    TempDir dir("outputs");
    const auto paths = write_outputs(dir.path(), run.artifacts());
    const auto review = read_lines(paths.review);
    REQUIRE(review.size() == 3);
    for (const auto& line : review) {
      const auto j = nlohmann::json::parse(line);
      CHECK(j["layer"] == "network");
      CHECK(j["gate_trace"].size() == 3);
      CHECK(j["llm_label"] == "UNSURE");
    }
    CHECK(read_lines(paths.audit).size() == 3);

    const auto csv = read_lines(paths.confidence);
    REQUIRE(csv.size() == 11);
    for (const auto& l : csv) CHECK(split_csv_line(l).size() == 6);
    const auto rows_back = load_confidence_csv(paths.confidence);
    REQUIRE(rows_back.size() == 10);
    CHECK(rows_back[0].route == Sink::review_bucket);
    CHECK(rows_back[5].route == Sink::known_accept);
    CHECK(rows_back[5].confidence == 0.97);
  }

  TEST_CASE("no uncertain events still writes an empty audit log") {
    std::vector<ScoredEvent> rows{scored("network-0", Layer::network, 0, 0.99, 0, "x=1")};
    const auto run = replay_run(rows);
    TempDir dir("outputs-empty");
    const auto paths = write_outputs(dir.path(), run.artifacts());
    CHECK(std::filesystem::exists(paths.audit));
    CHECK(std::filesystem::file_size(paths.audit) == 0);
    CHECK(std::filesystem::file_size(paths.review) == 0);
    const auto name = paths.summary.filename().string();
    CHECK(name == run.summary.run_id + "_static_summary.json");
  }

  TEST_CASE("run summary reloads to an equal value") {
    std::vector<ScoredEvent> rows;
    for (int i = 0; i < 20; ++i) rows.push_back(scored("network-" + std::to_string(i), Layer::network, i % 2,
                                                      i % 4 == 0 ? 0.7 : 0.93, i % 3 == 0 ? 1 : 0, "k=v"));
    const auto run = replay_run(rows);
    TempDir dir("outputs-summary");
    const auto paths = write_outputs(dir.path(), run.artifacts());
    CHECK(load_run_summary(paths.summary) == run.summary);
    CHECK(run_summary_from_json(nlohmann::json::parse(to_json(run.summary).dump())) == run.summary);
  }

  TEST_CASE("cost report and calibration JSON round-trip") {
    const auto report = cost_analysis(2689, 1109, 0.25);
    CHECK(cost_report_from_json(nlohmann::json::parse(to_json(report).dump())) == report);

    CalibrationResult cal;
    cal.layer = Layer::host;
    cal.learned_threshold = 0.66;
    cal.learned_action = 16;
    cal.thresholds = ActionSet::default_grid().thresholds();
    cal.action_histogram.assign(cal.thresholds.size(), 0);
    cal.action_histogram[16] = 7;
    cal.episodes = 20;
    cal.rollout_uncertain_ratio = 0.1498;
    cal.seed = 42;
    CHECK(calibration_from_json(nlohmann::json::parse(to_json(cal).dump())) == cal);

    LlmThresholds th;
    th.tau = {0.7, 0.66, 0.9};
    th.p_min = 0.85;
    const auto back = llm_thresholds_from_json(nlohmann::json::parse(to_json(th).dump()));
    CHECK(back.tau == th.tau);
    CHECK(back.p_min == th.p_min);
  }

  TEST_CASE("mode names") {
    CHECK(to_string(Mode::static_threshold) == "STATIC");
    CHECK(parse_mode("Adaptive") == Mode::adaptive);
    CHECK(parse_mode("rl") == Mode::adaptive);
    CHECK_FALSE(parse_mode("dynamic"));
  }
}
