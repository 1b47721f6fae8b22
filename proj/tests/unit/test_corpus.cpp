#include <doctest.h>

#include <fstream>
#include <map>
#include <set>

#include "layerguard/text.hpp"
#include "layerguard/corpus.hpp"
#include "layerguard/error.hpp"
#include "layerguard/pipeline.hpp"
#include "test_support.hpp"

using namespace layerguard;
using layerguard::testing::error_code_of;
using layerguard::testing::TempDir;

namespace {

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

std::vector<double> baseline_confidences(Layer layer, std::vector<Event> events) {
  PipelineConfig cfg;
  cfg.seed = 11;
  cfg.eval_count = 2000;
  const auto prepared = prepare_layer(layer, std::move(events), cfg);
  std::vector<double> out;
  for (const auto& se : prepared.eval) out.push_back(se.confidence);
  return out;
}

}  // namespace

TEST_SUITE("corpus-io") {
  TEST_CASE("default hypervisor corpus has the published class counts") {
    const HypGenConfig cfg;
    const auto events = gen_hypervisor(cfg);
    CHECK(events.size() == 25000);
    std::map<std::string, std::size_t> counts;
    std::size_t benign = 0;
    for (const auto& e : events) {
      ++counts[*e.truth_class];
      benign += *e.truth == 0;
      CHECK(parse_kv_record(e.raw).size() == 23);
    }
    CHECK(benign == 12500);
    CHECK(counts["normal"] == 12500);
    CHECK(counts["vm_lateral_movement"] == 2541);
    CHECK(counts["vm_escape"] == 2501);
    CHECK(counts["snapshot_abuse"] == 2500);
    CHECK(counts["hypervisor_dos"] == 2488);
    CHECK(counts["hyper_jacking"] == 2470);
    CHECK(HypervisorSchema::header().size() == 24);
    CHECK(HypervisorSchema::header().front() == HypervisorSchema::class_column());
  }

  TEST_CASE("hypervisor generator is seed deterministic") {
    HypGenConfig cfg;
    cfg.total = 1000;
    cfg.classes = {{"normal", 500}, {"vm_escape", 300}, {"hyper_jacking", 200}};
    cfg.seed = 9;
    TempDir dir("hyp");
    write_hypervisor_csv(dir / "a.csv", gen_hypervisor(cfg));
    write_hypervisor_csv(dir / "b.csv", gen_hypervisor(cfg));
    CHECK(read_lines(dir / "a.csv") == read_lines(dir / "b.csv"));
    cfg.seed = 10;
    write_hypervisor_csv(dir / "c.csv", gen_hypervisor(cfg));
    CHECK(read_lines(dir / "a.csv") != read_lines(dir / "c.csv"));
  }

  TEST_CASE("hypervisor count and column mismatches are rejected") {
    HypGenConfig cfg;
    cfg.total = 24999;
    CHECK(error_code_of([&] { gen_hypervisor(cfg); }) == ErrorCode::count_sum_mismatch);
    cfg = HypGenConfig{};
    cfg.columns = 30;
    CHECK(error_code_of([&] { gen_hypervisor(cfg); }) == ErrorCode::count_sum_mismatch);
  }

  TEST_CASE("network and host generators are seed deterministic") {
    const NetGenConfig nc{.count = 300, .seed = 4};
    const auto a = gen_network(nc), b = gen_network(nc);
    REQUIRE(a.size() == 300);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].raw == b[i].raw);
      CHECK(a[i].features == b[i].features);
    }
    const HostGenConfig hc{.count = 300, .seed = 4};
    const auto h1 = gen_hostlogs(hc), h2 = gen_hostlogs(hc);
    for (std::size_t i = 0; i < h1.size(); ++i) CHECK(h1[i].raw == h2[i].raw);
    CHECK(network_feature_columns(40).size() == 40);
    CHECK(network_feature_columns(40)[0] == "Dst Port");
  }

  TEST_CASE("high separation concentrates baseline confidence near 1") {
    const auto conf = baseline_confidences(Layer::network, gen_network({.count = 10000, .separation = 6.0, .seed = 3}));
    std::size_t high = 0;
    for (double c : conf) high += c >= 0.9;
    CHECK(static_cast<double>(high) >= 0.9 * static_cast<double>(conf.size()));
  }

  TEST_CASE("low separation leaves a diffuse confidence band") {
    const auto conf = baseline_confidences(Layer::host, gen_hostlogs({.count = 10000, .seed = 3}));
    std::size_t band = 0;
    for (double c : conf) band += c >= 0.5 && c <= 0.85;
    CHECK(static_cast<double>(band) >= 0.25 * static_cast<double>(conf.size()));
  }

  TEST_CASE("split sizes and partition") {
    auto events = gen_network({.count = 25000, .features = 4, .seed = 1});
    auto [train, test] = split_train_test(events, 0.8, 7);
    CHECK(train.size() == 20000);
    CHECK(test.size() == 5000);
    std::set<std::string> ids;
    for (const auto& e : train) ids.insert(e.id);
    for (const auto& e : test) ids.insert(e.id);
    CHECK(ids.size() == 25000);
    auto [train2, test2] = split_train_test(events, 0.8, 7);
    CHECK(train2.front().id == train.front().id);
    CHECK(error_code_of([&] { split_train_test(events, 1.0, 7); }) == ErrorCode::bad_split_ratio);
    CHECK(error_code_of([&] { split_train_test(events, 0.0, 7); }) == ErrorCode::bad_split_ratio);
  }

  TEST_CASE("network CSV round-trip") {
    TempDir dir("net");
    const auto events = gen_network({.count = 50, .seed = 2});
    const NetworkColumns cols;
    write_network_csv(dir / "n.csv", events, cols);
    const auto lines = read_lines(dir / "n.csv");
    REQUIRE(lines.size() == 51);
    for (const auto& l : lines) CHECK(split_csv_line(l).size() == 41);
    const auto back = load_network_csv(dir / "n.csv", cols);
    REQUIRE(back.size() == events.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
      CHECK(back[i].id == events[i].id);
      CHECK(back[i].features == events[i].features);
      CHECK(back[i].truth == events[i].truth);
      CHECK(back[i].raw.rfind("[NIDS FLOW] Dst Port=", 0) == 0);
    }
  }

  TEST_CASE("network CSV with ids, quoting and a benign label in any case") {
    TempDir dir("net2");
    {
      std::ofstream out(dir / "x.csv");
      out << "event_id, Dst Port,Protocol,Label\n"
          << "\"flow,1\",21,6,BENIGN\n"
          << "flow-2,80,17,FTP-BruteForce\n";
    }
    const auto ev = load_network_csv(dir / "x.csv", {.features = {"Dst Port", "Protocol"}, .label = "Label"});
    REQUIRE(ev.size() == 2);
    CHECK(ev[0].id == "flow,1");
    CHECK(ev[0].truth == 0);
    CHECK(ev[1].truth == 1);
    CHECK(ev[1].truth_class == "FTP-BruteForce");
    CHECK(ev[0].raw == "[NIDS FLOW] Dst Port=21, Protocol=6");
    CHECK(error_code_of([&] { load_network_csv(dir / "x.csv", {.features = {"Nope"}, .label = "Label"}); }) ==
          ErrorCode::dimension_mismatch);
    CHECK(error_code_of([&] { load_network_csv(dir / "missing.csv", {}); }) == ErrorCode::io_read_failure);
  }

  TEST_CASE("host logs round-trip with sidecar labels") {
    TempDir dir("host");
    const auto events = gen_hostlogs({.count = 40, .seed = 5});
    write_host_logs(dir / "h.log", dir / "labels.csv", events);
    const auto back = load_host_logs(dir / "h.log", dir / "labels.csv");
    REQUIRE(back.size() == 40);
    for (std::size_t i = 0; i < back.size(); ++i) {
      CHECK(back[i].raw == events[i].raw);
      CHECK(back[i].truth == events[i].truth);
      CHECK(back[i].id == "host-" + std::to_string(i));
    }
    const auto unlabeled = load_host_logs(dir / "h.log", std::nullopt);
    for (const auto& e : unlabeled) CHECK_FALSE(e.truth);
  }

  TEST_CASE("hypervisor CSV round-trip") {
    TempDir dir("hypio");
    HypGenConfig cfg;
    cfg.total = 200;
    cfg.classes = {{"normal", 100}, {"snapshot_abuse", 100}};
    const auto events = gen_hypervisor(cfg);
    write_hypervisor_csv(dir / "h.csv", events);
    for (const auto& l : read_lines(dir / "h.csv")) CHECK(split_csv_line(l).size() == 24);
    const auto back = load_hypervisor_csv(dir / "h.csv");
    REQUIRE(back.size() == events.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
      CHECK(back[i].id == events[i].id);
      CHECK(back[i].truth == events[i].truth);
      CHECK(back[i].truth_class == events[i].truth_class);
      CHECK(parse_kv_record(back[i].raw) == parse_kv_record(events[i].raw));
    }
  }

  TEST_CASE("replay CSV round-trip") {
    TempDir dir("replay");
    std::vector<ScoredEvent> rows{layerguard::testing::scored("n-1", Layer::network, 1, 0.5807, 1),
                                  layerguard::testing::scored("h-2", Layer::host, 0, 0.91, std::nullopt)};
    write_replay_csv(dir / "r.csv", rows);
    const auto back = load_replay_csv(dir / "r.csv");
    REQUIRE(back.size() == 2);
    CHECK(back[0].event_id == "n-1");
    CHECK(back[0].confidence == 0.5807);
    CHECK(back[0].truth == 1);
    CHECK(back[1].layer == Layer::host);
    CHECK_FALSE(back[1].truth);
  }

  TEST_CASE("CSV helpers") {
    CHECK(split_csv_line("a,\"b,c\",d") == std::vector<std::string>{"a", "b,c", "d"});
    CHECK(csv_escape("plain") == "plain");
    CHECK(split_csv_line(csv_escape("x,\"y\"")) == std::vector<std::string>{"x,\"y\""});
  }
}
