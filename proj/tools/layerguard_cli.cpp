// layerguard command-line entry point.
//
//   layerguard gen            synthetic corpora (network, host, hypervisor)
//   layerguard calibrate      Gate-1 Q-learning per layer
//   layerguard calibrate-llm  per-layer LLM decision thresholds
//   layerguard run            one mode over the selected layers
//   layerguard compare        static vs adaptive plus the cost report
//   layerguard report         re-render summaries and confidence histograms

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "layerguard/corpus.hpp"
#include "layerguard/error.hpp"
#include "layerguard/outputs.hpp"
#include "layerguard/pipeline.hpp"

namespace fs = std::filesystem;
using namespace layerguard;

namespace {

struct Options {
  std::uint64_t seed = 42;
  fs::path out = "out";
  std::string mock_llm;
  std::string llm_url = "http://localhost:11434";
  std::string llm_model = "llama3";
  int llm_timeout_ms = 30000;
  std::vector<std::string> layers{"network", "host", "hypervisor"};
  bool verbose = false;

  // data sources
  std::string data_dir;
  std::string replay_csv;
  std::string calibration_file;
  std::string llm_thresholds_file;
  std::string memory_dir;
  std::string input_dir;

  // generation
  std::size_t count = 25000;
  double net_separation = NetGenConfig{}.separation;
  double host_separation = HostGenConfig{}.separation;
  double host_decoy_rate = HostGenConfig{}.decoy_rate;

  std::string mode = "static";
  PipelineConfig pipeline;
};

std::vector<Layer> selected_layers(const Options& o) {
  std::vector<Layer> out;
  for (const auto& name : o.layers) {
    const auto layer = parse_layer(name);
    if (!layer) throw CLI::ValidationError("--layers", "unknown layer '" + name + "'");
    if (std::find(out.begin(), out.end(), *layer) == out.end()) out.push_back(*layer);
  }
  std::sort(out.begin(), out.end(), [](Layer a, Layer b) { return layer_index(a) < layer_index(b); });
  return out;
}

std::vector<Event> generate(Layer layer, const Options& o) {
  switch (layer) {
    case Layer::network: {
      NetGenConfig c;
      c.count = o.count;
      c.separation = o.net_separation;
      c.seed = o.seed;
      return gen_network(c);
    }
    case Layer::host: {
      HostGenConfig c;
      c.count = o.count;
      c.separation = o.host_separation;
      c.decoy_rate = o.host_decoy_rate;
      c.seed = o.seed;
      return gen_hostlogs(c);
    }
    case Layer::hypervisor: {
      HypGenConfig c;
      c.seed = o.seed;
      return gen_hypervisor(c);
    }
  }
  return {};
}

std::vector<Event> load_from_dir(Layer layer, const fs::path& dir) {
  switch (layer) {
    case Layer::network:
      return load_network_csv(dir / "network.csv", NetworkColumns{});
    case Layer::host: {
      const fs::path labels = dir / "host_labels.csv";
      return load_host_logs(dir / "host.log", fs::exists(labels) ? std::optional<fs::path>(labels) : std::nullopt);
    }
    case Layer::hypervisor:
      return load_hypervisor_csv(dir / "hypervisor.csv");
  }
  return {};
}

std::vector<PreparedLayer> prepare(const Options& o) {
  std::vector<PreparedLayer> prepared;
  const auto layers = selected_layers(o);
  if (!o.replay_csv.empty()) {
    const auto rows = load_replay_csv(o.replay_csv);
    for (Layer layer : layers) {
      std::vector<ScoredEvent> scored;
      for (const auto& r : rows) {
        if (r.layer != layer) continue;
        ScoredEvent se;
        se.event.id = r.event_id;
        se.event.layer = r.layer;
        se.event.truth = r.truth;
        se.pred_label = r.pred_label;
        se.confidence = r.confidence;
        scored.push_back(std::move(se));
      }
      if (scored.size() > o.pipeline.eval_count) scored.resize(o.pipeline.eval_count);
      prepared.push_back(prepare_replay(layer, scored));
    }
    return prepared;
  }
  for (Layer layer : layers) {
    auto events = o.data_dir.empty() ? generate(layer, o) : load_from_dir(layer, o.data_dir);
    spdlog::info("{}: {} events, training baseline", to_string(layer), events.size());
    prepared.push_back(prepare_layer(layer, std::move(events), o.pipeline));
  }
  return prepared;
}

std::unique_ptr<LlmClient> make_llm(const Options& o) {
  if (!o.mock_llm.empty()) return std::make_unique<MockLlmClient>(MockLlmClient::load(o.mock_llm));
  OllamaClient::Options opts;
  opts.base_url = o.llm_url;
  opts.model = o.llm_model;
  opts.timeout = std::chrono::milliseconds(o.llm_timeout_ms);
  return std::make_unique<OllamaClient>(opts);
}

void apply_llm_thresholds(Options& o) {
  if (o.llm_thresholds_file.empty()) return;
  o.pipeline.llm = llm_thresholds_from_json(read_json_file(o.llm_thresholds_file), o.pipeline.llm);
  o.pipeline.fusion.tau_fusion = o.pipeline.llm.tau;
}

std::vector<CalibrationResult> calibrations_for(const Options& o, std::span<const PreparedLayer> layers) {
  if (o.calibration_file.empty()) return calibrate_layers(layers, o.pipeline);
  std::vector<CalibrationResult> out;
  const auto doc = read_json_file(o.calibration_file);
  for (const auto& j : doc.at("layers")) out.push_back(calibration_from_json(j));
  return out;
}

fs::path memory_path(const Options& o, Layer layer) {
  const fs::path dir = o.memory_dir.empty() ? o.out / "memory" : fs::path(o.memory_dir);
  return dir / (std::string(to_string(layer)) + ".jsonl");
}

std::vector<MemoryStore> open_memories(const Options& o, std::span<const PreparedLayer> layers, bool attach) {
  std::vector<MemoryStore> stores;
  for (const auto& l : layers) {
    const fs::path path = memory_path(o, l.layer);
    if (attach) {
      fs::create_directories(path.parent_path());
      stores.push_back(MemoryStore::open(path, o.pipeline.gate2.embedding.dims));
    } else if (fs::exists(path)) {
      MemoryStore store = MemoryStore::open(path, o.pipeline.gate2.embedding.dims);
      store.detach();
      stores.push_back(std::move(store));
    } else {
      stores.emplace_back(o.pipeline.gate2.embedding.dims);
    }
  }
  return stores;
}

std::string pct(std::size_t part, std::size_t total) {
  return total == 0 ? std::string("-") : fmt::format("{:.2f}", 100.0 * static_cast<double>(part) / static_cast<double>(total));
}

void print_summary(const RunSummary& s) {
  fmt::print("{} run {} (seed {})\n", to_string(s.mode), s.run_id, s.seed);
  fmt::print("  {:<11} {:>6} {:>8} {:>8} {:>8} {:>7} {:>7} {:>7} {:>9}\n", "layer", "tau", "known%", "uncert%",
             "memory", "llm_atk", "bucket", "calls", "accuracy");
  auto row = [](const LayerSummary& l) {
    fmt::print("  {:<11} {:>6} {:>8} {:>8} {:>8} {:>7} {:>7} {:>7} {:>9}\n", l.layer,
               l.layer == "overall" ? std::string("-") : fmt::format("{:.2f}", l.gate1_threshold), pct(l.known, l.total),
               pct(l.uncertain, l.total), l.memory_matched, l.llm_attack, l.bucket, l.llm_calls,
               l.metrics ? fmt::format("{:.4f}", l.metrics->accuracy) : std::string("-"));
  };
  for (const auto& l : s.layers) row(l);
  row(s.overall);
}

// ---------------------------------------------------------------- commands

int cmd_gen(const Options& o) {
  fs::create_directories(o.out);
  for (Layer layer : selected_layers(o)) {
    const auto events = generate(layer, o);
    switch (layer) {
      case Layer::network:
        write_network_csv(o.out / "network.csv", events, NetworkColumns{});
        fmt::print("wrote {} ({} rows)\n", (o.out / "network.csv").string(), events.size());
        break;
      case Layer::host:
        write_host_logs(o.out / "host.log", o.out / "host_labels.csv", events);
        fmt::print("wrote {} and {} ({} lines)\n", (o.out / "host.log").string(),
                   (o.out / "host_labels.csv").string(), events.size());
        break;
      case Layer::hypervisor:
        write_hypervisor_csv(o.out / "hypervisor.csv", events);
        fmt::print("wrote {} ({} rows)\n", (o.out / "hypervisor.csv").string(), events.size());
        break;
    }
  }
  fmt::print("output directory: {}\n", o.out.string());
  return 0;
}

int cmd_calibrate(const Options& o) {
  const auto layers = prepare(o);
  const auto results = calibrate_layers(layers, o.pipeline);
  ojson doc{{"seed", o.seed}, {"layers", ojson::array()}};
  for (const auto& r : results) {
    doc["layers"].push_back(to_json(r));
    fmt::print("{:<11} learned threshold {:.2f} (rollout uncertain ratio {:.4f})\n", to_string(r.layer),
               r.learned_threshold, r.rollout_uncertain_ratio);
  }
  const fs::path path = o.out / "calibration.json";
  write_json_file(path, doc);
  fmt::print("output directory: {}\nsummary: {}\n", o.out.string(), path.string());
  return 0;
}

int cmd_calibrate_llm(const Options& o) {
  const auto layers = prepare(o);
  auto llm = make_llm(o);
  const auto results = calibrate_llm_layers(layers, o.pipeline, *llm);
  LlmThresholds thresholds = o.pipeline.llm;
  ojson details = ojson::array();
  for (const auto& r : results) {
    thresholds.tau[layer_index(r.layer)] = r.result.threshold;
    details.push_back(ojson{{"layer", to_string(r.layer)},
                            {"threshold", r.result.threshold},
                            {"failed", r.result.failed},
                            {"precision", r.result.precision},
                            {"recall", r.result.recall},
                            {"samples", r.samples}});
    fmt::print("{:<11} tau_llm {:.2f} precision {:.4f} recall {:.4f} over {} samples{}\n", to_string(r.layer),
               r.result.threshold, r.result.precision, r.result.recall, r.samples,
               r.result.failed ? " (precision floor not reached)" : "");
  }
  ojson doc = to_json(thresholds);
  doc["calibration"] = std::move(details);
  const fs::path path = o.out / "llm_thresholds.json";
  write_json_file(path, doc);
  fmt::print("output directory: {}\nsummary: {}\n", o.out.string(), path.string());
  return 0;
}

int cmd_run(const Options& o) {
  const auto mode = parse_mode(o.mode);
  if (!mode) throw CLI::ValidationError("--mode", "expected static or adaptive");
  const auto layers = prepare(o);
  std::vector<CalibrationResult> calibrations;
  if (*mode == Mode::adaptive) calibrations = calibrations_for(o, layers);
  auto memories = open_memories(o, layers, true);
  auto llm = make_llm(o);
  const ModeRun run = run_mode(*mode, layers, calibrations, o.pipeline, memories, *llm);
  const auto paths = write_outputs(o.out, run.artifacts());
  print_summary(run.summary);
  fmt::print("output directory: {}\nsummary: {}\n", o.out.string(), paths.summary.string());
  return 0;
}

int cmd_compare(const Options& o) {
  const auto layers = prepare(o);
  const auto calibrations = calibrations_for(o, layers);
  const auto memories = open_memories(o, layers, false);
  auto llm = make_llm(o);
  const Comparison c = compare_modes(layers, calibrations, o.pipeline, memories, *llm);
  const auto static_paths = write_outputs(o.out, c.static_run.artifacts());
  const auto adaptive_paths = write_outputs(o.out, c.adaptive_run.artifacts());
  const fs::path cost_path = o.out / (c.static_run.summary.run_id + "_cost_report.json");
  write_json_file(cost_path, to_json(c.cost));

  print_summary(c.static_run.summary);
  print_summary(c.adaptive_run.summary);
  fmt::print("escalations: static {} vs adaptive {} (delta {}, reduction {}%, saving {} at c_event={})\n",
             c.cost.n_static, c.cost.n_adaptive, c.cost.delta, c.cost.reduction_pct_text, c.cost.cost_saving,
             c.cost.c_event);
  fmt::print("output directory: {}\nsummary: {}\nsummary: {}\ncost report: {}\n", o.out.string(),
             static_paths.summary.string(), adaptive_paths.summary.string(), cost_path.string());
  return 0;
}

int cmd_report(const Options& o) {
  const fs::path dir = o.input_dir.empty() ? o.out : fs::path(o.input_dir);
  if (!fs::is_directory(dir)) throw Error(ErrorCode::io_read_failure, dir.string() + " is not a directory");
  std::vector<fs::path> summaries, confidences;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.ends_with("_summary.json")) summaries.push_back(entry.path());
    if (name.ends_with("_confidence.csv")) confidences.push_back(entry.path());
  }
  std::sort(summaries.begin(), summaries.end());
  std::sort(confidences.begin(), confidences.end());
  if (summaries.empty()) throw Error(ErrorCode::io_read_failure, "no *_summary.json under " + dir.string());

  for (const auto& path : summaries) print_summary(load_run_summary(path));

  constexpr int kBins = 10;  // [0.50, 0.55), ..., [0.95, 1.00]
  for (const auto& path : confidences) {
    const auto rows = load_confidence_csv(path);
    std::array<std::array<std::size_t, kBins>, 3> counts{};
    for (const auto& r : rows) {
      const int bin = std::clamp(static_cast<int>((r.confidence - 0.5) * 20.0), 0, kBins - 1);
      ++counts[layer_index(r.layer)][static_cast<std::size_t>(bin)];
    }
    std::string name = path.filename().string();
    name.replace(name.size() - std::string("confidence.csv").size(), std::string::npos, "histogram.csv");
    const fs::path out_path = o.out / name;
    fs::create_directories(o.out);
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io_write_failure, "cannot write " + out_path.string());
    out << "layer,bin_low,bin_high,count\n";
    for (Layer layer : kAllLayers) {
      for (int b = 0; b < kBins; ++b) {
        out << to_string(layer) << ',' << fmt::format("{:.2f},{:.2f}", 0.5 + 0.05 * b, 0.55 + 0.05 * b) << ','
            << counts[layer_index(layer)][static_cast<std::size_t>(b)] << '\n';
      }
    }
    if (!out) throw Error(ErrorCode::io_write_failure, "write failed for " + out_path.string());
    fmt::print("wrote {}\n", out_path.string());
  }
  fmt::print("output directory: {}\nsummary: {}\n", o.out.string(), summaries.back().string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  PipelineConfig& p = o.pipeline;
  RewardConfig& rw = p.qcal.reward;

  CLI::App app{"Three-layer IDS routing engine: confidence gating, attack memory and LLM validation"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "key=value configuration file (flags override it)");

  app.add_option("--seed", o.seed, "Seed for generators, splits, training and calibration")->capture_default_str();
  app.add_option("--out", o.out, "Output directory")->capture_default_str();
  app.add_option("--mock-llm", o.mock_llm, "JSONL table of canned LLM responses keyed by prompt sha256");
  app.add_option("--llm-url", o.llm_url, "Ollama base URL")->capture_default_str();
  app.add_option("--llm-model", o.llm_model, "Ollama model name")->capture_default_str();
  app.add_option("--llm-timeout-ms", o.llm_timeout_ms, "Per-request LLM timeout")->capture_default_str();
  app.add_option("--layers", o.layers, "Layers to process (network, host, hypervisor)")->delimiter(',')->capture_default_str();
  app.add_flag("-v,--verbose", o.verbose, "Debug logging");

  app.add_option("--data", o.data_dir, "Directory written by `gen` (default: generate in memory)");
  app.add_option("--replay", o.replay_csv, "Replay CSV of precomputed scores (event_id,layer,pred_label,confidence,truth)");
  app.add_option("--calibration", o.calibration_file, "calibration.json from `calibrate` (default: calibrate now)");
  app.add_option("--llm-thresholds", o.llm_thresholds_file, "llm_thresholds.json from `calibrate-llm`");
  app.add_option("--memory-dir", o.memory_dir, "Attack-memory directory (default: <out>/memory)");

  app.add_option("--count", o.count, "Events per generated network/host corpus")->capture_default_str();
  app.add_option("--net-separation", o.net_separation, "Network class separation")->capture_default_str();
  app.add_option("--host-separation", o.host_separation, "Host template separation")->capture_default_str();
  app.add_option("--host-decoy-rate", o.host_decoy_rate, "Host decoy-token rate")->capture_default_str();

  app.add_option("--static-threshold", p.static_threshold, "Gate-1 threshold in STATIC mode")->capture_default_str();
  app.add_option("--eval-count", p.eval_count, "Held-out events routed per layer")->capture_default_str();
  app.add_option("--c-event", p.c_event, "Cost per LLM escalation")->capture_default_str();
  app.add_option("--llm-batch", p.llm_batch, "Uncertain events per LLM batch")->capture_default_str();
  app.add_option("--llm-parallelism", p.llm_parallelism, "Concurrent LLM calls")->capture_default_str();
  app.add_flag("--parallel-layers", p.parallel_layers, "Run layers concurrently");
  app.add_option("--tau-network", p.llm.tau[0], "Direct LLM threshold, network")->capture_default_str();
  app.add_option("--tau-host", p.llm.tau[1], "Direct LLM threshold, host")->capture_default_str();
  app.add_option("--tau-hypervisor", p.llm.tau[2], "Direct LLM threshold, hypervisor")->capture_default_str();
  app.add_option("--p-min", p.llm.p_min, "Precision floor for LLM threshold calibration")->capture_default_str();
  app.add_option("--w-model", p.fusion.w_model, "Fusion weight of the classifier")->capture_default_str();
  app.add_option("--w-llm", p.fusion.w_llm, "Fusion weight of the LLM")->capture_default_str();

  app.add_option("--episodes", p.qcal.episodes, "Q-learning episodes")->capture_default_str();
  app.add_option("--window", p.qcal.window, "Q-learning window size")->capture_default_str();
  app.add_option("--alpha", p.qcal.alpha, "Q-learning rate")->capture_default_str();
  app.add_option("--gamma", p.qcal.gamma, "Q-learning discount")->capture_default_str();
  app.add_option("--reward-correct", rw.correct_known, "Reward: correct KNOWN")->capture_default_str();
  app.add_option("--reward-wrong-benign", rw.wrong_known_benign, "Reward: false alarm accepted")->capture_default_str();
  app.add_option("--reward-wrong-attack", rw.wrong_known_attack, "Reward: missed attack accepted")->capture_default_str();
  app.add_option("--reward-escalate", rw.escalate, "Reward: escalation")->capture_default_str();
  app.add_option("--reward-band-penalty", rw.band_penalty, "Reward: uncertain band overflow")->capture_default_str();
  app.add_option("--band-max", rw.band_max, "Uncertain ratio above which the band penalty applies")->capture_default_str();

  auto* gen = app.add_subcommand("gen", "Write synthetic corpora to --out");
  auto* calibrate = app.add_subcommand("calibrate", "Learn Gate-1 thresholds; writes calibration.json");
  auto* calibrate_llm = app.add_subcommand("calibrate-llm", "Pick LLM thresholds; writes llm_thresholds.json");
  auto* run = app.add_subcommand("run", "Run one mode over the selected layers");
  run->add_option("--mode", o.mode, "static or adaptive")->capture_default_str();
  auto* compare = app.add_subcommand("compare", "Run static and adaptive modes and the cost analysis");
  auto* report = app.add_subcommand("report", "Re-render summaries and confidence histograms");
  report->add_option("--in", o.input_dir, "Directory holding run outputs (default: --out)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  spdlog::set_level(o.verbose ? spdlog::level::debug : spdlog::level::warn);
  try {
    apply_llm_thresholds(o);
    p.fusion.tau_fusion = p.llm.tau;
    p.seed = o.seed;
    p.validate();
    if (*gen) return cmd_gen(o);
    if (*calibrate) return cmd_calibrate(o);
    if (*calibrate_llm) return cmd_calibrate_llm(o);
    if (*run) return cmd_run(o);
    if (*compare) return cmd_compare(o);
    if (*report) return cmd_report(o);
  } catch (const CLI::ValidationError& e) {
    fmt::print(stderr, "usage error: {}\n", e.what());
    return 2;
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return e.code() == ErrorCode::bad_config ? 2 : 1;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 2;
}
