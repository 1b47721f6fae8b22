#include "layerguard/outputs.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <fstream>

#include "layerguard/corpus.hpp"
#include "layerguard/error.hpp"
#include "layerguard/text.hpp"

namespace layerguard {

std::string_view to_string(Mode mode) noexcept {
  return mode == Mode::adaptive ? "ADAPTIVE" : "STATIC";
}

std::optional<Mode> parse_mode(std::string_view text) noexcept {
  std::string t(text);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (t == "static") return Mode::static_threshold;
  if (t == "adaptive" || t == "rl") return Mode::adaptive;
  return std::nullopt;
}

namespace {

template <typename T>
ojson optional_json(const std::optional<T>& v) {
  return v ? ojson(*v) : ojson(nullptr);
}

template <typename T>
std::optional<T> optional_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

ojson trace_json(const std::vector<GateRecord>& trace) {
  ojson arr = ojson::array();
  for (const auto& g : trace) {
    arr.push_back(ojson{{"gate", static_cast<int>(g.gate)}, {"decision", g.decision}, {"score", g.score}});
  }
  return arr;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw Error(ErrorCode::io_write_failure, "cannot create " + path.parent_path().string());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_write_failure, "cannot write " + path.string());
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw Error(ErrorCode::io_write_failure, "write failed for " + path.string());
}

}  // namespace

// ---------------------------------------------------------------- json

ojson to_json(const Metrics& m) {
  return ojson{{"tp", m.tp},
               {"fp", m.fp},
               {"fn", m.fn},
               {"tn", m.tn},
               {"accuracy", m.accuracy},
               {"precision", m.precision},
               {"recall", m.recall},
               {"f1", m.f1}};
}

Metrics metrics_from_json(const nlohmann::json& j) {
  Metrics m;
  m.tp = j.at("tp").get<std::size_t>();
  m.fp = j.at("fp").get<std::size_t>();
  m.fn = j.at("fn").get<std::size_t>();
  m.tn = j.at("tn").get<std::size_t>();
  m.accuracy = j.at("accuracy").get<double>();
  m.precision = j.at("precision").get<double>();
  m.recall = j.at("recall").get<double>();
  m.f1 = j.at("f1").get<double>();
  return m;
}

ojson to_json(const LayerSummary& s) {
  return ojson{{"layer", s.layer},
               {"total", s.total},
               {"known", s.known},
               {"uncertain", s.uncertain},
               {"memory_matched", s.memory_matched},
               {"llm_calls", s.llm_calls},
               {"llm_failures", s.llm_failures},
               {"llm_attack", s.llm_attack},
               {"llm_attack_direct", s.llm_attack_direct},
               {"llm_attack_fusion", s.llm_attack_fusion},
               {"llm_benign", s.llm_benign},
               {"llm_unsure", s.llm_unsure},
               {"fusion_rejected", s.fusion_rejected},
               {"bucket", s.bucket},
               {"gate1_threshold", s.gate1_threshold},
               {"learned_threshold", optional_json(s.learned_threshold)},
               {"llm_threshold", optional_json(s.llm_threshold)},
               {"metrics", s.metrics ? to_json(*s.metrics) : ojson(nullptr)},
               {"deferred", s.deferred}};
}

LayerSummary layer_summary_from_json(const nlohmann::json& j) {
  LayerSummary s;
  s.layer = j.at("layer").get<std::string>();
  s.total = j.at("total").get<std::size_t>();
  s.known = j.at("known").get<std::size_t>();
  s.uncertain = j.at("uncertain").get<std::size_t>();
  s.memory_matched = j.at("memory_matched").get<std::size_t>();
  s.llm_calls = j.at("llm_calls").get<std::size_t>();
  s.llm_failures = j.at("llm_failures").get<std::size_t>();
  s.llm_attack = j.at("llm_attack").get<std::size_t>();
  s.llm_attack_direct = j.at("llm_attack_direct").get<std::size_t>();
  s.llm_attack_fusion = j.at("llm_attack_fusion").get<std::size_t>();
  s.llm_benign = j.at("llm_benign").get<std::size_t>();
  s.llm_unsure = j.at("llm_unsure").get<std::size_t>();
  s.fusion_rejected = j.at("fusion_rejected").get<std::size_t>();
  s.bucket = j.at("bucket").get<std::size_t>();
  s.gate1_threshold = j.at("gate1_threshold").get<double>();
  s.learned_threshold = optional_from<double>(j, "learned_threshold");
  s.llm_threshold = optional_from<double>(j, "llm_threshold");
  if (j.contains("metrics") && !j.at("metrics").is_null()) s.metrics = metrics_from_json(j.at("metrics"));
  s.deferred = j.at("deferred").get<std::size_t>();
  return s;
}

ojson to_json(const RunSummary& s) {
  ojson layers = ojson::array();
  for (const auto& l : s.layers) layers.push_back(to_json(l));
  return ojson{{"run_id", s.run_id},
               {"mode", to_string(s.mode)},
               {"seed", s.seed},
               {"started_at", format_rfc3339(s.started_at)},
               {"finished_at", format_rfc3339(s.finished_at)},
               {"layers", std::move(layers)},
               {"overall", to_json(s.overall)}};
}

RunSummary run_summary_from_json(const nlohmann::json& j) {
  RunSummary s;
  s.run_id = j.at("run_id").get<std::string>();
  auto mode = parse_mode(j.at("mode").get<std::string>());
  if (!mode) throw Error(ErrorCode::parse_failure, "unknown mode in run summary");
  s.mode = *mode;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.started_at = parse_rfc3339(j.at("started_at").get<std::string>());
  s.finished_at = parse_rfc3339(j.at("finished_at").get<std::string>());
  for (const auto& l : j.at("layers")) s.layers.push_back(layer_summary_from_json(l));
  s.overall = layer_summary_from_json(j.at("overall"));
  return s;
}

ojson to_json(const CostReport& r) {
  return ojson{{"n_static", r.n_static},
               {"n_adaptive", r.n_adaptive},
               {"delta", r.delta},
               {"reduction_pct", r.reduction_pct},
               {"reduction_pct_text", r.reduction_pct_text},
               {"c_event", r.c_event},
               {"cost_static", r.cost_static},
               {"cost_adaptive", r.cost_adaptive},
               {"cost_saving", r.cost_saving}};
}

CostReport cost_report_from_json(const nlohmann::json& j) {
  CostReport r;
  r.n_static = j.at("n_static").get<std::size_t>();
  r.n_adaptive = j.at("n_adaptive").get<std::size_t>();
  r.delta = j.at("delta").get<std::int64_t>();
  r.reduction_pct = j.at("reduction_pct").get<double>();
  r.reduction_pct_text = j.at("reduction_pct_text").get<std::string>();
  r.c_event = j.at("c_event").get<double>();
  r.cost_static = j.at("cost_static").get<double>();
  r.cost_adaptive = j.at("cost_adaptive").get<double>();
  r.cost_saving = j.at("cost_saving").get<double>();
  return r;
}

ojson to_json(const ReviewRecord& r) {
  return ojson{{"event_id", r.event_id},
               {"layer", to_string(r.layer)},
               {"model_label", r.model_label},
               {"model_confidence", r.model_confidence},
               {"llm_label", r.llm_label},
               {"llm_confidence", r.llm_confidence},
               {"attack_type", r.attack_type},
               {"explanation", r.explanation},
               {"fused_score", optional_json(r.fused_score)},
               {"gate_trace", trace_json(r.gate_trace)},
               {"created_at", format_rfc3339(r.created_at)}};
}

ojson to_json(const AuditRecord& r) {
  return ojson{{"event_id", r.event_id},
               {"layer", to_string(r.layer)},
               {"gate", r.gate},
               {"model_label", r.model_label},
               {"model_confidence", r.model_confidence},
               {"matched", r.matched},
               {"nearest_distance", r.nearest_distance},
               {"support", r.support},
               {"meta_confidence", r.meta_confidence},
               {"prompt_sha256", optional_json(r.prompt_sha256)},
               {"llm_label", optional_json(r.llm_label)},
               {"llm_confidence", optional_json(r.llm_confidence)},
               {"attack_type", optional_json(r.attack_type)},
               {"failure", optional_json(r.failure)},
               {"decision", optional_json(r.decision)},
               {"provenance", optional_json(r.provenance)},
               {"fused_score", optional_json(r.fused_score)},
               {"created_at", format_rfc3339(r.created_at)}};
}

ojson to_json(const CalibrationResult& r) {
  ojson histogram = ojson::array();
  for (std::size_t a = 0; a < r.thresholds.size(); ++a) {
    histogram.push_back(ojson{{"threshold", r.thresholds[a]},
                              {"count", a < r.action_histogram.size() ? r.action_histogram[a] : 0}});
  }
  return ojson{{"layer", to_string(r.layer)},
               {"learned_threshold", r.learned_threshold},
               {"learned_action", r.learned_action},
               {"episodes", r.episodes},
               {"seed", r.seed},
               {"rollout_uncertain_ratio", r.rollout_uncertain_ratio},
               {"action_histogram", std::move(histogram)}};
}

CalibrationResult calibration_from_json(const nlohmann::json& j) {
  CalibrationResult r;
  const auto layer = parse_layer(j.at("layer").get<std::string>());
  if (!layer) throw Error(ErrorCode::parse_failure, "unknown layer in calibration result");
  r.layer = *layer;
  r.learned_threshold = j.at("learned_threshold").get<double>();
  r.learned_action = j.at("learned_action").get<std::size_t>();
  r.episodes = j.at("episodes").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.rollout_uncertain_ratio = j.at("rollout_uncertain_ratio").get<double>();
  for (const auto& h : j.at("action_histogram")) {
    r.thresholds.push_back(h.at("threshold").get<double>());
    r.action_histogram.push_back(h.at("count").get<std::size_t>());
  }
  return r;
}

ojson to_json(const LlmThresholds& t) {
  ojson tau = ojson::object();
  for (Layer l : kAllLayers) tau[std::string(to_string(l))] = t.for_layer(l);
  return ojson{{"p_min", t.p_min}, {"tau", std::move(tau)}};
}

LlmThresholds llm_thresholds_from_json(const nlohmann::json& j, LlmThresholds base) {
  if (j.contains("p_min")) base.p_min = j.at("p_min").get<double>();
  if (j.contains("tau")) {
    for (const auto& [key, value] : j.at("tau").items()) {
      const auto layer = parse_layer(key);
      if (!layer) throw Error(ErrorCode::parse_failure, "unknown layer '" + key + "' in LLM thresholds");
      base.tau[layer_index(*layer)] = value.get<double>();
    }
  }
  base.validate();
  return base;
}

// ---------------------------------------------------------------- files

OutputPaths output_paths(const std::filesystem::path& dir, const std::string& run_id, Mode mode) {
  std::string m(to_string(mode));
  std::transform(m.begin(), m.end(), m.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  const std::string prefix = run_id + "_" + m + "_";
  return {dir / (prefix + "summary.json"), dir / (prefix + "confidence.csv"), dir / (prefix + "audit.jsonl"),
          dir / (prefix + "review.jsonl")};
}

void write_json_file(const std::filesystem::path& path, const ojson& value) {
  auto out = open_for_write(path);
  out << value.dump(2) << '\n';
  finish(out, path);
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_read_failure, "cannot read " + path.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::parse_failure, path.string() + " is not valid JSON");
  return j;
}

OutputPaths write_outputs(const std::filesystem::path& dir, const RunArtifacts& artifacts) {
  const auto paths = output_paths(dir, artifacts.summary.run_id, artifacts.summary.mode);

  {
    auto out = open_for_write(paths.confidence);
    out << "event_id,layer,pred_label,confidence,truth,route\n";
    for (const auto& r : artifacts.confidence) {
      out << csv_escape(r.event_id) << ',' << to_string(r.layer) << ',' << r.pred_label << ','
          << fmt::format("{}", r.confidence) << ',' << (r.truth ? std::to_string(*r.truth) : std::string()) << ','
          << to_string(r.route) << '\n';
    }
    finish(out, paths.confidence);
  }
  {
    auto out = open_for_write(paths.audit);
    for (const auto& r : artifacts.audit) out << to_json(r).dump() << '\n';
    finish(out, paths.audit);
  }
  {
    auto out = open_for_write(paths.review);
    for (const auto& r : artifacts.review) out << to_json(r).dump() << '\n';
    finish(out, paths.review);
  }
  write_json_file(paths.summary, to_json(artifacts.summary));
  return paths;
}

RunSummary load_run_summary(const std::filesystem::path& path) {
  try {
    return run_summary_from_json(read_json_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse_failure, path.string() + ": " + e.what());
  }
}

std::vector<ConfidenceRow> load_confidence_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_read_failure, "cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<ConfidenceRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 6) throw Error(ErrorCode::parse_failure, fmt::format("{}:{}: expected 6 fields", path.string(), lineno));
    ConfidenceRow r;
    r.event_id = f[0];
    const auto layer = parse_layer(f[1]);
    const auto sink = parse_sink(f[5]);
    if (!layer || !sink) throw Error(ErrorCode::parse_failure, fmt::format("{}:{}: bad layer or route", path.string(), lineno));
    r.layer = *layer;
    r.route = *sink;
    try {
      r.pred_label = std::stoi(f[2]);
      r.confidence = std::stod(f[3]);
      if (!f[4].empty()) r.truth = std::stoi(f[4]);
    } catch (const std::exception&) {
      throw Error(ErrorCode::parse_failure, fmt::format("{}:{}: bad numeric field", path.string(), lineno));
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace layerguard
