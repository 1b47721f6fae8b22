#include "layerguard/llm.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "layerguard/text.hpp"

namespace layerguard {

void LlmThresholds::validate() const {
  for (double t : tau) {
    if (!(t > 0.0 && t < 1.0)) throw Error(ErrorCode::bad_config, fmt::format("LLM threshold {} outside (0,1)", t));
  }
  if (!(p_min > 0.0 && p_min < 1.0)) throw Error(ErrorCode::bad_config, "p_min must lie in (0,1)");
}

FusionConfig FusionConfig::aligned_with(const LlmThresholds& thresholds) {
  FusionConfig fc;
  fc.tau_fusion = thresholds.tau;
  return fc;
}

void FusionConfig::validate() const {
  if (!(w_model >= 0.0 && w_llm >= 0.0) || std::abs(w_model + w_llm - 1.0) > 1e-9) {
    throw Error(ErrorCode::bad_weights, fmt::format("fusion weights ({}, {}) must be >= 0 and sum to 1", w_model, w_llm));
  }
}

std::string build_prompt(const ScoredEvent& event, const MatchResult& gate2) {
  const Layer layer = event.event.layer;
  std::string payload = event.event.raw.empty() ? std::string("(no payload)") : event.event.raw;
  std::replace(payload.begin(), payload.end(), '\n', ' ');

  std::string memory;
  if (!gate2.nearest_id) {
    memory = "attack memory is empty; no prior confirmed attack to compare against";
  } else {
    memory = fmt::format("nearest confirmed attack '{}' ({}) at cosine distance {:.4f}; support={}; meta_confidence={:.4f}",
                         *gate2.nearest_id, gate2.nearest_attack_type.empty() ? "unknown" : gate2.nearest_attack_type,
                         gate2.nearest_distance, gate2.support, gate2.meta_confidence);
  }

  return fmt::format(
      "You are a security analyst triaging an uncertain {tag} intrusion-detection event.\n"
      "Event ID: {id}\n"
      "Layer: {layer}\n"
      "Event: {payload}\n"
      "Base classifier: label={label} confidence={conf:.4f}\n"
      "Attack memory: {memory}\n"
      "Decide whether this event is an attack. Respond with a single JSON object and nothing else, "
      "with keys \"label\" (one of ATTACK, BENIGN, UNSURE), \"confidence\" (a number between 0 and 1), "
      "\"attack_type\" (short name, empty if benign) and \"explanation\" (one or two sentences).\n",
      fmt::arg("tag", ids_tag(layer)), fmt::arg("id", event.event.id), fmt::arg("layer", to_string(layer)),
      fmt::arg("payload", payload), fmt::arg("label", event.pred_label == 1 ? "ATTACK" : "BENIGN"),
      fmt::arg("conf", event.confidence), fmt::arg("memory", memory));
}

// ---------------------------------------------------------------- mock

MockLlmClient::MockLlmClient(std::unordered_map<std::string, std::string> table, std::string default_response)
    : table_(std::move(table)), default_response_(std::move(default_response)) {}

MockLlmClient MockLlmClient::load(const std::filesystem::path& path, std::string default_response) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_read_failure, "cannot read mock LLM table " + path.string());
  std::unordered_map<std::string, std::string> table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      table[j.at("prompt_sha256").get<std::string>()] = j.at("response").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::parse_failure, fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
  return MockLlmClient(std::move(table), std::move(default_response));
}

std::string MockLlmClient::complete(const std::string& prompt) {
  if (auto it = table_.find(sha256_hex(prompt)); it != table_.end()) return it->second;
  return default_response_;
}

void MockLlmClient::add(const std::string& prompt, std::string response) {
  table_[sha256_hex(prompt)] = std::move(response);
}

LlmCall call_llm(LlmClient& client, const std::string& prompt) {
  LlmCall call;
  try {
    call.raw = client.complete(prompt);
  } catch (const Error& e) {
    call.failure = e.code() == ErrorCode::llm_http_error ? ErrorCode::llm_http_error : ErrorCode::llm_timeout;
    call.failure_message = e.what();
    spdlog::warn("LLM call failed: {}", e.what());
  }
  return call;
}

// ---------------------------------------------------------------- parsing

namespace {

// Index one past the '}' closing the object opened at text[start], or npos.
std::size_t object_end(std::string_view text, std::size_t start) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

std::string as_text(const nlohmann::json& j) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_null()) return {};
  return j.dump();
}

double as_confidence(const nlohmann::json& j) {
  double c = 0.0;
  if (j.is_number()) {
    c = j.get<double>();
  } else if (j.is_string()) {
    try {
      c = std::stod(j.get<std::string>());
    } catch (const std::exception&) {
      c = 0.0;
    }
  }
  if (!std::isfinite(c)) return 0.0;
  if (c < 0.0 || c > 1.0) {
    spdlog::warn("LLM confidence {} outside [0,1]; clamping", c);
    c = std::clamp(c, 0.0, 1.0);
  }
  return c;
}

}  // namespace

LlmVerdict parse_verdict(std::string_view raw) {
  LlmVerdict verdict;
  verdict.raw = std::string(raw);
  for (std::size_t start = raw.find('{'); start != std::string_view::npos; start = raw.find('{', start + 1)) {
    const std::size_t end = object_end(raw, start);
    if (end == std::string_view::npos) continue;
    nlohmann::json j = nlohmann::json::parse(raw.substr(start, end - start), nullptr, false);
    if (j.is_discarded() || !j.is_object()) continue;

    const nlohmann::json* label = nullptr;
    for (const char* key : {"label", "decision", "verdict"}) {
      if (j.contains(key)) {
        label = &j[key];
        break;
      }
    }
    if (label != nullptr && label->is_string()) {
      verdict.decision = parse_verdict_label(label->get<std::string>()).value_or(Verdict::unsure);
    }
    if (j.contains("confidence")) verdict.confidence = as_confidence(j["confidence"]);
    if (j.contains("attack_type")) verdict.attack_type = as_text(j["attack_type"]);
    if (j.contains("explanation")) verdict.explanation = as_text(j["explanation"]);
    if (label == nullptr || !label->is_string()) verdict.confidence = 0.0;
    return verdict;
  }
  return verdict;
}

// ---------------------------------------------------------------- calibration

std::vector<double> default_llm_grid() {
  std::vector<double> grid;
  for (int c = 5; c <= 95; ++c) grid.push_back(c / 100.0);
  return grid;
}

LlmCalibration calibrate_llm_threshold(std::span<const LlmCalibrationSample> samples, double p_min,
                                       std::span<const double> grid) {
  if (grid.empty()) throw Error(ErrorCode::bad_config, "empty calibration grid");
  std::size_t positives = 0;
  for (const auto& s : samples) positives += s.truth == 1 ? 1 : 0;
  if (positives == 0) throw Error(ErrorCode::no_labeled_events, "calibration samples contain no true attack");

  std::vector<double> candidates(grid.begin(), grid.end());
  std::sort(candidates.begin(), candidates.end());

  std::optional<LlmCalibration> best;
  for (double t : candidates) {
    std::size_t tp = 0, fp = 0;
    for (const auto& s : samples) {
      if (s.decision == Verdict::attack && s.confidence >= t) {
        (s.truth == 1 ? tp : fp) += 1;
      }
    }
    const double precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(positives);
    if (precision < p_min) continue;
    if (!best || recall > best->recall) best = LlmCalibration{t, false, precision, recall};
  }
  if (best) return *best;

  LlmCalibration failed{candidates.back(), true, 0.0, 0.0};
  std::size_t tp = 0, fp = 0;
  for (const auto& s : samples) {
    if (s.decision == Verdict::attack && s.confidence >= failed.threshold) (s.truth == 1 ? tp : fp) += 1;
  }
  failed.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  failed.recall = static_cast<double>(tp) / static_cast<double>(positives);
  spdlog::warn("no LLM threshold reaches precision {:.2f}; falling back to {:.2f}", p_min, failed.threshold);
  return failed;
}

// ---------------------------------------------------------------- decisions

Verdict direct_decide(const LlmVerdict& verdict, Layer layer, const LlmThresholds& thresholds) {
  if (verdict.confidence >= thresholds.for_layer(layer)) {
    if (verdict.decision == Verdict::attack) return Verdict::attack;
    if (verdict.decision == Verdict::benign) return Verdict::benign;
  }
  return Verdict::unsure;
}

double fuse(double c_model, double c_llm, const FusionConfig& config) {
  config.validate();
  return config.w_model * c_model + config.w_llm * c_llm;
}

std::optional<FallbackDecision> fallback_decide(const ScoredEvent& event, const LlmVerdict& verdict, Layer layer,
                                                const FusionConfig& fusion, const LlmThresholds& thresholds) {
  if (verdict.decision != Verdict::attack || verdict.confidence >= thresholds.for_layer(layer)) {
    return std::nullopt;
  }
  const double s = fuse(event.confidence, verdict.confidence, fusion);
  return s >= fusion.threshold_for(layer) ? FallbackDecision::attack : FallbackDecision::review;
}

std::string_view to_string(Provenance provenance) noexcept {
  switch (provenance) {
    case Provenance::direct: return "DIRECT";
    case Provenance::fusion: return "FUSION";
    case Provenance::none: return "NONE";
  }
  return "NONE";
}

Gate3Decision gate3_decide(const ScoredEvent& event, const LlmVerdict& verdict, Layer layer,
                           const LlmThresholds& thresholds, const FusionConfig& fusion) {
  Gate3Decision d;
  d.direct = direct_decide(verdict, layer, thresholds);
  if (d.direct == Verdict::attack) {
    d.sink = Sink::llm_attack;
    d.provenance = Provenance::direct;
    return d;
  }
  if (d.direct == Verdict::unsure) {
    if (auto fb = fallback_decide(event, verdict, layer, fusion, thresholds)) {
      d.fused_score = fuse(event.confidence, verdict.confidence, fusion);
      if (*fb == FallbackDecision::attack) {
        d.sink = Sink::llm_attack;
        d.provenance = Provenance::fusion;
        return d;
      }
      d.fusion_rejected = true;
    }
  }
  d.sink = Sink::review_bucket;
  d.provenance = Provenance::none;
  return d;
}

}  // namespace layerguard
