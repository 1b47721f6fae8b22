#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "layerguard/error.hpp"
#include "layerguard/event.hpp"
#include "layerguard/memory.hpp"

namespace layerguard {

struct LlmVerdict {
  Verdict decision = Verdict::unsure;
  double confidence = 0.0;
  std::string attack_type;
  std::string explanation;
  std::string raw;
};

// Per-layer direct-decision thresholds, indexed by layer_index().
struct LlmThresholds {
  std::array<double, 3> tau{0.69, 0.61, 0.89};
  double p_min = 0.80;

  double for_layer(Layer layer) const { return tau[layer_index(layer)]; }
  void validate() const;
};

struct FusionConfig {
  double w_model = 0.20;
  double w_llm = 0.80;
  std::array<double, 3> tau_fusion{0.69, 0.61, 0.89};

  // Fusion thresholds equal to the per-layer LLM thresholds.
  static FusionConfig aligned_with(const LlmThresholds& thresholds);
  double threshold_for(Layer layer) const { return tau_fusion[layer_index(layer)]; }
  void validate() const;
};

// Layer-aware prompt; byte-identical for identical inputs.
std::string build_prompt(const ScoredEvent& event, const MatchResult& gate2);

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  // Returns the model's raw text. Throws Error(llm_timeout | llm_http_error).
  // The pipeline calls this from several threads at once.
  virtual std::string complete(const std::string& prompt) = 0;
};

// Ollama-compatible /api/generate client.
class OllamaClient final : public LlmClient {
 public:
  struct Options {
    std::string base_url = "http://localhost:11434";
    std::string model = "llama3";
    std::chrono::milliseconds timeout{30000};
    int retries = 2;
    std::chrono::milliseconds backoff{500};  // doubled after every failed attempt
  };

  explicit OllamaClient(Options options);
  std::string complete(const std::string& prompt) override;

  const Options& options() const noexcept { return options_; }

 private:
  Options options_;
};

// Table-driven stand-in: responses keyed by sha256(prompt); unmatched prompts
// receive default_response.
class MockLlmClient final : public LlmClient {
 public:
  static constexpr std::string_view kDefaultResponse =
      R"({"label":"UNSURE","confidence":0.0,"attack_type":"","explanation":"no canned response"})";

  explicit MockLlmClient(std::unordered_map<std::string, std::string> table = {},
                         std::string default_response = std::string(kDefaultResponse));

  // JSONL lines of {"prompt_sha256": <hex>, "response": <text>}.
  static MockLlmClient load(const std::filesystem::path& path,
                            std::string default_response = std::string(kDefaultResponse));

  std::string complete(const std::string& prompt) override;

  void add(const std::string& prompt, std::string response);
  std::size_t size() const noexcept { return table_.size(); }

 private:
  std::unordered_map<std::string, std::string> table_;
  std::string default_response_;
};

struct LlmCall {
  std::string raw;
  std::optional<ErrorCode> failure;  // llm_timeout or llm_http_error
  std::string failure_message;
};

// Never throws for transport failures; they come back in LlmCall::failure.
LlmCall call_llm(LlmClient& client, const std::string& prompt);

// Total: takes the first parseable JSON object in the text. Anything
// unparseable becomes (UNSURE, 0) with raw preserved.
LlmVerdict parse_verdict(std::string_view raw);

struct LlmCalibrationSample {
  double confidence = 0.0;
  Verdict decision = Verdict::unsure;
  int truth = 0;
};

struct LlmCalibration {
  double threshold = 0.0;
  bool failed = false;  // no candidate met the precision floor
  double precision = 0.0;
  double recall = 0.0;
};

// 0.05, 0.06, ..., 0.95
std::vector<double> default_llm_grid();

// argmax_t recall(t) subject to precision(t) >= p_min, where the LLM predicts
// attack iff decision = ATTACK and confidence >= t. Equal recall resolves to
// the lowest t. With no feasible t the highest candidate is returned with
// failed = true.
LlmCalibration calibrate_llm_threshold(std::span<const LlmCalibrationSample> samples, double p_min,
                                       std::span<const double> grid);

Verdict direct_decide(const LlmVerdict& verdict, Layer layer, const LlmThresholds& thresholds);

// w_model * c_model + w_llm * c_llm. Throws Error(bad_weights).
double fuse(double c_model, double c_llm, const FusionConfig& config);

enum class FallbackDecision { attack, review };

// Only applicable to ATTACK verdicts below the direct threshold; returns
// nullopt otherwise.
std::optional<FallbackDecision> fallback_decide(const ScoredEvent& event, const LlmVerdict& verdict, Layer layer,
                                                const FusionConfig& fusion, const LlmThresholds& thresholds);

enum class Provenance { direct, fusion, none };

std::string_view to_string(Provenance provenance) noexcept;

struct Gate3Decision {
  Sink sink = Sink::review_bucket;
  Provenance provenance = Provenance::none;
  Verdict direct = Verdict::unsure;
  std::optional<double> fused_score;
  bool fusion_rejected = false;
};

Gate3Decision gate3_decide(const ScoredEvent& event, const LlmVerdict& verdict, Layer layer,
                           const LlmThresholds& thresholds, const FusionConfig& fusion);

}  // namespace layerguard
