#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "layerguard/event.hpp"

namespace layerguard {

enum class Mode { static_threshold, adaptive };

std::string_view to_string(Mode mode) noexcept;  // "STATIC" / "ADAPTIVE"
std::optional<Mode> parse_mode(std::string_view text) noexcept;

struct Metrics {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  bool operator==(const Metrics&) const = default;
};

// Routing tallies for one layer (or the overall aggregate).
//   total = known + uncertain
//   uncertain = memory_matched + llm_attack + llm_benign + llm_unsure
//   bucket = llm_benign + llm_unsure
// llm_unsure counts every non-promoted, non-BENIGN Gate-3 outcome, which
// includes the fusion_rejected subset.
struct LayerSummary {
  std::string layer;  // layer name or "overall"
  std::size_t total = 0;
  std::size_t known = 0;
  std::size_t uncertain = 0;
  std::size_t memory_matched = 0;
  std::size_t llm_calls = 0;
  std::size_t llm_failures = 0;
  std::size_t llm_attack = 0;
  std::size_t llm_attack_direct = 0;
  std::size_t llm_attack_fusion = 0;
  std::size_t llm_benign = 0;
  std::size_t llm_unsure = 0;
  std::size_t fusion_rejected = 0;
  std::size_t bucket = 0;
  double gate1_threshold = 0.0;
  std::optional<double> learned_threshold;
  std::optional<double> llm_threshold;
  std::optional<Metrics> metrics;  // absent when no event carries truth
  std::size_t deferred = 0;        // bucket events scored by their base prediction

  bool operator==(const LayerSummary&) const = default;
};

struct RunSummary {
  std::string run_id;
  Mode mode = Mode::static_threshold;
  std::uint64_t seed = 0;
  std::vector<LayerSummary> layers;
  LayerSummary overall;
  std::int64_t started_at = 0;
  std::int64_t finished_at = 0;

  bool operator==(const RunSummary&) const = default;
};

struct CostReport {
  std::size_t n_static = 0;
  std::size_t n_adaptive = 0;
  std::int64_t delta = 0;
  double reduction_pct = 0.0;
  std::string reduction_pct_text;  // exact rational rounded half-up to 2 dp
  double c_event = 0.0;
  double cost_static = 0.0;
  double cost_adaptive = 0.0;
  double cost_saving = 0.0;

  bool operator==(const CostReport&) const = default;
};

struct ReviewRecord {
  std::string event_id;
  Layer layer = Layer::network;
  int model_label = 0;
  double model_confidence = 0.0;
  std::string llm_label;
  double llm_confidence = 0.0;
  std::string attack_type;
  std::string explanation;
  std::optional<double> fused_score;
  std::vector<GateRecord> gate_trace;
  std::int64_t created_at = 0;
};

// One line of the uncertain-event audit log: every Gate-2 / Gate-3 interaction.
struct AuditRecord {
  std::string event_id;
  Layer layer = Layer::network;
  int gate = 2;
  double model_confidence = 0.0;
  int model_label = 0;
  bool matched = false;
  double nearest_distance = 0.0;
  std::size_t support = 0;
  double meta_confidence = 0.0;
  std::optional<std::string> prompt_sha256;
  std::optional<std::string> llm_label;
  std::optional<double> llm_confidence;
  std::optional<std::string> attack_type;
  std::optional<std::string> failure;
  std::optional<std::string> decision;
  std::optional<std::string> provenance;
  std::optional<double> fused_score;
  std::int64_t created_at = 0;
};

}  // namespace layerguard
