#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "layerguard/event.hpp"
#include "layerguard/llm.hpp"
#include "layerguard/memory.hpp"
#include "layerguard/outputs.hpp"
#include "layerguard/qcal.hpp"
#include "layerguard/records.hpp"
#include "layerguard/scoring.hpp"

namespace layerguard {

// Seconds since the epoch. Injected so runs can be made reproducible.
using Clock = std::function<std::int64_t()>;

// SOURCE_DATE_EPOCH when set, the wall clock otherwise.
std::int64_t default_clock();

struct PipelineConfig {
  Mode mode = Mode::static_threshold;
  double static_threshold = 0.85;
  std::size_t eval_count = 5000;
  MatchConfig gate2;
  LlmThresholds llm;
  FusionConfig fusion;
  CalibrationConfig qcal;
  TrainingConfig training;
  std::uint64_t seed = 0;
  double c_event = 1.0;
  // Uncertain events that miss memory are sent to the LLM in batches of
  // llm_batch. Gate-2 sees the memory as it stood when the batch opened, so
  // outcomes do not depend on llm_parallelism.
  std::size_t llm_batch = 8;
  std::size_t llm_parallelism = 4;
  bool parallel_layers = false;

  void validate() const;
};

// ---------------------------------------------------------------- preparation

// One layer's scored streams. calibration feeds the Q-learner (and LLM
// threshold calibration); eval is what gets routed.
struct PreparedLayer {
  Layer layer = Layer::network;
  std::vector<ScoredEvent> calibration;
  std::vector<ScoredEvent> eval;
};

// Split 80/20, carve a calibration quarter out of the train split, fit the
// layer's extractor and the baseline classifier on the rest, and score the
// calibration split plus the first eval_count test events.
PreparedLayer prepare_layer(Layer layer, std::vector<Event> events, const PipelineConfig& config);

// Replayed scores: rows become the eval stream; the calibration stream is the
// same rows (replay has no held-out split).
PreparedLayer prepare_replay(Layer layer, std::span<const ScoredEvent> rows);

// ---------------------------------------------------------------- routing

struct EventResult {
  ScoredEvent scored;
  RouteOutcome outcome;
  int final_label = 0;
};

struct LayerRun {
  LayerSummary summary;
  std::vector<EventResult> results;
  std::vector<AuditRecord> audit;
  std::vector<ReviewRecord> review;
};

// Routes every event through Gate-1..3 in stream order. threshold is the
// Gate-1 cutoff (the static value or a learned one). Promoted attacks are
// inserted into memory.
LayerRun run_layer(Layer layer, std::span<const ScoredEvent> events, double threshold, const PipelineConfig& config,
                   MemoryStore& memory, LlmClient& llm, const Clock& clock = default_clock);

// Throws Error(partition_violation) unless every event sits in exactly one
// sink and the summary tallies agree with the results.
void assert_partition(const LayerRun& run);

// Confusion counts over final labels. Throws Error(no_labeled_events).
Metrics compute_metrics(std::span<const int> predicted, std::span<const int> truth);
Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn);

// Throws Error(zero_static_baseline) when n_static == 0.
CostReport cost_analysis(std::size_t n_static, std::size_t n_adaptive, double c_event);

// ---------------------------------------------------------------- full runs

struct ModeRun {
  RunSummary summary;
  std::vector<LayerRun> layers;

  RunArtifacts artifacts() const;
};

// Deterministic identifier for a run configuration; independent of mode so
// paired static/adaptive outputs share it.
std::string make_run_id(const PipelineConfig& config, std::span<const PreparedLayer> layers);

// Per-layer Q-learning on the calibration streams.
std::vector<CalibrationResult> calibrate_layers(std::span<const PreparedLayer> layers, const PipelineConfig& config);

// Runs one mode over all layers. ADAPTIVE needs one CalibrationResult per
// layer. memories holds one store per layer and is updated in place.
ModeRun run_mode(Mode mode, std::span<const PreparedLayer> layers,
                 std::span<const CalibrationResult> calibrations, const PipelineConfig& config,
                 std::span<MemoryStore> memories, LlmClient& llm, const Clock& clock = default_clock);

struct LlmLayerCalibration {
  Layer layer = Layer::network;
  LlmCalibration result;
  std::size_t samples = 0;
};

// Sends the calibration events that Gate-1 would escalate at the static
// threshold to the LLM and picks each layer's direct-decision threshold.
// Layers whose samples hold no true attack keep the configured threshold and
// are reported as failed.
std::vector<LlmLayerCalibration> calibrate_llm_layers(std::span<const PreparedLayer> layers,
                                                      const PipelineConfig& config, LlmClient& llm);

struct Comparison {
  ModeRun static_run;
  ModeRun adaptive_run;
  CostReport cost;
};

// STATIC then ADAPTIVE over the same scored streams. Each mode starts from a
// copy of initial_memories; the caller's stores are left untouched.
Comparison compare_modes(std::span<const PreparedLayer> layers, std::span<const CalibrationResult> calibrations,
                         const PipelineConfig& config, std::span<const MemoryStore> initial_memories,
                         LlmClient& llm, const Clock& clock = default_clock);

}  // namespace layerguard
