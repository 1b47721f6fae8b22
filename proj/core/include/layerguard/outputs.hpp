#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "layerguard/llm.hpp"
#include "layerguard/qcal.hpp"
#include "layerguard/records.hpp"

namespace layerguard {

using ojson = nlohmann::ordered_json;

ojson to_json(const Metrics& metrics);
ojson to_json(const LayerSummary& summary);
ojson to_json(const RunSummary& summary);
ojson to_json(const CostReport& report);
ojson to_json(const ReviewRecord& record);
ojson to_json(const AuditRecord& record);

ojson to_json(const CalibrationResult& result);
ojson to_json(const LlmThresholds& thresholds);

Metrics metrics_from_json(const nlohmann::json& j);
LayerSummary layer_summary_from_json(const nlohmann::json& j);
RunSummary run_summary_from_json(const nlohmann::json& j);
CostReport cost_report_from_json(const nlohmann::json& j);
CalibrationResult calibration_from_json(const nlohmann::json& j);
// Layers missing from the file keep the values already in base.
LlmThresholds llm_thresholds_from_json(const nlohmann::json& j, LlmThresholds base = {});

// One row of the confidence CSV: event_id,layer,pred_label,confidence,truth,route
struct ConfidenceRow {
  std::string event_id;
  Layer layer = Layer::network;
  int pred_label = 0;
  double confidence = 0.0;
  std::optional<int> truth;
  Sink route = Sink::known_accept;
};

struct RunArtifacts {
  RunSummary summary;
  std::vector<ConfidenceRow> confidence;
  std::vector<AuditRecord> audit;
  std::vector<ReviewRecord> review;
};

struct OutputPaths {
  std::filesystem::path summary;
  std::filesystem::path confidence;
  std::filesystem::path audit;
  std::filesystem::path review;
};

// "<run_id>_<mode>_" prefixed file names inside dir.
OutputPaths output_paths(const std::filesystem::path& dir, const std::string& run_id, Mode mode);

// Writes all four files. Throws Error(io_write_failure).
OutputPaths write_outputs(const std::filesystem::path& dir, const RunArtifacts& artifacts);

void write_json_file(const std::filesystem::path& path, const ojson& value);
nlohmann::json read_json_file(const std::filesystem::path& path);

RunSummary load_run_summary(const std::filesystem::path& path);
std::vector<ConfidenceRow> load_confidence_csv(const std::filesystem::path& path);

}  // namespace layerguard
