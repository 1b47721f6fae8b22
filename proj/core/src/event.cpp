#include "layerguard/event.hpp"

#include <algorithm>
#include <cctype>
#include <string>

#include "layerguard/error.hpp"

namespace layerguard {

namespace {

std::string lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::reject_bad_truth: return "REJECT_BAD_TRUTH";
    case ErrorCode::reject_empty_features: return "REJECT_EMPTY_FEATURES";
    case ErrorCode::empty_corpus: return "EMPTY_CORPUS";
    case ErrorCode::dimension_mismatch: return "DIMENSION_MISMATCH";
    case ErrorCode::unfitted_extractor: return "UNFITTED_EXTRACTOR";
    case ErrorCode::missing_replay_entry: return "MISSING_REPLAY_ENTRY";
    case ErrorCode::single_class_data: return "SINGLE_CLASS_DATA";
    case ErrorCode::empty_window: return "EMPTY_WINDOW";
    case ErrorCode::missing_truth: return "MISSING_TRUTH";
    case ErrorCode::unlabeled_stream: return "UNLABELED_STREAM";
    case ErrorCode::stream_too_short: return "STREAM_TOO_SHORT";
    case ErrorCode::bad_action_set: return "BAD_ACTION_SET";
    case ErrorCode::dim_mismatch: return "DIM_MISMATCH";
    case ErrorCode::llm_timeout: return "LLM_TIMEOUT";
    case ErrorCode::llm_http_error: return "LLM_HTTP_ERROR";
    case ErrorCode::no_feasible_threshold: return "NO_FEASIBLE_THRESHOLD";
    case ErrorCode::bad_weights: return "BAD_WEIGHTS";
    case ErrorCode::count_sum_mismatch: return "COUNT_SUM_MISMATCH";
    case ErrorCode::bad_split_ratio: return "BAD_SPLIT_RATIO";
    case ErrorCode::io_read_failure: return "IO_READ_FAILURE";
    case ErrorCode::io_write_failure: return "IO_WRITE_FAILURE";
    case ErrorCode::parse_failure: return "PARSE_FAILURE";
    case ErrorCode::no_labeled_events: return "NO_LABELED_EVENTS";
    case ErrorCode::zero_static_baseline: return "ZERO_STATIC_BASELINE";
    case ErrorCode::partition_violation: return "PARTITION_VIOLATION";
    case ErrorCode::bad_config: return "BAD_CONFIG";
  }
  return "UNKNOWN";
}

std::string_view to_string(Layer layer) noexcept {
  switch (layer) {
    case Layer::network: return "network";
    case Layer::host: return "host";
    case Layer::hypervisor: return "hypervisor";
  }
  return "network";
}

std::string_view ids_tag(Layer layer) noexcept {
  switch (layer) {
    case Layer::network: return "NIDS";
    case Layer::host: return "HIDS";
    case Layer::hypervisor: return "HYPERVISOR";
  }
  return "NIDS";
}

std::optional<Layer> parse_layer(std::string_view text) noexcept {
  const std::string t = lower(text);
  if (t == "network" || t == "nids" || t == "net") return Layer::network;
  if (t == "host" || t == "hids") return Layer::host;
  if (t == "hypervisor" || t == "hyp" || t == "hypids") return Layer::hypervisor;
  return std::nullopt;
}

std::size_t layer_index(Layer layer) noexcept { return static_cast<std::size_t>(layer); }

std::string_view to_string(Verdict verdict) noexcept {
  switch (verdict) {
    case Verdict::attack: return "ATTACK";
    case Verdict::benign: return "BENIGN";
    case Verdict::unsure: return "UNSURE";
  }
  return "UNSURE";
}

std::optional<Verdict> parse_verdict_label(std::string_view text) noexcept {
  const std::string t = lower(text);
  if (t == "attack") return Verdict::attack;
  if (t == "benign") return Verdict::benign;
  if (t == "unsure") return Verdict::unsure;
  return std::nullopt;
}

std::string_view to_string(Sink sink) noexcept {
  switch (sink) {
    case Sink::known_accept: return "KNOWN_ACCEPT";
    case Sink::memory_attack: return "MEMORY_ATTACK";
    case Sink::llm_attack: return "LLM_ATTACK";
    case Sink::review_bucket: return "REVIEW_BUCKET";
  }
  return "REVIEW_BUCKET";
}

std::optional<Sink> parse_sink(std::string_view text) noexcept {
  for (Sink s : {Sink::known_accept, Sink::memory_attack, Sink::llm_attack, Sink::review_bucket}) {
    if (to_string(s) == text) return s;
  }
  return std::nullopt;
}

void Trace::append(GateRecord record) {
  if (records_.empty() && record.gate != GateId::gate1) {
    throw Error(ErrorCode::bad_config, "trace must begin with Gate-1");
  }
  if (!records_.empty() && record.gate < records_.back().gate) {
    throw Error(ErrorCode::bad_config, "trace gates must not go backwards");
  }
  records_.push_back(std::move(record));
}

Event validate_event(Event event) {
  if (event.truth && *event.truth != 0 && *event.truth != 1) {
    throw Error(ErrorCode::reject_bad_truth,
                "event '" + event.id + "' has truth " + std::to_string(*event.truth));
  }
  if (event.features.empty()) {
    throw Error(ErrorCode::reject_empty_features, "event '" + event.id + "' has no features");
  }
  return event;
}

std::string default_event_id(Layer layer, std::size_t ordinal) {
  return std::string(to_string(layer)) + "-" + std::to_string(ordinal);
}

}  // namespace layerguard
