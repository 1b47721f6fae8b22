#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace layerguard {

enum class Layer { network, host, hypervisor };

inline constexpr std::array<Layer, 3> kAllLayers{Layer::network, Layer::host, Layer::hypervisor};

// Lowercase canonical name ("network", "host", "hypervisor").
std::string_view to_string(Layer layer) noexcept;
// Short IDS tag used in prompts and tables ("NIDS", "HIDS", "HYPERVISOR").
std::string_view ids_tag(Layer layer) noexcept;
// Accepts canonical names and the nids/hids/hyp aliases, case-insensitive.
std::optional<Layer> parse_layer(std::string_view text) noexcept;
std::size_t layer_index(Layer layer) noexcept;

struct Event {
  std::string id;
  Layer layer = Layer::network;
  std::string raw;
  std::vector<double> features;
  std::optional<int> truth;  // 0 = benign, 1 = attack
  std::optional<std::string> truth_class;
};

struct ScoredEvent {
  Event event;
  int pred_label = 0;
  double confidence = 0.5;  // probability of the predicted class
};

enum class Verdict { attack, benign, unsure };

std::string_view to_string(Verdict verdict) noexcept;
std::optional<Verdict> parse_verdict_label(std::string_view text) noexcept;

enum class Sink { known_accept, memory_attack, llm_attack, review_bucket };

std::string_view to_string(Sink sink) noexcept;
std::optional<Sink> parse_sink(std::string_view text) noexcept;

enum class GateId { gate1 = 1, gate2 = 2, gate3 = 3 };

struct GateRecord {
  GateId gate = GateId::gate1;
  std::string decision;
  double score = 0.0;

  bool operator==(const GateRecord&) const = default;
};

// Append-only gate log. The first record must come from Gate-1 and gate ids
// never decrease.
class Trace {
 public:
  void append(GateRecord record);
  const std::vector<GateRecord>& records() const noexcept { return records_; }
  bool empty() const noexcept { return records_.empty(); }

  bool operator==(const Trace&) const = default;

 private:
  std::vector<GateRecord> records_;
};

struct RouteOutcome {
  Sink sink = Sink::review_bucket;
  Trace trace;
};

// Returns the event unchanged when its invariants hold; throws
// Error(reject_bad_truth | reject_empty_features) otherwise.
Event validate_event(Event event);

// "<layer>-<ordinal>", used when the caller supplied no id.
std::string default_event_id(Layer layer, std::size_t ordinal);

}  // namespace layerguard
