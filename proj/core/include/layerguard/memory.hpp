#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "layerguard/event.hpp"

namespace layerguard {

struct EmbeddingConfig {
  std::size_t dims = 256;
};

// Token-hash embedding: tokens as in tokenize(), bucket = stable_hash(token)
// mod dims, counts L2-normalized. Empty text maps to the zero vector.
std::vector<double> embed_text(std::string_view text, const EmbeddingConfig& config);
std::vector<double> embed(const Event& event, const EmbeddingConfig& config);

// 1 - cosine similarity; 1.0 when either side is the zero vector.
double cosine_distance(std::span<const double> a, std::span<const double> b);

enum class RecordSource { llm_promoted, memory_seeded };

std::string_view to_string(RecordSource source) noexcept;

struct MemoryRecord {
  std::string id;
  Layer layer = Layer::network;
  std::vector<double> vector;
  Verdict label = Verdict::attack;
  std::string attack_type;
  RecordSource source = RecordSource::llm_promoted;
  std::int64_t created_at = 0;  // epoch seconds

  bool operator==(const MemoryRecord&) const = default;
};

struct Neighbor {
  MemoryRecord record;
  double distance = 0.0;
};

// Confirmed-attack memory backed by an exhaustive scan. Readers share a lock;
// inserts take it exclusively. When attached to a file every insert is
// appended as one JSON line; on load the last line for an id wins.
class MemoryStore {
 public:
  explicit MemoryStore(std::size_t dims = EmbeddingConfig{}.dims);
  MemoryStore(const MemoryStore& other);
  MemoryStore& operator=(const MemoryStore& other);

  // Reads every record from path (missing file = empty store) and attaches it.
  static MemoryStore open(const std::filesystem::path& path, std::size_t dims);

  void attach(const std::filesystem::path& path);
  void detach() noexcept;

  // Throws Error(dim_mismatch) when the vector length differs from dims().
  void insert(MemoryRecord record);

  // Top-k by ascending cosine distance, ties by id.
  std::vector<Neighbor> query(std::span<const double> vector, std::size_t k) const;

  std::size_t size() const;
  std::size_t dims() const noexcept { return dims_; }
  std::vector<MemoryRecord> records() const;

  // Rewrites path with one line per live record.
  void save(const std::filesystem::path& path) const;

 private:
  std::size_t dims_;
  mutable std::shared_mutex mutex_;
  std::vector<MemoryRecord> records_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::optional<std::filesystem::path> file_;
};

std::string memory_record_to_json(const MemoryRecord& record);
MemoryRecord memory_record_from_json(std::string_view line);

struct MatchConfig {
  std::size_t k = 5;
  double exact_distance = 0.05;
  double nearest_distance = 0.15;
  double support_radius = 0.30;
  std::size_t min_support = 3;
  double min_meta_confidence = 0.70;
  EmbeddingConfig embedding;
};

struct MatchResult {
  bool matched = false;
  double nearest_distance = 2.0;  // 2.0 = no neighbor at all
  std::size_t support = 0;
  double meta_confidence = 0.0;
  std::optional<std::string> nearest_id;
  std::string nearest_attack_type;
};

// matched iff nearest <= exact_distance, or nearest <= nearest_distance with
// support >= min_support and meta >= min_meta_confidence, where support counts
// the top-k neighbors within support_radius and
// meta = (support / k) * mean(1 - d) over those neighbors.
MatchResult match_vector(const MemoryStore& store, std::span<const double> vector, const MatchConfig& config);
MatchResult match_decision(const MemoryStore& store, const Event& event, const MatchConfig& config);

}  // namespace layerguard
