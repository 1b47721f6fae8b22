#include "layerguard/memory.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <nlohmann/json.hpp>

#include "layerguard/error.hpp"
#include "layerguard/text.hpp"

namespace layerguard {

std::vector<double> embed_text(std::string_view text, const EmbeddingConfig& config) {
  if (config.dims < 16) throw Error(ErrorCode::bad_config, "embedding dims must be >= 16");
  std::vector<double> v(config.dims, 0.0);
  for (const auto& token : tokenize(text)) v[stable_hash(token) % config.dims] += 1.0;
  double norm2 = 0.0;
  for (double x : v) norm2 += x * x;
  if (norm2 > 0.0) {
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& x : v) x *= inv;
  }
  return v;
}

std::vector<double> embed(const Event& event, const EmbeddingConfig& config) {
  return embed_text(event.raw, config);
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 1.0;
  const double cos = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(1.0 - cos, 0.0, 2.0);
}

std::string_view to_string(RecordSource source) noexcept {
  return source == RecordSource::llm_promoted ? "LLM_PROMOTED" : "MEMORY_SEEDED";
}

// ---------------------------------------------------------------- store

MemoryStore::MemoryStore(std::size_t dims) : dims_(dims) {}

MemoryStore::MemoryStore(const MemoryStore& other) : dims_(other.dims_) {
  std::shared_lock lock(other.mutex_);
  records_ = other.records_;
  by_id_ = other.by_id_;
  file_ = other.file_;
}

MemoryStore& MemoryStore::operator=(const MemoryStore& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mutex_, other.mutex_);
  dims_ = other.dims_;
  records_ = other.records_;
  by_id_ = other.by_id_;
  file_ = other.file_;
  return *this;
}

MemoryStore MemoryStore::open(const std::filesystem::path& path, std::size_t dims) {
  MemoryStore store(dims);
  if (std::filesystem::exists(path)) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io_read_failure, "cannot read memory store " + path.string());
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      store.insert(memory_record_from_json(line));
    }
  }
  store.attach(path);
  return store;
}

void MemoryStore::attach(const std::filesystem::path& path) {
  std::unique_lock lock(mutex_);
  file_ = path;
}

void MemoryStore::detach() noexcept {
  std::unique_lock lock(mutex_);
  file_.reset();
}

void MemoryStore::insert(MemoryRecord record) {
  if (record.vector.size() != dims_) {
    throw Error(ErrorCode::dim_mismatch, "record '" + record.id + "' has " + std::to_string(record.vector.size()) +
                                             " dims, store expects " + std::to_string(dims_));
  }
  record.label = Verdict::attack;
  std::unique_lock lock(mutex_);
  if (file_) {
    if (file_->has_parent_path()) std::filesystem::create_directories(file_->parent_path());
    std::ofstream out(*file_, std::ios::app);
    out << memory_record_to_json(record) << '\n';
    if (!out) throw Error(ErrorCode::io_write_failure, "cannot append to memory store " + file_->string());
  }
  if (auto it = by_id_.find(record.id); it != by_id_.end()) {
    spdlog::warn("memory record '{}' already stored; overwriting", record.id);
    records_[it->second] = std::move(record);
    return;
  }
  by_id_.emplace(record.id, records_.size());
  records_.push_back(std::move(record));
}

std::vector<Neighbor> MemoryStore::query(std::span<const double> vector, std::size_t k) const {
  std::shared_lock lock(mutex_);
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    scored.emplace_back(cosine_distance(vector, records_[i].vector), i);
  }
  const std::size_t take = std::min(k, scored.size());
  auto before = [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return records_[a.second].id < records_[b.second].id;
  };
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(), before);
  std::vector<Neighbor> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back({records_[scored[i].second], scored[i].first});
  return out;
}

std::size_t MemoryStore::size() const {
  std::shared_lock lock(mutex_);
  return records_.size();
}

std::vector<MemoryRecord> MemoryStore::records() const {
  std::shared_lock lock(mutex_);
  return records_;
}

void MemoryStore::save(const std::filesystem::path& path) const {
  std::shared_lock lock(mutex_);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  for (const auto& r : records_) out << memory_record_to_json(r) << '\n';
  if (!out) throw Error(ErrorCode::io_write_failure, "cannot write memory store " + path.string());
}

// ---------------------------------------------------------------- json

std::string memory_record_to_json(const MemoryRecord& record) {
  nlohmann::ordered_json j;
  j["id"] = record.id;
  j["layer"] = std::string(to_string(record.layer));
  j["vector"] = record.vector;
  j["attack_type"] = record.attack_type;
  j["source"] = std::string(to_string(record.source));
  j["created_at"] = format_rfc3339(record.created_at);
  return j.dump();
}

MemoryRecord memory_record_from_json(std::string_view line) {
  try {
    const auto j = nlohmann::json::parse(line);
    MemoryRecord r;
    r.id = j.at("id").get<std::string>();
    auto layer = parse_layer(j.at("layer").get<std::string>());
    if (!layer) throw Error(ErrorCode::parse_failure, "unknown layer in memory record");
    r.layer = *layer;
    r.vector = j.at("vector").get<std::vector<double>>();
    r.attack_type = j.value("attack_type", "");
    r.source = j.value("source", "LLM_PROMOTED") == "MEMORY_SEEDED" ? RecordSource::memory_seeded
                                                                    : RecordSource::llm_promoted;
    r.created_at = parse_rfc3339(j.at("created_at").get<std::string>());
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse_failure, std::string("bad memory record: ") + e.what());
  }
}

// ---------------------------------------------------------------- matching

MatchResult match_vector(const MemoryStore& store, std::span<const double> vector, const MatchConfig& config) {
  MatchResult result;
  const auto neighbors = store.query(vector, config.k);
  if (neighbors.empty()) return result;

  result.nearest_distance = neighbors.front().distance;
  result.nearest_id = neighbors.front().record.id;
  result.nearest_attack_type = neighbors.front().record.attack_type;

  double similarity_sum = 0.0;
  for (const auto& n : neighbors) {
    if (n.distance <= config.support_radius) {
      ++result.support;
      similarity_sum += 1.0 - n.distance;
    }
  }
  if (result.support > 0) {
    const double mean_similarity = similarity_sum / static_cast<double>(result.support);
    result.meta_confidence =
        static_cast<double>(result.support) / static_cast<double>(config.k) * mean_similarity;
  }
  result.matched = result.nearest_distance <= config.exact_distance ||
                   (result.nearest_distance <= config.nearest_distance && result.support >= config.min_support &&
                    result.meta_confidence >= config.min_meta_confidence);
  return result;
}

MatchResult match_decision(const MemoryStore& store, const Event& event, const MatchConfig& config) {
  return match_vector(store, embed(event, config.embedding), config);
}

}  // namespace layerguard
