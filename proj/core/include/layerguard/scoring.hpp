#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "layerguard/event.hpp"

namespace layerguard {

// Term frequency / inverse document frequency vectorizer.
//
// Vocabulary: lowercased alphanumeric tokens with document frequency >= min_df,
// capped at the max_features most frequent terms (corpus-wide term count, ties
// by term). Columns are ordered lexicographically by term.
// idf(t) = ln((1 + N) / (1 + df(t))) + 1; transform() returns the L2-normalized
// tf*idf vector, or the zero vector when no vocabulary term occurs.
class TfidfVectorizer {
 public:
  struct Options {
    std::size_t min_df = 1;
    std::size_t max_features = 4096;
  };

  static TfidfVectorizer fit(std::span<const std::string> corpus, Options options);
  static TfidfVectorizer fit(std::span<const std::string> corpus) { return fit(corpus, Options{}); }

  std::vector<double> transform(std::string_view document) const;

  std::size_t dims() const noexcept { return terms_.size(); }
  std::size_t num_documents() const noexcept { return num_documents_; }
  std::optional<std::size_t> index_of(std::string_view term) const;
  // Throws Error(unfitted_extractor) for terms outside the vocabulary.
  double idf(std::string_view term) const;
  std::size_t document_frequency(std::string_view term) const;
  const std::vector<std::string>& terms() const noexcept { return terms_; }

 private:
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::string> terms_;
  std::vector<std::size_t> df_;
  std::vector<double> idf_;
  std::size_t num_documents_ = 0;
};

enum class ExtractorMode { numeric_passthrough, tfidf_text, categorical_event };

struct CategoricalField {
  std::string name;
  std::vector<std::string> categories;
};

// Layer-specific feature extraction. Network rows pass configured numeric
// columns through, host log lines go through tf-idf, hypervisor records get
// one-hot categorical blocks followed by their numeric fields. Non-finite
// values become 0.
class FeatureExtractor {
 public:
  static FeatureExtractor numeric(Layer layer, std::vector<std::string> columns);
  static FeatureExtractor tfidf(Layer layer, TfidfVectorizer vectorizer);
  static FeatureExtractor unfitted_tfidf(Layer layer);
  static FeatureExtractor categorical(Layer layer, std::vector<CategoricalField> categorical_fields,
                                      std::vector<std::string> numeric_fields);
  // Collects the sorted set of values observed for each categorical field.
  static FeatureExtractor fit_categorical(Layer layer, std::span<const Event> events,
                                          const std::vector<std::string>& categorical_names,
                                          std::vector<std::string> numeric_fields);

  ExtractorMode mode() const noexcept { return mode_; }
  Layer layer() const noexcept { return layer_; }
  std::size_t dims() const noexcept;
  bool fitted() const noexcept { return fitted_; }

  std::vector<double> extract(const Event& event) const;

  const std::vector<std::string>& numeric_fields() const noexcept { return numeric_fields_; }
  const std::vector<CategoricalField>& categorical_fields() const noexcept { return categorical_fields_; }

 private:
  FeatureExtractor() = default;

  Layer layer_ = Layer::network;
  ExtractorMode mode_ = ExtractorMode::numeric_passthrough;
  bool fitted_ = false;
  std::optional<TfidfVectorizer> vectorizer_;
  std::vector<CategoricalField> categorical_fields_;
  std::vector<std::string> numeric_fields_;
};

// Fills event.features for every event in place.
void extract_all(std::span<Event> events, const FeatureExtractor& extractor);

// Column-wise standardization fitted on training rows. Constant columns are
// centred but not scaled.
class FeatureScaler {
 public:
  static FeatureScaler fit(std::span<const std::vector<double>> rows);

  std::vector<double> transform(std::span<const double> row) const;
  void transform_in_place(std::span<Event> events) const;

  const std::vector<double>& means() const noexcept { return means_; }
  const std::vector<double>& scales() const noexcept { return scales_; }

 private:
  std::vector<double> means_;
  std::vector<double> scales_;
};

enum class ScorerKind { replay, baseline_logistic };

struct ReplayEntry {
  int pred_label = 0;
  double confidence = 0.5;
};

struct TrainingConfig {
  int epochs = 200;
  double learning_rate = 0.1;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
};

class Scorer {
 public:
  static Scorer replay(std::unordered_map<std::string, ReplayEntry> table);
  static Scorer logistic(std::vector<double> weights, double bias);

  ScorerKind kind() const noexcept { return kind_; }

  // Logistic scorers only: sigma(w.x + b).
  double attack_probability(std::span<const double> features) const;

  // pred_label = 1 iff p > 0.5 (an exact tie predicts benign);
  // confidence = max(p, 1 - p).
  ScoredEvent score(const Event& event) const;

  const std::vector<double>& weights() const noexcept { return weights_; }
  double bias() const noexcept { return bias_; }
  const std::unordered_map<std::string, ReplayEntry>& replay_table() const noexcept { return table_; }

 private:
  Scorer() = default;

  ScorerKind kind_ = ScorerKind::baseline_logistic;
  std::unordered_map<std::string, ReplayEntry> table_;
  std::vector<double> weights_;
  double bias_ = 0.0;
};

// L2-regularized logistic regression fitted by seeded stochastic gradient
// descent: each epoch visits the samples in an order produced by
// shuffle_in_place() on one Rng seeded with config.seed. Weights start at zero.
Scorer train_baseline(std::span<const std::vector<double>> features, std::span<const int> truth,
                      const TrainingConfig& config);

std::vector<ScoredEvent> score_all(std::span<const Event> events, const Scorer& scorer);

}  // namespace layerguard
