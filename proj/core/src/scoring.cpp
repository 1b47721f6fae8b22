#include "layerguard/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "layerguard/error.hpp"
#include "layerguard/random.hpp"
#include "layerguard/text.hpp"

namespace layerguard {

// ---------------------------------------------------------------- tf-idf

TfidfVectorizer TfidfVectorizer::fit(std::span<const std::string> corpus, Options options) {
  if (corpus.empty()) throw Error(ErrorCode::empty_corpus, "tf-idf corpus is empty");

  std::map<std::string, std::size_t> df;
  std::map<std::string, std::size_t> total;
  for (const auto& doc : corpus) {
    auto tokens = tokenize(doc);
    for (const auto& t : tokens) ++total[t];
    std::sort(tokens.begin(), tokens.end());
    tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
    for (auto& t : tokens) ++df[t];
  }

  std::vector<std::string> kept;
  for (const auto& [term, d] : df) {
    if (d >= options.min_df) kept.push_back(term);
  }
  if (kept.size() > options.max_features) {
    std::stable_sort(kept.begin(), kept.end(), [&](const std::string& a, const std::string& b) {
      return total[a] > total[b];
    });
    kept.resize(options.max_features);
    std::sort(kept.begin(), kept.end());
  }

  TfidfVectorizer v;
  v.num_documents_ = corpus.size();
  const double n = static_cast<double>(corpus.size());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const std::size_t d = df[kept[i]];
    v.index_.emplace(kept[i], i);
    v.df_.push_back(d);
    v.idf_.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(d))) + 1.0);
  }
  v.terms_ = std::move(kept);
  return v;
}

std::vector<double> TfidfVectorizer::transform(std::string_view document) const {
  std::vector<double> out(terms_.size(), 0.0);
  for (const auto& token : tokenize(document)) {
    if (auto it = index_.find(token); it != index_.end()) out[it->second] += 1.0;
  }
  double norm2 = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] *= idf_[i];
    norm2 += out[i] * out[i];
  }
  if (norm2 > 0.0) {
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& x : out) x *= inv;
  }
  return out;
}

std::optional<std::size_t> TfidfVectorizer::index_of(std::string_view term) const {
  if (auto it = index_.find(std::string(term)); it != index_.end()) return it->second;
  return std::nullopt;
}

double TfidfVectorizer::idf(std::string_view term) const {
  auto idx = index_of(term);
  if (!idx) throw Error(ErrorCode::unfitted_extractor, "term not in vocabulary: " + std::string(term));
  return idf_[*idx];
}

std::size_t TfidfVectorizer::document_frequency(std::string_view term) const {
  auto idx = index_of(term);
  return idx ? df_[*idx] : 0;
}

// ---------------------------------------------------------------- extractors

FeatureExtractor FeatureExtractor::numeric(Layer layer, std::vector<std::string> columns) {
  FeatureExtractor fx;
  fx.layer_ = layer;
  fx.mode_ = ExtractorMode::numeric_passthrough;
  fx.numeric_fields_ = std::move(columns);
  fx.fitted_ = true;
  return fx;
}

FeatureExtractor FeatureExtractor::tfidf(Layer layer, TfidfVectorizer vectorizer) {
  FeatureExtractor fx;
  fx.layer_ = layer;
  fx.mode_ = ExtractorMode::tfidf_text;
  fx.vectorizer_ = std::move(vectorizer);
  fx.fitted_ = true;
  return fx;
}

FeatureExtractor FeatureExtractor::unfitted_tfidf(Layer layer) {
  FeatureExtractor fx;
  fx.layer_ = layer;
  fx.mode_ = ExtractorMode::tfidf_text;
  return fx;
}

FeatureExtractor FeatureExtractor::categorical(Layer layer, std::vector<CategoricalField> categorical_fields,
                                               std::vector<std::string> numeric_fields) {
  FeatureExtractor fx;
  fx.layer_ = layer;
  fx.mode_ = ExtractorMode::categorical_event;
  fx.categorical_fields_ = std::move(categorical_fields);
  fx.numeric_fields_ = std::move(numeric_fields);
  fx.fitted_ = true;
  return fx;
}

FeatureExtractor FeatureExtractor::fit_categorical(Layer layer, std::span<const Event> events,
                                                   const std::vector<std::string>& categorical_names,
                                                   std::vector<std::string> numeric_fields) {
  std::vector<std::set<std::string>> seen(categorical_names.size());
  for (const auto& e : events) {
    for (const auto& [key, value] : parse_kv_record(e.raw)) {
      auto it = std::find(categorical_names.begin(), categorical_names.end(), key);
      if (it != categorical_names.end()) seen[static_cast<std::size_t>(it - categorical_names.begin())].insert(value);
    }
  }
  std::vector<CategoricalField> fields;
  for (std::size_t i = 0; i < categorical_names.size(); ++i) {
    fields.push_back({categorical_names[i], {seen[i].begin(), seen[i].end()}});
  }
  return categorical(layer, std::move(fields), std::move(numeric_fields));
}

std::size_t FeatureExtractor::dims() const noexcept {
  switch (mode_) {
    case ExtractorMode::numeric_passthrough: return numeric_fields_.size();
    case ExtractorMode::tfidf_text: return vectorizer_ ? vectorizer_->dims() : 0;
    case ExtractorMode::categorical_event: {
      std::size_t d = numeric_fields_.size();
      for (const auto& f : categorical_fields_) d += f.categories.size();
      return d;
    }
  }
  return 0;
}

namespace {

double finite_or_zero(double x) { return std::isfinite(x) ? x : 0.0; }

double parse_number(const std::string& text) {
  try {
    std::size_t used = 0;
    double v = std::stod(text, &used);
    return used == 0 ? 0.0 : finite_or_zero(v);
  } catch (const std::exception&) {
    return 0.0;
  }
}

}  // namespace

std::vector<double> FeatureExtractor::extract(const Event& event) const {
  if (!fitted_) {
    throw Error(ErrorCode::unfitted_extractor, "extractor has not been fitted");
  }
  if (event.layer != layer_) {
    throw Error(ErrorCode::unfitted_extractor, "extractor fitted for layer " + std::string(to_string(layer_)) +
                                                   ", event '" + event.id + "' is " +
                                                   std::string(to_string(event.layer)));
  }
  switch (mode_) {
    case ExtractorMode::numeric_passthrough: {
      if (!event.features.empty()) {
        if (event.features.size() != numeric_fields_.size()) {
          throw Error(ErrorCode::dimension_mismatch,
                      "event '" + event.id + "' has " + std::to_string(event.features.size()) +
                          " features, expected " + std::to_string(numeric_fields_.size()));
        }
        std::vector<double> out(event.features);
        for (auto& x : out) x = finite_or_zero(x);
        return out;
      }
      auto kv = parse_kv_record(event.raw);
      std::vector<double> out;
      out.reserve(numeric_fields_.size());
      for (const auto& column : numeric_fields_) {
        auto it = std::find_if(kv.begin(), kv.end(), [&](const auto& p) { return p.first == column; });
        if (it == kv.end()) {
          throw Error(ErrorCode::dimension_mismatch, "event '" + event.id + "' lacks column '" + column + "'");
        }
        out.push_back(parse_number(it->second));
      }
      return out;
    }
    case ExtractorMode::tfidf_text:
      return vectorizer_->transform(event.raw);
    case ExtractorMode::categorical_event: {
      auto kv = parse_kv_record(event.raw);
      auto lookup = [&](const std::string& key) -> const std::string* {
        for (const auto& [k, v] : kv) {
          if (k == key) return &v;
        }
        return nullptr;
      };
      std::vector<double> out;
      out.reserve(dims());
      for (const auto& field : categorical_fields_) {
        const std::string* value = lookup(field.name);
        for (const auto& category : field.categories) {
          out.push_back(value != nullptr && *value == category ? 1.0 : 0.0);
        }
      }
      for (const auto& name : numeric_fields_) {
        const std::string* value = lookup(name);
        if (value == nullptr) {
          throw Error(ErrorCode::dimension_mismatch, "event '" + event.id + "' lacks field '" + name + "'");
        }
        out.push_back(parse_number(*value));
      }
      return out;
    }
  }
  return {};
}

void extract_all(std::span<Event> events, const FeatureExtractor& extractor) {
  for (auto& e : events) e.features = extractor.extract(e);
}

FeatureScaler FeatureScaler::fit(std::span<const std::vector<double>> rows) {
  FeatureScaler scaler;
  if (rows.empty()) return scaler;
  const std::size_t dims = rows.front().size();
  scaler.means_.assign(dims, 0.0);
  scaler.scales_.assign(dims, 1.0);
  const double n = static_cast<double>(rows.size());
  for (const auto& r : rows) {
    if (r.size() != dims) throw Error(ErrorCode::dimension_mismatch, "ragged rows in scaler fit");
    for (std::size_t j = 0; j < dims; ++j) scaler.means_[j] += r[j] / n;
  }
  std::vector<double> var(dims, 0.0);
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < dims; ++j) var[j] += (r[j] - scaler.means_[j]) * (r[j] - scaler.means_[j]) / n;
  }
  for (std::size_t j = 0; j < dims; ++j) scaler.scales_[j] = var[j] > 1e-24 ? std::sqrt(var[j]) : 1.0;
  return scaler;
}

std::vector<double> FeatureScaler::transform(std::span<const double> row) const {
  if (row.size() != means_.size()) {
    throw Error(ErrorCode::dimension_mismatch, "scaler expects " + std::to_string(means_.size()) + " columns, got " +
                                                   std::to_string(row.size()));
  }
  std::vector<double> out(row.size());
  for (std::size_t j = 0; j < row.size(); ++j) out[j] = (row[j] - means_[j]) / scales_[j];
  return out;
}

void FeatureScaler::transform_in_place(std::span<Event> events) const {
  for (auto& e : events) e.features = transform(e.features);
}

// ---------------------------------------------------------------- scorers

Scorer Scorer::replay(std::unordered_map<std::string, ReplayEntry> table) {
  Scorer s;
  s.kind_ = ScorerKind::replay;
  s.table_ = std::move(table);
  return s;
}

Scorer Scorer::logistic(std::vector<double> weights, double bias) {
  Scorer s;
  s.kind_ = ScorerKind::baseline_logistic;
  s.weights_ = std::move(weights);
  s.bias_ = bias;
  return s;
}

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

double Scorer::attack_probability(std::span<const double> features) const {
  if (features.size() != weights_.size()) {
    throw Error(ErrorCode::dimension_mismatch, "feature vector has " + std::to_string(features.size()) +
                                                   " entries, model expects " + std::to_string(weights_.size()));
  }
  double z = bias_;
  for (std::size_t i = 0; i < features.size(); ++i) z += weights_[i] * features[i];
  return sigmoid(z);
}

ScoredEvent Scorer::score(const Event& event) const {
  ScoredEvent out{event, 0, 0.5};
  if (kind_ == ScorerKind::replay) {
    auto it = table_.find(event.id);
    if (it == table_.end()) {
      throw Error(ErrorCode::missing_replay_entry, "no replay score for event '" + event.id + "'");
    }
    out.pred_label = it->second.pred_label;
    out.confidence = std::clamp(it->second.confidence, 0.0, 1.0);
    return out;
  }
  const double p = attack_probability(event.features);
  out.pred_label = p > 0.5 ? 1 : 0;
  out.confidence = std::max(p, 1.0 - p);
  return out;
}

Scorer train_baseline(std::span<const std::vector<double>> features, std::span<const int> truth,
                      const TrainingConfig& config) {
  if (features.size() != truth.size()) {
    throw Error(ErrorCode::dimension_mismatch, "feature/label count mismatch");
  }
  const bool has_pos = std::find(truth.begin(), truth.end(), 1) != truth.end();
  const bool has_neg = std::find(truth.begin(), truth.end(), 0) != truth.end();
  if (!has_pos || !has_neg) throw Error(ErrorCode::single_class_data, "training data holds a single class");

  const std::size_t dims = features.front().size();
  // Sparse view of each sample; tf-idf and one-hot rows are mostly zeros.
  std::vector<std::vector<std::pair<std::size_t, double>>> rows(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].size() != dims) throw Error(ErrorCode::dimension_mismatch, "ragged training features");
    for (std::size_t j = 0; j < dims; ++j) {
      if (features[i][j] != 0.0) rows[i].emplace_back(j, features[i][j]);
    }
  }

  // w = scale * v lets the L2 shrink touch a single scalar per step.
  std::vector<double> v(dims, 0.0);
  double scale = 1.0;
  double bias = 0.0;
  const double lr = config.learning_rate;
  const double shrink = 1.0 - lr * config.l2;

  std::vector<std::size_t> order(features.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(config.seed);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_in_place(order, rng);
    for (std::size_t i : order) {
      double z = bias;
      for (const auto& [j, x] : rows[i]) z += scale * v[j] * x;
      const double g = sigmoid(z) - static_cast<double>(truth[i]);
      scale *= shrink;
      for (const auto& [j, x] : rows[i]) v[j] -= lr * g * x / scale;
      bias -= lr * g;
      if (scale < 1e-6) {
        for (auto& w : v) w *= scale;
        scale = 1.0;
      }
    }
  }
  for (auto& w : v) w *= scale;
  return Scorer::logistic(std::move(v), bias);
}

std::vector<ScoredEvent> score_all(std::span<const Event> events, const Scorer& scorer) {
  std::vector<ScoredEvent> out;
  out.reserve(events.size());
  for (const auto& e : events) out.push_back(scorer.score(e));
  return out;
}

}  // namespace layerguard
