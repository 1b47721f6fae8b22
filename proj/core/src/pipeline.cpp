#include "layerguard/pipeline.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <future>
#include <thread>

#include "layerguard/corpus.hpp"
#include "layerguard/error.hpp"
#include "layerguard/text.hpp"

namespace layerguard {

std::int64_t default_clock() {
  if (const char* env = std::getenv("SOURCE_DATE_EPOCH"); env != nullptr && *env != '\0') {
    try {
      return std::stoll(env);
    } catch (const std::exception&) {
      spdlog::warn("ignoring malformed SOURCE_DATE_EPOCH '{}'", env);
    }
  }
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

void PipelineConfig::validate() const {
  if (!(static_threshold > 0.0 && static_threshold < 1.0)) {
    throw Error(ErrorCode::bad_config, fmt::format("static_threshold {} outside (0,1)", static_threshold));
  }
  if (eval_count < qcal.window) {
    throw Error(ErrorCode::bad_config, fmt::format("eval_count {} is below the window size {}", eval_count, qcal.window));
  }
  if (!(c_event >= 0.0)) throw Error(ErrorCode::bad_config, "c_event must be >= 0");
  if (llm_batch == 0 || llm_parallelism == 0) throw Error(ErrorCode::bad_config, "llm_batch and llm_parallelism must be >= 1");
  llm.validate();
  fusion.validate();
}

// ---------------------------------------------------------------- preparation

namespace {

FeatureExtractor fit_extractor(Layer layer, std::span<const Event> fit) {
  switch (layer) {
    case Layer::network: {
      const std::size_t dims = fit.front().features.size();
      if (dims == 0) throw Error(ErrorCode::reject_empty_features, "network events carry no feature vector");
      return FeatureExtractor::numeric(layer, network_feature_columns(dims));
    }
    case Layer::host: {
      std::vector<std::string> corpus;
      corpus.reserve(fit.size());
      for (const auto& e : fit) corpus.push_back(e.raw);
      return FeatureExtractor::tfidf(layer, TfidfVectorizer::fit(corpus));
    }
    case Layer::hypervisor:
      return FeatureExtractor::fit_categorical(layer, fit, HypervisorSchema::categorical_columns(),
                                               HypervisorSchema::numeric_columns());
  }
  throw Error(ErrorCode::bad_config, "unknown layer");
}

std::vector<ScoredEvent> score_and_strip(std::span<Event> events, const Scorer& scorer) {
  std::vector<ScoredEvent> out = score_all(events, scorer);
  // Features are only needed for scoring; memory embeds the raw text.
  for (auto& se : out) std::vector<double>().swap(se.event.features);
  return out;
}

}  // namespace

PreparedLayer prepare_layer(Layer layer, std::vector<Event> events, const PipelineConfig& config) {
  PreparedLayer prepared;
  prepared.layer = layer;
  if (events.empty()) return prepared;

  auto [train, test] = split_train_test(std::move(events), 0.8, config.seed);
  const auto fit_n = static_cast<std::size_t>(std::llround(0.75 * static_cast<double>(train.size())));
  std::vector<Event> calib(std::make_move_iterator(train.begin() + static_cast<std::ptrdiff_t>(fit_n)),
                           std::make_move_iterator(train.end()));
  train.resize(fit_n);
  if (test.size() > config.eval_count) test.resize(config.eval_count);
  if (train.empty()) throw Error(ErrorCode::empty_corpus, fmt::format("{} corpus too small to train on", to_string(layer)));

  const FeatureExtractor extractor = fit_extractor(layer, train);
  extract_all(train, extractor);
  extract_all(calib, extractor);
  extract_all(test, extractor);
  if (layer != Layer::host) {
    std::vector<std::vector<double>> rows;
    rows.reserve(train.size());
    for (const auto& e : train) rows.push_back(e.features);
    const FeatureScaler scaler = FeatureScaler::fit(rows);
    scaler.transform_in_place(train);
    scaler.transform_in_place(calib);
    scaler.transform_in_place(test);
  }

  std::vector<std::vector<double>> x;
  std::vector<int> y;
  x.reserve(train.size());
  y.reserve(train.size());
  for (auto& e : train) {
    if (!e.truth) throw Error(ErrorCode::no_labeled_events, "training event '" + e.id + "' has no truth");
    x.push_back(std::move(e.features));
    y.push_back(*e.truth);
  }
  TrainingConfig training = config.training;
  training.seed = config.seed;
  const Scorer scorer = train_baseline(x, y, training);

  prepared.calibration = score_and_strip(calib, scorer);
  prepared.eval = score_and_strip(test, scorer);
  return prepared;
}

PreparedLayer prepare_replay(Layer layer, std::span<const ScoredEvent> rows) {
  PreparedLayer prepared;
  prepared.layer = layer;
  prepared.eval.assign(rows.begin(), rows.end());
  prepared.calibration = prepared.eval;
  return prepared;
}

// ---------------------------------------------------------------- metrics / cost

Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
  Metrics m;
  m.tp = tp;
  m.fp = fp;
  m.fn = fn;
  m.tn = tn;
  const std::size_t total = tp + fp + fn + tn;
  m.accuracy = total == 0 ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(total);
  m.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  m.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  m.f1 = m.precision + m.recall == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

Metrics compute_metrics(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) {
    throw Error(ErrorCode::dimension_mismatch,
                fmt::format("{} predictions for {} truth labels", predicted.size(), truth.size()));
  }
  if (truth.empty()) throw Error(ErrorCode::no_labeled_events, "no labeled events to score");
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = predicted[i] == 1;
    const bool t = truth[i] == 1;
    if (p && t) ++tp;
    else if (p) ++fp;
    else if (t) ++fn;
    else ++tn;
  }
  return metrics_from_counts(tp, fp, fn, tn);
}

CostReport cost_analysis(std::size_t n_static, std::size_t n_adaptive, double c_event) {
  if (n_static == 0) throw Error(ErrorCode::zero_static_baseline, "static escalation count is zero");
  if (!(c_event >= 0.0)) throw Error(ErrorCode::bad_config, "c_event must be >= 0");
  CostReport r;
  r.n_static = n_static;
  r.n_adaptive = n_adaptive;
  r.delta = static_cast<std::int64_t>(n_static) - static_cast<std::int64_t>(n_adaptive);
  r.reduction_pct = 100.0 * static_cast<double>(r.delta) / static_cast<double>(n_static);

  // Hundredths of a percent, rounded half away from zero in integers.
  const std::uint64_t magnitude = static_cast<std::uint64_t>(r.delta < 0 ? -r.delta : r.delta);
  const std::uint64_t hundredths = (magnitude * 20000 + n_static) / (2 * n_static);
  r.reduction_pct_text = fmt::format("{}{}.{:02}", r.delta < 0 && hundredths > 0 ? "-" : "", hundredths / 100, hundredths % 100);

  r.c_event = c_event;
  r.cost_static = static_cast<double>(n_static) * c_event;
  r.cost_adaptive = static_cast<double>(n_adaptive) * c_event;
  r.cost_saving = static_cast<double>(r.delta) * c_event;
  return r;
}

// ---------------------------------------------------------------- routing

namespace {

struct PendingLlm {
  std::size_t index = 0;
  std::vector<double> vector;
  MatchResult match;
  std::string prompt;
  LlmCall call;
};

void run_calls(std::vector<PendingLlm*>& calls, LlmClient& llm, std::size_t parallelism) {
  if (calls.empty()) return;
  const std::size_t workers = std::min(parallelism, calls.size());
  if (workers == 1) {
    for (auto* p : calls) p->call = call_llm(llm, p->prompt);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < calls.size(); i = next++) calls[i]->call = call_llm(llm, calls[i]->prompt);
    });
  }
  for (auto& t : pool) t.join();
}

std::string upper_label(Verdict v) { return std::string(to_string(v)); }

void add_counts(LayerSummary& into, const LayerSummary& s) {
  into.total += s.total;
  into.known += s.known;
  into.uncertain += s.uncertain;
  into.memory_matched += s.memory_matched;
  into.llm_calls += s.llm_calls;
  into.llm_failures += s.llm_failures;
  into.llm_attack += s.llm_attack;
  into.llm_attack_direct += s.llm_attack_direct;
  into.llm_attack_fusion += s.llm_attack_fusion;
  into.llm_benign += s.llm_benign;
  into.llm_unsure += s.llm_unsure;
  into.fusion_rejected += s.fusion_rejected;
  into.bucket += s.bucket;
  into.deferred += s.deferred;
}

}  // namespace

LayerRun run_layer(Layer layer, std::span<const ScoredEvent> events, double threshold, const PipelineConfig& config,
                   MemoryStore& memory, LlmClient& llm, const Clock& clock) {
  config.validate();
  LayerRun run;
  LayerSummary& s = run.summary;
  s.layer = std::string(to_string(layer));
  s.total = events.size();
  s.gate1_threshold = threshold;
  s.llm_threshold = config.llm.for_layer(layer);
  run.results.resize(events.size());

  std::vector<std::size_t> pending;
  auto flush = [&] {
    std::vector<PendingLlm> batch(pending.size());
    std::vector<PendingLlm*> calls;
    for (std::size_t b = 0; b < pending.size(); ++b) {
      PendingLlm& p = batch[b];
      p.index = pending[b];
      p.vector = embed(events[p.index].event, config.gate2.embedding);
      p.match = match_vector(memory, p.vector, config.gate2);
      if (!p.match.matched) {
        p.prompt = build_prompt(events[p.index], p.match);
        calls.push_back(&p);
      }
    }
    run_calls(calls, llm, config.llm_parallelism);

    for (auto& p : batch) {
      const ScoredEvent& se = events[p.index];
      EventResult& r = run.results[p.index];
      const std::int64_t now = clock();

      AuditRecord audit;
      audit.event_id = se.event.id;
      audit.layer = layer;
      audit.model_label = se.pred_label;
      audit.model_confidence = se.confidence;
      audit.matched = p.match.matched;
      audit.nearest_distance = p.match.nearest_distance;
      audit.support = p.match.support;
      audit.meta_confidence = p.match.meta_confidence;
      audit.created_at = now;

      r.outcome.trace.append({GateId::gate2, p.match.matched ? "MATCH" : "NO_MATCH", p.match.nearest_distance});
      if (p.match.matched) {
        ++s.memory_matched;
        r.outcome.sink = Sink::memory_attack;
        r.final_label = 1;
        audit.gate = 2;
        audit.decision = std::string(to_string(Sink::memory_attack));
        run.audit.push_back(std::move(audit));
        continue;
      }

      ++s.llm_calls;
      LlmVerdict verdict;
      if (p.call.failure) {
        ++s.llm_failures;
        audit.failure = std::string(to_string(*p.call.failure));
      } else {
        verdict = parse_verdict(p.call.raw);
      }
      const Gate3Decision d = gate3_decide(se, verdict, layer, config.llm, config.fusion);
      r.outcome.sink = d.sink;
      r.outcome.trace.append({GateId::gate3, std::string(to_string(d.sink)), d.fused_score.value_or(verdict.confidence)});

      audit.gate = 3;
      audit.prompt_sha256 = sha256_hex(p.prompt);
      audit.llm_label = upper_label(verdict.decision);
      audit.llm_confidence = verdict.confidence;
      audit.attack_type = verdict.attack_type;
      audit.decision = std::string(to_string(d.sink));
      audit.provenance = std::string(to_string(d.provenance));
      audit.fused_score = d.fused_score;

      if (d.sink == Sink::llm_attack) {
        ++s.llm_attack;
        ++(d.provenance == Provenance::direct ? s.llm_attack_direct : s.llm_attack_fusion);
        r.final_label = 1;
        MemoryRecord record;
        record.id = se.event.id;
        record.layer = layer;
        record.vector = std::move(p.vector);
        record.attack_type = verdict.attack_type;
        record.source = RecordSource::llm_promoted;
        record.created_at = now;
        memory.insert(std::move(record));
      } else {
        ++(d.direct == Verdict::benign ? s.llm_benign : s.llm_unsure);
        if (d.fusion_rejected) ++s.fusion_rejected;
        ++s.bucket;
        ++s.deferred;
        r.final_label = se.pred_label;

        ReviewRecord review;
        review.event_id = se.event.id;
        review.layer = layer;
        review.model_label = se.pred_label;
        review.model_confidence = se.confidence;
        review.llm_label = upper_label(verdict.decision);
        review.llm_confidence = verdict.confidence;
        review.attack_type = verdict.attack_type;
        review.explanation = verdict.explanation;
        review.fused_score = d.fused_score;
        review.gate_trace = r.outcome.trace.records();
        review.created_at = now;
        run.review.push_back(std::move(review));
      }
      run.audit.push_back(std::move(audit));
    }
    pending.clear();
  };

  for (std::size_t i = 0; i < events.size(); ++i) {
    const ScoredEvent& se = events[i];
    EventResult& r = run.results[i];
    r.scored = se;
    const bool known = route_gate1(se, threshold) == Gate1Route::known;
    r.outcome.trace.append({GateId::gate1, known ? "KNOWN" : "UNCERTAIN", se.confidence});
    if (known) {
      ++s.known;
      r.outcome.sink = Sink::known_accept;
      r.final_label = se.pred_label;
      continue;
    }
    ++s.uncertain;
    pending.push_back(i);
    if (pending.size() >= config.llm_batch) flush();
  }
  if (!pending.empty()) flush();

  std::vector<int> predicted, truth;
  for (const auto& r : run.results) {
    if (!r.scored.event.truth) continue;
    predicted.push_back(r.final_label);
    truth.push_back(*r.scored.event.truth);
  }
  if (!truth.empty()) s.metrics = compute_metrics(predicted, truth);
  return run;
}

void assert_partition(const LayerRun& run) {
  const LayerSummary& s = run.summary;
  std::array<std::size_t, 4> sinks{};
  for (const auto& r : run.results) {
    const auto& trace = r.outcome.trace.records();
    if (trace.empty() || trace.front().gate != GateId::gate1) {
      throw Error(ErrorCode::partition_violation, "event '" + r.scored.event.id + "' never passed Gate-1");
    }
    ++sinks[static_cast<std::size_t>(r.outcome.sink)];
  }
  auto fail = [&](const std::string& what) {
    throw Error(ErrorCode::partition_violation, fmt::format("layer {}: {}", s.layer, what));
  };
  if (sinks[0] + sinks[1] + sinks[2] + sinks[3] != s.total || run.results.size() != s.total) {
    fail("sinks do not cover the event set");
  }
  if (sinks[0] != s.known) fail("KNOWN_ACCEPT count differs from known");
  if (sinks[1] != s.memory_matched) fail("MEMORY_ATTACK count differs from memory_matched");
  if (sinks[2] != s.llm_attack) fail("LLM_ATTACK count differs from llm_attack");
  if (sinks[3] != s.bucket) fail("REVIEW_BUCKET count differs from bucket");
  if (s.known + s.uncertain != s.total) fail("known + uncertain != total");
  if (s.memory_matched + s.llm_attack + s.llm_benign + s.llm_unsure != s.uncertain) {
    fail("uncertain != memory_matched + llm outcomes");
  }
  if (s.llm_benign + s.llm_unsure != s.bucket) fail("bucket != llm_benign + llm_unsure");
  if (s.llm_attack_direct + s.llm_attack_fusion != s.llm_attack) fail("llm_attack provenance split inconsistent");
  if (s.fusion_rejected > s.llm_unsure) fail("fusion_rejected exceeds llm_unsure");
  if (run.review.size() != s.bucket) fail("review records differ from bucket size");
}

// ---------------------------------------------------------------- full runs

RunArtifacts ModeRun::artifacts() const {
  RunArtifacts a;
  a.summary = summary;
  for (const auto& layer : layers) {
    for (const auto& r : layer.results) {
      a.confidence.push_back({r.scored.event.id, r.scored.event.layer, r.scored.pred_label, r.scored.confidence,
                              r.scored.event.truth, r.outcome.sink});
    }
    a.audit.insert(a.audit.end(), layer.audit.begin(), layer.audit.end());
    a.review.insert(a.review.end(), layer.review.begin(), layer.review.end());
  }
  return a;
}

std::string make_run_id(const PipelineConfig& c, std::span<const PreparedLayer> layers) {
  std::string key = fmt::format("seed={};static={};eval={};window={};episodes={};llm={},{},{};fusion={},{};batch={}",
                                c.seed, c.static_threshold, c.eval_count, c.qcal.window, c.qcal.episodes, c.llm.tau[0],
                                c.llm.tau[1], c.llm.tau[2], c.fusion.w_model, c.fusion.w_llm, c.llm_batch);
  for (const auto& l : layers) {
    key += fmt::format(";{}:{}", to_string(l.layer), l.eval.size());
    for (const auto& se : l.eval) key += fmt::format(",{}={}/{}", se.event.id, se.pred_label, se.confidence);
  }
  return sha256_hex(key).substr(0, 12);
}

std::vector<CalibrationResult> calibrate_layers(std::span<const PreparedLayer> layers, const PipelineConfig& config) {
  std::vector<CalibrationResult> out;
  for (const auto& l : layers) {
    out.push_back(calibrate(l.layer, l.calibration, config.qcal, config.seed + layer_index(l.layer)));
  }
  return out;
}

std::vector<LlmLayerCalibration> calibrate_llm_layers(std::span<const PreparedLayer> layers,
                                                      const PipelineConfig& config, LlmClient& llm) {
  std::vector<LlmLayerCalibration> out;
  const MemoryStore empty(config.gate2.embedding.dims);
  for (const auto& l : layers) {
    std::vector<PendingLlm> work;
    for (std::size_t i = 0; i < l.calibration.size(); ++i) {
      const ScoredEvent& se = l.calibration[i];
      if (route_gate1(se, config.static_threshold) == Gate1Route::known || !se.event.truth) continue;
      PendingLlm p;
      p.index = i;
      p.prompt = build_prompt(se, match_decision(empty, se.event, config.gate2));
      work.push_back(std::move(p));
    }
    std::vector<PendingLlm*> calls;
    for (auto& p : work) calls.push_back(&p);
    run_calls(calls, llm, config.llm_parallelism);

    std::vector<LlmCalibrationSample> samples;
    for (const auto& p : work) {
      const LlmVerdict v = p.call.failure ? LlmVerdict{} : parse_verdict(p.call.raw);
      samples.push_back({v.confidence, v.decision, *l.calibration[p.index].event.truth});
    }
    LlmLayerCalibration cal;
    cal.layer = l.layer;
    cal.samples = samples.size();
    try {
      cal.result = calibrate_llm_threshold(samples, config.llm.p_min, default_llm_grid());
    } catch (const Error& e) {
      if (e.code() != ErrorCode::no_labeled_events) throw;
      spdlog::warn("{}: {}; keeping threshold {:.2f}", to_string(l.layer), e.what(), config.llm.for_layer(l.layer));
      cal.result = LlmCalibration{config.llm.for_layer(l.layer), true, 0.0, 0.0};
    }
    out.push_back(cal);
  }
  return out;
}

ModeRun run_mode(Mode mode, std::span<const PreparedLayer> layers, std::span<const CalibrationResult> calibrations,
                 const PipelineConfig& config, std::span<MemoryStore> memories, LlmClient& llm, const Clock& clock) {
  config.validate();
  if (memories.size() != layers.size()) {
    throw Error(ErrorCode::bad_config, fmt::format("{} memory stores for {} layers", memories.size(), layers.size()));
  }
  std::vector<std::optional<double>> learned(layers.size());
  for (std::size_t k = 0; k < layers.size(); ++k) {
    for (const auto& c : calibrations) {
      if (c.layer == layers[k].layer) learned[k] = c.learned_threshold;
    }
    if (mode == Mode::adaptive && !learned[k]) {
      throw Error(ErrorCode::bad_config, fmt::format("ADAPTIVE mode needs a calibration for layer {}",
                                                     to_string(layers[k].layer)));
    }
  }

  ModeRun out;
  RunSummary& summary = out.summary;
  summary.run_id = make_run_id(config, layers);
  summary.mode = mode;
  summary.seed = config.seed;
  summary.started_at = clock();

  auto run_one = [&](std::size_t k) {
    const double threshold = mode == Mode::adaptive ? *learned[k] : config.static_threshold;
    LayerRun run = run_layer(layers[k].layer, layers[k].eval, threshold, config, memories[k], llm, clock);
    if (mode == Mode::adaptive) run.summary.learned_threshold = learned[k];
    assert_partition(run);
    return run;
  };

  out.layers.resize(layers.size());
  if (config.parallel_layers && layers.size() > 1) {
    std::vector<std::future<LayerRun>> futures;
    for (std::size_t k = 0; k < layers.size(); ++k) futures.push_back(std::async(std::launch::async, run_one, k));
    for (std::size_t k = 0; k < layers.size(); ++k) out.layers[k] = futures[k].get();
  } else {
    for (std::size_t k = 0; k < layers.size(); ++k) out.layers[k] = run_one(k);
  }

  LayerSummary& overall = summary.overall;
  overall.layer = "overall";
  overall.gate1_threshold = mode == Mode::static_threshold ? config.static_threshold : 0.0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  bool labeled = false;
  for (const auto& run : out.layers) {
    summary.layers.push_back(run.summary);
    add_counts(overall, run.summary);
    if (run.summary.metrics) {
      labeled = true;
      tp += run.summary.metrics->tp;
      fp += run.summary.metrics->fp;
      fn += run.summary.metrics->fn;
      tn += run.summary.metrics->tn;
    }
  }
  if (labeled) overall.metrics = metrics_from_counts(tp, fp, fn, tn);
  summary.finished_at = clock();
  return out;
}

Comparison compare_modes(std::span<const PreparedLayer> layers, std::span<const CalibrationResult> calibrations,
                         const PipelineConfig& config, std::span<const MemoryStore> initial_memories, LlmClient& llm,
                         const Clock& clock) {
  auto fresh = [&] {
    std::vector<MemoryStore> m(initial_memories.begin(), initial_memories.end());
    for (auto& store : m) store.detach();
    return m;
  };

  Comparison c;
  auto static_mem = fresh();
  c.static_run = run_mode(Mode::static_threshold, layers, calibrations, config, static_mem, llm, clock);
  auto adaptive_mem = fresh();
  c.adaptive_run = run_mode(Mode::adaptive, layers, calibrations, config, adaptive_mem, llm, clock);

  for (std::size_t k = 0; k < layers.size(); ++k) {
    auto confidences = [](const LayerRun& run) {
      std::vector<double> v;
      for (const auto& r : run.results) v.push_back(r.scored.confidence);
      std::sort(v.begin(), v.end());
      return v;
    };
    if (confidences(c.static_run.layers[k]) != confidences(c.adaptive_run.layers[k])) {
      throw Error(ErrorCode::partition_violation, "static and adaptive runs saw different score streams");
    }
  }

  c.cost = cost_analysis(c.static_run.summary.overall.uncertain, c.adaptive_run.summary.overall.uncertain,
                         config.c_event);
  return c;
}

}  // namespace layerguard
