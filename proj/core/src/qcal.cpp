#include "layerguard/qcal.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "layerguard/error.hpp"

namespace layerguard {

QState discretize(std::span<const WindowSample> window) {
  if (window.empty()) throw Error(ErrorCode::empty_window, "cannot discretize an empty window");
  const double n = static_cast<double>(window.size());
  double sum = 0.0;
  std::size_t uncertain = 0;
  for (const auto& w : window) {
    sum += w.confidence;
    uncertain += w.uncertain ? 1 : 0;
  }
  const double mean = sum / n;
  double var = 0.0;
  for (const auto& w : window) var += (w.confidence - mean) * (w.confidence - mean);
  var /= n;
  const double ratio = static_cast<double>(uncertain) / n;

  auto bin = [](double x, double scale, int top) {
    return std::clamp(static_cast<int>(std::floor(x * scale)), 0, top);
  };
  return QState{bin(mean, 10.0, 9), bin(var, 50.0, 4), bin(ratio, 5.0, 4)};
}

ActionSet::ActionSet(std::vector<double> thresholds) : thresholds_(std::move(thresholds)) {
  if (thresholds_.empty()) throw Error(ErrorCode::bad_action_set, "action set is empty");
  for (std::size_t i = 0; i < thresholds_.size(); ++i) {
    if (!(thresholds_[i] >= 0.5 && thresholds_[i] < 1.0)) {
      throw Error(ErrorCode::bad_action_set, "threshold outside [0.5, 1): " + std::to_string(thresholds_[i]));
    }
    if (i > 0 && !(thresholds_[i] > thresholds_[i - 1])) {
      throw Error(ErrorCode::bad_action_set, "thresholds must be strictly increasing");
    }
  }
}

ActionSet ActionSet::default_grid() {
  std::vector<double> t;
  for (int c = 50; c <= 95; ++c) t.push_back(c / 100.0);
  return ActionSet(std::move(t));
}

QTable::QTable(std::size_t num_actions, double alpha, double gamma, double epsilon)
    : num_actions_(num_actions), alpha_(alpha), gamma_(gamma), epsilon_(epsilon) {
  if (num_actions == 0) throw Error(ErrorCode::bad_action_set, "Q-table needs at least one action");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(ErrorCode::bad_config, "alpha must lie in (0, 1]");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw Error(ErrorCode::bad_config, "gamma must lie in [0, 1)");
  set_epsilon(epsilon);
}

void QTable::set_epsilon(double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw Error(ErrorCode::bad_config, "epsilon must lie in [0, 1]");
  epsilon_ = epsilon;
}

double QTable::get(const QState& s, std::size_t action) const {
  auto it = table_.find(s.index());
  return it == table_.end() ? 0.0 : it->second.at(action);
}

void QTable::set(const QState& s, std::size_t action, double value) {
  auto [it, inserted] = table_.try_emplace(s.index(), num_actions_, 0.0);
  it->second.at(action) = value;
}

double QTable::max_value(const QState& s) const {
  auto it = table_.find(s.index());
  if (it == table_.end()) return 0.0;
  return *std::max_element(it->second.begin(), it->second.end());
}

std::size_t QTable::greedy_action(const QState& s) const {
  auto it = table_.find(s.index());
  if (it == table_.end()) return 0;
  // max_element returns the first maximum, i.e. the lowest index.
  return static_cast<std::size_t>(std::max_element(it->second.begin(), it->second.end()) - it->second.begin());
}

std::size_t select_action(const QTable& table, const QState& s, Rng& rng) {
  if (table.epsilon() > 0.0 && unit_uniform(rng) < table.epsilon()) {
    return uniform_index(rng, table.num_actions());
  }
  return table.greedy_action(s);
}

double reward(const ScoredEvent& event, bool routed_known, double window_uncertain_ratio,
              const RewardConfig& config) {
  if (!event.event.truth) {
    throw Error(ErrorCode::missing_truth, "reward needs a labeled event: '" + event.event.id + "'");
  }
  const int truth = *event.event.truth;
  double r = 0.0;
  if (routed_known) {
    if (event.pred_label == truth) {
      r = config.correct_known;
    } else {
      r = truth == 1 ? config.wrong_known_attack : config.wrong_known_benign;
    }
  } else {
    r = config.escalate;
  }
  if (window_uncertain_ratio > config.band_max) r += config.band_penalty;
  return r;
}

void bellman_update(QTable& table, const QState& s, std::size_t action, double r, const QState& s_next) {
  const double q = table.get(s, action);
  const double target = r + table.gamma() * table.max_value(s_next);
  table.set(s, action, q + table.alpha() * (target - q));
}

namespace {

struct SliceOutcome {
  double mean_reward = 0.0;
  std::size_t uncertain = 0;
  QState next;
};

SliceOutcome route_slice(std::span<const ScoredEvent> slice, double threshold, const RewardConfig& rc,
                         std::vector<WindowSample>& scratch) {
  scratch.clear();
  std::size_t uncertain = 0;
  for (const auto& se : slice) {
    const bool unc = route_gate1(se, threshold) == Gate1Route::uncertain;
    uncertain += unc ? 1 : 0;
    scratch.push_back({se.confidence, unc});
  }
  const double ratio = static_cast<double>(uncertain) / static_cast<double>(slice.size());
  double total = 0.0;
  for (std::size_t i = 0; i < slice.size(); ++i) total += reward(slice[i], !scratch[i].uncertain, ratio, rc);
  return {total / static_cast<double>(slice.size()), uncertain, discretize(scratch)};
}

QState opening_state(std::span<const ScoredEvent> first_slice) {
  std::vector<WindowSample> w;
  w.reserve(first_slice.size());
  for (const auto& se : first_slice) w.push_back({se.confidence, false});
  return discretize(w);
}

}  // namespace

CalibrationResult calibrate(Layer layer, std::span<const ScoredEvent> stream, const CalibrationConfig& config,
                            std::uint64_t seed) {
  if (config.window == 0) throw Error(ErrorCode::bad_config, "window must be positive");
  if (config.episodes < 1) throw Error(ErrorCode::bad_config, "episodes must be positive");
  if (stream.size() < config.window) {
    throw Error(ErrorCode::stream_too_short, "calibration stream has " + std::to_string(stream.size()) +
                                                 " events, window is " + std::to_string(config.window));
  }
  for (const auto& se : stream) {
    if (!se.event.truth) throw Error(ErrorCode::unlabeled_stream, "event '" + se.event.id + "' has no truth");
  }

  std::vector<std::span<const ScoredEvent>> slices;
  for (std::size_t begin = 0; begin < stream.size(); begin += config.window) {
    slices.push_back(stream.subspan(begin, std::min(config.window, stream.size() - begin)));
  }

  const ActionSet& actions = config.actions;
  QTable table(actions.size(), config.alpha, config.gamma, config.epsilon_start);
  Rng rng(seed);
  std::vector<WindowSample> scratch;
  scratch.reserve(config.window);

  double epsilon = config.epsilon_start;
  for (int episode = 0; episode < config.episodes; ++episode) {
    table.set_epsilon(epsilon);
    QState s = opening_state(slices.front());
    for (const auto& slice : slices) {
      const std::size_t a = select_action(table, s, rng);
      const SliceOutcome out = route_slice(slice, actions[a], config.reward, scratch);
      bellman_update(table, s, a, out.mean_reward, out.next);
      s = out.next;
    }
    epsilon = std::max(config.epsilon_floor, epsilon * config.epsilon_decay);
  }

  CalibrationResult result;
  result.layer = layer;
  result.episodes = config.episodes;
  result.seed = seed;
  result.thresholds = actions.thresholds();
  result.action_histogram.assign(actions.size(), 0);

  table.set_epsilon(0.0);
  std::size_t uncertain = 0;
  QState s = opening_state(slices.front());
  for (const auto& slice : slices) {
    const std::size_t a = select_action(table, s, rng);
    ++result.action_histogram[a];
    const SliceOutcome out = route_slice(slice, actions[a], config.reward, scratch);
    uncertain += out.uncertain;
    s = out.next;
  }
  const auto& h = result.action_histogram;
  result.learned_action = static_cast<std::size_t>(std::max_element(h.begin(), h.end()) - h.begin());
  result.learned_threshold = actions[result.learned_action];
  result.rollout_uncertain_ratio = static_cast<double>(uncertain) / static_cast<double>(stream.size());
  return result;
}

}  // namespace layerguard
