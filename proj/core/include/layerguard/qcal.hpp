#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "layerguard/event.hpp"
#include "layerguard/random.hpp"

namespace layerguard {

// Discretized sliding-window statistics: mean confidence (10 bins),
// confidence variance (5 bins), uncertain-event ratio (5 bins).
struct QState {
  int mean_bin = 0;
  int var_bin = 0;
  int unc_bin = 0;

  static constexpr std::size_t kCount = 10 * 5 * 5;

  std::size_t index() const noexcept {
    return static_cast<std::size_t>((mean_bin * 5 + var_bin) * 5 + unc_bin);
  }
  auto operator<=>(const QState&) const = default;
};

struct WindowSample {
  double confidence = 0.0;
  bool uncertain = false;
};

QState discretize(std::span<const WindowSample> window);

// Candidate Gate-1 thresholds, strictly increasing, each in [0.5, 1).
class ActionSet {
 public:
  explicit ActionSet(std::vector<double> thresholds);
  // 0.50, 0.51, ..., 0.95
  static ActionSet default_grid();

  std::size_t size() const noexcept { return thresholds_.size(); }
  double operator[](std::size_t i) const { return thresholds_.at(i); }
  const std::vector<double>& thresholds() const noexcept { return thresholds_; }

 private:
  std::vector<double> thresholds_;
};

struct RewardConfig {
  double correct_known = 1.0;
  double wrong_known_benign = -2.0;
  double wrong_known_attack = -3.0;
  double escalate = -0.2;
  double band_penalty = -1.0;
  double band_max = 0.25;
};

class QTable {
 public:
  QTable(std::size_t num_actions, double alpha, double gamma, double epsilon);

  std::size_t num_actions() const noexcept { return num_actions_; }
  double alpha() const noexcept { return alpha_; }
  double gamma() const noexcept { return gamma_; }
  double epsilon() const noexcept { return epsilon_; }
  void set_epsilon(double epsilon);

  // Absent entries read as 0.
  double get(const QState& s, std::size_t action) const;
  void set(const QState& s, std::size_t action, double value);
  double max_value(const QState& s) const;
  std::size_t greedy_action(const QState& s) const;  // lowest index on ties

  std::size_t populated_states() const noexcept { return table_.size(); }

 private:
  std::size_t num_actions_;
  double alpha_;
  double gamma_;
  double epsilon_;
  std::unordered_map<std::size_t, std::vector<double>> table_;
};

std::size_t select_action(const QTable& table, const QState& s, Rng& rng);

// Per-event reward. Throws Error(missing_truth) on unlabeled events.
double reward(const ScoredEvent& event, bool routed_known, double window_uncertain_ratio,
              const RewardConfig& config);

// Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') - Q(s,a))
void bellman_update(QTable& table, const QState& s, std::size_t action, double r, const QState& s_next);

struct CalibrationConfig {
  int episodes = 20;
  std::size_t window = 100;
  double epsilon_start = 1.0;
  double epsilon_decay = 0.9;
  double epsilon_floor = 0.05;
  double alpha = 0.1;
  double gamma = 0.9;
  RewardConfig reward;
  ActionSet actions = ActionSet::default_grid();
};

struct CalibrationResult {
  Layer layer = Layer::network;
  double learned_threshold = 0.85;
  std::size_t learned_action = 0;
  std::vector<double> thresholds;
  std::vector<std::size_t> action_histogram;  // greedy-rollout counts per action
  int episodes = 0;
  double rollout_uncertain_ratio = 0.0;
  std::uint64_t seed = 0;

  bool operator==(const CalibrationResult&) const = default;
};

// Q-learning over window-sized slices of a labeled score stream. Each episode
// is one pass; each slice is routed at one selected threshold, rewarded by the
// mean per-event reward, and feeds one Bellman update. A final greedy rollout
// picks the modal action (lowest threshold on ties).
CalibrationResult calibrate(Layer layer, std::span<const ScoredEvent> stream, const CalibrationConfig& config,
                            std::uint64_t seed);

enum class Gate1Route { known, uncertain };

// KNOWN iff confidence >= threshold.
inline Gate1Route route_gate1(const ScoredEvent& event, double threshold) noexcept {
  return event.confidence >= threshold ? Gate1Route::known : Gate1Route::uncertain;
}

}  // namespace layerguard
