#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "layerguard/error.hpp"
#include "layerguard/qcal.hpp"
#include "test_support.hpp"

using namespace layerguard;
using layerguard::testing::error_code_of;
using layerguard::testing::scored;

namespace {

std::vector<WindowSample> window_of(std::initializer_list<double> confidences, std::size_t uncertain = 0) {
  std::vector<WindowSample> w;
  for (double c : confidences) w.push_back({c, w.size() < uncertain});
  return w;
}

// Correct predictions at 0.97 interleaved with wrong ones at 0.55 (every 5th).
std::vector<ScoredEvent> bimodal_stream(std::size_t n) {
  std::vector<ScoredEvent> out;
  for (std::size_t i = 0; i < n; ++i) {
    const int truth = static_cast<int>((i / 2) % 2);
    const bool wrong = i % 5 == 4;
    out.push_back(scored("b-" + std::to_string(i), Layer::host, wrong ? 1 - truth : truth, wrong ? 0.55 : 0.97, truth));
  }
  return out;
}

// Total per-event reward of routing the whole stream at one threshold, with
// the band penalty judged per window slice.
double sweep_reward(const std::vector<ScoredEvent>& stream, double tau, const CalibrationConfig& cfg) {
  double total = 0.0;
  for (std::size_t b = 0; b < stream.size(); b += cfg.window) {
    const std::size_t e = std::min(stream.size(), b + cfg.window);
    std::size_t unc = 0;
    for (std::size_t i = b; i < e; ++i) unc += stream[i].confidence < tau;
    const double ratio = static_cast<double>(unc) / static_cast<double>(e - b);
    for (std::size_t i = b; i < e; ++i) {
      const auto& se = stream[i];
      double r;
      if (se.confidence >= tau) {
        r = se.pred_label == *se.event.truth ? 1.0 : (*se.event.truth == 1 ? -3.0 : -2.0);
      } else {
        r = -0.2;
      }
      if (ratio > 0.25) r -= 1.0;
      total += r;
    }
  }
  return total;
}

}  // namespace

TEST_SUITE("gate1-qcal") {
  TEST_CASE("discretize boundary and hand-computed cases") {
    CHECK(discretize(window_of({1.0, 1.0, 1.0})) == QState{9, 0, 0});
    const QState two = discretize(window_of({0.0, 1.0}));
    CHECK(two.mean_bin == 5);
    CHECK(two.var_bin == 4);  // variance 0.25 clamps to the top bin
    std::vector<WindowSample> w(100, {0.9, false});
    for (int i = 0; i < 47; ++i) w[i].uncertain = true;
    CHECK(discretize(w).unc_bin == 2);
    CHECK(error_code_of([] { discretize({}); }) == ErrorCode::empty_window);
  }

  TEST_CASE("state index is a bijection over the 250 states") {
    std::set<std::size_t> seen;
    for (int m = 0; m < 10; ++m)
      for (int v = 0; v < 5; ++v)
        for (int u = 0; u < 5; ++u) seen.insert(QState{m, v, u}.index());
    CHECK(seen.size() == QState::kCount);
    CHECK(*seen.rbegin() == QState::kCount - 1);
  }

  TEST_CASE("action set validation") {
    const auto grid = ActionSet::default_grid();
    CHECK(grid.size() == 46);
    CHECK(grid[0] == 0.50);
    CHECK(grid[45] == 0.95);
    CHECK(error_code_of([] { ActionSet({0.6, 0.6}); }) == ErrorCode::bad_action_set);
    CHECK(error_code_of([] { ActionSet({0.4, 0.6}); }) == ErrorCode::bad_action_set);
    CHECK(error_code_of([] { ActionSet({0.6, 1.0}); }) == ErrorCode::bad_action_set);
    CHECK(error_code_of([] { ActionSet({}); }) == ErrorCode::bad_action_set);
  }

  TEST_CASE("select_action with epsilon 0 is greedy, lowest index on ties") {
    QTable t(46, 0.1, 0.9, 0.0);
    Rng rng(1);
    const QState s{3, 1, 2};
    CHECK(select_action(t, s, rng) == 0);
    t.set(s, 12, 5.0);
    CHECK(select_action(t, s, rng) == 12);
    t.set(s, 7, 5.0);
    CHECK(select_action(t, s, rng) == 7);
  }

  TEST_CASE("select_action with epsilon 1 is reproducible under a seed") {
    QTable t(46, 0.1, 0.9, 1.0);
    Rng a(2024), b(2024);
    std::vector<std::size_t> sa, sb;
    for (int i = 0; i < 200; ++i) {
      sa.push_back(select_action(t, QState{}, a));
      sb.push_back(select_action(t, QState{}, b));
    }
    CHECK(sa == sb);
    CHECK(std::set<std::size_t>(sa.begin(), sa.end()).size() > 20);
  }

  TEST_CASE("reward rule table") {
    const RewardConfig rc;
    CHECK(reward(scored("a", Layer::host, 1, 0.9, 1), true, 0.05, rc) == 1.0);
    CHECK(reward(scored("a", Layer::host, 0, 0.9, 0), true, 0.05, rc) == 1.0);
    CHECK(reward(scored("a", Layer::host, 1, 0.6, 0), false, 0.30, rc) == doctest::Approx(-1.2));
    CHECK(reward(scored("a", Layer::host, 0, 0.9, 1), true, 0.0, rc) == -3.0);
    CHECK(reward(scored("a", Layer::host, 1, 0.9, 0), true, 0.0, rc) == -2.0);
    CHECK(reward(scored("a", Layer::host, 1, 0.9, 0), true, 0.25, rc) == -2.0);  // band is strict
    CHECK(error_code_of([&] { reward(scored("a", Layer::host, 1, 0.9, std::nullopt), true, 0.0, rc); }) ==
          ErrorCode::missing_truth);
  }

  TEST_CASE("bellman update examples") {
    const QState s{1, 1, 1}, n{2, 2, 2};
    QTable full(4, 1.0, 0.0, 0.0);
    full.set(s, 2, 42.0);
    bellman_update(full, s, 2, -0.7, n);
    CHECK(full.get(s, 2) == doctest::Approx(-0.7).epsilon(1e-12));

    QTable t(4, 0.1, 0.9, 0.0);
    t.set(s, 0, 0.5);
    t.set(n, 3, 0.8);
    t.set(n, 1, 0.2);
    bellman_update(t, s, 0, 1.0, n);
    CHECK(t.get(s, 0) == doctest::Approx(0.622).epsilon(1e-12));

    QTable decay(2, 0.5, 0.0, 0.0);
    decay.set(s, 1, 1.0);
    for (int i = 0; i < 60; ++i) bellman_update(decay, s, 1, 0.0, n);
    CHECK(std::abs(decay.get(s, 1)) < 1e-15);
    CHECK(decay.get(s, 1) == std::ldexp(1.0, -60));
  }

  TEST_CASE("bellman replay matches an independent map-based recomputation") {
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    QTable t(6, 0.3, 0.8, 0.0);
    std::map<std::pair<std::size_t, std::size_t>, double> ref;
    auto state = [&](std::uint64_t r) { return QState{int(r % 10), int((r / 10) % 5), int((r / 50) % 5)}; };
    for (int step = 0; step < 5000; ++step) {
      const QState s = state(gen() % 20), n = state(gen() % 20);
      const std::size_t a = gen() % 6;
      const double r = u(gen);
      // Entries never written read as zero.
      auto read = [&](std::size_t si, std::size_t k) {
        auto it = ref.find({si, k});
        return it == ref.end() ? 0.0 : it->second;
      };
      double best = read(n.index(), 0);
      for (std::size_t k = 1; k < 6; ++k) best = std::max(best, read(n.index(), k));
      const double q = read(s.index(), a);
      ref[{s.index(), a}] = q + 0.3 * (r + 0.8 * best - q);
      bellman_update(t, s, a, r, n);
    }
    for (const auto& [key, v] : ref) {
      const QState s{int(key.first / 25), int((key.first / 5) % 5), int(key.first % 5)};
      CHECK(std::abs(t.get(s, key.second) - v) <= 1e-12);
    }
  }

  TEST_CASE("route_gate1 examples") {
    CHECK(route_gate1(scored("a", Layer::network, 1, 0.95, 1), 0.81) == Gate1Route::known);
    CHECK(route_gate1(scored("a", Layer::network, 1, 0.5807, 1), 0.85) == Gate1Route::uncertain);
    CHECK(route_gate1(scored("a", Layer::network, 1, 0.85, 1), 0.85) == Gate1Route::known);
  }

  TEST_CASE("raising the threshold never turns an uncertain event known") {
    std::mt19937_64 gen(4);
    std::uniform_real_distribution<double> u(0.5, 1.0);
    for (int i = 0; i < 2000; ++i) {
      const auto se = scored("x", Layer::host, 1, u(gen), 1);
      const double t1 = u(gen), t2 = u(gen);
      if (t1 <= t2 && route_gate1(se, t1) == Gate1Route::uncertain) {
        CHECK(route_gate1(se, t2) == Gate1Route::uncertain);
      }
    }
  }

  TEST_CASE("calibrate on a confidently correct stream never escalates") {
    std::vector<ScoredEvent> stream;
    std::mt19937_64 gen(8);
    std::uniform_real_distribution<double> u(0.99, 1.0);
    for (int i = 0; i < 1000; ++i) stream.push_back(scored("c", Layer::network, i % 2, u(gen), i % 2));
    // Simulation oracle: every candidate escalates nothing.
    CalibrationConfig cfg;
    for (double tau : cfg.actions.thresholds()) {
      for (const auto& se : stream) REQUIRE(route_gate1(se, tau) == Gate1Route::known);
    }
    const auto r = calibrate(Layer::network, stream, cfg, 5);
    CHECK(r.learned_threshold <= 0.95);
    CHECK(r.rollout_uncertain_ratio == 0.0);
    CHECK(r.episodes == 20);
    std::size_t total = 0;
    for (auto c : r.action_histogram) total += c;
    CHECK(total == 10);
  }

  TEST_CASE("calibrate on a bimodal stream picks an interior threshold") {
    const auto stream = bimodal_stream(2000);
    CalibrationConfig cfg;
    // Brute-force sweep: every interior candidate beats every candidate that
    // accepts the wrong mass.
    double best_extreme = -1e300, worst_interior = 1e300;
    for (double tau : cfg.actions.thresholds()) {
      const double total = sweep_reward(stream, tau, cfg);
      if (tau <= 0.55) best_extreme = std::max(best_extreme, total);
      else worst_interior = std::min(worst_interior, total);
    }
    REQUIRE(worst_interior > best_extreme);

    const auto r = calibrate(Layer::host, stream, cfg, 42);
    CHECK(r.learned_threshold > 0.55);
    CHECK(r.learned_threshold < 0.97);
    CHECK(r.rollout_uncertain_ratio == doctest::Approx(0.2));
  }

  TEST_CASE("calibrate is deterministic and returns a member of the action set") {
    const auto stream = bimodal_stream(700);
    CalibrationConfig cfg;
    cfg.episodes = 10;
    const auto a = calibrate(Layer::host, stream, cfg, 3);
    const auto b = calibrate(Layer::host, stream, cfg, 3);
    CHECK(a == b);
    CHECK(cfg.actions[a.learned_action] == a.learned_threshold);
    const auto& h = a.action_histogram;
    CHECK(h[a.learned_action] == *std::max_element(h.begin(), h.end()));
    for (std::size_t i = 0; i < a.learned_action; ++i) CHECK(h[i] < h[a.learned_action]);
  }

  TEST_CASE("calibrate preconditions") {
    CalibrationConfig cfg;
    auto stream = bimodal_stream(50);
    CHECK(error_code_of([&] { calibrate(Layer::host, stream, cfg, 1); }) == ErrorCode::stream_too_short);
    stream = bimodal_stream(200);
    stream[10].event.truth.reset();
    CHECK(error_code_of([&] { calibrate(Layer::host, stream, cfg, 1); }) == ErrorCode::unlabeled_stream);
  }
}
