#include <doctest.h>

#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "layerguard/corpus.hpp"
#include "layerguard/error.hpp"
#include "layerguard/scoring.hpp"
#include "layerguard/text.hpp"
#include "test_support.hpp"

using namespace layerguard;
using layerguard::testing::error_code_of;

namespace {

// Plain dense SGD with the same visiting order: each epoch a Fisher-Yates pass
// over the previous order, driven by the raw mt19937_64 stream.
std::pair<std::vector<double>, double> reference_sgd(const std::vector<std::vector<double>>& x,
                                                     const std::vector<int>& y, const TrainingConfig& cfg) {
  const std::size_t n = x.size();
  const std::size_t d = x.front().size();
  std::vector<double> w(d, 0.0);
  double b = 0.0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(cfg.seed);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) {
      const double u = static_cast<double>(rng() >> 11) / 9007199254740992.0;
      const std::size_t j = static_cast<std::size_t>(u * static_cast<double>(i)) % i;
      std::swap(order[i - 1], order[j]);
    }
    for (std::size_t idx : order) {
      double z = b;
      for (std::size_t k = 0; k < d; ++k) z += w[k] * x[idx][k];
      const double p = 1.0 / (1.0 + std::exp(-z));
      const double g = p - y[idx];
      for (std::size_t k = 0; k < d; ++k) w[k] = (1.0 - cfg.learning_rate * cfg.l2) * w[k] - cfg.learning_rate * g * x[idx][k];
      b -= cfg.learning_rate * g;
    }
  }
  return {w, b};
}

double l2_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST_SUITE("scoring") {
  TEST_CASE("idf of a term present in every document is 1") {
    const std::vector<std::string> corpus{"a b", "b c"};
    const auto v = TfidfVectorizer::fit(corpus);
    CHECK(v.document_frequency("b") == 2);
    CHECK(v.idf("b") == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(v.idf("a") == doctest::Approx(std::log(3.0 / 2.0) + 1.0));
    CHECK(error_code_of([&] { (void)v.idf("zzz"); }) == ErrorCode::unfitted_extractor);
  }

  TEST_CASE("single-document corpus gives idf 1 for every term") {
    const std::vector<std::string> corpus{"open read write read"};
    const auto v = TfidfVectorizer::fit(corpus);
    for (const auto& t : v.terms()) CHECK(v.idf(t) == doctest::Approx(1.0));
  }

  TEST_CASE("tf-idf transform against a hand computation") {
    const std::vector<std::string> corpus{"x y", "y z", "z z w"};
    const auto v = TfidfVectorizer::fit(corpus);
    REQUIRE(v.terms() == std::vector<std::string>{"w", "x", "y", "z"});
    // "y z z": tf y=1, z=2; df y=2, z=2 -> idf = ln(4/3)+1 for both.
    const double idf = std::log(4.0 / 3.0) + 1.0;
    const double ny = idf, nz = 2 * idf, norm = std::sqrt(ny * ny + nz * nz);
    const auto out = v.transform("Y z Z");
    CHECK(out[0] == 0.0);
    CHECK(out[1] == 0.0);
    CHECK(out[2] == doctest::Approx(ny / norm));
    CHECK(out[3] == doctest::Approx(nz / norm));
    CHECK(l2_norm(out) == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("transform with no vocabulary terms is the zero vector") {
    const std::vector<std::string> corpus{"a b", "b c"};
    const auto out = TfidfVectorizer::fit(corpus).transform("q r s");
    CHECK(out == std::vector<double>(3, 0.0));
  }

  TEST_CASE("min_df and max_features limit the vocabulary") {
    const std::vector<std::string> corpus{"a a a b c", "a b d", "a e"};
    const auto v = TfidfVectorizer::fit(corpus, {.min_df = 2, .max_features = 4096});
    CHECK(v.terms() == std::vector<std::string>{"a", "b"});
    const auto top = TfidfVectorizer::fit(corpus, {.min_df = 1, .max_features = 1});
    CHECK(top.terms() == std::vector<std::string>{"a"});
    CHECK(error_code_of([] { TfidfVectorizer::fit(std::vector<std::string>{}); }) == ErrorCode::empty_corpus);
  }

  TEST_CASE("network rows pass 40 columns through") {
    auto events = gen_network({.count = 10, .features = 40, .separation = 6.0, .attack_fraction = 0.3, .seed = 1});
    const auto fx = FeatureExtractor::numeric(Layer::network, network_feature_columns(40));
    CHECK(fx.extract(events[0]).size() == 40);
    // The raw flow line parses to the same values as the carried features.
    Event from_raw = events[0];
    from_raw.features.clear();
    const auto a = fx.extract(events[0]);
    const auto b = fx.extract(from_raw);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-9));
  }

  TEST_CASE("host line identical to a training line maps to an identical vector") {
    auto events = gen_hostlogs({.count = 50, .seed = 4});
    std::vector<std::string> docs;
    for (const auto& e : events) docs.push_back(e.raw);
    const auto fx = FeatureExtractor::tfidf(Layer::host, TfidfVectorizer::fit(docs));
    Event copy = events[3];
    copy.id = "other";
    CHECK(fx.extract(events[3]) == fx.extract(copy));
    CHECK(error_code_of([] { FeatureExtractor::unfitted_tfidf(Layer::host).extract(Event{"h", Layer::host}); }) ==
          ErrorCode::unfitted_extractor);
  }

  TEST_CASE("unseen hypervisor category yields an all-zero one-hot block") {
    auto events = gen_hypervisor({.total = 100, .classes = {{"normal", 60}, {"vm_escape", 40}}, .seed = 2});
    const auto& cats = HypervisorSchema::categorical_columns();
    const auto& values = HypervisorSchema::category_values();
    const auto& nums = HypervisorSchema::numeric_columns();
    const auto fx = FeatureExtractor::fit_categorical(Layer::hypervisor, events, cats, nums);

    // Brute-force re-encoding: the generator's category list restricted to
    // values seen in the fit events, in sorted order.
    auto field = [](const Event& e, const std::string& k) {
      for (const auto& [key, v] : parse_kv_record(e.raw)) {
        if (key == k) return v;
      }
      return std::string{};
    };
    auto encode = [&](const Event& e) {
      std::vector<double> out;
      for (std::size_t f = 0; f < cats.size(); ++f) {
        std::set<std::string> seen;
        for (const auto& ev : events) seen.insert(field(ev, cats[f]));
        std::vector<std::string> block;
        for (const auto& v : values[f]) {
          if (seen.count(v)) block.push_back(v);
        }
        std::sort(block.begin(), block.end());
        for (const auto& cat : block) out.push_back(field(e, cats[f]) == cat ? 1.0 : 0.0);
      }
      for (const auto& n : nums) out.push_back(std::stod(field(e, n)));
      return out;
    };

    Event odd = events[0];
    const std::string key = "hypervisor_type=";
    const auto pos = odd.raw.find(key);
    REQUIRE(pos != std::string::npos);
    const auto end = odd.raw.find(',', pos);
    odd.raw.replace(pos, end - pos, key + "bhyve");

    const auto got = fx.extract(odd);
    const auto want = encode(odd);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]));
    const std::size_t block = fx.categorical_fields()[0].categories.size();
    CHECK(fx.categorical_fields()[0].name == "hypervisor_type");
    for (std::size_t i = 0; i < block; ++i) CHECK(got[i] == 0.0);
    // Every category the fit saw comes from the generator's list.
    for (std::size_t f = 0; f < cats.size(); ++f) {
      for (const auto& c : fx.categorical_fields()[f].categories) {
        CHECK(std::find(values[f].begin(), values[f].end(), c) != values[f].end());
      }
    }
  }

  TEST_CASE("replay scorer returns the stored score") {
    const auto s = Scorer::replay({{"flow-1", {1, 0.5807}}});
    Event e;
    e.id = "flow-1";
    const auto se = s.score(e);
    CHECK(se.pred_label == 1);
    CHECK(se.confidence == 0.5807);
    e.id = "flow-2";
    CHECK(error_code_of([&] { s.score(e); }) == ErrorCode::missing_replay_entry);
  }

  TEST_CASE("zero logistic model scores a tie as benign") {
    const auto s = Scorer::logistic({0.0, 0.0}, 0.0);
    Event e;
    e.features = {3.0, -1.0};
    const auto se = s.score(e);
    CHECK(s.attack_probability(e.features) == 0.5);
    CHECK(se.confidence == 0.5);
    CHECK(se.pred_label == 0);
  }

  TEST_CASE("trainer matches a dense reference SGD on 20 points") {
    std::mt19937_64 gen(99);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<std::vector<double>> x(20, std::vector<double>(3));
    std::vector<int> y(20);
    for (std::size_t i = 0; i < 20; ++i) {
      y[i] = static_cast<int>(i % 2);
      for (auto& v : x[i]) v = nd(gen) + (y[i] ? 0.8 : -0.8);
    }
    x[4][1] = 0.0;  // exercise the sparse path
    const TrainingConfig cfg{.epochs = 50, .learning_rate = 0.1, .l2 = 1e-3, .seed = 17};
    const auto model = train_baseline(x, y, cfg);
    const auto [w, b] = reference_sgd(x, y, cfg);
    CHECK(model.bias() == doctest::Approx(b).epsilon(1e-9));
    for (std::size_t k = 0; k < w.size(); ++k) CHECK(model.weights()[k] == doctest::Approx(w[k]).epsilon(1e-9));
    for (const auto& row : x) {
      double z = b;
      for (std::size_t k = 0; k < w.size(); ++k) z += w[k] * row[k];
      CHECK(std::abs(model.attack_probability(row) - 1.0 / (1.0 + std::exp(-z))) < 1e-6);
    }
  }

  TEST_CASE("separable clusters are learned") {
    std::mt19937_64 gen(5);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    for (int i = 0; i < 200; ++i) {
      const int label = i % 2;
      const double c = label ? 2.5 : -2.5;  // margin >= 4 sigma along each axis
      x.push_back({c + nd(gen) * 0.5, c + nd(gen) * 0.5});
      y.push_back(label);
    }
    // Nearest-centroid oracle confirms the set is separable as built.
    std::array<std::array<double, 2>, 2> centroid{};
    std::array<int, 2> count{};
    for (std::size_t i = 0; i < x.size(); ++i) {
      centroid[y[i]][0] += x[i][0];
      centroid[y[i]][1] += x[i][1];
      ++count[y[i]];
    }
    for (int c = 0; c < 2; ++c) for (auto& v : centroid[c]) v /= count[c];
    int centroid_correct = 0, model_correct = 0;
    const auto model = train_baseline(x, y, {.epochs = 20, .learning_rate = 0.1, .l2 = 1e-4, .seed = 1});
    for (std::size_t i = 0; i < x.size(); ++i) {
      auto d2 = [&](int c) { return std::pow(x[i][0] - centroid[c][0], 2) + std::pow(x[i][1] - centroid[c][1], 2); };
      centroid_correct += (d2(1) < d2(0) ? 1 : 0) == y[i];
      Event e;
      e.features = x[i];
      model_correct += model.score(e).pred_label == y[i];
    }
    REQUIRE(centroid_correct == 200);
    CHECK(model_correct >= 190);
  }

  TEST_CASE("training is deterministic and rejects single-class data") {
    std::vector<std::vector<double>> x{{1, 0}, {0, 1}, {1, 1}, {0, 0}};
    std::vector<int> y{1, 0, 1, 0};
    const TrainingConfig cfg{.epochs = 30, .learning_rate = 0.2, .l2 = 1e-3, .seed = 8};
    const auto a = train_baseline(x, y, cfg);
    const auto b = train_baseline(x, y, cfg);
    CHECK(a.weights() == b.weights());
    CHECK(a.bias() == b.bias());
    std::vector<int> ones{1, 1, 1, 1};
    CHECK(error_code_of([&] { train_baseline(x, ones, cfg); }) == ErrorCode::single_class_data);
  }

  TEST_CASE("scaler standardizes columns and leaves constants unscaled") {
    const std::vector<std::vector<double>> rows{{1, 5}, {3, 5}};
    const auto s = FeatureScaler::fit(rows);
    CHECK(s.means() == std::vector<double>{2, 5});
    CHECK(s.scales() == std::vector<double>{1, 1});
    CHECK(s.transform(std::vector<double>{3, 7}) == std::vector<double>{1, 2});
    CHECK(error_code_of([&] { s.transform(std::vector<double>{1}); }) == ErrorCode::dimension_mismatch);
  }
}
