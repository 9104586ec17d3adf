#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "detfuse/errors.hpp"
#include "detfuse/random.hpp"
#include "detfuse/weights.hpp"
#include "support.hpp"

using namespace detfuse;
using namespace testing_support;

namespace {

TrainingPair random_pair(Rng& rng, int detector_count) {
  TrainingPair pair;
  pair.x.assign(static_cast<std::size_t>(detector_count) * 4, 0.0);
  pair.scores.assign(static_cast<std::size_t>(detector_count), 0.0);
  pair.present.assign(static_cast<std::size_t>(detector_count), false);
  // Draw a plausible normalized ground-truth box and jittered detector rows.
  const double x1 = rng.uniform(0.05, 0.6);
  const double y1 = rng.uniform(0.05, 0.6);
  const double x2 = x1 + rng.uniform(0.05, 0.35);
  const double y2 = y1 + rng.uniform(0.05, 0.35);
  pair.g = {x1, y1, x2, y2};
  bool any = false;
  for (int j = 0; j < detector_count; ++j) {
    if (rng.uniform01() < 0.25 && !(j + 1 == detector_count && !any)) {
      continue;  // absent row stays zero
    }
    any = true;
    const double score = rng.uniform(0.2, 1.0);
    pair.scores[static_cast<std::size_t>(j)] = score;
    pair.present[static_cast<std::size_t>(j)] = true;
    const double c[4] = {x1 + rng.normal(0, 0.02), y1 + rng.normal(0, 0.02),
                         x2 + rng.normal(0, 0.02), y2 + rng.normal(0, 0.02)};
    for (int d = 0; d < 4; ++d) {
      pair.x[static_cast<std::size_t>(j * 4 + d)] = c[d] * score;
    }
  }
  return pair;
}

std::vector<TrainingPair> exact_linear_pairs(Rng& rng, const std::vector<double>& w_true,
                                             int count) {
  std::vector<TrainingPair> pairs;
  const int detector_count = static_cast<int>(w_true.size());
  for (int i = 0; i < count; ++i) {
    TrainingPair pair = random_pair(rng, detector_count);
    for (int d = 0; d < 4; ++d) {
      double g = 0.0;
      for (int j = 0; j < detector_count; ++j) {
        g += w_true[static_cast<std::size_t>(j)] * pair.x_at(j, d);
      }
      pair.g[static_cast<std::size_t>(d)] = g;
    }
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

}  // namespace

TEST_CASE("build_pairs: full match produces one pair with three present rows") {
  DatasetBundle bundle;
  bundle.detector_names = {"a", "b", "c"};
  bundle.class_names = {"obj"};
  bundle.images = {make_image("im", 200, 100)};
  bundle.ground_truth = {make_gt("im", 0, 20, 10, 120, 60)};
  bundle.detections = {
      make_detection("im", 0, 0, 0.8, 21, 11, 121, 61),
      make_detection("im", 1, 0, 0.6, 19, 9, 119, 59),
      make_detection("im", 2, 0, 0.4, 22, 12, 122, 62),
  };
  const std::vector<std::string> ids = {"im"};
  const auto pairs = build_pairs(bundle, ids, 0.5);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].present == std::vector<bool>{true, true, true});
  // Row 0: normalized by 200x100, then scaled by score 0.8.
  CHECK(pairs[0].x_at(0, 0) == doctest::Approx(21.0 / 200.0 * 0.8));
  CHECK(pairs[0].x_at(0, 1) == doctest::Approx(11.0 / 100.0 * 0.8));
  CHECK(pairs[0].x_at(0, 3) == doctest::Approx(61.0 / 100.0 * 0.8));
  CHECK(pairs[0].g[0] == doctest::Approx(20.0 / 200.0));
  CHECK(pairs[0].g[3] == doctest::Approx(60.0 / 100.0));
}

TEST_CASE("build_pairs: per detector the highest-IoU qualifier wins") {
  DatasetBundle bundle;
  bundle.detector_names = {"a", "b"};
  bundle.class_names = {"obj"};
  bundle.images = {make_image("im", 100, 100)};
  bundle.ground_truth = {make_gt("im", 0, 10, 10, 50, 50)};
  // Detector 1 offers two qualifying boxes: iou 0.8-ish and 0.6-ish.
  const Detection tight = make_detection("im", 1, 0, 0.3, 11, 11, 51, 51);
  const Detection loose = make_detection("im", 1, 0, 0.9, 14, 14, 54, 54);
  CHECK(iou(tight.box, bundle.ground_truth[0].box) > iou(loose.box, bundle.ground_truth[0].box));
  bundle.detections = {loose, tight};

  const std::vector<std::string> ids = {"im"};
  const auto pairs = build_pairs(bundle, ids, 0.5);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].present == std::vector<bool>{false, true});
  CHECK(pairs[0].scores[1] == doctest::Approx(0.3));  // the tight one, not the confident one

  // Permutation invariance of the detection list.
  std::swap(bundle.detections[0], bundle.detections[1]);
  const auto swapped = build_pairs(bundle, ids, 0.5);
  REQUIRE(swapped.size() == 1);
  CHECK(swapped[0].x == pairs[0].x);
  CHECK(swapped[0].scores == pairs[0].scores);
}

TEST_CASE("build_pairs: unmatched ground truth yields no pair") {
  DatasetBundle bundle;
  bundle.detector_names = {"a"};
  bundle.class_names = {"obj"};
  bundle.images = {make_image("im", 100, 100)};
  bundle.ground_truth = {make_gt("im", 0, 10, 10, 50, 50)};
  bundle.detections = {make_detection("im", 0, 0, 0.9, 60, 60, 90, 90)};  // disjoint
  const std::vector<std::string> ids = {"im"};
  CHECK(build_pairs(bundle, ids, 0.5).empty());

  const std::vector<std::string> unknown = {"nope"};
  CHECK_THROWS_AS(build_pairs(bundle, unknown, 0.5), ValidationError);
}

TEST_CASE("mse hand values") {
  TrainingPair pair;
  pair.x = {0, 0, 0, 0};
  pair.scores = {0.5};
  pair.present = {true};
  pair.g = {0, 0, 1, 1};
  const std::vector<TrainingPair> pairs = {pair};

  // Zero weights, linear rule: prediction 0, mse = (1+1)/4 = 0.5.
  CHECK(mse(pairs, WeightVector{{0.0}}, CoordinateRule::linear) == doctest::Approx(0.5));

  // Perfect fit: g equals w^T X.
  TrainingPair fit;
  fit.scores = {1.0};
  fit.present = {true};
  fit.x = {0.1, 0.2, 0.3, 0.4};
  fit.g = {0.1, 0.2, 0.3, 0.4};
  const std::vector<TrainingPair> fits = {fit};
  CHECK(mse(fits, WeightVector{{1.0}}, CoordinateRule::linear) == doctest::Approx(0.0));
  CHECK(mse(fits, WeightVector{{1.0}}, CoordinateRule::normalized) == doctest::Approx(0.0));

  CHECK_THROWS_AS(mse({}, WeightVector{{1.0}}, CoordinateRule::linear), ValidationError);
  // Degenerate denominator under the normalized rule names the pair.
  CHECK_THROWS_WITH_AS(mse(pairs, WeightVector{{0.0}}, CoordinateRule::normalized),
                       doctest::Contains("pairs[0]"), NumericError);
}

TEST_CASE("analytic gradient matches central finite differences") {
  Rng rng(31337);
  const double step = 1e-6;
  for (const auto rule : {CoordinateRule::linear, CoordinateRule::normalized}) {
    for (int trial = 0; trial < 100; ++trial) {
      const int detector_count = 2 + static_cast<int>(rng.uniform_index(3));
      std::vector<TrainingPair> pairs;
      const int n = 1 + static_cast<int>(rng.uniform_index(5));
      for (int i = 0; i < n; ++i) {
        pairs.push_back(random_pair(rng, detector_count));
      }
      WeightVector w;
      for (int j = 0; j < detector_count; ++j) {
        w.w.push_back(rule == CoordinateRule::normalized ? rng.uniform(0.3, 2.0)
                                                         : rng.uniform(-1.0, 1.0));
      }
      const auto grad = mse_gradient(pairs, w, rule);
      std::vector<double> fd(grad.size());
      double scale = 1e-7;  // gradient-magnitude reference, floored above the FD noise level
      for (int j = 0; j < detector_count; ++j) {
        WeightVector hi = w;
        WeightVector lo = w;
        hi.w[static_cast<std::size_t>(j)] += step;
        lo.w[static_cast<std::size_t>(j)] -= step;
        fd[static_cast<std::size_t>(j)] =
            (mse(pairs, hi, rule) - mse(pairs, lo, rule)) / (2.0 * step);
        scale = std::max({scale, std::abs(grad[static_cast<std::size_t>(j)]),
                          std::abs(fd[static_cast<std::size_t>(j)])});
      }
      for (int j = 0; j < detector_count; ++j) {
        const double rel =
            std::abs(grad[static_cast<std::size_t>(j)] - fd[static_cast<std::size_t>(j)]) / scale;
        CHECK(rel < 1e-4);
      }
    }
  }
}

TEST_CASE("linear-rule mse is convex in w") {
  Rng rng(555);
  for (int trial = 0; trial < 300; ++trial) {
    const int detector_count = 3;
    std::vector<TrainingPair> pairs;
    for (int i = 0; i < 4; ++i) {
      pairs.push_back(random_pair(rng, detector_count));
    }
    WeightVector w1;
    WeightVector w2;
    for (int j = 0; j < detector_count; ++j) {
      w1.w.push_back(rng.uniform(-2.0, 2.0));
      w2.w.push_back(rng.uniform(-2.0, 2.0));
    }
    const double lambda = rng.uniform01();
    WeightVector mix;
    for (int j = 0; j < detector_count; ++j) {
      mix.w.push_back(lambda * w1.w[static_cast<std::size_t>(j)] +
                      (1.0 - lambda) * w2.w[static_cast<std::size_t>(j)]);
    }
    const double lhs = mse(pairs, mix, CoordinateRule::linear);
    const double rhs = lambda * mse(pairs, w1, CoordinateRule::linear) +
                       (1.0 - lambda) * mse(pairs, w2, CoordinateRule::linear);
    CHECK(lhs <= rhs + 1e-12);
  }
}

TEST_CASE("train_weights recovers exact linear weights") {
  Rng rng(11);
  const std::vector<double> w_true = {0.5, 0.3, 0.2};
  const auto pairs = exact_linear_pairs(rng, w_true, 500);

  TrainConfig config;
  config.prediction_rule = CoordinateRule::linear;
  config.learning_rate = 0.02;
  config.patience = 40;
  config.max_epochs = 4000;
  config.rng_seed = 5;
  const TrainReport report = train_weights(pairs, config);

  // Closed-form least squares over the same pairs as the oracle.
  std::vector<std::vector<double>> xs;
  std::vector<std::array<double, 4>> gs;
  for (const auto& pair : pairs) {
    xs.push_back(pair.x);
    gs.push_back(pair.g);
  }
  const auto oracle = solve_least_squares(xs, gs, 3);
  for (int j = 0; j < 3; ++j) {
    CHECK(oracle[static_cast<std::size_t>(j)] ==
          doctest::Approx(w_true[static_cast<std::size_t>(j)]).epsilon(1e-9));
    CHECK(std::abs(report.weights.w[static_cast<std::size_t>(j)] -
                   oracle[static_cast<std::size_t>(j)]) < 1e-3);
  }
  CHECK(report.best_val_mse < 1e-7);
}

TEST_CASE("normalized rule learns to favor the accurate detector") {
  Rng rng(77);
  // Detector 0 reproduces the truth, detector 1 is heavy noise.
  std::vector<TrainingPair> pairs;
  for (int i = 0; i < 200; ++i) {
    TrainingPair pair;
    pair.scores = {0.8, 0.8};
    pair.present = {true, true};
    const double x1 = rng.uniform(0.1, 0.5);
    const double y1 = rng.uniform(0.1, 0.5);
    const double x2 = x1 + rng.uniform(0.1, 0.4);
    const double y2 = y1 + rng.uniform(0.1, 0.4);
    pair.g = {x1, y1, x2, y2};
    pair.x = {x1 * 0.8, y1 * 0.8, x2 * 0.8, y2 * 0.8,
              (x1 + rng.normal(0, 0.08)) * 0.8, (y1 + rng.normal(0, 0.08)) * 0.8,
              (x2 + rng.normal(0, 0.08)) * 0.8, (y2 + rng.normal(0, 0.08)) * 0.8};
    pairs.push_back(std::move(pair));
  }

  TrainConfig config;
  config.prediction_rule = CoordinateRule::normalized;
  config.learning_rate = 0.05;
  config.patience = 50;
  config.max_epochs = 2000;
  config.rng_seed = 3;
  const TrainReport report = train_weights(pairs, config);
  CHECK(report.weights.w[0] > report.weights.w[1]);

  // Grid-search oracle over the weight direction: the validation surface
  // must also prefer detector 0 at the trained ratio.
  double best_ratio = -1.0;
  double best_mse = 1e18;
  for (int k = 0; k <= 40; ++k) {
    const double ratio = 0.05 + 0.095 * k;  // w0/w1 in [0.05, 3.85]
    const WeightVector w{{ratio, 1.0}};
    const double value = mse(pairs, w, CoordinateRule::normalized);
    if (value < best_mse) {
      best_mse = value;
      best_ratio = ratio;
    }
  }
  CHECK(best_ratio > 1.0);
}

TEST_CASE("single pair: gradient descent is non-increasing on a quadratic") {
  Rng rng(4);
  const auto pair = random_pair(rng, 2);
  const std::vector<TrainingPair> pairs = {pair};
  WeightVector w{{0.0, 0.0}};
  double previous = mse(pairs, w, CoordinateRule::linear);
  for (int step = 0; step < 10; ++step) {
    const auto grad = mse_gradient(pairs, w, CoordinateRule::linear);
    for (std::size_t j = 0; j < w.w.size(); ++j) {
      w.w[j] -= 1e-3 * grad[j];
    }
    const double current = mse(pairs, w, CoordinateRule::linear);
    CHECK(current <= previous + 1e-15);
    previous = current;
  }
}

TEST_CASE("train_weights is deterministic and never worse than initialization") {
  Rng rng(8);
  const auto pairs = exact_linear_pairs(rng, {0.4, 0.6}, 60);
  TrainConfig config;
  config.prediction_rule = CoordinateRule::normalized;
  config.learning_rate = 1e-3;
  config.patience = 10;
  config.max_epochs = 200;
  config.rng_seed = 123;

  const TrainReport a = train_weights(pairs, config);
  const TrainReport b = train_weights(pairs, config);
  CHECK(a.weights.w == b.weights.w);
  CHECK(a.epochs == b.epochs);
  CHECK(a.best_val_mse == b.best_val_mse);

  // A zero-epoch run reports the validation MSE at initialization on the
  // identical split; training can only improve on it.
  TrainConfig frozen = config;
  frozen.max_epochs = 0;
  const TrainReport init = train_weights(pairs, frozen);
  CHECK(init.epochs == 0);
  CHECK(a.best_val_mse <= init.best_val_mse + 1e-15);
}

TEST_CASE("train_weights input validation") {
  Rng rng(9);
  const auto pairs = exact_linear_pairs(rng, {1.0}, 2);
  TrainConfig config;

  SUBCASE("too few pairs for the split") {
    const std::vector<TrainingPair> one = {pairs[0]};
    config.val_fraction = 0.3;
    CHECK_THROWS_AS(train_weights(one, config), ValidationError);
  }
  SUBCASE("bad learning rate") {
    config.learning_rate = 0.0;
    CHECK_THROWS_AS(train_weights(pairs, config), ValidationError);
  }
  SUBCASE("divergence advises a smaller learning rate") {
    Rng rng2(10);
    const auto many = exact_linear_pairs(rng2, {0.5, 0.5, 0.5}, 50);
    config.prediction_rule = CoordinateRule::linear;
    config.learning_rate = 1e6;
    config.max_epochs = 50;
    CHECK_THROWS_WITH_AS(train_weights(many, config),
                         doctest::Contains("learning rate"), NumericError);
  }
}

TEST_CASE("train report serialization") {
  TrainReport report;
  report.epochs = 12;
  report.best_val_mse = 0.25;
  report.train_mse = 0.125;
  report.weights.w = {0.5, -1.5};
  const std::string text = train_report_to_json(report);
  CHECK(text.find("\"epochs\": 12") != std::string::npos);
  CHECK(text.find("\"weights\": [0.5, -1.5]") != std::string::npos);
}
