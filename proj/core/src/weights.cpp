#include "detfuse/weights.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "detfuse/errors.hpp"
#include "detfuse/random.hpp"

namespace detfuse {

namespace {

constexpr double kDenominatorFloor = 1e-9;

// Substream tags so split, epoch order and caller-level seeds never collide.
constexpr std::uint64_t kSplitStream = 0x73706c6974ULL;  // "split"
constexpr std::uint64_t kEpochStream = 0x65706f6368ULL;  // "epoch"

double pair_denominator(const TrainingPair& pair, const WeightVector& w) {
  double z = 0.0;
  for (int j = 0; j < pair.detector_count(); ++j) {
    z += w.w[static_cast<std::size_t>(j)] * pair.scores[static_cast<std::size_t>(j)];
  }
  return z;
}

void check_pair_dims(const TrainingPair& pair, const WeightVector& w, std::size_t index) {
  if (pair.detector_count() != w.detector_count() ||
      pair.x.size() != static_cast<std::size_t>(pair.detector_count()) * 4) {
    throw ValidationError("pairs[" + std::to_string(index) +
                          "]: dimensions do not match the weight vector");
  }
}

}  // namespace

std::vector<TrainingPair> build_pairs(const DatasetBundle& bundle,
                                      std::span<const std::string> image_ids,
                                      double iou_threshold) {
  const int detector_count = bundle.detector_count();

  std::unordered_map<std::string, std::size_t> image_index;
  image_index.reserve(bundle.images.size());
  for (std::size_t i = 0; i < bundle.images.size(); ++i) {
    image_index.emplace(bundle.images[i].image_id, i);
  }

  const auto detections = group_detections_by_image(bundle);
  const auto ground_truth = group_ground_truth_by_image(bundle);

  std::vector<TrainingPair> pairs;
  for (const std::string& image_id : image_ids) {
    const auto it = image_index.find(image_id);
    if (it == image_index.end()) {
      throw ValidationError("build_pairs: image_id \"" + image_id + "\" not in bundle");
    }
    const ImageRecord& image = bundle.images[it->second];
    const double width = static_cast<double>(image.width);
    const double height = static_cast<double>(image.height);
    const auto& image_dets = detections[it->second];

    for (const GroundTruthBox& gt : ground_truth[it->second]) {
      // Per detector, the qualifying box with the highest IoU to the ground
      // truth. Ties break on content (score, then coordinates) so the result
      // does not depend on detection order.
      std::vector<const Detection*> best(static_cast<std::size_t>(detector_count), nullptr);
      std::vector<double> best_iou(static_cast<std::size_t>(detector_count), 0.0);
      for (const Detection& det : image_dets) {
        if (det.class_id != gt.class_id) {
          continue;
        }
        const double overlap = iou(det.box, gt.box);
        if (!(overlap > iou_threshold)) {
          continue;
        }
        const auto j = static_cast<std::size_t>(det.detector_id);
        const Detection* incumbent = best[j];
        bool better = incumbent == nullptr || overlap > best_iou[j];
        if (!better && overlap == best_iou[j]) {
          const auto key = [](const Detection& d) {
            return std::make_tuple(-d.score, d.box.x1, d.box.y1, d.box.x2, d.box.y2);
          };
          better = key(det) < key(*incumbent);
        }
        if (better) {
          best[j] = &det;
          best_iou[j] = overlap;
        }
      }

      TrainingPair pair;
      pair.x.assign(static_cast<std::size_t>(detector_count) * 4, 0.0);
      pair.scores.assign(static_cast<std::size_t>(detector_count), 0.0);
      pair.present.assign(static_cast<std::size_t>(detector_count), false);
      bool any = false;
      for (int j = 0; j < detector_count; ++j) {
        const Detection* det = best[static_cast<std::size_t>(j)];
        if (det == nullptr) {
          continue;
        }
        any = true;
        const auto row = static_cast<std::size_t>(j) * 4;
        pair.x[row + 0] = det->box.x1 / width * det->score;
        pair.x[row + 1] = det->box.y1 / height * det->score;
        pair.x[row + 2] = det->box.x2 / width * det->score;
        pair.x[row + 3] = det->box.y2 / height * det->score;
        pair.scores[static_cast<std::size_t>(j)] = det->score;
        pair.present[static_cast<std::size_t>(j)] = true;
      }
      if (!any) {
        continue;  // no detector matched this ground truth
      }
      pair.g = {gt.box.x1 / width, gt.box.y1 / height, gt.box.x2 / width,
                gt.box.y2 / height};
      pairs.push_back(std::move(pair));
    }
  }
  return pairs;
}

std::array<double, 4> predict_pair(const TrainingPair& pair, const WeightVector& w,
                                   CoordinateRule rule) {
  std::array<double, 4> out{0.0, 0.0, 0.0, 0.0};
  for (int j = 0; j < pair.detector_count(); ++j) {
    const double wj = w.w[static_cast<std::size_t>(j)];
    for (int d = 0; d < 4; ++d) {
      out[static_cast<std::size_t>(d)] += wj * pair.x_at(j, d);
    }
  }
  if (rule == CoordinateRule::normalized) {
    const double z = pair_denominator(pair, w);
    if (std::abs(z) <= kDenominatorFloor) {
      throw NumericError("predict_pair: degenerate normalization denominator");
    }
    for (double& v : out) {
      v /= z;
    }
  }
  return out;
}

double mse(std::span<const TrainingPair> pairs, const WeightVector& w,
           CoordinateRule rule) {
  if (pairs.empty()) {
    throw ValidationError("mse: empty pair set");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    check_pair_dims(pairs[i], w, i);
    std::array<double, 4> predicted;
    try {
      predicted = predict_pair(pairs[i], w, rule);
    } catch (const NumericError&) {
      throw NumericError("mse: pairs[" + std::to_string(i) +
                         "]: degenerate normalization denominator");
    }
    for (int d = 0; d < 4; ++d) {
      const double e = pairs[i].g[static_cast<std::size_t>(d)] -
                       predicted[static_cast<std::size_t>(d)];
      total += e * e;
    }
  }
  return total / (4.0 * static_cast<double>(pairs.size()));
}

namespace {

// Gradient of the single-sample loss (1/4) sum_d (ghat_d - g_d)^2.
//   linear:      d/dw_j = (1/2) sum_d e_d X[j,d]
//   normalized:  d/dw_j = (1/2Z) sum_d e_d (X[j,d] - ghat_d s_j)
void accumulate_sample_gradient(const TrainingPair& pair, const WeightVector& w,
                                CoordinateRule rule, double scale, double* grad) {
  const int detector_count = pair.detector_count();
  std::array<double, 4> num{0.0, 0.0, 0.0, 0.0};
  for (int j = 0; j < detector_count; ++j) {
    const double wj = w.w[static_cast<std::size_t>(j)];
    for (int d = 0; d < 4; ++d) {
      num[static_cast<std::size_t>(d)] += wj * pair.x_at(j, d);
    }
  }
  if (rule == CoordinateRule::linear) {
    for (int j = 0; j < detector_count; ++j) {
      double g = 0.0;
      for (int d = 0; d < 4; ++d) {
        const double e = num[static_cast<std::size_t>(d)] - pair.g[static_cast<std::size_t>(d)];
        g += e * pair.x_at(j, d);
      }
      grad[j] += scale * 0.5 * g;
    }
    return;
  }
  const double z = pair_denominator(pair, w);
  if (std::abs(z) <= kDenominatorFloor) {
    throw NumericError("degenerate normalization denominator");
  }
  std::array<double, 4> predicted;
  for (int d = 0; d < 4; ++d) {
    predicted[static_cast<std::size_t>(d)] = num[static_cast<std::size_t>(d)] / z;
  }
  for (int j = 0; j < detector_count; ++j) {
    const double sj = pair.scores[static_cast<std::size_t>(j)];
    double g = 0.0;
    for (int d = 0; d < 4; ++d) {
      const double e = predicted[static_cast<std::size_t>(d)] -
                       pair.g[static_cast<std::size_t>(d)];
      g += e * (pair.x_at(j, d) - predicted[static_cast<std::size_t>(d)] * sj);
    }
    grad[j] += scale * 0.5 * g / z;
  }
}

}  // namespace

std::vector<double> mse_gradient(std::span<const TrainingPair> pairs,
                                 const WeightVector& w, CoordinateRule rule) {
  if (pairs.empty()) {
    throw ValidationError("mse_gradient: empty pair set");
  }
  std::vector<double> grad(w.w.size(), 0.0);
  const double scale = 1.0 / static_cast<double>(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    check_pair_dims(pairs[i], w, i);
    try {
      accumulate_sample_gradient(pairs[i], w, rule, scale, grad.data());
    } catch (const NumericError&) {
      throw NumericError("mse_gradient: pairs[" + std::to_string(i) +
                         "]: degenerate normalization denominator");
    }
  }
  return grad;
}

TrainReport train_weights(std::span<const TrainingPair> pairs, const TrainConfig& config) {
  if (!(config.learning_rate > 0.0)) {
    throw ValidationError("train_weights: learning_rate must be positive");
  }
  if (!(config.val_fraction > 0.0 && config.val_fraction < 1.0)) {
    throw ValidationError("train_weights: val_fraction must be in (0,1)");
  }
  if (pairs.empty()) {
    throw ValidationError("train_weights: no training pairs");
  }
  const int detector_count = pairs[0].detector_count();

  // Seeded split: shuffle once, last val_fraction of the order is validation.
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    order[i] = i;
  }
  Rng split_rng(substream_seed(config.rng_seed, kSplitStream));
  split_rng.shuffle(order);

  const auto val_count = static_cast<std::size_t>(
      std::floor(static_cast<double>(pairs.size()) * config.val_fraction + 0.5));
  const std::size_t train_count = pairs.size() - val_count;
  if (val_count == 0 || train_count == 0) {
    throw ValidationError("train_weights: not enough pairs for a " +
                          io::format_number(1.0 - config.val_fraction) + "/" +
                          io::format_number(config.val_fraction) + " train/validation split");
  }

  std::vector<TrainingPair> train_split;
  std::vector<TrainingPair> val_split;
  train_split.reserve(train_count);
  val_split.reserve(val_count);
  for (std::size_t i = 0; i < train_count; ++i) {
    train_split.push_back(pairs[order[i]]);
  }
  for (std::size_t i = train_count; i < pairs.size(); ++i) {
    val_split.push_back(pairs[order[i]]);
  }

  WeightVector w;
  if (config.prediction_rule == CoordinateRule::linear) {
    w.w.assign(static_cast<std::size_t>(detector_count), 0.0);
  } else {
    w = WeightVector::uniform(detector_count);
  }

  double best_val = mse(val_split, w, config.prediction_rule);
  WeightVector best_w = w;
  int epochs_run = 0;
  int stale_epochs = 0;

  std::vector<std::size_t> epoch_order(train_split.size());
  for (std::size_t i = 0; i < epoch_order.size(); ++i) {
    epoch_order[i] = i;
  }
  Rng epoch_rng(substream_seed(config.rng_seed, kEpochStream));
  std::vector<double> grad(static_cast<std::size_t>(detector_count), 0.0);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    epoch_rng.shuffle(epoch_order);
    for (const std::size_t i : epoch_order) {
      std::fill(grad.begin(), grad.end(), 0.0);
      accumulate_sample_gradient(train_split[i], w, config.prediction_rule, 1.0, grad.data());
      for (int j = 0; j < detector_count; ++j) {
        w.w[static_cast<std::size_t>(j)] -= config.learning_rate * grad[static_cast<std::size_t>(j)];
      }
    }
    epochs_run = epoch;

    for (const double wj : w.w) {
      if (!std::isfinite(wj)) {
        throw NumericError("train_weights: weights diverged at epoch " +
                           std::to_string(epoch) + "; try a smaller learning rate");
      }
    }
    const double val = mse(val_split, w, config.prediction_rule);
    if (!std::isfinite(val)) {
      throw NumericError("train_weights: validation MSE diverged at epoch " +
                         std::to_string(epoch) + "; try a smaller learning rate");
    }
    if (val < best_val) {
      best_val = val;
      best_w = w;
      stale_epochs = 0;
    } else {
      ++stale_epochs;
      if (stale_epochs >= config.patience) {
        break;
      }
    }
  }

  TrainReport report;
  report.epochs = epochs_run;
  report.best_val_mse = best_val;
  report.train_mse = mse(train_split, best_w, config.prediction_rule);
  report.weights = std::move(best_w);
  return report;
}

std::string train_report_to_json(const TrainReport& report) {
  std::string out = "{\n  \"epochs\": ";
  out += std::to_string(report.epochs);
  out += ",\n  \"best_val_mse\": ";
  out += io::format_number_exact(report.best_val_mse);
  out += ",\n  \"train_mse\": ";
  out += io::format_number_exact(report.train_mse);
  out += ",\n  \"weights\": [";
  for (std::size_t i = 0; i < report.weights.w.size(); ++i) {
    if (i) {
      out += ", ";
    }
    out += io::format_number_exact(report.weights.w[i]);
  }
  out += "]\n}\n";
  return out;
}

void save_train_report(const TrainReport& report, const std::string& path) {
  io::write_text_file_atomic(path, train_report_to_json(report));
}

}  // namespace detfuse
