#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "detfuse/dataset.hpp"
#include "detfuse/fusion.hpp"

namespace detfuse {

/// One regression sample: a D x 4 matrix of score-scaled, image-normalized
/// box coordinates (one row per detector, zero-filled when the detector
/// produced no match) and the normalized ground-truth coordinates.
struct TrainingPair {
  std::vector<double> x;       // row-major D x 4, row j = b_j * s_j
  std::array<double, 4> g{};   // ground truth, normalized by image size
  std::vector<double> scores;  // raw detector scores, 0 when absent
  std::vector<bool> present;   // row j nonzero

  int detector_count() const { return static_cast<int>(scores.size()); }
  double x_at(int detector, int coord) const {
    return x[static_cast<std::size_t>(detector) * 4 + static_cast<std::size_t>(coord)];
  }
};

struct TrainConfig {
  double learning_rate = 1e-5;
  double val_fraction = 0.30;
  int patience = 50;       // epochs without validation improvement
  int max_epochs = 20000;
  std::uint64_t rng_seed = 0;
  CoordinateRule prediction_rule = CoordinateRule::normalized;
};

struct TrainReport {
  int epochs = 0;
  double best_val_mse = 0.0;
  double train_mse = 0.0;  // on the train split, at the returned weights
  WeightVector weights;
};

/// Builds detection-ground-truth pairs from the listed images. For each
/// ground-truth box: same-class detections with iou > threshold are
/// collected, each detector keeps only its highest-IoU match, the rest are
/// discarded; detectors with no match are zero-filled. Ground-truth boxes
/// matching no detector yield no pair. Coordinates are divided by image
/// width/height, then scaled by the detection score. Output is independent
/// of the input ordering of detections.
std::vector<TrainingPair> build_pairs(const DatasetBundle& bundle,
                                      std::span<const std::string> image_ids,
                                      double iou_threshold);

/// Predicted coordinates for one pair under the given rule.
std::array<double, 4> predict_pair(const TrainingPair& pair, const WeightVector& w,
                                   CoordinateRule rule);

/// Mean squared error (1/(4n)) sum_i sum_d (g - ghat)^2.
double mse(std::span<const TrainingPair> pairs, const WeightVector& w,
           CoordinateRule rule);

/// Exact analytic gradient of mse with respect to w.
std::vector<double> mse_gradient(std::span<const TrainingPair> pairs,
                                 const WeightVector& w, CoordinateRule rule);

/// Per-sample SGD over the MSE with a seeded train/validation split, epoch
/// shuffling, and early stopping on validation MSE. Returns the weights of
/// the best-validation epoch (the initial weights count as epoch 0, so the
/// returned validation MSE never exceeds the initial one).
///
/// Initialization is zero for the linear rule; the normalized rule starts
/// from uniform 1/D weights because its prediction is undefined at w = 0.
TrainReport train_weights(std::span<const TrainingPair> pairs, const TrainConfig& config);

std::string train_report_to_json(const TrainReport& report);
void save_train_report(const TrainReport& report, const std::string& path);

}  // namespace detfuse
