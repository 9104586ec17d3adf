#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "detfuse/dataset.hpp"

namespace detfuse {

/// Error model of one virtual detector. Scores are anti-correlated with the
/// realized box jitter so that confidence carries signal, and score_bias
/// models the cross-detector miscalibration the weighting scheme is meant to
/// absorb.
struct DetectorProfile {
  double jitter_sigma = 0.0;       // corner noise, fraction of box size
  double miss_prob = 0.0;          // in [0, 1)
  double fp_rate = 0.0;            // expected false positives per image
  double score_bias = 0.0;
  double score_noise_sigma = 0.0;
};

/// Simulates detector outputs over a ground-truth bundle. Per detector and
/// ground-truth box: with probability 1 - miss_prob a detection is emitted
/// with corners jittered by centered noise of scale jitter_sigma * box size
/// and score clamp01(0.8 - 2 * realized_jitter + score_bias + noise);
/// Poisson(fp_rate) uniformly placed false positives with scores in
/// [0.05, 0.6] are added per image. Deterministic given the seed, with one
/// derived substream per (image, detector) so parallelism cannot change the
/// output. Images and ground truth are carried over into the result.
DatasetBundle generate(const DatasetBundle& ground_truth,
                       std::span<const DetectorProfile> profiles,
                       std::uint64_t seed);

std::vector<DetectorProfile> profiles_from_json(const std::string& text);
std::vector<DetectorProfile> load_profiles(const std::string& path);
std::string profiles_to_json(std::span<const DetectorProfile> profiles);

/// Desk-scale random ground truth over independent images.
struct ImageGroundTruthSpec {
  int image_count = 300;
  int width = 640;
  int height = 480;
  int min_objects = 1;
  int max_objects = 6;
  double min_size = 60.0;
  double max_size = 160.0;
  int class_count = 3;
};

DatasetBundle make_image_ground_truth(const ImageGroundTruthSpec& spec, std::uint64_t seed);

/// Ground truth for one video: constant-velocity boxes reflecting at the
/// image borders, one ground-truth box per object per frame.
struct VideoGroundTruthSpec {
  int frame_count = 200;
  int width = 640;
  int height = 480;
  int object_count = 4;
  double min_size = 60.0;
  double max_size = 140.0;
  double max_speed = 4.0;  // pixels per frame per axis
  int class_count = 1;
};

DatasetBundle make_video_ground_truth(const VideoGroundTruthSpec& spec, std::uint64_t seed);

}  // namespace detfuse
