#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "detfuse/dataset.hpp"

namespace detfuse {

/// Pluggable single-object motion tracker working purely in box space.
/// predict() advances the internal state by one frame and returns the new
/// estimate; correct() folds in an observed box.
class TrackerBehavior {
 public:
  virtual ~TrackerBehavior() = default;
  virtual void initialize(const BoundingBox& box) = 0;
  virtual BoundingBox predict() = 0;
  virtual void correct(const BoundingBox& box) = 0;
};

using TrackerFactory = std::function<std::unique_ptr<TrackerBehavior>()>;

/// Constant-velocity tracker: keeps the last box and an exponentially
/// smoothed per-coordinate velocity (smoothing factor 0.5). predict()
/// translates the stored box by the velocity; correct() updates the velocity
/// from the observed displacement and stores the observation.
TrackerFactory default_box_tracker();

struct RecoveredScorePolicy {
  enum class Kind { last_matched, fixed };
  Kind kind = Kind::last_matched;
  double fixed_value = 0.0;

  static RecoveredScorePolicy last_matched() { return {}; }
  static RecoveredScorePolicy fixed(double value) {
    return {Kind::fixed, value};
  }
};

struct RefineConfig {
  double match_iou = 0.5;
  double young_match_iou = 0.4;  // used while age_frames <= young_age_frames
  int young_age_frames = 3;
  int min_matched_frames = 5;    // rule 1: few total matches...
  int max_miss_young = 5;        // ...then missed for more than this
  int max_miss = 50;             // rule 2: missed for more than this
  int min_track_length = 5;      // stage 2: shorter sequences are deleted
  RecoveredScorePolicy recovered_score = RecoveredScorePolicy::last_matched();
  /// Rule 1 counts total matched frames when true (the default reading) or
  /// the most recent consecutive match streak when false.
  bool rule1_total_matches = true;
};

/// Detections of one video frame. frame_index values must be consecutive
/// across the sequence passed to the refinement stages.
struct FrameDetections {
  int frame_index = 0;
  std::string image_id;
  std::vector<Detection> detections;
};

/// Stage 1: gap filling. Every detection spawns or feeds a tracklet;
/// predictions accumulated during a miss streak are flushed into the output
/// as recovered detections (recovered = true) when the tracklet re-matches.
/// Tracklets die — discarding their buffer — when matched only briefly and
/// then missed for more than max_miss_young frames (rule 1) or missed for
/// more than max_miss frames (rule 2). The output contains every input
/// detection plus the recovered ones.
std::vector<FrameDetections> stage1_fill_gaps(std::span<const FrameDetections> frames,
                                              const RefineConfig& config,
                                              const TrackerFactory& make_tracker);

/// Stage 2: false-positive pruning. Detections are associated frame-to-frame
/// into sequences by class-constrained greedy IoU matching; a sequence ends
/// after a single unmatched frame. Detections of sequences spanning fewer
/// than min_track_length frames are deleted. The output is a subset of the
/// input.
std::vector<FrameDetections> stage2_prune_short_tracks(std::span<const FrameDetections> frames,
                                                       const RefineConfig& config);

/// stage1 followed by stage2.
std::vector<FrameDetections> refine_video(std::span<const FrameDetections> frames,
                                          const RefineConfig& config,
                                          const TrackerFactory& make_tracker);

/// Splits a video bundle into per-frame groups ordered by frame_index.
/// Throws ValidationError if any image lacks a frame index.
std::vector<FrameDetections> frames_from_bundle(const DatasetBundle& bundle);

/// Replaces the bundle's detections with the contents of `frames`.
std::vector<Detection> flatten_frames(std::span<const FrameDetections> frames);

}  // namespace detfuse
