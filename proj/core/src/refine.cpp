#include "detfuse/refine.hpp"

#include <algorithm>
#include <array>

#include "detfuse/errors.hpp"

namespace detfuse {

namespace {

class ConstantVelocityTracker final : public TrackerBehavior {
 public:
  void initialize(const BoundingBox& box) override {
    box_ = box;
    velocity_ = {0.0, 0.0, 0.0, 0.0};
  }

  BoundingBox predict() override {
    box_ = BoundingBox{box_.x1 + velocity_[0], box_.y1 + velocity_[1],
                       box_.x2 + velocity_[2], box_.y2 + velocity_[3]};
    return box_;
  }

  void correct(const BoundingBox& box) override {
    constexpr double smoothing = 0.5;
    const std::array<double, 4> displacement{box.x1 - box_.x1, box.y1 - box_.y1,
                                             box.x2 - box_.x2, box.y2 - box_.y2};
    for (std::size_t k = 0; k < 4; ++k) {
      velocity_[k] = smoothing * velocity_[k] + (1.0 - smoothing) * displacement[k];
    }
    box_ = box;
  }

 private:
  BoundingBox box_;
  std::array<double, 4> velocity_{};
};

void check_consecutive(std::span<const FrameDetections> frames, const char* where) {
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if (frames[i].frame_index != frames[i - 1].frame_index + 1) {
      throw ValidationError(std::string(where) + ": frame indices not consecutive (" +
                            std::to_string(frames[i - 1].frame_index) + " followed by " +
                            std::to_string(frames[i].frame_index) + ")");
    }
  }
}

void check_config(const RefineConfig& config, const char* where) {
  if (!(config.young_match_iou < config.match_iou)) {
    throw ValidationError(std::string(where) + ": young_match_iou must be below match_iou");
  }
  if (config.young_age_frames <= 0 || config.min_matched_frames <= 0 ||
      config.max_miss_young <= 0 || config.max_miss <= 0 || config.min_track_length <= 0) {
    throw ValidationError(std::string(where) + ": all frame counts must be positive");
  }
}

struct Tracklet {
  int id = 0;
  int class_id = 0;
  int detector_id = 0;
  std::unique_ptr<TrackerBehavior> tracker;
  int matched_frames = 0;       // total frames with a detection match
  int match_streak = 0;         // consecutive matches ending at the last match
  int consecutive_misses = 0;
  int age_frames = 0;           // frames since initialization
  double last_matched_score = 0.0;
  std::vector<std::pair<std::size_t, BoundingBox>> gap_buffer;  // (frame slot, prediction)
};

struct MatchCandidate {
  double overlap;
  std::size_t tracklet;
  std::size_t detection;
};

double recovered_score(const RecoveredScorePolicy& policy, const Tracklet& tracklet) {
  return policy.kind == RecoveredScorePolicy::Kind::fixed ? policy.fixed_value
                                                          : tracklet.last_matched_score;
}

}  // namespace

TrackerFactory default_box_tracker() {
  return [] { return std::make_unique<ConstantVelocityTracker>(); };
}

std::vector<FrameDetections> stage1_fill_gaps(std::span<const FrameDetections> frames,
                                              const RefineConfig& config,
                                              const TrackerFactory& make_tracker) {
  check_consecutive(frames, "stage1_fill_gaps");
  check_config(config, "stage1_fill_gaps");

  std::vector<FrameDetections> out(frames.begin(), frames.end());
  std::vector<Tracklet> tracklets;
  int next_id = 0;

  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto& dets = frames[f].detections;

    // Advance every live tracklet one frame.
    std::vector<BoundingBox> predictions(tracklets.size());
    for (std::size_t t = 0; t < tracklets.size(); ++t) {
      ++tracklets[t].age_frames;
      predictions[t] = tracklets[t].tracker->predict();
    }

    // Greedy association by descending IoU; young tracklets get the looser
    // threshold because boxes are unstable right after an object appears.
    std::vector<MatchCandidate> candidates;
    for (std::size_t t = 0; t < tracklets.size(); ++t) {
      const double threshold = tracklets[t].age_frames <= config.young_age_frames
                                   ? config.young_match_iou
                                   : config.match_iou;
      for (std::size_t d = 0; d < dets.size(); ++d) {
        if (dets[d].class_id != tracklets[t].class_id) {
          continue;
        }
        const double overlap = iou(predictions[t], dets[d].box);
        if (overlap > threshold) {
          candidates.push_back({overlap, t, d});
        }
      }
    }
    std::sort(candidates.begin(), candidates.end(),
              [&](const MatchCandidate& a, const MatchCandidate& b) {
                if (a.overlap != b.overlap) {
                  return a.overlap > b.overlap;
                }
                if (tracklets[a.tracklet].id != tracklets[b.tracklet].id) {
                  return tracklets[a.tracklet].id < tracklets[b.tracklet].id;
                }
                return a.detection < b.detection;
              });

    std::vector<bool> tracklet_matched(tracklets.size(), false);
    std::vector<bool> detection_matched(dets.size(), false);
    for (const MatchCandidate& c : candidates) {
      if (tracklet_matched[c.tracklet] || detection_matched[c.detection]) {
        continue;
      }
      tracklet_matched[c.tracklet] = true;
      detection_matched[c.detection] = true;

      Tracklet& trk = tracklets[c.tracklet];
      const Detection& det = dets[c.detection];
      trk.tracker->correct(det.box);
      ++trk.matched_frames;
      ++trk.match_streak;
      trk.last_matched_score = det.score;
      if (trk.consecutive_misses > 0) {
        // The miss streak ended: the buffered predictions become recovered
        // detections at the frames where no detection happened.
        for (const auto& [slot, box] : trk.gap_buffer) {
          Detection rec;
          rec.box = box;
          rec.class_id = trk.class_id;
          rec.score = recovered_score(config.recovered_score, trk);
          rec.detector_id = trk.detector_id;
          rec.image_id = out[slot].image_id;
          rec.recovered = true;
          out[slot].detections.push_back(std::move(rec));
        }
        trk.gap_buffer.clear();
        trk.consecutive_misses = 0;
      }
    }

    // Unmatched detections spawn new tracklets.
    for (std::size_t d = 0; d < dets.size(); ++d) {
      if (detection_matched[d]) {
        continue;
      }
      Tracklet trk;
      trk.id = next_id++;
      trk.class_id = dets[d].class_id;
      trk.detector_id = dets[d].detector_id;
      trk.tracker = make_tracker();
      trk.tracker->initialize(dets[d].box);
      trk.matched_frames = 1;
      trk.match_streak = 1;
      trk.last_matched_score = dets[d].score;
      tracklets.push_back(std::move(trk));
      tracklet_matched.push_back(true);
      predictions.push_back(dets[d].box);
    }

    // Unmatched tracklets miss, buffer the prediction, and may die.
    std::vector<Tracklet> survivors;
    survivors.reserve(tracklets.size());
    for (std::size_t t = 0; t < tracklets.size(); ++t) {
      Tracklet& trk = tracklets[t];
      if (!tracklet_matched[t]) {
        ++trk.consecutive_misses;
        trk.match_streak = 0;
        trk.gap_buffer.emplace_back(f, predictions[t]);
        const int matches = config.rule1_total_matches
                                ? trk.matched_frames
                                : trk.match_streak;
        const bool rule1 = matches <= config.min_matched_frames &&
                           trk.consecutive_misses > config.max_miss_young;
        const bool rule2 = trk.consecutive_misses > config.max_miss;
        if (rule1 || rule2) {
          continue;  // dead; the gap buffer is discarded with it
        }
      }
      survivors.push_back(std::move(trk));
    }
    tracklets = std::move(survivors);
  }
  return out;
}

namespace {

struct Sequence {
  int class_id = 0;
  BoundingBox tail;
  int first_frame = 0;
  int last_frame = 0;
  std::vector<std::pair<std::size_t, std::size_t>> members;  // (frame slot, det index)
};

}  // namespace

std::vector<FrameDetections> stage2_prune_short_tracks(std::span<const FrameDetections> frames,
                                                       const RefineConfig& config) {
  check_consecutive(frames, "stage2_prune_short_tracks");
  check_config(config, "stage2_prune_short_tracks");

  std::vector<Sequence> active;
  std::vector<Sequence> finished;

  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto& dets = frames[f].detections;

    std::vector<MatchCandidate> candidates;
    for (std::size_t s = 0; s < active.size(); ++s) {
      for (std::size_t d = 0; d < dets.size(); ++d) {
        if (dets[d].class_id != active[s].class_id) {
          continue;
        }
        const double overlap = iou(active[s].tail, dets[d].box);
        if (overlap > config.match_iou) {
          candidates.push_back({overlap, s, d});
        }
      }
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const MatchCandidate& a, const MatchCandidate& b) {
                if (a.overlap != b.overlap) {
                  return a.overlap > b.overlap;
                }
                if (a.tracklet != b.tracklet) {
                  return a.tracklet < b.tracklet;
                }
                return a.detection < b.detection;
              });

    std::vector<bool> sequence_matched(active.size(), false);
    std::vector<bool> detection_matched(dets.size(), false);
    for (const MatchCandidate& c : candidates) {
      if (sequence_matched[c.tracklet] || detection_matched[c.detection]) {
        continue;
      }
      sequence_matched[c.tracklet] = true;
      detection_matched[c.detection] = true;
      Sequence& seq = active[c.tracklet];
      seq.tail = dets[c.detection].box;
      seq.last_frame = frames[f].frame_index;
      seq.members.emplace_back(f, c.detection);
    }

    // A sequence ends as soon as one frame passes without a match.
    std::vector<Sequence> still_active;
    still_active.reserve(active.size());
    for (std::size_t s = 0; s < active.size(); ++s) {
      if (sequence_matched[s]) {
        still_active.push_back(std::move(active[s]));
      } else {
        finished.push_back(std::move(active[s]));
      }
    }
    active = std::move(still_active);

    for (std::size_t d = 0; d < dets.size(); ++d) {
      if (detection_matched[d]) {
        continue;
      }
      Sequence seq;
      seq.class_id = dets[d].class_id;
      seq.tail = dets[d].box;
      seq.first_frame = frames[f].frame_index;
      seq.last_frame = frames[f].frame_index;
      seq.members.emplace_back(f, d);
      active.push_back(std::move(seq));
    }
  }
  for (Sequence& seq : active) {
    finished.push_back(std::move(seq));
  }

  std::vector<std::vector<bool>> keep(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    keep[f].assign(frames[f].detections.size(), false);
  }
  for (const Sequence& seq : finished) {
    if (seq.last_frame - seq.first_frame + 1 < config.min_track_length) {
      continue;
    }
    for (const auto& [f, d] : seq.members) {
      keep[f][d] = true;
    }
  }

  std::vector<FrameDetections> out;
  out.reserve(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    FrameDetections frame;
    frame.frame_index = frames[f].frame_index;
    frame.image_id = frames[f].image_id;
    for (std::size_t d = 0; d < frames[f].detections.size(); ++d) {
      if (keep[f][d]) {
        frame.detections.push_back(frames[f].detections[d]);
      }
    }
    out.push_back(std::move(frame));
  }
  return out;
}

std::vector<FrameDetections> refine_video(std::span<const FrameDetections> frames,
                                          const RefineConfig& config,
                                          const TrackerFactory& make_tracker) {
  const auto enriched = stage1_fill_gaps(frames, config, make_tracker);
  return stage2_prune_short_tracks(enriched, config);
}

std::vector<FrameDetections> frames_from_bundle(const DatasetBundle& bundle) {
  std::vector<std::size_t> image_order(bundle.images.size());
  for (std::size_t i = 0; i < image_order.size(); ++i) {
    if (!bundle.images[i].frame_index.has_value()) {
      throw ValidationError("frames_from_bundle: image \"" + bundle.images[i].image_id +
                            "\" has no frame_index; not a video bundle");
    }
    image_order[i] = i;
  }
  std::sort(image_order.begin(), image_order.end(), [&](std::size_t a, std::size_t b) {
    return *bundle.images[a].frame_index < *bundle.images[b].frame_index;
  });

  const auto grouped = group_detections_by_image(bundle);
  std::vector<FrameDetections> frames;
  frames.reserve(image_order.size());
  for (const std::size_t i : image_order) {
    FrameDetections frame;
    frame.frame_index = *bundle.images[i].frame_index;
    frame.image_id = bundle.images[i].image_id;
    frame.detections = grouped[i];
    frames.push_back(std::move(frame));
  }
  return frames;
}

std::vector<Detection> flatten_frames(std::span<const FrameDetections> frames) {
  std::vector<Detection> out;
  for (const auto& frame : frames) {
    out.insert(out.end(), frame.detections.begin(), frame.detections.end());
  }
  return out;
}

}  // namespace detfuse
