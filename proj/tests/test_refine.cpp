#include <doctest.h>

#include <algorithm>
#include <set>

#include "detfuse/errors.hpp"
#include "detfuse/random.hpp"
#include "detfuse/refine.hpp"
#include "support.hpp"

using namespace detfuse;
using namespace testing_support;

namespace {

FrameDetections frame(int index, std::vector<Detection> dets) {
  FrameDetections f;
  f.frame_index = index;
  f.image_id = "frame" + std::to_string(index);
  f.detections = std::move(dets);
  return f;
}

Detection at(double x, double score = 0.9, int class_id = 0) {
  return make_detection("", 0, class_id, score, x, 0, x + 10, 10);
}

/// A moving 10x10 object at x = speed * t, with the chosen frames dropped.
std::vector<FrameDetections> moving_object_video(int frames, double speed,
                                                 const std::set<int>& dropped) {
  std::vector<FrameDetections> video;
  for (int t = 0; t < frames; ++t) {
    std::vector<Detection> dets;
    if (!dropped.count(t)) {
      Detection det = at(speed * t);
      det.image_id = "frame" + std::to_string(t);
      dets.push_back(det);
    }
    video.push_back(frame(t, std::move(dets)));
  }
  return video;
}

std::size_t count_all(std::span<const FrameDetections> frames) {
  std::size_t n = 0;
  for (const auto& f : frames) {
    n += f.detections.size();
  }
  return n;
}

bool contains(const std::vector<Detection>& dets, const Detection& needle) {
  return std::count(dets.begin(), dets.end(), needle) >= 1;
}

}  // namespace

TEST_CASE("default tracker: smoothing recurrence hand trace") {
  const auto tracker = default_box_tracker()();
  tracker->initialize(BoundingBox{0, 0, 10, 10});

  SUBCASE("predict right after initialize returns the initial box") {
    CHECK(tracker->predict() == BoundingBox{0, 0, 10, 10});
  }
  SUBCASE("one correction, factor 0.5") {
    tracker->correct(BoundingBox{2, 0, 12, 10});
    // v = 0.5*0 + 0.5*(2,0,2,0) = (1,0,1,0); predict translates by v.
    CHECK(tracker->predict() == BoundingBox{3, 0, 13, 10});
  }
  SUBCASE("stationary object: velocity stays zero") {
    for (int i = 0; i < 5; ++i) {
      tracker->predict();
      tracker->correct(BoundingBox{0, 0, 10, 10});
    }
    CHECK(tracker->predict() == BoundingBox{0, 0, 10, 10});
  }
}

TEST_CASE("stage1: a two-frame gap is filled on rematch") {
  // Object moves +2 px/frame, detected frames 0-9 except 5 and 6.
  const auto video = moving_object_video(10, 2.0, {5, 6});
  const auto enriched = stage1_fill_gaps(video, RefineConfig{}, default_box_tracker());

  REQUIRE(enriched.size() == 10);
  // Original detections all present.
  for (std::size_t f = 0; f < video.size(); ++f) {
    for (const auto& det : video[f].detections) {
      CHECK(contains(enriched[f].detections, det));
    }
  }
  // Exactly two recovered boxes, at the gap frames.
  REQUIRE(enriched[5].detections.size() == 1);
  REQUIRE(enriched[6].detections.size() == 1);
  CHECK(enriched[5].detections[0].recovered);
  CHECK(enriched[6].detections[0].recovered);
  CHECK(count_all(enriched) == count_all(video) + 2);
  // Recovered score defaults to the last matched score.
  CHECK(enriched[5].detections[0].score == doctest::Approx(0.9));
  // The tracker's constant-velocity estimate lags slightly but overlaps the
  // true position (x=10 at frame 5) well.
  CHECK(iou(enriched[5].detections[0].box, BoundingBox{10, 0, 20, 10}) > 0.5);
}

TEST_CASE("stage1: one-shot tracklet dies after six misses, no insertions") {
  // Detection only at frame 0, never again: rule 1 kills it once
  // matched_frames (1) <= 5 and misses > 5.
  const auto video = moving_object_video(12, 0.0, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11});
  REQUIRE(count_all(video) == 1);
  const auto enriched = stage1_fill_gaps(video, RefineConfig{}, default_box_tracker());
  CHECK(count_all(enriched) == 1);  // nothing recovered, original kept
}

TEST_CASE("stage1: established tracklet survives long gaps up to max_miss") {
  // Matched frames 0-9 (10 matches > 5), then a 20-frame gap, then rematch:
  // rule 1 does not apply and rule 2 (50) is far away, so the whole gap is
  // recovered.
  std::set<int> dropped;
  for (int t = 10; t < 30; ++t) {
    dropped.insert(t);
  }
  const auto video = moving_object_video(35, 0.0, dropped);
  const auto enriched = stage1_fill_gaps(video, RefineConfig{}, default_box_tracker());
  CHECK(count_all(enriched) == count_all(video) + 20);
}

TEST_CASE("stage1: no trailing extrapolation after the last match") {
  // Object disappears at frame 20 for good; its buffered predictions must
  // never be flushed.
  std::set<int> dropped;
  for (int t = 20; t < 40; ++t) {
    dropped.insert(t);
  }
  const auto video = moving_object_video(40, 1.0, dropped);
  const auto enriched = stage1_fill_gaps(video, RefineConfig{}, default_box_tracker());
  CHECK(count_all(enriched) == count_all(video));
}

TEST_CASE("stage1: young tracklets match at the looser threshold") {
  // iou between a box at x=0 and one at x=3.5 is 65/135 ~ 0.481: above the
  // young threshold (0.4), below the mature one (0.5).
  CHECK(iou(BoundingBox{0, 0, 10, 10}, BoundingBox{3.5, 0, 13.5, 10}) ==
        doctest::Approx(6.5 / 13.5));

  // f0 at x=0, f1 at x=3.5 (young match), f2 missing, f3 at x=3.5.
  // The young match at f1 sets the velocity to 1.75, so the recovered box at
  // f2 sits at the extrapolated x=5.25; had f1 not matched, a fresh
  // stationary tracklet would recover x=3.5 instead.
  std::vector<FrameDetections> video;
  video.push_back(frame(0, {at(0.0)}));
  video.push_back(frame(1, {at(3.5)}));
  video.push_back(frame(2, {}));
  video.push_back(frame(3, {at(3.5)}));
  const auto enriched = stage1_fill_gaps(video, RefineConfig{}, default_box_tracker());
  REQUIRE(enriched[2].detections.size() == 1);
  CHECK(enriched[2].detections[0].recovered);
  CHECK(enriched[2].detections[0].box.x1 == doctest::Approx(5.25));
}

TEST_CASE("stage1: mature tracklets do not match below the strict threshold") {
  // Five stationary matches make the tracklet mature; a jump to x=3.5
  // (iou ~0.481 < 0.5) must not match it and spawns a second tracklet whose
  // own gap at f8 is recovered at the stationary x=3.5.
  std::vector<FrameDetections> video;
  for (int t = 0; t <= 4; ++t) {
    video.push_back(frame(t, {at(0.0)}));
  }
  for (int t = 5; t <= 7; ++t) {
    video.push_back(frame(t, {at(3.5)}));
  }
  video.push_back(frame(8, {}));
  video.push_back(frame(9, {at(3.5)}));

  const auto enriched = stage1_fill_gaps(video, RefineConfig{}, default_box_tracker());
  REQUIRE(enriched[8].detections.size() == 1);
  CHECK(enriched[8].detections[0].recovered);
  CHECK(enriched[8].detections[0].box.x1 == doctest::Approx(3.5));
}

TEST_CASE("stage1: class constraint prevents cross-class matches") {
  std::vector<FrameDetections> video;
  video.push_back(frame(0, {at(0.0, 0.9, 0)}));
  for (int t = 1; t < 8; ++t) {
    video.push_back(frame(t, {at(0.0, 0.9, 1)}));  // same place, other class
  }
  const auto enriched = stage1_fill_gaps(video, RefineConfig{}, default_box_tracker());
  CHECK(count_all(enriched) == count_all(video));  // no recovery across classes
}

TEST_CASE("stage1: rejects non-consecutive frames") {
  std::vector<FrameDetections> video;
  video.push_back(frame(0, {}));
  video.push_back(frame(2, {}));
  CHECK_THROWS_AS(stage1_fill_gaps(video, RefineConfig{}, default_box_tracker()),
                  ValidationError);
}

TEST_CASE("stage1: empty video stays empty") {
  const std::vector<FrameDetections> empty;
  CHECK(stage1_fill_gaps(empty, RefineConfig{}, default_box_tracker()).empty());
  const auto no_dets = moving_object_video(5, 0.0, {0, 1, 2, 3, 4});
  CHECK(count_all(stage1_fill_gaps(no_dets, RefineConfig{}, default_box_tracker())) == 0);
}

TEST_CASE("stage2: two-frame spur removed, long track kept") {
  auto video = moving_object_video(100, 1.0, {});
  // A spurious detection appearing at the same spot in frames 40 and 41 only.
  video[40].detections.push_back(at(300.0, 0.5));
  video[41].detections.push_back(at(300.0, 0.5));
  const auto pruned = stage2_prune_short_tracks(video, RefineConfig{});
  CHECK(count_all(pruned) == 100);  // the 100-frame object survives intact
  CHECK(pruned[40].detections.size() == 1);
  CHECK_FALSE(contains(pruned[40].detections, at(300.0, 0.5)));
}

TEST_CASE("stage2: boundary lengths") {
  SUBCASE("exactly five frames is kept") {
    std::vector<FrameDetections> video;
    for (int t = 0; t < 8; ++t) {
      std::vector<Detection> dets;
      if (t >= 1 && t <= 5) {
        dets.push_back(at(0.0));
      }
      video.push_back(frame(t, std::move(dets)));
    }
    const auto pruned = stage2_prune_short_tracks(video, RefineConfig{});
    CHECK(count_all(pruned) == 5);
  }
  SUBCASE("four frames is pruned") {
    std::vector<FrameDetections> video;
    for (int t = 0; t < 8; ++t) {
      std::vector<Detection> dets;
      if (t >= 1 && t <= 4) {
        dets.push_back(at(0.0));
      }
      video.push_back(frame(t, std::move(dets)));
    }
    const auto pruned = stage2_prune_short_tracks(video, RefineConfig{});
    CHECK(count_all(pruned) == 0);
  }
}

TEST_CASE("stage2: a one-frame hole splits the sequence") {
  // 4 frames, hole, 4 frames: both runs are shorter than 5 and disappear.
  const auto video = moving_object_video(9, 0.0, {4});
  const auto pruned = stage2_prune_short_tracks(video, RefineConfig{});
  CHECK(count_all(pruned) == 0);
}

TEST_CASE("refinement invariants on random videos") {
  Rng rng(424242);
  for (int trial = 0; trial < 100; ++trial) {
    const int frames = 8 + static_cast<int>(rng.uniform_index(25));
    std::vector<FrameDetections> video;
    for (int t = 0; t < frames; ++t) {
      std::vector<Detection> dets;
      const int count = static_cast<int>(rng.uniform_index(4));
      for (int i = 0; i < count; ++i) {
        const double x = rng.uniform(0.0, 80.0);
        const double y = rng.uniform(0.0, 80.0);
        auto det = make_detection("f" + std::to_string(t),
                                  0, static_cast<int>(rng.uniform_index(2)),
                                  rng.uniform(0.05, 1.0), x, y,
                                  x + rng.uniform(5.0, 25.0), y + rng.uniform(5.0, 25.0));
        dets.push_back(std::move(det));
      }
      video.push_back(frame(t, std::move(dets)));
    }

    const auto enriched = stage1_fill_gaps(video, RefineConfig{}, default_box_tracker());
    const auto pruned = stage2_prune_short_tracks(enriched, RefineConfig{});

    REQUIRE(enriched.size() == video.size());
    REQUIRE(pruned.size() == video.size());
    for (std::size_t f = 0; f < video.size(); ++f) {
      // stage1 superset: every original detection survives.
      for (const auto& det : video[f].detections) {
        CHECK(contains(enriched[f].detections, det));
      }
      // stage2 subset: nothing new appears.
      for (const auto& det : pruned[f].detections) {
        CHECK(contains(enriched[f].detections, det));
      }
      // Recovered detections only ever appear strictly inside the video.
      for (const auto& det : enriched[f].detections) {
        if (det.recovered) {
          CHECK(f > 0);
          CHECK(f + 1 < video.size());
        }
      }
    }

    // Determinism.
    const auto again = stage1_fill_gaps(video, RefineConfig{}, default_box_tracker());
    for (std::size_t f = 0; f < video.size(); ++f) {
      CHECK(again[f].detections == enriched[f].detections);
    }
  }
}

TEST_CASE("with min_track_length 1 and a hopeless tracker, refinement is identity") {
  const auto video = moving_object_video(12, 3.0, {4, 5});
  RefineConfig config;
  config.min_track_length = 1;
  // A tracker whose predictions are always far off-screen can never rematch,
  // so stage 1 adds nothing and stage 2 keeps every 1-frame sequence.
  class Hopeless final : public TrackerBehavior {
   public:
    void initialize(const BoundingBox&) override {}
    BoundingBox predict() override { return BoundingBox{-1000, -1000, -990, -990}; }
    void correct(const BoundingBox&) override {}
  };
  const auto refined = refine_video(video, config, [] { return std::make_unique<Hopeless>(); });
  REQUIRE(refined.size() == video.size());
  for (std::size_t f = 0; f < video.size(); ++f) {
    CHECK(refined[f].detections == video[f].detections);
  }
}

TEST_CASE("recovered score policy: fixed value") {
  const auto video = moving_object_video(10, 0.0, {5});
  RefineConfig config;
  config.recovered_score = RecoveredScorePolicy::fixed(0.25);
  const auto enriched = stage1_fill_gaps(video, config, default_box_tracker());
  REQUIRE(enriched[5].detections.size() == 1);
  CHECK(enriched[5].detections[0].score == doctest::Approx(0.25));
}

TEST_CASE("frames_from_bundle orders by frame index and requires video bundles") {
  DatasetBundle bundle;
  bundle.detector_names = {"d"};
  bundle.images = {make_image("b", 10, 10), make_image("a", 10, 10)};
  bundle.images[0].frame_index = 1;
  bundle.images[1].frame_index = 0;
  bundle.detections = {make_detection("b", 0, 0, 0.5, 0, 0, 5, 5)};
  const auto frames = frames_from_bundle(bundle);
  REQUIRE(frames.size() == 2);
  CHECK(frames[0].image_id == "a");
  CHECK(frames[1].image_id == "b");
  CHECK(frames[1].detections.size() == 1);
  CHECK(flatten_frames(frames).size() == 1);

  bundle.images[0].frame_index.reset();
  CHECK_THROWS_AS(frames_from_bundle(bundle), ValidationError);
}

TEST_CASE("rule 1 can count the consecutive match streak instead of totals") {
  // Object matched frames 0-7 (8 total), then a 1-frame hole at 8, matched 9,
  // then gone for good. Under the total count, 8 > 5 exempts the tracklet
  // from rule 1 and it survives the trailing misses until max_miss. Under the
  // streak count, the rematch at frame 9 leaves a streak of 1 <= 5, so the
  // tracklet dies once misses exceed max_miss_young and its gap buffer dies
  // with it; the frame-8 hole was already flushed on the rematch either way.
  std::set<int> dropped = {8};
  for (int t = 10; t < 30; ++t) {
    dropped.insert(t);
  }
  const auto video = moving_object_video(30, 0.0, dropped);

  RefineConfig totals;
  const auto with_totals = stage1_fill_gaps(video, totals, default_box_tracker());
  // Hole at 8 recovered; trailing misses stay buffered (tracklet alive, never
  // rematched, video ends).
  CHECK(count_all(with_totals) == count_all(video) + 1);
  REQUIRE(with_totals[8].detections.size() == 1);
  CHECK(with_totals[8].detections[0].recovered);

  RefineConfig streaks;
  streaks.rule1_total_matches = false;
  const auto with_streaks = stage1_fill_gaps(video, streaks, default_box_tracker());
  CHECK(count_all(with_streaks) == count_all(video) + 1);  // same output here

  // The difference shows when the object comes back late: frame 18 is within
  // max_miss (50) of the last match, so the totals variant can still rematch
  // and flush frames 10-17, while the streak variant killed the tracklet at
  // miss 6 (frame 15) and recovers nothing.
  std::set<int> dropped2 = {8};
  for (int t = 10; t < 18; ++t) {
    dropped2.insert(t);
  }
  const auto video2 = moving_object_video(19, 0.0, dropped2);
  const auto totals2 = stage1_fill_gaps(video2, totals, default_box_tracker());
  CHECK(count_all(totals2) == count_all(video2) + 1 + 8);  // hole + 8-frame gap
  const auto streaks2 = stage1_fill_gaps(video2, streaks, default_box_tracker());
  CHECK(count_all(streaks2) == count_all(video2) + 1);  // only the hole
}
