#pragma once

#include <span>
#include <vector>

#include "detfuse/dataset.hpp"

namespace detfuse {

struct NmsConfig {
  double iou_threshold = 0.5;  // in (0, 1]
};

/// Baseline fusion: pool every detector's boxes for one image and run
/// class-wise greedy non-maximum suppression. Kept boxes are returned
/// unmodified, sorted by descending score; suppression is strict
/// (iou > threshold), so a box at exactly the threshold survives. Score ties
/// break by lower detector_id, then input order.
std::vector<Detection> nms_fuse(std::span<const Detection> detections,
                                const NmsConfig& config = {});

}  // namespace detfuse
