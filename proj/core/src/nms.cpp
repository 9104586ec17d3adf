#include "detfuse/nms.hpp"

#include <algorithm>

#include "detfuse/errors.hpp"

namespace detfuse {

std::vector<Detection> nms_fuse(std::span<const Detection> detections,
                                const NmsConfig& config) {
  if (!(config.iou_threshold > 0.0 && config.iou_threshold <= 1.0)) {
    throw ValidationError("nms_fuse: iou_threshold must be in (0,1]");
  }
  for (std::size_t i = 1; i < detections.size(); ++i) {
    if (detections[i].image_id != detections[0].image_id) {
      throw ValidationError("nms_fuse: detections span more than one image_id");
    }
  }

  std::vector<std::size_t> order(detections.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    order[i] = i;
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& da = detections[a];
    const auto& db = detections[b];
    if (da.score != db.score) {
      return da.score > db.score;
    }
    if (da.detector_id != db.detector_id) {
      return da.detector_id < db.detector_id;
    }
    return a < b;
  });

  std::vector<bool> suppressed(detections.size(), false);
  std::vector<Detection> kept;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::size_t i = order[k];
    if (suppressed[i]) {
      continue;
    }
    const Detection& top = detections[i];
    kept.push_back(top);
    for (std::size_t m = k + 1; m < order.size(); ++m) {
      const std::size_t j = order[m];
      if (suppressed[j] || detections[j].class_id != top.class_id) {
        continue;
      }
      if (iou(top.box, detections[j].box) > config.iou_threshold) {
        suppressed[j] = true;
      }
    }
  }
  return kept;
}

}  // namespace detfuse
