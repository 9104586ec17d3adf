#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "detfuse/dataset.hpp"

namespace detfuse {

/// How fused coordinates are computed from a cluster (and how the regression
/// predicts during training). `normalized` divides the score-and-weight
/// weighted coordinate sum by the sum of score*weight; `linear` is the raw
/// weighted sum w^T X without normalization.
enum class CoordinateRule { normalized, linear };

std::string to_string(CoordinateRule rule);
CoordinateRule coordinate_rule_from_string(const std::string& name);

/// Per-detector scalar weights, index = detector_id.
struct WeightVector {
  std::vector<double> w;

  int detector_count() const { return static_cast<int>(w.size()); }

  /// Equal weights 1/D.
  static WeightVector uniform(int detector_count);
};

struct FusionConfig {
  double iou_threshold = 0.5;
  int min_sources = 2;  // clusters with fewer members are discarded
  CoordinateRule coordinate_rule = CoordinateRule::normalized;
};

/// One physical-object hypothesis: at most one detection per source
/// detector, gathered by IoU agreement with the seed.
struct Cluster {
  int class_id = 0;
  int seed_detector_id = 0;
  std::map<int, Detection> members;  // detector_id -> its contributed box

  int source_count() const { return static_cast<int>(members.size()); }
};

/// Greedy cluster construction for one image. Per class: the most confident
/// unassigned box seeds a cluster; each detector contributes its unassigned
/// box with the highest IoU to the seed among those with iou > threshold;
/// repeat until every detection is assigned. Every input detection ends up
/// in exactly one cluster (possibly a singleton it seeds itself).
std::vector<Cluster> build_clusters(std::span<const Detection> detections,
                                    double iou_threshold);

/// Weighted fusion of one cluster. Detectors absent from the cluster are
/// zero-filled (score 0, box (0,0,0,0)): they drop out of the coordinates
/// but depress the fused score. The output carries the reserved ensemble
/// detector id, equal to the detector count.
Detection fuse_cluster(const Cluster& cluster, const WeightVector& weights,
                       CoordinateRule rule);

/// Full per-image pipeline: build clusters, drop those with fewer than
/// min_sources members, fuse the survivors, sort by descending fused score.
std::vector<Detection> ensemble_fuse(std::span<const Detection> detections,
                                     const WeightVector& weights,
                                     const FusionConfig& config);

/// Reserved detector id for fused outputs.
inline int ensemble_detector_id(int detector_count) { return detector_count; }

/// Weights persisted together with the detector name table, so a mismatched
/// bundle is caught at fuse time instead of producing garbage.
struct WeightsFile {
  std::vector<std::string> detector_names;
  WeightVector weights;
  CoordinateRule coordinate_rule = CoordinateRule::normalized;
};

std::string weights_to_json(const WeightsFile& file);
WeightsFile weights_from_json(const std::string& text);
WeightsFile load_weights(const std::string& path);
void save_weights(const WeightsFile& file, const std::string& path);

}  // namespace detfuse
