#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "detfuse/dataset.hpp"
#include "detfuse/fusion.hpp"
#include "detfuse/refine.hpp"
#include "detfuse/weights.hpp"

namespace detfuse {

struct EvalConfig {
  std::vector<double> iou_thresholds{0.5, 0.75, 0.85};
  double score_floor = 0.05;  // detections below this are discarded
};

struct ClassResult {
  int class_id = 0;
  double ap = 0.0;
  int ground_truth_count = 0;
  int detection_count = 0;  // after the score floor
};

struct ThresholdResult {
  double iou_threshold = 0.0;
  std::vector<ClassResult> classes;  // classes with >= 1 ground-truth box
  double map = 0.0;                  // mean AP over those classes
};

struct EvalReport {
  std::vector<ThresholdResult> thresholds;
  int detection_count = 0;
  int ground_truth_count = 0;

  /// MAP at the given threshold; throws if the report has no such threshold.
  double map_at(double iou_threshold) const;
};

/// PASCAL-VOC-2012-style average precision for a single class, possibly
/// spanning several images. Detections below score_floor are dropped, the
/// rest are ranked by descending score (ties by image_id, then input order)
/// and greedily matched to the unmatched same-image ground-truth box of
/// highest IoU >= iou_threshold. AP is the area under the monotone
/// upper-envelope precision-recall curve at all recall change points.
/// Returns 0 when there is no ground truth.
double average_precision(std::span<const Detection> detections,
                         std::span<const GroundTruthBox> ground_truth,
                         double iou_threshold, double score_floor);

EvalReport evaluate(std::span<const Detection> detections,
                    std::span<const GroundTruthBox> ground_truth,
                    const EvalConfig& config = {});
EvalReport evaluate(const DatasetBundle& bundle, const EvalConfig& config = {});

std::string report_to_json(const EvalReport& report,
                           std::span<const std::string> class_names);
std::string report_to_table(const EvalReport& report,
                            std::span<const std::string> class_names,
                            const std::string& method_name = "AP");

/// Shared knobs for the cross-validation harnesses.
struct PipelineConfig {
  FusionConfig fusion;
  TrainConfig train;
  RefineConfig refine;  // video only
  EvalConfig eval;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// One evaluated method (a base detector, NMS fusion, the ensemble, ...)
/// across all folds. `mean` holds per-class APs averaged over the folds in
/// which the class had ground truth, and MAPs averaged over folds.
struct MethodResult {
  std::string method;
  std::vector<EvalReport> per_fold;
  EvalReport mean;
};

struct CvReport {
  int folds = 0;
  std::vector<MethodResult> methods;
};

struct CvImageConfig {
  int folds = 5;
  int train_size = 100;
};

/// Image-dataset harness: image ids are shuffled once (seeded) and split
/// into `folds` groups; each fold trains the weights on its first
/// `train_size` images and every method is evaluated on all remaining
/// images. The same test split is used for the base detectors, NMS fusion
/// and the trained ensemble.
CvReport cv_image(const DatasetBundle& bundle, const CvImageConfig& cv,
                  const PipelineConfig& pipeline);

struct CvVideoConfig {
  int segments = 5;
  int train_tail = 100;
};

/// Video harness: the frame range is cut into contiguous equal segments
/// (remainder to the last). Within each segment the last `train_tail` frames
/// train the weights and the contiguous head is used for testing, so the
/// refinement stages always see an uninterrupted sequence. Methods: each
/// base detector, NMS, the ensemble, and the ensemble with both refinement
/// stages applied.
CvReport cv_video(const DatasetBundle& bundle, const CvVideoConfig& cv,
                  const PipelineConfig& pipeline);

std::string cv_report_to_json(const CvReport& report,
                              std::span<const std::string> class_names);
std::string cv_report_to_table(const CvReport& report,
                               std::span<const std::string> class_names);

}  // namespace detfuse
