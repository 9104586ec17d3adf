#pragma once

#include <optional>
#include <string>
#include <vector>

#include "detfuse/geometry.hpp"

namespace detfuse {

/// One detector output on one image.
struct Detection {
  BoundingBox box;
  int class_id = 0;
  double score = 0.0;     // in [0, 1]
  int detector_id = 0;    // dense index into DatasetBundle::detector_names
  std::string image_id;
  bool recovered = false;  // true for boxes inserted by video refinement

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct GroundTruthBox {
  BoundingBox box;  // positive area
  int class_id = 0;
  std::string image_id;

  friend bool operator==(const GroundTruthBox&, const GroundTruthBox&) = default;
};

struct ImageRecord {
  std::string image_id;
  int width = 0;
  int height = 0;
  /// Present (and consecutive across the bundle) for video datasets.
  std::optional<int> frame_index;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

/// All detector outputs and ground truth for one dataset, co-registered by
/// image_id. Immutable after load; safe to share across threads.
struct DatasetBundle {
  std::vector<std::string> detector_names;  // index = detector_id
  std::vector<std::string> class_names;
  std::vector<ImageRecord> images;
  std::vector<Detection> detections;
  std::vector<GroundTruthBox> ground_truth;

  int detector_count() const { return static_cast<int>(detector_names.size()); }
  const ImageRecord* find_image(const std::string& image_id) const;

  friend bool operator==(const DatasetBundle&, const DatasetBundle&) = default;
};

/// Checks every documented invariant (score ranges, detector ids, dangling
/// image ids, frame index continuity). Throws ValidationError naming the
/// first offending record; invalid bundles are rejected, never repaired.
void validate_bundle(const DatasetBundle& bundle);

DatasetBundle load_bundle(const std::string& path);

/// Canonical writer: fixed key order, detections sorted by
/// (image_id, detector_id, descending score), numbers rendered with at most
/// six fractional digits. Identical bundles produce byte-identical files.
/// Writes through a temp file and atomic rename.
void save_bundle(const DatasetBundle& bundle, const std::string& path);

std::string bundle_to_json(const DatasetBundle& bundle);
DatasetBundle bundle_from_json(const std::string& text);

/// Converts from the [x, y, width, height] convention used by common
/// detector dumps. Throws ValidationError for negative width or height.
BoundingBox from_xywh(double x, double y, double w, double h);

/// Detections / ground truth grouped per image, aligned with bundle.images.
std::vector<std::vector<Detection>> group_detections_by_image(const DatasetBundle& bundle);
std::vector<std::vector<GroundTruthBox>> group_ground_truth_by_image(const DatasetBundle& bundle);

namespace io {

/// Renders a double with at most six fractional digits, trailing zeros
/// trimmed, "-0" normalized to "0". The canonical number format for all
/// bundle files.
std::string format_number(double value);

/// Shortest decimal form that parses back to exactly the same double; used
/// for learned weights and report metrics.
std::string format_number_exact(double value);

std::string escape_json_string(const std::string& s);

std::string read_text_file(const std::string& path);

/// Writes to `path + ".tmp"` then renames, so a failed run never leaves a
/// partial output behind.
void write_text_file_atomic(const std::string& path, const std::string& text);

}  // namespace io

}  // namespace detfuse
