#pragma once

// Shared helpers for the test suites: small factories, a scratch-directory
// guard, and the independent oracles the derived expectations are checked
// against. The oracles deliberately re-implement their logic from scratch
// (including IoU) so they share no code with the library paths they verify.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <unistd.h>
#include <filesystem>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "detfuse/dataset.hpp"

namespace testing_support {

inline detfuse::Detection make_detection(const std::string& image_id, int detector_id,
                                         int class_id, double score, double x1, double y1,
                                         double x2, double y2) {
  detfuse::Detection det;
  det.image_id = image_id;
  det.detector_id = detector_id;
  det.class_id = class_id;
  det.score = score;
  det.box = detfuse::BoundingBox{x1, y1, x2, y2};
  return det;
}

inline detfuse::GroundTruthBox make_gt(const std::string& image_id, int class_id,
                                       double x1, double y1, double x2, double y2) {
  detfuse::GroundTruthBox gt;
  gt.image_id = image_id;
  gt.class_id = class_id;
  gt.box = detfuse::BoundingBox{x1, y1, x2, y2};
  return gt;
}

inline detfuse::ImageRecord make_image(const std::string& image_id, int width, int height) {
  detfuse::ImageRecord img;
  img.image_id = image_id;
  img.width = width;
  img.height = height;
  return img;
}

/// Unique scratch directory, removed on destruction.
class ScratchDir {
 public:
  ScratchDir() {
    auto base = std::filesystem::temp_directory_path();
    for (int i = 0; i < 10000; ++i) {
      auto candidate = base / ("detfuse_test_" + std::to_string(::getpid()) + "_" +
                               std::to_string(counter_++));
      std::error_code ec;
      if (std::filesystem::create_directory(candidate, ec)) {
        path_ = candidate;
        return;
      }
    }
    std::abort();
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  static inline int counter_ = 0;
};

// ---------------------------------------------------------------------------
// Brute-force average-precision oracle.
// ---------------------------------------------------------------------------

struct OracleBox {
  double x1, y1, x2, y2;
};

struct OracleDetection {
  OracleBox box;
  double score;
  std::string image_id;
};

struct OracleGroundTruth {
  OracleBox box;
  std::string image_id;
};

inline double oracle_iou(const OracleBox& a, const OracleBox& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (w <= 0.0 || h <= 0.0) {
    return 0.0;
  }
  const double inter = w * h;
  const double area_a = (a.x2 - a.x1) * (a.y2 - a.y1);
  const double area_b = (b.x2 - b.x1) * (b.y2 - b.y1);
  const double uni = area_a + area_b - inter;
  return uni <= 0.0 ? 0.0 : inter / uni;
}

/// Plain enumeration of the ranked list, greedy matching, and an explicit
/// upper-envelope area sum. Single class.
inline double oracle_average_precision(std::vector<OracleDetection> detections,
                                       const std::vector<OracleGroundTruth>& ground_truth,
                                       double iou_threshold, double score_floor) {
  if (ground_truth.empty()) {
    return 0.0;
  }
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    if (detections[i].score >= score_floor) {
      order.push_back(i);
    }
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (detections[a].score != detections[b].score) {
      return detections[a].score > detections[b].score;
    }
    return detections[a].image_id < detections[b].image_id;
  });

  std::vector<bool> used(ground_truth.size(), false);
  std::vector<int> tp_flags;
  for (const std::size_t i : order) {
    int best = -1;
    double best_overlap = -1.0;
    for (std::size_t g = 0; g < ground_truth.size(); ++g) {
      if (used[g] || ground_truth[g].image_id != detections[i].image_id) {
        continue;
      }
      const double overlap = oracle_iou(detections[i].box, ground_truth[g].box);
      if (overlap >= iou_threshold && overlap > best_overlap) {
        best_overlap = overlap;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      used[static_cast<std::size_t>(best)] = true;
      tp_flags.push_back(1);
    } else {
      tp_flags.push_back(0);
    }
  }

  const auto n = tp_flags.size();
  double ap = 0.0;
  double previous_recall = 0.0;
  int tp = 0;
  for (std::size_t k = 0; k < n; ++k) {
    tp += tp_flags[k];
    const double recall = static_cast<double>(tp) / static_cast<double>(ground_truth.size());
    if (recall == previous_recall) {
      continue;
    }
    // Envelope precision at this recall level: best precision at any rank
    // from k onward.
    double envelope = 0.0;
    int tp2 = 0;
    for (std::size_t m = 0; m < n; ++m) {
      tp2 += tp_flags[m];
      if (m >= k) {
        envelope = std::max(envelope,
                            static_cast<double>(tp2) / static_cast<double>(m + 1));
      }
    }
    ap += (recall - previous_recall) * envelope;
    previous_recall = recall;
  }
  return ap;
}

// ---------------------------------------------------------------------------
// Closed-form least squares: minimizes sum_i |w^T X_i - g_i|^2 by solving the
// D x D normal equations with Gaussian elimination.
// ---------------------------------------------------------------------------

inline std::vector<double> solve_least_squares(
    const std::vector<std::vector<double>>& x_matrices,  // each row-major D x 4
    const std::vector<std::array<double, 4>>& targets, int detector_count) {
  const int d = detector_count;
  std::vector<std::vector<double>> a(static_cast<std::size_t>(d),
                                     std::vector<double>(static_cast<std::size_t>(d), 0.0));
  std::vector<double> b(static_cast<std::size_t>(d), 0.0);
  for (std::size_t i = 0; i < x_matrices.size(); ++i) {
    const auto& x = x_matrices[i];
    for (int r = 0; r < d; ++r) {
      for (int c = 0; c < d; ++c) {
        double dot = 0.0;
        for (int k = 0; k < 4; ++k) {
          dot += x[static_cast<std::size_t>(r * 4 + k)] * x[static_cast<std::size_t>(c * 4 + k)];
        }
        a[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] += dot;
      }
      double dot = 0.0;
      for (int k = 0; k < 4; ++k) {
        dot += x[static_cast<std::size_t>(r * 4 + k)] * targets[i][static_cast<std::size_t>(k)];
      }
      b[static_cast<std::size_t>(r)] += dot;
    }
  }

  // Gaussian elimination with partial pivoting.
  for (int col = 0; col < d; ++col) {
    int pivot = col;
    for (int r = col + 1; r < d; ++r) {
      if (std::abs(a[static_cast<std::size_t>(r)][static_cast<std::size_t>(col)]) >
          std::abs(a[static_cast<std::size_t>(pivot)][static_cast<std::size_t>(col)])) {
        pivot = r;
      }
    }
    std::swap(a[static_cast<std::size_t>(col)], a[static_cast<std::size_t>(pivot)]);
    std::swap(b[static_cast<std::size_t>(col)], b[static_cast<std::size_t>(pivot)]);
    const double diag = a[static_cast<std::size_t>(col)][static_cast<std::size_t>(col)];
    for (int r = col + 1; r < d; ++r) {
      const double factor = a[static_cast<std::size_t>(r)][static_cast<std::size_t>(col)] / diag;
      for (int c = col; c < d; ++c) {
        a[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] -=
            factor * a[static_cast<std::size_t>(col)][static_cast<std::size_t>(c)];
      }
      b[static_cast<std::size_t>(r)] -= factor * b[static_cast<std::size_t>(col)];
    }
  }
  std::vector<double> w(static_cast<std::size_t>(d), 0.0);
  for (int r = d - 1; r >= 0; --r) {
    double sum = b[static_cast<std::size_t>(r)];
    for (int c = r + 1; c < d; ++c) {
      sum -= a[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] * w[static_cast<std::size_t>(c)];
    }
    w[static_cast<std::size_t>(r)] = sum / a[static_cast<std::size_t>(r)][static_cast<std::size_t>(r)];
  }
  return w;
}

}  // namespace testing_support
