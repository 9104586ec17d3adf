#include "detfuse/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "detfuse/errors.hpp"
#include "detfuse/nms.hpp"
#include "detfuse/parallel.hpp"
#include "detfuse/random.hpp"

namespace detfuse {

namespace {
constexpr std::uint64_t kFoldStream = 0x666f6c64ULL;   // "fold"
constexpr std::uint64_t kTrainStream = 0x747261696eULL;  // "train"
}

double EvalReport::map_at(double iou_threshold) const {
  for (const auto& t : thresholds) {
    if (t.iou_threshold == iou_threshold) {
      return t.map;
    }
  }
  throw ValidationError("EvalReport: no result at iou_threshold " +
                        io::format_number(iou_threshold));
}

double average_precision(std::span<const Detection> detections,
                         std::span<const GroundTruthBox> ground_truth,
                         double iou_threshold, double score_floor) {
  if (ground_truth.empty()) {
    return 0.0;
  }

  std::vector<std::size_t> ranked;
  ranked.reserve(detections.size());
  for (std::size_t i = 0; i < detections.size(); ++i) {
    if (detections[i].score >= score_floor) {
      ranked.push_back(i);
    }
  }
  std::sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
    if (detections[a].score != detections[b].score) {
      return detections[a].score > detections[b].score;
    }
    if (detections[a].image_id != detections[b].image_id) {
      return detections[a].image_id < detections[b].image_id;
    }
    return a < b;
  });

  std::unordered_map<std::string, std::vector<std::size_t>> gt_by_image;
  for (std::size_t i = 0; i < ground_truth.size(); ++i) {
    gt_by_image[ground_truth[i].image_id].push_back(i);
  }
  std::vector<bool> gt_matched(ground_truth.size(), false);

  const double total_gt = static_cast<double>(ground_truth.size());
  std::vector<double> precision;
  std::vector<double> recall;
  precision.reserve(ranked.size());
  recall.reserve(ranked.size());
  int tp = 0;
  int fp = 0;
  for (const std::size_t i : ranked) {
    const Detection& det = detections[i];
    double best_overlap = 0.0;
    std::size_t best_gt = ground_truth.size();
    if (const auto it = gt_by_image.find(det.image_id); it != gt_by_image.end()) {
      for (const std::size_t g : it->second) {
        if (gt_matched[g]) {
          continue;
        }
        const double overlap = iou(det.box, ground_truth[g].box);
        if (overlap >= iou_threshold && overlap > best_overlap) {
          best_overlap = overlap;
          best_gt = g;  // ties keep the earlier ground-truth record
        }
      }
    }
    if (best_gt < ground_truth.size()) {
      gt_matched[best_gt] = true;
      ++tp;
    } else {
      ++fp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / total_gt);
  }

  // Monotone upper envelope, then the area at recall change points.
  for (std::size_t k = precision.size(); k-- > 1;) {
    precision[k - 1] = std::max(precision[k - 1], precision[k]);
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < precision.size(); ++k) {
    ap += (recall[k] - prev_recall) * precision[k];
    prev_recall = recall[k];
  }
  return ap;
}

EvalReport evaluate(std::span<const Detection> detections,
                    std::span<const GroundTruthBox> ground_truth,
                    const EvalConfig& config) {
  for (const double threshold : config.iou_thresholds) {
    if (!(threshold > 0.0 && threshold <= 1.0)) {
      throw ValidationError("evaluate: iou_threshold " + io::format_number(threshold) +
                            " outside (0,1]");
    }
  }
  if (!(config.score_floor >= 0.0 && config.score_floor < 1.0)) {
    throw ValidationError("evaluate: score_floor must be in [0,1)");
  }
  std::map<int, std::vector<Detection>> dets_by_class;
  for (const auto& det : detections) {
    if (det.score >= config.score_floor) {
      dets_by_class[det.class_id].push_back(det);
    }
  }
  std::map<int, std::vector<GroundTruthBox>> gt_by_class;
  for (const auto& gt : ground_truth) {
    gt_by_class[gt.class_id].push_back(gt);
  }

  EvalReport report;
  report.ground_truth_count = static_cast<int>(ground_truth.size());
  for (const auto& [class_id, dets] : dets_by_class) {
    report.detection_count += static_cast<int>(dets.size());
  }

  static const std::vector<Detection> kNoDetections;
  for (const double threshold : config.iou_thresholds) {
    ThresholdResult result;
    result.iou_threshold = threshold;
    double ap_sum = 0.0;
    for (const auto& [class_id, gts] : gt_by_class) {
      const auto it = dets_by_class.find(class_id);
      const auto& dets = it != dets_by_class.end() ? it->second : kNoDetections;
      ClassResult cls;
      cls.class_id = class_id;
      cls.ground_truth_count = static_cast<int>(gts.size());
      cls.detection_count = static_cast<int>(dets.size());
      cls.ap = average_precision(dets, gts, threshold, config.score_floor);
      ap_sum += cls.ap;
      result.classes.push_back(cls);
    }
    result.map = gt_by_class.empty() ? 0.0
                                     : ap_sum / static_cast<double>(gt_by_class.size());
    report.thresholds.push_back(std::move(result));
  }
  return report;
}

EvalReport evaluate(const DatasetBundle& bundle, const EvalConfig& config) {
  return evaluate(bundle.detections, bundle.ground_truth, config);
}

namespace {

std::string class_label(int class_id, std::span<const std::string> class_names) {
  if (class_id >= 0 && static_cast<std::size_t>(class_id) < class_names.size()) {
    return class_names[static_cast<std::size_t>(class_id)];
  }
  return "class" + std::to_string(class_id);
}

void append_threshold_json(std::string& out, const ThresholdResult& result,
                           std::span<const std::string> class_names,
                           const std::string& indent) {
  out += indent + "{\n";
  out += indent + "  \"iou_threshold\": " + io::format_number(result.iou_threshold) + ",\n";
  out += indent + "  \"map\": " + io::format_number_exact(result.map) + ",\n";
  out += indent + "  \"classes\": [";
  for (std::size_t i = 0; i < result.classes.size(); ++i) {
    const auto& cls = result.classes[i];
    out += i ? ",\n" : "\n";
    out += indent + "    {\"class_id\": " + std::to_string(cls.class_id);
    out += ", \"class_name\": \"" + io::escape_json_string(class_label(cls.class_id, class_names)) + "\"";
    out += ", \"ap\": " + io::format_number_exact(cls.ap);
    out += ", \"ground_truth\": " + std::to_string(cls.ground_truth_count);
    out += ", \"detections\": " + std::to_string(cls.detection_count) + "}";
  }
  out += result.classes.empty() ? "]\n" : "\n" + indent + "  ]\n";
  out += indent + "}";
}

}  // namespace

std::string report_to_json(const EvalReport& report,
                           std::span<const std::string> class_names) {
  std::string out = "{\n  \"detections\": " + std::to_string(report.detection_count);
  out += ",\n  \"ground_truth\": " + std::to_string(report.ground_truth_count);
  out += ",\n  \"thresholds\": [";
  for (std::size_t i = 0; i < report.thresholds.size(); ++i) {
    out += i ? ",\n" : "\n";
    append_threshold_json(out, report.thresholds[i], class_names, "    ");
  }
  out += report.thresholds.empty() ? "]\n" : "\n  ]\n";
  out += "}\n";
  return out;
}

namespace {

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return std::string(buf);
}

/// One table block per IoU threshold: methods as rows, classes + TOTAL as
/// columns, percentages with two decimals.
std::string render_table(const std::vector<std::string>& method_names,
                         const std::vector<const EvalReport*>& reports,
                         std::span<const std::string> class_names) {
  // Stable class column order: union over methods and thresholds.
  std::set<int> class_ids;
  std::set<double> thresholds;
  for (const EvalReport* report : reports) {
    for (const auto& t : report->thresholds) {
      thresholds.insert(t.iou_threshold);
      for (const auto& cls : t.classes) {
        class_ids.insert(cls.class_id);
      }
    }
  }

  std::vector<std::string> columns;
  columns.push_back("method");
  for (const int class_id : class_ids) {
    columns.push_back(class_label(class_id, class_names));
  }
  columns.push_back("TOTAL");

  std::ostringstream out;
  for (const double threshold : thresholds) {
    std::vector<std::vector<std::string>> rows;
    rows.push_back(columns);
    for (std::size_t m = 0; m < reports.size(); ++m) {
      const ThresholdResult* result = nullptr;
      for (const auto& t : reports[m]->thresholds) {
        if (t.iou_threshold == threshold) {
          result = &t;
          break;
        }
      }
      std::vector<std::string> row;
      row.push_back(method_names[m]);
      for (const int class_id : class_ids) {
        std::string cell = "-";
        if (result != nullptr) {
          for (const auto& cls : result->classes) {
            if (cls.class_id == class_id) {
              cell = fixed2(cls.ap);
              break;
            }
          }
        }
        row.push_back(std::move(cell));
      }
      row.push_back(result != nullptr ? fixed2(result->map) : "-");
      rows.push_back(std::move(row));
    }

    std::vector<std::size_t> widths(columns.size(), 0);
    for (const auto& row : rows) {
      for (std::size_t c = 0; c < row.size(); ++c) {
        widths[c] = std::max(widths[c], row[c].size());
      }
    }
    out << "MAP @ IoU " << io::format_number(threshold) << "\n";
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t c = 0; c < rows[r].size(); ++c) {
        if (c) {
          out << "  ";
        }
        const auto& cell = rows[r][c];
        if (c == 0) {
          out << cell << std::string(widths[c] - cell.size(), ' ');
        } else {
          out << std::string(widths[c] - cell.size(), ' ') << cell;
        }
      }
      out << "\n";
      if (r == 0) {
        std::size_t total = 0;
        for (std::size_t c = 0; c < widths.size(); ++c) {
          total += widths[c] + (c ? 2 : 0);
        }
        out << std::string(total, '-') << "\n";
      }
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace

std::string report_to_table(const EvalReport& report,
                            std::span<const std::string> class_names,
                            const std::string& method_name) {
  return render_table({method_name}, {&report}, class_names);
}

namespace {

EvalReport mean_report(const std::vector<EvalReport>& folds) {
  EvalReport mean;
  if (folds.empty()) {
    return mean;
  }
  for (const auto& fold : folds) {
    mean.detection_count += fold.detection_count;
    mean.ground_truth_count += fold.ground_truth_count;
  }
  for (std::size_t t = 0; t < folds[0].thresholds.size(); ++t) {
    ThresholdResult result;
    result.iou_threshold = folds[0].thresholds[t].iou_threshold;
    double map_sum = 0.0;
    std::map<int, ClassResult> classes;
    std::map<int, int> class_folds;
    for (const auto& fold : folds) {
      map_sum += fold.thresholds[t].map;
      for (const auto& cls : fold.thresholds[t].classes) {
        auto& acc = classes[cls.class_id];
        acc.class_id = cls.class_id;
        acc.ap += cls.ap;
        acc.ground_truth_count += cls.ground_truth_count;
        acc.detection_count += cls.detection_count;
        class_folds[cls.class_id] += 1;
      }
    }
    for (auto& [class_id, cls] : classes) {
      cls.ap /= static_cast<double>(class_folds[class_id]);
      result.classes.push_back(cls);
    }
    result.map = map_sum / static_cast<double>(folds.size());
    mean.thresholds.push_back(std::move(result));
  }
  return mean;
}

struct ImageSlice {
  std::vector<std::size_t> image_indices;  // into bundle.images
};

/// Evaluates a detection set restricted to the given images.
EvalReport evaluate_on_images(const std::vector<std::vector<Detection>>& dets_per_image,
                              const std::vector<std::vector<GroundTruthBox>>& gt_per_image,
                              const ImageSlice& slice, const EvalConfig& config) {
  std::vector<Detection> dets;
  std::vector<GroundTruthBox> gts;
  for (const std::size_t i : slice.image_indices) {
    dets.insert(dets.end(), dets_per_image[i].begin(), dets_per_image[i].end());
    gts.insert(gts.end(), gt_per_image[i].begin(), gt_per_image[i].end());
  }
  return evaluate(dets, gts, config);
}

std::vector<std::vector<Detection>> split_by_detector(
    const std::vector<std::vector<Detection>>& all, int detector_id) {
  std::vector<std::vector<Detection>> out(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    for (const auto& det : all[i]) {
      if (det.detector_id == detector_id) {
        out[i].push_back(det);
      }
    }
  }
  return out;
}

}  // namespace

CvReport cv_image(const DatasetBundle& bundle, const CvImageConfig& cv,
                  const PipelineConfig& pipeline) {
  if (cv.folds < 1 || cv.train_size < 1) {
    throw ValidationError("cv_image: folds and train_size must be positive");
  }
  const auto image_count = bundle.images.size();
  if (image_count < static_cast<std::size_t>(cv.folds) * static_cast<std::size_t>(cv.train_size)) {
    throw ValidationError("cv_image: need at least folds*train_size = " +
                          std::to_string(cv.folds * cv.train_size) + " images, have " +
                          std::to_string(image_count));
  }
  if (bundle.ground_truth.empty()) {
    throw ValidationError("cv_image: bundle has no ground truth");
  }

  std::vector<std::size_t> shuffled(image_count);
  for (std::size_t i = 0; i < image_count; ++i) {
    shuffled[i] = i;
  }
  Rng fold_rng(substream_seed(pipeline.seed, kFoldStream));
  fold_rng.shuffle(shuffled);

  const auto dets_per_image = group_detections_by_image(bundle);
  const auto gt_per_image = group_ground_truth_by_image(bundle);
  const int detector_count = bundle.detector_count();

  // Fold boundaries: first (n % folds) folds get one extra image.
  const std::size_t base = image_count / static_cast<std::size_t>(cv.folds);
  const std::size_t extra = image_count % static_cast<std::size_t>(cv.folds);

  CvReport report;
  report.folds = cv.folds;
  std::vector<std::string> method_names = bundle.detector_names;
  method_names.emplace_back("nms");
  method_names.emplace_back("ensemble");
  for (const auto& name : method_names) {
    MethodResult method;
    method.method = name;
    report.methods.push_back(std::move(method));
  }

  std::size_t cursor = 0;
  for (int fold = 0; fold < cv.folds; ++fold) {
    const std::size_t fold_size = base + (static_cast<std::size_t>(fold) < extra ? 1 : 0);
    const std::size_t fold_begin = cursor;
    cursor += fold_size;

    // Train on the first train_size images of this fold; test on every image
    // outside the training set (the identical split for every method).
    std::vector<std::string> train_ids;
    std::vector<bool> in_train(image_count, false);
    for (std::size_t k = 0; k < static_cast<std::size_t>(cv.train_size); ++k) {
      const std::size_t img = shuffled[fold_begin + k];
      train_ids.push_back(bundle.images[img].image_id);
      in_train[img] = true;
    }
    ImageSlice test;
    for (std::size_t i = 0; i < image_count; ++i) {
      if (!in_train[i]) {
        test.image_indices.push_back(i);
      }
    }

    TrainConfig train_config = pipeline.train;
    train_config.prediction_rule = pipeline.fusion.coordinate_rule;
    train_config.rng_seed = substream_seed(pipeline.seed, kTrainStream,
                                           static_cast<std::uint64_t>(fold));
    const auto pairs = build_pairs(bundle, train_ids, pipeline.fusion.iou_threshold);
    const TrainReport trained = train_weights(pairs, train_config);

    std::vector<std::vector<Detection>> nms_per_image(image_count);
    std::vector<std::vector<Detection>> fused_per_image(image_count);
    const NmsConfig nms_config{pipeline.fusion.iou_threshold};
    parallel_for(test.image_indices.size(), pipeline.threads, [&](std::size_t k) {
      const std::size_t i = test.image_indices[k];
      nms_per_image[i] = nms_fuse(dets_per_image[i], nms_config);
      fused_per_image[i] = ensemble_fuse(dets_per_image[i], trained.weights, pipeline.fusion);
    });

    std::size_t method_index = 0;
    for (int d = 0; d < detector_count; ++d, ++method_index) {
      report.methods[method_index].per_fold.push_back(evaluate_on_images(
          split_by_detector(dets_per_image, d), gt_per_image, test, pipeline.eval));
    }
    report.methods[method_index++].per_fold.push_back(
        evaluate_on_images(nms_per_image, gt_per_image, test, pipeline.eval));
    report.methods[method_index].per_fold.push_back(
        evaluate_on_images(fused_per_image, gt_per_image, test, pipeline.eval));
  }

  for (auto& method : report.methods) {
    method.mean = mean_report(method.per_fold);
  }
  return report;
}

CvReport cv_video(const DatasetBundle& bundle, const CvVideoConfig& cv,
                  const PipelineConfig& pipeline) {
  if (cv.segments < 1 || cv.train_tail < 1) {
    throw ValidationError("cv_video: segments and train_tail must be positive");
  }
  auto frames = frames_from_bundle(bundle);
  const std::size_t frame_count = frames.size();
  if (frame_count < static_cast<std::size_t>(cv.segments) *
                        static_cast<std::size_t>(cv.train_tail + 1)) {
    throw ValidationError("cv_video: video too short; need at least segments*(train_tail+1) = " +
                          std::to_string(cv.segments * (cv.train_tail + 1)) + " frames, have " +
                          std::to_string(frame_count));
  }
  if (bundle.ground_truth.empty()) {
    throw ValidationError("cv_video: bundle has no ground truth");
  }

  std::unordered_map<std::string, std::vector<GroundTruthBox>> gt_by_image;
  for (const auto& gt : bundle.ground_truth) {
    gt_by_image[gt.image_id].push_back(gt);
  }
  const int detector_count = bundle.detector_count();

  CvReport report;
  report.folds = cv.segments;
  std::vector<std::string> method_names = bundle.detector_names;
  method_names.emplace_back("nms");
  method_names.emplace_back("ensemble");
  method_names.emplace_back("ensemble_refined");
  for (const auto& name : method_names) {
    MethodResult method;
    method.method = name;
    report.methods.push_back(std::move(method));
  }

  const std::size_t base = frame_count / static_cast<std::size_t>(cv.segments);
  for (int segment = 0; segment < cv.segments; ++segment) {
    const std::size_t begin = static_cast<std::size_t>(segment) * base;
    const std::size_t end = segment + 1 == cv.segments ? frame_count : begin + base;
    const std::size_t train_begin = end - static_cast<std::size_t>(cv.train_tail);

    std::vector<std::string> train_ids;
    for (std::size_t f = train_begin; f < end; ++f) {
      train_ids.push_back(frames[f].image_id);
    }

    TrainConfig train_config = pipeline.train;
    train_config.prediction_rule = pipeline.fusion.coordinate_rule;
    train_config.rng_seed = substream_seed(pipeline.seed, kTrainStream,
                                           static_cast<std::uint64_t>(segment));
    const auto pairs = build_pairs(bundle, train_ids, pipeline.fusion.iou_threshold);
    const TrainReport trained = train_weights(pairs, train_config);

    // Test head: the uninterrupted frames before the training tail.
    std::vector<GroundTruthBox> head_gt;
    std::vector<Detection> head_raw;
    std::vector<FrameDetections> head_fused(train_begin - begin);
    const NmsConfig nms_config{pipeline.fusion.iou_threshold};
    std::vector<Detection> head_nms;
    for (std::size_t f = begin; f < train_begin; ++f) {
      if (const auto it = gt_by_image.find(frames[f].image_id); it != gt_by_image.end()) {
        head_gt.insert(head_gt.end(), it->second.begin(), it->second.end());
      }
      head_raw.insert(head_raw.end(), frames[f].detections.begin(), frames[f].detections.end());
    }
    parallel_for(train_begin - begin, pipeline.threads, [&](std::size_t k) {
      const auto& frame = frames[begin + k];
      head_fused[k].frame_index = frame.frame_index;
      head_fused[k].image_id = frame.image_id;
      head_fused[k].detections = ensemble_fuse(frame.detections, trained.weights, pipeline.fusion);
    });
    for (std::size_t f = begin; f < train_begin; ++f) {
      const auto kept = nms_fuse(frames[f].detections, nms_config);
      head_nms.insert(head_nms.end(), kept.begin(), kept.end());
    }

    const auto refined = refine_video(head_fused, pipeline.refine, default_box_tracker());

    std::size_t method_index = 0;
    for (int d = 0; d < detector_count; ++d, ++method_index) {
      std::vector<Detection> dets;
      for (const auto& det : head_raw) {
        if (det.detector_id == d) {
          dets.push_back(det);
        }
      }
      report.methods[method_index].per_fold.push_back(evaluate(dets, head_gt, pipeline.eval));
    }
    report.methods[method_index++].per_fold.push_back(evaluate(head_nms, head_gt, pipeline.eval));
    report.methods[method_index++].per_fold.push_back(
        evaluate(flatten_frames(head_fused), head_gt, pipeline.eval));
    report.methods[method_index].per_fold.push_back(
        evaluate(flatten_frames(refined), head_gt, pipeline.eval));
  }

  for (auto& method : report.methods) {
    method.mean = mean_report(method.per_fold);
  }
  return report;
}

std::string cv_report_to_json(const CvReport& report,
                              std::span<const std::string> class_names) {
  std::string out = "{\n  \"folds\": " + std::to_string(report.folds);
  out += ",\n  \"methods\": [";
  for (std::size_t m = 0; m < report.methods.size(); ++m) {
    const auto& method = report.methods[m];
    out += m ? ",\n" : "\n";
    out += "    {\n      \"method\": \"" + io::escape_json_string(method.method) + "\",\n";
    out += "      \"mean\": ";
    {
      std::string mean_json = report_to_json(method.mean, class_names);
      // Reindent the nested report for readability.
      mean_json.pop_back();
      out += mean_json;
    }
    out += ",\n      \"per_fold_map\": {";
    for (std::size_t t = 0; t < method.mean.thresholds.size(); ++t) {
      if (t) {
        out += ", ";
      }
      out += "\"" + io::format_number(method.mean.thresholds[t].iou_threshold) + "\": [";
      for (std::size_t f = 0; f < method.per_fold.size(); ++f) {
        if (f) {
          out += ", ";
        }
        out += io::format_number_exact(method.per_fold[f].thresholds[t].map);
      }
      out += "]";
    }
    out += "}\n    }";
  }
  out += report.methods.empty() ? "]\n" : "\n  ]\n";
  out += "}\n";
  return out;
}

std::string cv_report_to_table(const CvReport& report,
                               std::span<const std::string> class_names) {
  std::vector<std::string> names;
  std::vector<const EvalReport*> means;
  for (const auto& method : report.methods) {
    names.push_back(method.method);
    means.push_back(&method.mean);
  }
  return render_table(names, means, class_names);
}

}  // namespace detfuse
