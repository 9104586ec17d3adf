// detfuse command-line front end: wires the fusion, training, refinement and
// evaluation modules into batch pipelines over canonical bundle files.

#include <filesystem>
#include <iostream>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "detfuse/dataset.hpp"
#include "detfuse/errors.hpp"
#include "detfuse/eval.hpp"
#include "detfuse/fusion.hpp"
#include "detfuse/nms.hpp"
#include "detfuse/parallel.hpp"
#include "detfuse/refine.hpp"
#include "detfuse/synthetic.hpp"
#include "detfuse/weights.hpp"

namespace {

using namespace detfuse;

/// Applies a flat JSON object of option defaults to every option the user
/// did not pass explicitly. Keys are long option names without leading
/// dashes; values run through the options' normal validators.
void apply_json_config(CLI::App* sub, const std::string& config_path) {
  if (config_path.empty()) {
    return;
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(io::read_text_file(config_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("config \"" + config_path + "\" is not valid JSON: " + e.what());
  }
  if (!doc.is_object()) {
    throw ParseError("config \"" + config_path + "\" must be a JSON object");
  }
  const auto scalar = [](const nlohmann::json& v) -> std::string {
    return v.is_string() ? v.get<std::string>() : v.dump();
  };
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    CLI::Option* opt = sub->get_option_no_throw("--" + it.key());
    if (opt == nullptr) {
      throw ValidationError("config: no such option \"--" + it.key() + "\"");
    }
    if (opt->count() > 0) {
      continue;  // explicit flags win
    }
    if (it->is_array()) {
      for (const auto& element : *it) {
        opt->add_result(scalar(element));
      }
      if (it->empty()) {
        continue;
      }
    } else {
      opt->add_result(scalar(*it));
    }
    try {
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw ValidationError("config: --" + it.key() + ": " + e.what());
    }
  }
}

/// Registers --config on a subcommand and wraps its callback so the config
/// merge happens before the handler runs.
void add_config_and_callback(CLI::App* sub, std::function<void()> handler) {
  auto config_path = std::make_shared<std::string>();
  sub->add_option("--config", *config_path,
                  "JSON file with option defaults; explicit flags win");
  sub->callback([sub, config_path, handler = std::move(handler)] {
    apply_json_config(sub, *config_path);
    handler();
  });
}

void require_distinct(const std::string& input, const std::string& output) {
  std::error_code ec;
  if (input == output ||
      (std::filesystem::exists(output, ec) && std::filesystem::equivalent(input, output, ec))) {
    throw ValidationError("input and output paths must be distinct: \"" + input + "\"");
  }
}

std::vector<std::string> read_id_list(const std::string& path) {
  const std::string text = io::read_text_file(path);
  std::vector<std::string> ids;
  std::istringstream stream(text);
  std::string line;
  while (std::getline(stream, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) {
      line.pop_back();
    }
    std::size_t start = 0;
    while (start < line.size() && (line[start] == ' ' || line[start] == '\t')) {
      ++start;
    }
    line = line.substr(start);
    if (!line.empty() && line[0] != '#') {
      ids.push_back(line);
    }
  }
  return ids;
}

RecoveredScorePolicy parse_recovered_score(const std::string& text) {
  if (text == "last_matched") {
    return RecoveredScorePolicy::last_matched();
  }
  if (text.rfind("fixed:", 0) == 0) {
    double value = -1.0;
    try {
      value = std::stod(text.substr(6));
    } catch (const std::exception&) {
      throw ValidationError("--recovered-score must be \"last_matched\" or \"fixed:<value>\"");
    }
    if (!(value >= 0.0 && value <= 1.0)) {
      throw ValidationError("--recovered-score fixed value must be in [0,1]");
    }
    return RecoveredScorePolicy::fixed(value);
  }
  throw ValidationError("--recovered-score must be \"last_matched\" or \"fixed:<value>\"");
}

// ---------------------------------------------------------------------------
// Shared option blocks.
// ---------------------------------------------------------------------------

struct FusionFlags {
  double iou_threshold = 0.5;
  int min_sources = 2;
  unsigned threads = 1;

  void attach(CLI::App* sub, bool with_min_sources = true) {
    sub->add_option("--iou-threshold", iou_threshold,
                    "IoU threshold for clustering / suppression")
        ->check(CLI::Range(1e-9, 1.0));
    if (with_min_sources) {
      sub->add_option("--min-sources", min_sources,
                      "discard clusters with fewer source detectors");
    }
    sub->add_option("--threads", threads, "worker threads (results are identical for any value)");
  }
};

struct TrainFlags {
  double learning_rate = 1e-5;
  double val_fraction = 0.30;
  int patience = 50;
  int max_epochs = 20000;
  std::string rule = "normalized";

  void attach(CLI::App* sub) {
    sub->add_option("--learning-rate", learning_rate, "SGD learning rate");
    sub->add_option("--val-fraction", val_fraction, "validation share of the pairs");
    sub->add_option("--patience", patience, "epochs without validation improvement");
    sub->add_option("--max-epochs", max_epochs, "hard epoch cap");
    sub->add_option("--rule", rule, "prediction rule: normalized or linear")
        ->check(CLI::IsMember({"normalized", "linear"}));
  }

  TrainConfig to_config(std::uint64_t seed) const {
    TrainConfig config;
    config.learning_rate = learning_rate;
    config.val_fraction = val_fraction;
    config.patience = patience;
    config.max_epochs = max_epochs;
    config.rng_seed = seed;
    config.prediction_rule = coordinate_rule_from_string(rule);
    return config;
  }
};

struct RefineFlags {
  double match_iou = 0.5;
  double young_match_iou = 0.4;
  int young_age_frames = 3;
  int min_matched_frames = 5;
  int max_miss_young = 5;
  int max_miss = 50;
  int min_track_length = 5;
  std::string recovered_score = "last_matched";

  void attach(CLI::App* sub) {
    sub->add_option("--match-iou", match_iou, "tracklet/detection match threshold");
    sub->add_option("--young-match-iou", young_match_iou, "threshold for young tracklets");
    sub->add_option("--young-age-frames", young_age_frames, "age limit for the young threshold");
    sub->add_option("--min-matched-frames", min_matched_frames,
                    "rule 1: matched-frame count at or below which a tracklet is fragile");
    sub->add_option("--max-miss-young", max_miss_young, "rule 1: miss limit for fragile tracklets");
    sub->add_option("--max-miss", max_miss, "rule 2: miss limit for any tracklet");
    sub->add_option("--min-track-length", min_track_length,
                    "stage 2: sequences spanning fewer frames are deleted");
    sub->add_option("--recovered-score", recovered_score,
                    "score of recovered boxes: last_matched or fixed:<value>");
  }

  RefineConfig to_config() const {
    RefineConfig config;
    config.match_iou = match_iou;
    config.young_match_iou = young_match_iou;
    config.young_age_frames = young_age_frames;
    config.min_matched_frames = min_matched_frames;
    config.max_miss_young = max_miss_young;
    config.max_miss = max_miss;
    config.min_track_length = min_track_length;
    config.recovered_score = parse_recovered_score(recovered_score);
    return config;
  }
};

struct EvalFlags {
  std::vector<double> iou_thresholds{0.5, 0.75, 0.85};
  double score_floor = 0.05;

  void attach(CLI::App* sub) {
    sub->add_option("--iou-thresholds", iou_thresholds, "IoU thresholds to report");
    sub->add_option("--score-floor", score_floor, "discard detections scored below this");
  }

  EvalConfig to_config() const {
    EvalConfig config;
    config.iou_thresholds = iou_thresholds;
    config.score_floor = score_floor;
    return config;
  }
};

// ---------------------------------------------------------------------------
// Subcommand handlers.
// ---------------------------------------------------------------------------

void run_fuse_nms(const std::string& in, const std::string& out, const FusionFlags& flags) {
  require_distinct(in, out);
  const DatasetBundle bundle = load_bundle(in);
  const auto per_image = group_detections_by_image(bundle);
  const NmsConfig config{flags.iou_threshold};

  std::vector<std::vector<Detection>> kept(per_image.size());
  parallel_for(per_image.size(), flags.threads,
               [&](std::size_t i) { kept[i] = nms_fuse(per_image[i], config); });

  DatasetBundle result = bundle;
  result.detections.clear();
  for (const auto& dets : kept) {
    result.detections.insert(result.detections.end(), dets.begin(), dets.end());
  }
  save_bundle(result, out);
  std::cout << "fuse-nms: " << bundle.detections.size() << " -> " << result.detections.size()
            << " detections, wrote " << out << "\n";
}

void run_train(const std::string& in, const std::string& train_ids_path,
               const std::string& weights_out, const std::string& report_out,
               const FusionFlags& fusion, const TrainFlags& train, std::uint64_t seed) {
  require_distinct(in, weights_out);
  const DatasetBundle bundle = load_bundle(in);
  const auto ids = read_id_list(train_ids_path);
  if (ids.empty()) {
    throw ValidationError("train: id list \"" + train_ids_path + "\" is empty");
  }
  const auto pairs = build_pairs(bundle, ids, fusion.iou_threshold);
  if (pairs.empty()) {
    throw ValidationError("train: no detection/ground-truth pairs found on the listed images");
  }
  const TrainReport report = train_weights(pairs, train.to_config(seed));

  WeightsFile file;
  file.detector_names = bundle.detector_names;
  file.weights = report.weights;
  file.coordinate_rule = coordinate_rule_from_string(train.rule);
  save_weights(file, weights_out);
  if (!report_out.empty()) {
    save_train_report(report, report_out);
  } else {
    std::cout << train_report_to_json(report);
  }
  std::cout << "train: " << pairs.size() << " pairs, " << report.epochs
            << " epochs, best validation MSE " << io::format_number_exact(report.best_val_mse)
            << ", wrote " << weights_out << "\n";
}

void run_fuse(const std::string& in, const std::string& weights_path, const std::string& out,
              const FusionFlags& flags) {
  require_distinct(in, out);
  const DatasetBundle bundle = load_bundle(in);
  const WeightsFile weights = load_weights(weights_path);
  if (weights.detector_names != bundle.detector_names) {
    throw ValidationError("fuse: weights file detector_names do not match the bundle");
  }

  FusionConfig config;
  config.iou_threshold = flags.iou_threshold;
  config.min_sources = flags.min_sources;
  config.coordinate_rule = weights.coordinate_rule;

  const auto per_image = group_detections_by_image(bundle);
  std::vector<std::vector<Detection>> fused(per_image.size());
  parallel_for(per_image.size(), flags.threads, [&](std::size_t i) {
    fused[i] = ensemble_fuse(per_image[i], weights.weights, config);
  });

  DatasetBundle result = bundle;
  result.detector_names.push_back("ensemble");
  result.detections.clear();
  for (const auto& dets : fused) {
    result.detections.insert(result.detections.end(), dets.begin(), dets.end());
  }
  save_bundle(result, out);
  std::cout << "fuse: " << bundle.detections.size() << " -> " << result.detections.size()
            << " detections, wrote " << out << "\n";
}

void run_refine(const std::string& in, const std::string& out, const RefineFlags& flags) {
  require_distinct(in, out);
  const RefineConfig config = flags.to_config();
  const DatasetBundle bundle = load_bundle(in);
  const auto frames = frames_from_bundle(bundle);
  const auto refined = refine_video(frames, config, default_box_tracker());

  DatasetBundle result = bundle;
  result.detections = flatten_frames(refined);
  save_bundle(result, out);
  std::cout << "refine: " << bundle.detections.size() << " -> " << result.detections.size()
            << " detections, wrote " << out << "\n";
}

void run_eval(const std::string& in, const std::string& gt_path, const std::string& report_out,
              const std::string& table_out, const EvalFlags& flags) {
  const DatasetBundle bundle = load_bundle(in);
  const DatasetBundle gt_bundle = gt_path.empty() || gt_path == in ? bundle : load_bundle(gt_path);
  if (gt_bundle.ground_truth.empty()) {
    throw ValidationError("eval: ground-truth bundle has no ground_truth records");
  }
  const EvalReport report = evaluate(bundle.detections, gt_bundle.ground_truth, flags.to_config());
  const auto& class_names =
      gt_bundle.class_names.empty() ? bundle.class_names : gt_bundle.class_names;

  if (!report_out.empty()) {
    io::write_text_file_atomic(report_out, report_to_json(report, class_names));
  }
  const std::string table = report_to_table(report, class_names);
  if (!table_out.empty()) {
    io::write_text_file_atomic(table_out, table);
  }
  std::cout << table;
}

void run_cv_image(const std::string& in, const std::string& report_out,
                  const std::string& table_out, const CvImageConfig& cv,
                  const FusionFlags& fusion, const TrainFlags& train, const EvalFlags& eval,
                  std::uint64_t seed) {
  const DatasetBundle bundle = load_bundle(in);
  PipelineConfig pipeline;
  pipeline.fusion.iou_threshold = fusion.iou_threshold;
  pipeline.fusion.min_sources = fusion.min_sources;
  pipeline.fusion.coordinate_rule = coordinate_rule_from_string(train.rule);
  pipeline.train = train.to_config(seed);
  pipeline.eval = eval.to_config();
  pipeline.seed = seed;
  pipeline.threads = fusion.threads;

  const CvReport report = cv_image(bundle, cv, pipeline);
  if (!report_out.empty()) {
    io::write_text_file_atomic(report_out, cv_report_to_json(report, bundle.class_names));
  }
  const std::string table = cv_report_to_table(report, bundle.class_names);
  if (!table_out.empty()) {
    io::write_text_file_atomic(table_out, table);
  }
  std::cout << table;
}

void run_cv_video(const std::string& in, const std::string& report_out,
                  const std::string& table_out, const CvVideoConfig& cv,
                  const FusionFlags& fusion, const TrainFlags& train,
                  const RefineFlags& refine, const EvalFlags& eval, std::uint64_t seed) {
  const RefineConfig refine_config = refine.to_config();
  const DatasetBundle bundle = load_bundle(in);
  PipelineConfig pipeline;
  pipeline.fusion.iou_threshold = fusion.iou_threshold;
  pipeline.fusion.min_sources = fusion.min_sources;
  pipeline.fusion.coordinate_rule = coordinate_rule_from_string(train.rule);
  pipeline.train = train.to_config(seed);
  pipeline.refine = refine_config;
  pipeline.eval = eval.to_config();
  pipeline.seed = seed;
  pipeline.threads = fusion.threads;

  const CvReport report = cv_video(bundle, cv, pipeline);
  if (!report_out.empty()) {
    io::write_text_file_atomic(report_out, cv_report_to_json(report, bundle.class_names));
  }
  const std::string table = cv_report_to_table(report, bundle.class_names);
  if (!table_out.empty()) {
    io::write_text_file_atomic(table_out, table);
  }
  std::cout << table;
}

void run_synth(const std::string& gt_path, const std::string& profiles_path,
               std::uint64_t seed, const std::string& out) {
  require_distinct(gt_path, out);
  const DatasetBundle gt_bundle = load_bundle(gt_path);
  const auto profiles = load_profiles(profiles_path);
  const DatasetBundle bundle = generate(gt_bundle, profiles, seed);
  save_bundle(bundle, out);
  std::cout << "synth: " << profiles.size() << " detectors, " << bundle.detections.size()
            << " detections, wrote " << out << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"detfuse: detector-ensemble fusion, weight learning, video refinement and MAP evaluation"};
  app.require_subcommand(1);

  // fuse-nms ------------------------------------------------------------------
  auto* fuse_nms = app.add_subcommand("fuse-nms", "pool all detectors and apply class-wise NMS");
  auto fuse_nms_in = std::make_shared<std::string>();
  auto fuse_nms_out = std::make_shared<std::string>();
  auto fuse_nms_flags = std::make_shared<FusionFlags>();
  fuse_nms->add_option("--in", *fuse_nms_in, "input bundle")->required();
  fuse_nms->add_option("--out", *fuse_nms_out, "output bundle")->required();
  fuse_nms_flags->attach(fuse_nms, /*with_min_sources=*/false);
  add_config_and_callback(fuse_nms,
                          [=] { run_fuse_nms(*fuse_nms_in, *fuse_nms_out, *fuse_nms_flags); });

  // train ---------------------------------------------------------------------
  auto* train = app.add_subcommand("train", "learn per-detector weights from annotated images");
  auto train_in = std::make_shared<std::string>();
  auto train_ids = std::make_shared<std::string>();
  auto train_weights_out = std::make_shared<std::string>();
  auto train_report_out = std::make_shared<std::string>();
  auto train_fusion = std::make_shared<FusionFlags>();
  auto train_flags = std::make_shared<TrainFlags>();
  auto train_seed = std::make_shared<std::uint64_t>(0);
  train->add_option("--in", *train_in, "input bundle (detections + ground truth)")->required();
  train->add_option("--train-ids", *train_ids, "file with one training image_id per line")
      ->required();
  train->add_option("--weights-out", *train_weights_out, "weights JSON output")->required();
  train->add_option("--report-out", *train_report_out,
                    "training report JSON output (stdout when omitted)");
  train->add_option("--iou-threshold", train_fusion->iou_threshold,
                    "IoU threshold for pair building");
  train->add_option("--seed", *train_seed, "seed for the split and the SGD order");
  train_flags->attach(train);
  add_config_and_callback(train, [=] {
    run_train(*train_in, *train_ids, *train_weights_out, *train_report_out, *train_fusion,
              *train_flags, *train_seed);
  });

  // fuse ----------------------------------------------------------------------
  auto* fuse = app.add_subcommand("fuse", "cluster per image and fuse with learned weights");
  auto fuse_in = std::make_shared<std::string>();
  auto fuse_weights = std::make_shared<std::string>();
  auto fuse_out = std::make_shared<std::string>();
  auto fuse_flags = std::make_shared<FusionFlags>();
  fuse->add_option("--in", *fuse_in, "input bundle")->required();
  fuse->add_option("--weights", *fuse_weights, "weights JSON from `train`")->required();
  fuse->add_option("--out", *fuse_out, "output bundle")->required();
  fuse_flags->attach(fuse);
  add_config_and_callback(fuse,
                          [=] { run_fuse(*fuse_in, *fuse_weights, *fuse_out, *fuse_flags); });

  // refine --------------------------------------------------------------------
  auto* refine = app.add_subcommand("refine", "two-stage tracking refinement of a video bundle");
  auto refine_in = std::make_shared<std::string>();
  auto refine_out = std::make_shared<std::string>();
  auto refine_flags = std::make_shared<RefineFlags>();
  refine->add_option("--in", *refine_in, "fused video bundle")->required();
  refine->add_option("--out", *refine_out, "output bundle")->required();
  refine_flags->attach(refine);
  add_config_and_callback(refine,
                          [=] { run_refine(*refine_in, *refine_out, *refine_flags); });

  // eval ----------------------------------------------------------------------
  auto* eval = app.add_subcommand("eval", "PASCAL-VOC-2012-style MAP report");
  auto eval_in = std::make_shared<std::string>();
  auto eval_gt = std::make_shared<std::string>();
  auto eval_report = std::make_shared<std::string>();
  auto eval_table = std::make_shared<std::string>();
  auto eval_flags = std::make_shared<EvalFlags>();
  eval->add_option("--in", *eval_in, "bundle with the detections to score")->required();
  eval->add_option("--gt", *eval_gt, "bundle with the ground truth (defaults to --in)");
  eval->add_option("--report", *eval_report, "report JSON output");
  eval->add_option("--table", *eval_table, "plain-text table output");
  eval_flags->attach(eval);
  add_config_and_callback(eval, [=] {
    run_eval(*eval_in, *eval_gt, *eval_report, *eval_table, *eval_flags);
  });

  // cv-image ------------------------------------------------------------------
  auto* cv_image_cmd = app.add_subcommand("cv-image", "k-fold harness on an image bundle");
  auto cvi_in = std::make_shared<std::string>();
  auto cvi_report = std::make_shared<std::string>();
  auto cvi_table = std::make_shared<std::string>();
  auto cvi_config = std::make_shared<CvImageConfig>();
  auto cvi_fusion = std::make_shared<FusionFlags>();
  auto cvi_train = std::make_shared<TrainFlags>();
  auto cvi_eval = std::make_shared<EvalFlags>();
  auto cvi_seed = std::make_shared<std::uint64_t>(0);
  cv_image_cmd->add_option("--in", *cvi_in, "bundle with all detectors and ground truth")
      ->required();
  cv_image_cmd->add_option("--report", *cvi_report, "cross-validation report JSON output");
  cv_image_cmd->add_option("--table", *cvi_table, "plain-text table output");
  cv_image_cmd->add_option("--folds", cvi_config->folds, "number of folds");
  cv_image_cmd->add_option("--train-size", cvi_config->train_size, "training images per fold");
  cv_image_cmd->add_option("--seed", *cvi_seed, "seed for folds, split and SGD order");
  cvi_fusion->attach(cv_image_cmd);
  cvi_train->attach(cv_image_cmd);
  cvi_eval->attach(cv_image_cmd);
  add_config_and_callback(cv_image_cmd, [=] {
    run_cv_image(*cvi_in, *cvi_report, *cvi_table, *cvi_config, *cvi_fusion, *cvi_train,
                 *cvi_eval, *cvi_seed);
  });

  // cv-video ------------------------------------------------------------------
  auto* cv_video_cmd = app.add_subcommand("cv-video", "segmented harness on a video bundle");
  auto cvv_in = std::make_shared<std::string>();
  auto cvv_report = std::make_shared<std::string>();
  auto cvv_table = std::make_shared<std::string>();
  auto cvv_config = std::make_shared<CvVideoConfig>();
  auto cvv_fusion = std::make_shared<FusionFlags>();
  auto cvv_train = std::make_shared<TrainFlags>();
  auto cvv_refine = std::make_shared<RefineFlags>();
  auto cvv_eval = std::make_shared<EvalFlags>();
  auto cvv_seed = std::make_shared<std::uint64_t>(0);
  cv_video_cmd->add_option("--in", *cvv_in, "video bundle with all detectors and ground truth")
      ->required();
  cv_video_cmd->add_option("--report", *cvv_report, "cross-validation report JSON output");
  cv_video_cmd->add_option("--table", *cvv_table, "plain-text table output");
  cv_video_cmd->add_option("--segments", cvv_config->segments, "number of contiguous segments");
  cv_video_cmd->add_option("--train-tail", cvv_config->train_tail,
                           "training frames at the end of each segment");
  cv_video_cmd->add_option("--seed", *cvv_seed, "seed for the split and SGD order");
  cvv_fusion->attach(cv_video_cmd);
  cvv_train->attach(cv_video_cmd);
  cvv_refine->attach(cv_video_cmd);
  cvv_eval->attach(cv_video_cmd);
  add_config_and_callback(cv_video_cmd, [=] {
    run_cv_video(*cvv_in, *cvv_report, *cvv_table, *cvv_config, *cvv_fusion, *cvv_train,
                 *cvv_refine, *cvv_eval, *cvv_seed);
  });

  // synth ---------------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "simulate detector outputs over a ground-truth bundle");
  auto synth_gt = std::make_shared<std::string>();
  auto synth_profiles = std::make_shared<std::string>();
  auto synth_out = std::make_shared<std::string>();
  auto synth_seed = std::make_shared<std::uint64_t>(0);
  synth->add_option("--gt", *synth_gt, "ground-truth bundle")->required();
  synth->add_option("--profiles", *synth_profiles, "detector profiles JSON")->required();
  synth->add_option("--out", *synth_out, "output bundle")->required();
  synth->add_option("--seed", *synth_seed, "generation seed");
  add_config_and_callback(synth,
                          [=] { run_synth(*synth_gt, *synth_profiles, *synth_seed, *synth_out); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: validation: " << e.what() << "\n";
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "error: parse: " << e.what() << "\n";
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: validation: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "error: io: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "error: numeric: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
