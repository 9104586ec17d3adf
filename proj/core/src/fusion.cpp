#include "detfuse/fusion.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "detfuse/errors.hpp"

namespace detfuse {

using nlohmann::json;

namespace {
constexpr double kDenominatorFloor = 1e-9;
}

std::string to_string(CoordinateRule rule) {
  return rule == CoordinateRule::normalized ? "normalized" : "linear";
}

CoordinateRule coordinate_rule_from_string(const std::string& name) {
  if (name == "normalized") {
    return CoordinateRule::normalized;
  }
  if (name == "linear") {
    return CoordinateRule::linear;
  }
  throw ParseError("unknown coordinate_rule \"" + name + "\" (expected \"normalized\" or \"linear\")");
}

WeightVector WeightVector::uniform(int detector_count) {
  return WeightVector{std::vector<double>(static_cast<std::size_t>(detector_count),
                                          1.0 / static_cast<double>(detector_count))};
}

std::vector<Cluster> build_clusters(std::span<const Detection> detections,
                                    double iou_threshold) {
  for (std::size_t i = 1; i < detections.size(); ++i) {
    if (detections[i].image_id != detections[0].image_id) {
      throw ValidationError("build_clusters: detections span more than one image_id");
    }
  }

  // Seed order: descending score, ties by lower detector_id then input order.
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

  std::vector<bool> assigned(detections.size(), false);
  std::vector<Cluster> clusters;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const std::size_t seed_idx = order[k];
    if (assigned[seed_idx]) {
      continue;
    }
    const Detection& seed = detections[seed_idx];
    Cluster cluster;
    cluster.class_id = seed.class_id;
    cluster.seed_detector_id = seed.detector_id;
    cluster.members.emplace(seed.detector_id, seed);
    assigned[seed_idx] = true;

    // Best same-class candidate per detector: max IoU to the seed, ties by
    // higher score then input order.
    std::map<int, std::size_t> best;
    for (std::size_t j = 0; j < detections.size(); ++j) {
      if (assigned[j]) {
        continue;
      }
      const Detection& cand = detections[j];
      if (cand.class_id != seed.class_id || cand.detector_id == seed.detector_id) {
        continue;
      }
      const double overlap = iou(cand.box, seed.box);
      if (!(overlap > iou_threshold)) {
        continue;
      }
      const auto it = best.find(cand.detector_id);
      if (it == best.end()) {
        best.emplace(cand.detector_id, j);
        continue;
      }
      const Detection& incumbent = detections[it->second];
      const double incumbent_overlap = iou(incumbent.box, seed.box);
      if (overlap > incumbent_overlap ||
          (overlap == incumbent_overlap && cand.score > incumbent.score)) {
        it->second = j;
      }
    }
    for (const auto& [detector_id, j] : best) {
      cluster.members.emplace(detector_id, detections[j]);
      assigned[j] = true;
    }
    clusters.push_back(std::move(cluster));
  }
  return clusters;
}

Detection fuse_cluster(const Cluster& cluster, const WeightVector& weights,
                       CoordinateRule rule) {
  if (cluster.members.empty()) {
    throw ValidationError("fuse_cluster: empty cluster");
  }
  const int detector_count = weights.detector_count();
  for (const auto& [detector_id, member] : cluster.members) {
    if (detector_id < 0 || detector_id >= detector_count) {
      throw ValidationError("fuse_cluster: member detector_id " +
                            std::to_string(detector_id) + " not covered by weights (D=" +
                            std::to_string(detector_count) + ")");
    }
  }
  const Detection& first = cluster.members.begin()->second;

  // Absent detectors are zero-filled: score 0, box (0,0,0,0). They contribute
  // nothing to the sums below but the score denominator still runs over all D.
  double coord_num[4] = {0.0, 0.0, 0.0, 0.0};
  double coord_den = 0.0;
  double score_num = 0.0;
  double score_den = 0.0;
  for (int j = 0; j < detector_count; ++j) {
    const double wj = weights.w[static_cast<std::size_t>(j)];
    score_den += wj;
    const auto it = cluster.members.find(j);
    if (it == cluster.members.end()) {
      continue;
    }
    const Detection& member = it->second;
    const double sw = member.score * wj;
    coord_num[0] += sw * member.box.x1;
    coord_num[1] += sw * member.box.y1;
    coord_num[2] += sw * member.box.x2;
    coord_num[3] += sw * member.box.y2;
    coord_den += sw;
    score_num += wj * member.score;
  }

  Detection fused;
  fused.class_id = cluster.class_id;
  fused.image_id = first.image_id;
  fused.detector_id = ensemble_detector_id(detector_count);

  if (rule == CoordinateRule::normalized) {
    if (std::abs(coord_den) <= kDenominatorFloor) {
      throw NumericError("fuse_cluster: degenerate normalization denominator for cluster at image \"" +
                         first.image_id + "\", class " + std::to_string(cluster.class_id));
    }
    if (cluster.members.size() == 1) {
      // s*w*c / (s*w) is the identity; keep it exact.
      fused.box = first.box;
    } else {
      fused.box = BoundingBox{coord_num[0] / coord_den, coord_num[1] / coord_den,
                              coord_num[2] / coord_den, coord_num[3] / coord_den};
    }
  } else {
    fused.box = BoundingBox{coord_num[0], coord_num[1], coord_num[2], coord_num[3]};
  }

  if (std::abs(score_den) <= kDenominatorFloor) {
    throw NumericError("fuse_cluster: weight sum is zero, fused score undefined");
  }
  fused.score = score_num / score_den;
  return fused;
}

std::vector<Detection> ensemble_fuse(std::span<const Detection> detections,
                                     const WeightVector& weights,
                                     const FusionConfig& config) {
  if (config.min_sources < 1) {
    throw ValidationError("ensemble_fuse: min_sources must be >= 1");
  }
  if (config.min_sources > weights.detector_count()) {
    throw ValidationError("ensemble_fuse: min_sources exceeds detector count");
  }
  for (const auto& det : detections) {
    if (det.detector_id < 0 || det.detector_id >= weights.detector_count()) {
      throw ValidationError("ensemble_fuse: detection detector_id " +
                            std::to_string(det.detector_id) + " not covered by weights");
    }
  }

  std::vector<Detection> fused;
  for (const Cluster& cluster : build_clusters(detections, config.iou_threshold)) {
    if (cluster.source_count() < config.min_sources) {
      continue;
    }
    fused.push_back(fuse_cluster(cluster, weights, config.coordinate_rule));
  }
  std::stable_sort(fused.begin(), fused.end(), [](const Detection& a, const Detection& b) {
    return a.score > b.score;
  });
  return fused;
}

std::string weights_to_json(const WeightsFile& file) {
  if (file.weights.w.size() != file.detector_names.size()) {
    throw ValidationError("weights file: weight count does not match detector_names");
  }
  std::string out = "{\n  \"detector_names\": [";
  for (std::size_t i = 0; i < file.detector_names.size(); ++i) {
    if (i) {
      out += ", ";
    }
    out += '"';
    out += io::escape_json_string(file.detector_names[i]);
    out += '"';
  }
  out += "],\n  \"weights\": [";
  for (std::size_t i = 0; i < file.weights.w.size(); ++i) {
    if (i) {
      out += ", ";
    }
    out += io::format_number_exact(file.weights.w[i]);
  }
  out += "],\n  \"coordinate_rule\": \"";
  out += to_string(file.coordinate_rule);
  out += "\"\n}\n";
  return out;
}

WeightsFile weights_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed weights JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("detector_names") || !doc.contains("weights") ||
      !doc.contains("coordinate_rule")) {
    throw ParseError("weights file must contain detector_names, weights and coordinate_rule");
  }
  WeightsFile file;
  for (const auto& name : doc["detector_names"]) {
    if (!name.is_string()) {
      throw ParseError("weights file: detector_names must be strings");
    }
    file.detector_names.push_back(name.get<std::string>());
  }
  for (const auto& w : doc["weights"]) {
    if (!w.is_number()) {
      throw ParseError("weights file: weights must be numbers");
    }
    const double value = w.get<double>();
    if (!std::isfinite(value)) {
      throw ValidationError("weights file: non-finite weight");
    }
    file.weights.w.push_back(value);
  }
  if (!doc["coordinate_rule"].is_string()) {
    throw ParseError("weights file: coordinate_rule must be a string");
  }
  file.coordinate_rule = coordinate_rule_from_string(doc["coordinate_rule"].get<std::string>());
  if (file.weights.w.size() != file.detector_names.size()) {
    throw ValidationError("weights file: weight count does not match detector_names");
  }
  return file;
}

WeightsFile load_weights(const std::string& path) {
  return weights_from_json(io::read_text_file(path));
}

void save_weights(const WeightsFile& file, const std::string& path) {
  io::write_text_file_atomic(path, weights_to_json(file));
}

}  // namespace detfuse
