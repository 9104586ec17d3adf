#include "detfuse/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "detfuse/errors.hpp"
#include "detfuse/random.hpp"

namespace detfuse {

using nlohmann::json;

namespace {

constexpr double kScoreBase = 0.8;
constexpr double kScoreJitterSlope = 2.0;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

std::string zero_padded(const char* prefix, int value, int width) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%0*d", prefix, width, value);
  return std::string(buf);
}

}  // namespace

DatasetBundle generate(const DatasetBundle& ground_truth,
                       std::span<const DetectorProfile> profiles,
                       std::uint64_t seed) {
  if (profiles.empty()) {
    throw ValidationError("generate: at least one detector profile required");
  }
  for (std::size_t p = 0; p < profiles.size(); ++p) {
    const auto& profile = profiles[p];
    if (profile.miss_prob < 0.0 || profile.miss_prob > 1.0 || profile.fp_rate < 0.0 ||
        profile.jitter_sigma < 0.0 || profile.score_noise_sigma < 0.0) {
      throw ValidationError("generate: profiles[" + std::to_string(p) +
                            "] has out-of-range parameters");
    }
  }
  validate_bundle(ground_truth);

  DatasetBundle out;
  out.class_names = ground_truth.class_names;
  out.images = ground_truth.images;
  out.ground_truth = ground_truth.ground_truth;
  for (std::size_t p = 0; p < profiles.size(); ++p) {
    out.detector_names.push_back(zero_padded("detector_", static_cast<int>(p), 1));
  }
  const int class_count = std::max<int>(1, static_cast<int>(ground_truth.class_names.size()));

  const auto gt_per_image = group_ground_truth_by_image(ground_truth);
  for (std::size_t i = 0; i < ground_truth.images.size(); ++i) {
    const ImageRecord& image = ground_truth.images[i];
    const double width = static_cast<double>(image.width);
    const double height = static_cast<double>(image.height);
    for (std::size_t p = 0; p < profiles.size(); ++p) {
      const DetectorProfile& profile = profiles[p];
      Rng rng(substream_seed(seed, i, p));

      for (const GroundTruthBox& gt : gt_per_image[i]) {
        if (!(rng.uniform01() >= profile.miss_prob)) {
          continue;
        }
        const double bw = gt.box.width();
        const double bh = gt.box.height();
        const double dx1 = rng.normal(0.0, profile.jitter_sigma) * bw;
        const double dy1 = rng.normal(0.0, profile.jitter_sigma) * bh;
        const double dx2 = rng.normal(0.0, profile.jitter_sigma) * bw;
        const double dy2 = rng.normal(0.0, profile.jitter_sigma) * bh;
        const double score_noise = rng.normal(0.0, profile.score_noise_sigma);

        Detection det;
        det.image_id = image.image_id;
        det.class_id = gt.class_id;
        det.detector_id = static_cast<int>(p);
        double x1 = gt.box.x1 + dx1;
        double x2 = gt.box.x2 + dx2;
        double y1 = gt.box.y1 + dy1;
        double y2 = gt.box.y2 + dy2;
        if (x1 > x2) {
          std::swap(x1, x2);
        }
        if (y1 > y2) {
          std::swap(y1, y2);
        }
        det.box = BoundingBox{x1, y1, x2, y2};
        // Realized jitter, relative to the box size: the larger the miss,
        // the lower the score.
        const double realized = (std::abs(dx1) / bw + std::abs(dy1) / bh +
                                 std::abs(dx2) / bw + std::abs(dy2) / bh) / 4.0;
        det.score = clamp01(kScoreBase - kScoreJitterSlope * realized +
                            profile.score_bias + score_noise);
        out.detections.push_back(std::move(det));
      }

      const int false_positives = rng.poisson(profile.fp_rate);
      for (int k = 0; k < false_positives; ++k) {
        const double cx = rng.uniform(0.0, width);
        const double cy = rng.uniform(0.0, height);
        const double bw = rng.uniform(0.05, 0.25) * width;
        const double bh = rng.uniform(0.05, 0.25) * height;
        Detection det;
        det.image_id = image.image_id;
        det.class_id = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(class_count)));
        det.detector_id = static_cast<int>(p);
        det.box = BoundingBox{std::max(0.0, cx - bw / 2.0), std::max(0.0, cy - bh / 2.0),
                              std::min(width, cx + bw / 2.0), std::min(height, cy + bh / 2.0)};
        det.score = rng.uniform(0.05, 0.6);
        out.detections.push_back(std::move(det));
      }
    }
  }
  return out;
}

std::vector<DetectorProfile> profiles_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed profiles JSON: ") + e.what());
  }
  if (!doc.is_array()) {
    throw ParseError("profiles file must be a JSON array");
  }
  std::vector<DetectorProfile> profiles;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& rec = doc[i];
    const std::string tag = "profiles[" + std::to_string(i) + "]";
    if (!rec.is_object()) {
      throw ParseError(tag + ": must be an object");
    }
    DetectorProfile profile;
    const auto read = [&](const char* key) {
      const auto it = rec.find(key);
      if (it == rec.end() || !it->is_number()) {
        throw ParseError(tag + ": missing numeric key \"" + key + "\"");
      }
      return it->get<double>();
    };
    profile.jitter_sigma = read("jitter_sigma");
    profile.miss_prob = read("miss_prob");
    profile.fp_rate = read("fp_rate");
    profile.score_bias = read("score_bias");
    profile.score_noise_sigma = read("score_noise_sigma");
    profiles.push_back(profile);
  }
  return profiles;
}

std::vector<DetectorProfile> load_profiles(const std::string& path) {
  return profiles_from_json(io::read_text_file(path));
}

std::string profiles_to_json(std::span<const DetectorProfile> profiles) {
  std::string out = "[";
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const auto& p = profiles[i];
    out += i ? ",\n  " : "\n  ";
    out += "{\"jitter_sigma\": " + io::format_number(p.jitter_sigma);
    out += ", \"miss_prob\": " + io::format_number(p.miss_prob);
    out += ", \"fp_rate\": " + io::format_number(p.fp_rate);
    out += ", \"score_bias\": " + io::format_number(p.score_bias);
    out += ", \"score_noise_sigma\": " + io::format_number(p.score_noise_sigma) + "}";
  }
  out += profiles.empty() ? "]\n" : "\n]\n";
  return out;
}

DatasetBundle make_image_ground_truth(const ImageGroundTruthSpec& spec, std::uint64_t seed) {
  if (spec.image_count < 1 || spec.class_count < 1 || spec.min_objects < 0 ||
      spec.max_objects < spec.min_objects || spec.min_size <= 0.0 ||
      spec.max_size < spec.min_size) {
    throw ValidationError("make_image_ground_truth: inconsistent spec");
  }
  DatasetBundle bundle;
  for (int c = 0; c < spec.class_count; ++c) {
    bundle.class_names.push_back(zero_padded("class_", c, 1));
  }
  for (int i = 0; i < spec.image_count; ++i) {
    ImageRecord image;
    image.image_id = zero_padded("img_", i, 6);
    image.width = spec.width;
    image.height = spec.height;
    bundle.images.push_back(image);

    Rng rng(substream_seed(seed, static_cast<std::uint64_t>(i), 0xffffULL));
    const int objects = rng.uniform_int(spec.min_objects, spec.max_objects);
    for (int k = 0; k < objects; ++k) {
      const double w = rng.uniform(spec.min_size, spec.max_size);
      const double h = rng.uniform(spec.min_size, spec.max_size);
      const double x = rng.uniform(0.0, std::max(1.0, spec.width - w));
      const double y = rng.uniform(0.0, std::max(1.0, spec.height - h));
      GroundTruthBox gt;
      gt.image_id = image.image_id;
      gt.class_id = rng.uniform_int(0, spec.class_count - 1);
      gt.box = BoundingBox{x, y, x + w, y + h};
      bundle.ground_truth.push_back(std::move(gt));
    }
  }
  return bundle;
}

DatasetBundle make_video_ground_truth(const VideoGroundTruthSpec& spec, std::uint64_t seed) {
  if (spec.frame_count < 1 || spec.object_count < 1 || spec.class_count < 1 ||
      spec.min_size <= 0.0 || spec.max_size < spec.min_size) {
    throw ValidationError("make_video_ground_truth: inconsistent spec");
  }
  DatasetBundle bundle;
  for (int c = 0; c < spec.class_count; ++c) {
    bundle.class_names.push_back(zero_padded("class_", c, 1));
  }

  struct Body {
    double x, y, w, h, vx, vy;
    int class_id;
  };
  Rng rng(substream_seed(seed, 0x766964ULL));  // "vid"
  std::vector<Body> bodies;
  for (int k = 0; k < spec.object_count; ++k) {
    Body body;
    body.w = rng.uniform(spec.min_size, spec.max_size);
    body.h = rng.uniform(spec.min_size, spec.max_size);
    body.x = rng.uniform(0.0, std::max(1.0, spec.width - body.w));
    body.y = rng.uniform(0.0, std::max(1.0, spec.height - body.h));
    body.vx = rng.uniform(-spec.max_speed, spec.max_speed);
    body.vy = rng.uniform(-spec.max_speed, spec.max_speed);
    body.class_id = rng.uniform_int(0, spec.class_count - 1);
    bodies.push_back(body);
  }

  for (int f = 0; f < spec.frame_count; ++f) {
    ImageRecord image;
    image.image_id = zero_padded("frame_", f, 6);
    image.width = spec.width;
    image.height = spec.height;
    image.frame_index = f;
    bundle.images.push_back(image);

    for (Body& body : bodies) {
      GroundTruthBox gt;
      gt.image_id = image.image_id;
      gt.class_id = body.class_id;
      gt.box = BoundingBox{body.x, body.y, body.x + body.w, body.y + body.h};
      bundle.ground_truth.push_back(std::move(gt));

      body.x += body.vx;
      body.y += body.vy;
      if (body.x < 0.0) {
        body.x = -body.x;
        body.vx = -body.vx;
      }
      if (body.x + body.w > spec.width) {
        body.x = 2.0 * (spec.width - body.w) - body.x;
        body.vx = -body.vx;
      }
      if (body.y < 0.0) {
        body.y = -body.y;
        body.vy = -body.vy;
      }
      if (body.y + body.h > spec.height) {
        body.y = 2.0 * (spec.height - body.h) - body.y;
        body.vy = -body.vy;
      }
    }
  }
  return bundle;
}

}  // namespace detfuse
