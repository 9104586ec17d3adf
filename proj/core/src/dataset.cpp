#include "detfuse/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "detfuse/errors.hpp"

namespace detfuse {

using nlohmann::json;

const ImageRecord* DatasetBundle::find_image(const std::string& image_id) const {
  for (const auto& img : images) {
    if (img.image_id == image_id) {
      return &img;
    }
  }
  return nullptr;
}

BoundingBox from_xywh(double x, double y, double w, double h) {
  if (w < 0.0 || h < 0.0) {
    throw ValidationError("from_xywh: negative width or height (w=" +
                          io::format_number_exact(w) + ", h=" +
                          io::format_number_exact(h) + ")");
  }
  return BoundingBox{x, y, x + w, y + h};
}

namespace {

std::string record_tag(const char* array, std::size_t index) {
  return std::string(array) + "[" + std::to_string(index) + "]";
}

void check_box(const BoundingBox& box, const std::string& tag) {
  if (!(std::isfinite(box.x1) && std::isfinite(box.y1) && std::isfinite(box.x2) &&
        std::isfinite(box.y2))) {
    throw ValidationError(tag + ": non-finite bbox coordinate");
  }
  if (box.x1 > box.x2 || box.y1 > box.y2) {
    throw ValidationError(tag + ": bbox corners out of order (x1<=x2, y1<=y2 required)");
  }
}

}  // namespace

void validate_bundle(const DatasetBundle& bundle) {
  std::unordered_map<std::string, std::size_t> image_index;
  image_index.reserve(bundle.images.size());

  bool any_frame = false;
  bool all_frames = true;
  std::set<int> frame_indices;
  for (std::size_t i = 0; i < bundle.images.size(); ++i) {
    const auto& img = bundle.images[i];
    const std::string tag = record_tag("images", i);
    if (img.image_id.empty()) {
      throw ValidationError(tag + ": empty image_id");
    }
    if (img.width <= 0 || img.height <= 0) {
      throw ValidationError(tag + ": non-positive dimensions (image_id=\"" +
                            img.image_id + "\")");
    }
    if (!image_index.emplace(img.image_id, i).second) {
      throw ValidationError(tag + ": duplicate image_id \"" + img.image_id + "\"");
    }
    if (img.frame_index.has_value()) {
      any_frame = true;
      if (!frame_indices.insert(*img.frame_index).second) {
        throw ValidationError(tag + ": duplicate frame_index " +
                              std::to_string(*img.frame_index));
      }
    } else {
      all_frames = false;
    }
  }
  if (any_frame) {
    if (!all_frames) {
      throw ValidationError("images: frame_index must be present on all images or none");
    }
    if (!frame_indices.empty()) {
      const int lo = *frame_indices.begin();
      const int hi = *frame_indices.rbegin();
      if (hi - lo + 1 != static_cast<int>(frame_indices.size())) {
        throw ValidationError("images: frame_index values are not consecutive");
      }
    }
  }

  const int detector_count = bundle.detector_count();
  for (std::size_t i = 0; i < bundle.detections.size(); ++i) {
    const auto& det = bundle.detections[i];
    const std::string tag = record_tag("detections", i);
    check_box(det.box, tag);
    if (!(det.score >= 0.0 && det.score <= 1.0)) {
      throw ValidationError(tag + ": score " + io::format_number_exact(det.score) +
                            " out of range [0,1] (image_id=\"" + det.image_id + "\")");
    }
    if (det.detector_id < 0 || det.detector_id >= detector_count) {
      throw ValidationError(tag + ": detector_id " + std::to_string(det.detector_id) +
                            " out of range [0," + std::to_string(detector_count) + ")");
    }
    if (det.class_id < 0) {
      throw ValidationError(tag + ": negative class_id");
    }
    if (image_index.find(det.image_id) == image_index.end()) {
      throw ValidationError(tag + ": unknown image_id \"" + det.image_id + "\"");
    }
  }

  for (std::size_t i = 0; i < bundle.ground_truth.size(); ++i) {
    const auto& gt = bundle.ground_truth[i];
    const std::string tag = record_tag("ground_truth", i);
    check_box(gt.box, tag);
    if (area(gt.box) <= 0.0) {
      throw ValidationError(tag + ": ground truth box must have positive area (image_id=\"" +
                            gt.image_id + "\")");
    }
    if (gt.class_id < 0) {
      throw ValidationError(tag + ": negative class_id");
    }
    if (image_index.find(gt.image_id) == image_index.end()) {
      throw ValidationError(tag + ": unknown image_id \"" + gt.image_id + "\"");
    }
  }
}

namespace io {

std::string format_number(double value) {
  if (value == 0.0) {
    value = 0.0;  // normalize -0
  }
  char buf[352];
  std::snprintf(buf, sizeof buf, "%.6f", value);
  std::string s(buf);
  const auto dot = s.find('.');
  if (dot != std::string::npos) {
    std::size_t last = s.find_last_not_of('0');
    if (last == dot) {
      last -= 1;
    }
    s.erase(last + 1);
  }
  if (s == "-0") {
    s = "0";
  }
  return s;
}

std::string format_number_exact(double value) {
  if (value == 0.0) {
    value = 0.0;
  }
  char buf[64];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, value);
    if (std::stod(buf) == value) {
      break;
    }
  }
  return std::string(buf);
}

std::string escape_json_string(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 2);
  for (const char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\b': out += "\\b"; break;
      case '\f': out += "\\f"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open \"" + path + "\" for reading");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) {
    throw IoError("read failure on \"" + path + "\"");
  }
  return buf.str();
}

void write_text_file_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw IoError("cannot open \"" + tmp + "\" for writing");
    }
    out << text;
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("write failure on \"" + tmp + "\"");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename \"" + tmp + "\" to \"" + path + "\"");
  }
}

}  // namespace io

namespace {

void write_string_array(std::string& out, const std::vector<std::string>& values) {
  out += '[';
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) {
      out += ", ";
    }
    out += '"';
    out += io::escape_json_string(values[i]);
    out += '"';
  }
  out += ']';
}

void write_bbox(std::string& out, const BoundingBox& box) {
  out += '[';
  out += io::format_number(box.x1);
  out += ", ";
  out += io::format_number(box.y1);
  out += ", ";
  out += io::format_number(box.x2);
  out += ", ";
  out += io::format_number(box.y2);
  out += ']';
}

}  // namespace

std::string bundle_to_json(const DatasetBundle& bundle) {
  validate_bundle(bundle);

  // Canonical detection order; ties keep input order.
  std::vector<std::size_t> det_order(bundle.detections.size());
  for (std::size_t i = 0; i < det_order.size(); ++i) {
    det_order[i] = i;
  }
  std::stable_sort(det_order.begin(), det_order.end(), [&](std::size_t a, std::size_t b) {
    const auto& da = bundle.detections[a];
    const auto& db = bundle.detections[b];
    if (da.image_id != db.image_id) {
      return da.image_id < db.image_id;
    }
    if (da.detector_id != db.detector_id) {
      return da.detector_id < db.detector_id;
    }
    return da.score > db.score;
  });

  std::string out;
  out.reserve(256 + bundle.detections.size() * 96 + bundle.images.size() * 72 +
              bundle.ground_truth.size() * 72);
  out += "{\n";

  out += "  \"detector_names\": ";
  write_string_array(out, bundle.detector_names);
  out += ",\n";

  out += "  \"class_names\": ";
  write_string_array(out, bundle.class_names);
  out += ",\n";

  out += "  \"images\": [";
  for (std::size_t i = 0; i < bundle.images.size(); ++i) {
    const auto& img = bundle.images[i];
    out += i ? ",\n    " : "\n    ";
    out += "{\"image_id\": \"";
    out += io::escape_json_string(img.image_id);
    out += "\", \"width\": ";
    out += std::to_string(img.width);
    out += ", \"height\": ";
    out += std::to_string(img.height);
    out += ", \"frame_index\": ";
    out += img.frame_index ? std::to_string(*img.frame_index) : "null";
    out += '}';
  }
  out += bundle.images.empty() ? "],\n" : "\n  ],\n";

  out += "  \"detections\": [";
  for (std::size_t i = 0; i < det_order.size(); ++i) {
    const auto& det = bundle.detections[det_order[i]];
    out += i ? ",\n    " : "\n    ";
    out += "{\"image_id\": \"";
    out += io::escape_json_string(det.image_id);
    out += "\", \"detector_id\": ";
    out += std::to_string(det.detector_id);
    out += ", \"class_id\": ";
    out += std::to_string(det.class_id);
    out += ", \"score\": ";
    out += io::format_number(det.score);
    out += ", \"bbox\": ";
    write_bbox(out, det.box);
    if (det.recovered) {
      out += ", \"recovered\": true";
    }
    out += '}';
  }
  out += det_order.empty() ? "],\n" : "\n  ],\n";

  out += "  \"ground_truth\": [";
  for (std::size_t i = 0; i < bundle.ground_truth.size(); ++i) {
    const auto& gt = bundle.ground_truth[i];
    out += i ? ",\n    " : "\n    ";
    out += "{\"image_id\": \"";
    out += io::escape_json_string(gt.image_id);
    out += "\", \"class_id\": ";
    out += std::to_string(gt.class_id);
    out += ", \"bbox\": ";
    write_bbox(out, gt.box);
    out += '}';
  }
  out += bundle.ground_truth.empty() ? "]\n" : "\n  ]\n";

  out += "}\n";
  return out;
}

void save_bundle(const DatasetBundle& bundle, const std::string& path) {
  io::write_text_file_atomic(path, bundle_to_json(bundle));
}

namespace {

const json& require_key(const json& obj, const char* key, const std::string& tag) {
  const auto it = obj.find(key);
  if (it == obj.end()) {
    throw ParseError(tag + ": missing key \"" + key + "\"");
  }
  return *it;
}

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed,
                         const std::string& tag) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed) {
      if (it.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ParseError(tag + ": unknown key \"" + it.key() + "\"");
    }
  }
}

int read_int(const json& v, const char* key, const std::string& tag) {
  if (!v.is_number_integer()) {
    throw ParseError(tag + ": \"" + key + "\" must be an integer");
  }
  return v.get<int>();
}

double read_double(const json& v, const char* key, const std::string& tag) {
  if (!v.is_number()) {
    throw ParseError(tag + ": \"" + key + "\" must be a number");
  }
  return v.get<double>();
}

std::string read_string(const json& v, const char* key, const std::string& tag) {
  if (!v.is_string()) {
    throw ParseError(tag + ": \"" + key + "\" must be a string");
  }
  return v.get<std::string>();
}

BoundingBox read_bbox(const json& v, const std::string& tag) {
  if (!v.is_array() || v.size() != 4) {
    throw ParseError(tag + ": \"bbox\" must be an array of 4 numbers");
  }
  double c[4];
  for (std::size_t i = 0; i < 4; ++i) {
    if (!v[i].is_number()) {
      throw ParseError(tag + ": \"bbox\" must be an array of 4 numbers");
    }
    c[i] = v[i].get<double>();
  }
  return BoundingBox{c[0], c[1], c[2], c[3]};
}

std::vector<std::string> read_string_array(const json& v, const char* key) {
  if (!v.is_array()) {
    throw ParseError(std::string("\"") + key + "\" must be an array of strings");
  }
  std::vector<std::string> out;
  out.reserve(v.size());
  for (const auto& e : v) {
    if (!e.is_string()) {
      throw ParseError(std::string("\"") + key + "\" must be an array of strings");
    }
    out.push_back(e.get<std::string>());
  }
  return out;
}

}  // namespace

DatasetBundle bundle_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) {
    throw ParseError("top-level value must be an object");
  }
  reject_unknown_keys(doc, {"detector_names", "class_names", "images", "detections",
                            "ground_truth"},
                      "top-level");

  DatasetBundle bundle;
  bundle.detector_names = read_string_array(require_key(doc, "detector_names", "top-level"),
                                            "detector_names");
  bundle.class_names = read_string_array(require_key(doc, "class_names", "top-level"),
                                         "class_names");

  const json& images = require_key(doc, "images", "top-level");
  if (!images.is_array()) {
    throw ParseError("\"images\" must be an array");
  }
  bundle.images.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string tag = record_tag("images", i);
    const json& rec = images[i];
    if (!rec.is_object()) {
      throw ParseError(tag + ": must be an object");
    }
    reject_unknown_keys(rec, {"image_id", "width", "height", "frame_index"}, tag);
    ImageRecord img;
    img.image_id = read_string(require_key(rec, "image_id", tag), "image_id", tag);
    img.width = read_int(require_key(rec, "width", tag), "width", tag);
    img.height = read_int(require_key(rec, "height", tag), "height", tag);
    if (const auto it = rec.find("frame_index"); it != rec.end() && !it->is_null()) {
      img.frame_index = read_int(*it, "frame_index", tag);
    }
    bundle.images.push_back(std::move(img));
  }

  const json& detections = require_key(doc, "detections", "top-level");
  if (!detections.is_array()) {
    throw ParseError("\"detections\" must be an array");
  }
  bundle.detections.reserve(detections.size());
  for (std::size_t i = 0; i < detections.size(); ++i) {
    const std::string tag = record_tag("detections", i);
    const json& rec = detections[i];
    if (!rec.is_object()) {
      throw ParseError(tag + ": must be an object");
    }
    reject_unknown_keys(rec, {"image_id", "detector_id", "class_id", "score", "bbox",
                              "recovered"},
                        tag);
    Detection det;
    det.image_id = read_string(require_key(rec, "image_id", tag), "image_id", tag);
    det.detector_id = read_int(require_key(rec, "detector_id", tag), "detector_id", tag);
    det.class_id = read_int(require_key(rec, "class_id", tag), "class_id", tag);
    det.score = read_double(require_key(rec, "score", tag), "score", tag);
    det.box = read_bbox(require_key(rec, "bbox", tag), tag);
    if (const auto it = rec.find("recovered"); it != rec.end()) {
      if (!it->is_boolean()) {
        throw ParseError(tag + ": \"recovered\" must be a boolean");
      }
      det.recovered = it->get<bool>();
    }
    bundle.detections.push_back(std::move(det));
  }

  const json& ground_truth = require_key(doc, "ground_truth", "top-level");
  if (!ground_truth.is_array()) {
    throw ParseError("\"ground_truth\" must be an array");
  }
  bundle.ground_truth.reserve(ground_truth.size());
  for (std::size_t i = 0; i < ground_truth.size(); ++i) {
    const std::string tag = record_tag("ground_truth", i);
    const json& rec = ground_truth[i];
    if (!rec.is_object()) {
      throw ParseError(tag + ": must be an object");
    }
    reject_unknown_keys(rec, {"image_id", "class_id", "bbox"}, tag);
    GroundTruthBox gt;
    gt.image_id = read_string(require_key(rec, "image_id", tag), "image_id", tag);
    gt.class_id = read_int(require_key(rec, "class_id", tag), "class_id", tag);
    gt.box = read_bbox(require_key(rec, "bbox", tag), tag);
    bundle.ground_truth.push_back(std::move(gt));
  }

  validate_bundle(bundle);
  return bundle;
}

DatasetBundle load_bundle(const std::string& path) {
  return bundle_from_json(io::read_text_file(path));
}

std::vector<std::vector<Detection>> group_detections_by_image(const DatasetBundle& bundle) {
  std::unordered_map<std::string, std::size_t> index;
  index.reserve(bundle.images.size());
  for (std::size_t i = 0; i < bundle.images.size(); ++i) {
    index.emplace(bundle.images[i].image_id, i);
  }
  std::vector<std::vector<Detection>> grouped(bundle.images.size());
  for (const auto& det : bundle.detections) {
    grouped[index.at(det.image_id)].push_back(det);
  }
  return grouped;
}

std::vector<std::vector<GroundTruthBox>> group_ground_truth_by_image(const DatasetBundle& bundle) {
  std::unordered_map<std::string, std::size_t> index;
  index.reserve(bundle.images.size());
  for (std::size_t i = 0; i < bundle.images.size(); ++i) {
    index.emplace(bundle.images[i].image_id, i);
  }
  std::vector<std::vector<GroundTruthBox>> grouped(bundle.images.size());
  for (const auto& gt : bundle.ground_truth) {
    grouped[index.at(gt.image_id)].push_back(gt);
  }
  return grouped;
}

}  // namespace detfuse
