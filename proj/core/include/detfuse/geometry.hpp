#pragma once

#include <algorithm>
#include <cmath>

namespace detfuse {

/// Axis-aligned box in corner form: (x1, y1) top-left, (x2, y2) bottom-right,
/// with x1 <= x2 and y1 <= y2 for a valid box. Coordinates are continuous
/// pixel values. Zero-area boxes are allowed; the all-zero box doubles as the
/// "absent detector" sentinel in the training matrices.
struct BoundingBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }

  bool valid() const {
    return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) &&
           std::isfinite(y2) && x1 <= x2 && y1 <= y2;
  }

  bool is_zero() const { return x1 == 0.0 && y1 == 0.0 && x2 == 0.0 && y2 == 0.0; }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

inline double area(const BoundingBox& b) { return b.width() * b.height(); }

/// Intersection over union. Pairs with zero union area yield 0, so the
/// zero-area sentinel never matches anything.
inline double iou(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) {
    return 0.0;
  }
  const double inter = iw * ih;
  const double uni = area(a) + area(b) - inter;
  if (uni <= 0.0) {
    return 0.0;
  }
  return inter / uni;
}

}  // namespace detfuse
