#include "rlvr/geometry.hpp"

#include <algorithm>

namespace rlvr {

bool is_valid(const BoundingBox& b) {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  return in_unit(b.x_min) && in_unit(b.y_min) && in_unit(b.x_max) &&
         in_unit(b.y_max) && b.x_min <= b.x_max && b.y_min <= b.y_max;
}

double area(const BoundingBox& b) {
  return (b.x_max - b.x_min) * (b.y_max - b.y_min);
}

double intersection_area(const BoundingBox& a, const BoundingBox& b) {
  const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  const double uni = area(a) + area(b) - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::ostream& operator<<(std::ostream& os, const BoundingBox& b) {
  return os << '[' << b.x_min << ", " << b.y_min << ", " << b.x_max << ", "
            << b.y_max << ']';
}

}  // namespace rlvr
