#pragma once

#include <ostream>

namespace rlvr {

/// Axis-aligned box in normalized image coordinates.
///
/// Coordinates are fractions of the image side, so a valid box satisfies
/// 0 <= x_min <= x_max <= 1 and likewise for y. Degenerate boxes (zero
/// width or height) are valid and have zero area.
struct BoundingBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  bool operator==(const BoundingBox&) const = default;
};

/// True when the box satisfies the ordering and [0, 1] range invariants.
bool is_valid(const BoundingBox& b);

double area(const BoundingBox& b);

double intersection_area(const BoundingBox& a, const BoundingBox& b);

/// Intersection over union. Returns 0 when the union is empty, so two
/// degenerate boxes never overlap, not even with themselves.
double iou(const BoundingBox& a, const BoundingBox& b);

std::ostream& operator<<(std::ostream& os, const BoundingBox& b);

}  // namespace rlvr
