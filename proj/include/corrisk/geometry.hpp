#pragma once

#include <array>
#include <cmath>

#include "corrisk/dynamics.hpp"

namespace corrisk::geometry {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// Rigid-rectangle footprint corners, ordered front-left, front-right,
// rear-left, rear-right. Public corner indices are 1-based (1..4).
using CornerSet = std::array<Point, 4>;

// Corners in the body frame: (+-length/2, +-width/2) about the center.
CornerSet body_corners(const dynamics::VehicleSpec& spec);

// Body corners rotated by the heading and translated to the global center.
CornerSet global_corners(const dynamics::VehicleState& state,
                         const dynamics::VehicleSpec& spec);

inline double distance(const Point& a, const Point& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace corrisk::geometry
