#include "corrisk/geometry.hpp"

#include <cmath>

namespace corrisk::geometry {

CornerSet body_corners(const dynamics::VehicleSpec& spec) {
  const double hl = spec.length / 2.0;
  const double hw = spec.width / 2.0;
  return {Point{hl, hw}, Point{hl, -hw}, Point{-hl, hw}, Point{-hl, -hw}};
}

CornerSet global_corners(const dynamics::VehicleState& state,
                         const dynamics::VehicleSpec& spec) {
  const double c = std::cos(state.heading);
  const double s = std::sin(state.heading);
  CornerSet corners = body_corners(spec);
  for (Point& p : corners) {
    const double gx = state.x + p.x * c - p.y * s;
    const double gy = state.y + p.x * s + p.y * c;
    p = Point{gx, gy};
  }
  return corners;
}

}  // namespace corrisk::geometry
