#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "corrisk/geometry.hpp"
#include "corrisk/rng.hpp"
#include "doctest.h"

using namespace corrisk;
using namespace corrisk::geometry;

TEST_CASE("body_corners orders front-left, front-right, rear-left, rear-right") {
  dynamics::VehicleSpec spec{2.7, 4.0, 2.0};
  auto c = body_corners(spec);
  CHECK(c[0].x == 2.0);
  CHECK(c[0].y == 1.0);
  CHECK(c[1].x == 2.0);
  CHECK(c[1].y == -1.0);
  CHECK(c[2].x == -2.0);
  CHECK(c[2].y == 1.0);
  CHECK(c[3].x == -2.0);
  CHECK(c[3].y == -1.0);

  SUBCASE("square footprint") {
    auto sq = body_corners({1.5, 2.0, 2.0});
    for (const auto& p : sq) {
      CHECK(std::abs(p.x) == 1.0);
      CHECK(std::abs(p.y) == 1.0);
    }
  }

  SUBCASE("typical sedan dimensions") {
    auto s = body_corners({3.0, 5.1, 2.04});
    CHECK(s[0].x == doctest::Approx(2.55));
    CHECK(s[0].y == doctest::Approx(1.02));
    CHECK(s[3].x == doctest::Approx(-2.55));
    CHECK(s[3].y == doctest::Approx(-1.02));
  }
}

TEST_CASE("global_corners rotates then translates") {
  dynamics::VehicleSpec spec{2.7, 4.0, 2.0};

  SUBCASE("identity at zero heading and origin") {
    auto c = global_corners({0, 0, 0, 0}, spec);
    auto b = body_corners(spec);
    for (int j = 0; j < 4; ++j) {
      CHECK(c[j].x == b[j].x);
      CHECK(c[j].y == b[j].y);
    }
  }

  SUBCASE("quarter turn sends front-left to (-1, 2)") {
    auto c = global_corners({0, 0, M_PI / 2, 0}, spec);
    CHECK(c[0].x == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(c[0].y == doctest::Approx(2.0).epsilon(1e-12));
  }

  SUBCASE("matches direct scalar expansion") {
    // Oracle: x + xi cos(h) - eta sin(h), y + xi sin(h) + eta cos(h).
    const double h = 0.7, cx = 3.0, cy = -2.0;
    auto c = global_corners({cx, cy, h, 0}, spec);
    const double xi[4] = {2.0, 2.0, -2.0, -2.0};
    const double eta[4] = {1.0, -1.0, 1.0, -1.0};
    for (int j = 0; j < 4; ++j) {
      CHECK(c[j].x ==
            doctest::Approx(cx + xi[j] * std::cos(h) - eta[j] * std::sin(h))
                .epsilon(1e-12));
      CHECK(c[j].y ==
            doctest::Approx(cy + xi[j] * std::sin(h) + eta[j] * std::cos(h))
                .epsilon(1e-12));
    }
  }
}

TEST_CASE("corner set properties over random poses") {
  dynamics::VehicleSpec spec{2.7, 4.3, 1.8};
  const double diagonal = std::hypot(4.3, 1.8);
  Rng rng(7);

  for (int trial = 0; trial < 200; ++trial) {
    dynamics::VehicleState s{rng.uniform(-100, 100), rng.uniform(-100, 100),
                             rng.uniform(-10, 10), 0};
    auto c = global_corners(s, spec);

    // Center of the corners recovers the state position.
    const double mx = (c[0].x + c[1].x + c[2].x + c[3].x) / 4.0;
    const double my = (c[0].y + c[1].y + c[2].y + c[3].y) / 4.0;
    CHECK(std::abs(mx - s.x) < 1e-12 * std::max(1.0, std::abs(s.x)) + 1e-12);
    CHECK(std::abs(my - s.y) < 1e-12 * std::max(1.0, std::abs(s.y)) + 1e-12);

    // Rectangle rigidity: both diagonals equal sqrt(L^2 + W^2).
    CHECK(distance(c[0], c[3]) == doctest::Approx(diagonal).epsilon(1e-9));
    CHECK(distance(c[1], c[2]) == doctest::Approx(diagonal).epsilon(1e-9));

    // Side lengths are invariant under the rigid motion.
    CHECK(distance(c[0], c[1]) == doctest::Approx(1.8).epsilon(1e-9));
    CHECK(distance(c[0], c[2]) == doctest::Approx(4.3).epsilon(1e-9));

    // Full turn changes nothing.
    auto c2 = global_corners({s.x, s.y, s.heading + 2 * M_PI, 0}, spec);
    for (int j = 0; j < 4; ++j) {
      CHECK(c2[j].x == doctest::Approx(c[j].x).epsilon(1e-9));
      CHECK(c2[j].y == doctest::Approx(c[j].y).epsilon(1e-9));
    }
  }
}
