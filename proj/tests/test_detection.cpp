#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "corrisk/detection.hpp"
#include "corrisk/errors.hpp"
#include "corrisk/rng.hpp"
#include "doctest.h"

using namespace corrisk;
using namespace corrisk::detection;

namespace {

geometry::CornerSet rect_at(double cx, double cy, double heading, double len,
                            double wid) {
  return geometry::global_corners({cx, cy, heading, 0},
                                  {2.5, len, wid});
}

// Straight-track vehicle: constant speed along +x from a given start.
kinematics::ProcessedTrack straight_track(const std::string& id, double x0,
                                          double y0, double heading, double v,
                                          int frames, double dt) {
  kinematics::ProcessedTrack t;
  t.agent_id = id;
  t.dims = {2.5, 4.0, 2.0};
  for (int i = 0; i < frames; ++i) {
    kinematics::ProcessedFrame f;
    f.t = i * dt;
    f.x = x0 + v * std::cos(heading) * f.t;
    f.y = y0 + v * std::sin(heading) * f.t;
    f.speed = v;
    f.heading = heading;
    t.frames.push_back(f);
  }
  return t;
}

}  // namespace

TEST_CASE("check_vv") {
  DetectionConfig cfg;
  cfg.epsilon = 0.3;

  SUBCASE("identical rectangles match at the first pair") {
    auto a = rect_at(0, 0, 0.2, 4, 2);
    auto hit = check_vv(a, a, cfg);
    REQUIRE(hit.has_value());
    CHECK(hit->first == 1);
    CHECK(hit->second == 1);
  }

  SUBCASE("well-separated rectangles do not match") {
    auto a = rect_at(0, 0, 0, 4, 2);
    auto b = rect_at(14, 0, 0, 4, 2);  // nearest corners 10 m apart
    CHECK(!check_vv(a, b, cfg).has_value());
  }

  SUBCASE("rule sensitivity at a (0.2, 0.4) offset") {
    // Two degenerate corner stacks offset by exactly (0.2, 0.4).
    auto a = rect_at(0, 0, 0, 4, 2);
    auto b = rect_at(0.2, 0.4, 0, 4, 2);
    DetectionConfig and_cfg = cfg;
    and_cfg.vv_rule = VvRule::And;
    DetectionConfig or_cfg = cfg;
    or_cfg.vv_rule = VvRule::Or;
    CHECK(!check_vv(a, b, and_cfg).has_value());  // dy = 0.4 > 0.3
    CHECK(check_vv(a, b, or_cfg).has_value());    // dx = 0.2 <= 0.3
  }
}

TEST_CASE("check_vi") {
  BoundaryPolyline b;
  b.id = "edge";
  b.kind = "curb";

  SUBCASE("corner exactly on a vertex") {
    auto corners = rect_at(0, 0, 0, 4, 2);
    b.points = {{corners[0].x, corners[0].y}, {100, 100}};
    auto hit = check_vi(corners, b, 0.3);
    REQUIRE(hit.has_value());
    CHECK(hit->first == 1);
    CHECK(hit->second == 1);
  }

  SUBCASE("distant vertices do not match") {
    auto corners = rect_at(0, 0, 0, 4, 2);
    b.points = {{50, 50}, {60, 60}};
    CHECK(!check_vi(corners, b, 0.3).has_value());
  }

  SUBCASE("threshold is inclusive at exactly epsilon") {
    auto corners = rect_at(0, 0, 0, 4, 2);
    // Vertex at controlled distance from the front-left corner (2, 1).
    b.points = {{2.0 + 0.299, 1.0}, {100, 100}};
    CHECK(check_vi(corners, b, 0.3).has_value());
    b.points = {{2.0 + 0.301, 1.0}, {100, 100}};
    CHECK(!check_vi(corners, b, 0.3).has_value());
  }
}

TEST_CASE("densify") {
  BoundaryPolyline b;
  b.id = "x";
  b.points = {{0, 0}, {10, 0}};
  auto d = densify(b, 0.25);
  CHECK(d.points.size() == 41);
  for (std::size_t i = 1; i < d.points.size(); ++i) {
    CHECK(geometry::distance(d.points[i - 1], d.points[i]) <= 0.25 + 1e-12);
  }
  CHECK(d.points.back().x == 10.0);

  BoundaryPolyline bad;
  bad.id = "bad";
  bad.points = {{0, 0}};
  CHECK_THROWS_AS(densify(bad, 0.25), DataError);
  bad.points = {{0, 0}, {0, 0}};
  CHECK_THROWS_AS(densify(bad, 0.25), DataError);
}

TEST_CASE("detect") {
  DetectionConfig cfg;  // eps 0.3, dt 0.1, 30 steps

  SUBCASE("head-on closure at 20 m gap and 10 m/s closing speed") {
    // Facing bumpers 20 m apart: centers at 0 and 24 for 4 m long vehicles.
    VehicleCase a{{0, 0, 0, 5}, {0, 0}, {2.5, 4, 2}, "a"};
    VehicleCase b{{24, 0, M_PI, 5}, {0, 0}, {2.5, 4, 2}, "b"};
    auto ev = detect(a, &b, {}, cfg, 0.0);
    REQUIRE(ev.has_value());
    CHECK(ev->kind == EventKind::VehicleVehicle);
    // Closing-speed arithmetic: (20 - eps) / 10 = 1.97, on-grid at 2.0.
    CHECK(std::abs(ev->t_collision - 2.0) <= 0.1 + 1e-12);
    CHECK(ev->ttc == ev->t_collision);
  }

  SUBCASE("parallel vehicles with 3.5 m lateral gap never meet") {
    VehicleCase a{{0, 0, 0, 10}, {0, 0}, {2.5, 4, 2}, "a"};
    VehicleCase b{{0, 3.5, 0, 10}, {0, 0}, {2.5, 4, 2}, "b"};
    CHECK(!detect(a, &b, {}, cfg, 0.0).has_value());
  }

  SUBCASE("boundary ahead at 10 m and 5 m/s") {
    VehicleCase a{{0, 0, 0, 5}, {0, 0}, {2.5, 4, 2}, "a"};
    // Vertical line 10 m ahead of the front bumper (bumper at x = 2).
    BoundaryPolyline b;
    b.id = "wall";
    b.points = {{12, -5}, {12, 5}};
    auto wall = densify(b, 0.25);
    auto ev = detect(a, nullptr, {wall}, cfg, 0.0);
    REQUIRE(ev.has_value());
    CHECK(ev->kind == EventKind::VehicleInfrastructure);
    CHECK(std::abs(ev->t_collision - 2.0) <= 0.1 + 1e-12);
  }

  SUBCASE("overlapping start reports t = 0 and is kept") {
    VehicleCase a{{0, 0, 0, 5}, {0, 0}, {2.5, 4, 2}, "a"};
    VehicleCase b{{0.1, 0.1, 0, 5}, {0, 0}, {2.5, 4, 2}, "b"};
    auto ev = detect(a, &b, {}, cfg, 0.0);
    REQUIRE(ev.has_value());
    CHECK(ev->t_collision == 0.0);
  }

  SUBCASE("symmetry: swapping the pair transposes the corner indices") {
    VehicleCase a{{0, 0, 0.15, 6}, {0.4, 0.02}, {2.5, 4, 2}, "a"};
    VehicleCase b{{26, 0.8, M_PI - 0.1, 7}, {-0.2, -0.03}, {2.7, 4.6, 2.1}, "b"};
    auto ab = detect(a, &b, {}, cfg, 0.0);
    auto ba = detect(b, &a, {}, cfg, 0.0);
    REQUIRE(ab.has_value());
    REQUIRE(ba.has_value());
    CHECK(ab->t_collision == ba->t_collision);
    CHECK(ab->corners.first == ba->corners.second);
    CHECK(ab->corners.second == ba->corners.first);
  }

  SUBCASE("ttc is within (0, horizon] for random closing geometries") {
    Rng rng(31);
    int found = 0;
    for (int trial = 0; trial < 200; ++trial) {
      VehicleCase a{{0, 0, 0, rng.uniform(3, 15)},
                    {rng.uniform(-1, 1), rng.uniform(-0.05, 0.05)},
                    {2.5, 4, 2},
                    "a"};
      VehicleCase b{{rng.uniform(8, 40), rng.uniform(-2, 2), M_PI,
                     rng.uniform(3, 15)},
                    {rng.uniform(-1, 1), rng.uniform(-0.05, 0.05)},
                    {2.5, 4, 2},
                    "b"};
      auto ev = detect(a, &b, {}, cfg, 0.0);
      if (ev) {
        ++found;
        CHECK(ev->t_collision > 0.0);
        CHECK(ev->t_collision <= cfg.horizon.steps * cfg.horizon.dt + 1e-12);
      }
    }
    CHECK(found > 20);  // the construction produces plenty of events
  }

  SUBCASE("monotone in epsilon") {
    VehicleCase a{{0, 0, 0, 5}, {0, 0}, {2.5, 4, 2}, "a"};
    VehicleCase b{{24, 0, M_PI, 5}, {0, 0}, {2.5, 4, 2}, "b"};
    DetectionConfig small = cfg;
    small.epsilon = 0.1;
    DetectionConfig big = cfg;
    big.epsilon = 0.8;
    auto ev_small = detect(a, &b, {}, small, 0.0);
    auto ev_big = detect(a, &b, {}, big, 0.0);
    REQUIRE(ev_small.has_value());
    REQUIRE(ev_big.has_value());
    CHECK(ev_big->t_collision <= ev_small->t_collision);
  }
}

TEST_CASE("scan_scenario") {
  ScanConfig cfg;

  SUBCASE("single vehicle with no boundaries yields nothing") {
    auto t = straight_track("v1", 0, 0, 0, 10, 50, 0.1);
    CHECK(scan_scenario("s", {t}, {}, cfg).empty());
  }

  SUBCASE("head-on pair yields one event per initiating frame") {
    // Closing at 10 m/s from a 20 m bumper gap: conflicts are in range the
    // whole way in, one VV event per frame until the tracks cross.
    auto a = straight_track("a", 0, 0, 0, 5, 20, 0.1);
    auto b = straight_track("b", 24, 0, M_PI, 5, 20, 0.1);
    auto events = scan_scenario("s", {a, b}, {}, cfg);
    REQUIRE(!events.empty());
    for (std::size_t i = 0; i < events.size(); ++i) {
      CHECK(events[i].event.kind == EventKind::VehicleVehicle);
      CHECK(events[i].event.ego_id == "a");
      CHECK(events[i].event.other_id == "b");
      // Gap at frame f is 20 - f, so expected ttc is about (20 - f) / 10.
      const double frame_t = events[i].event.block_time;
      const double expected = (20.0 - 10.0 * frame_t - cfg.det.epsilon) / 10.0;
      if (expected > 0.05) {
        CHECK(std::abs(events[i].event.ttc - expected) <= 0.1 + 1e-9);
      }
    }
    // One event per initiating frame at most.
    for (std::size_t i = 1; i < events.size(); ++i) {
      CHECK(events[i].event.block_time > events[i - 1].event.block_time);
    }
  }

  SUBCASE("translation invariance") {
    auto a0 = straight_track("a", 0, 0, 0, 5, 30, 0.1);
    auto b0 = straight_track("b", 24, 0.5, M_PI, 5, 30, 0.1);
    BoundaryPolyline raw;
    raw.id = "edge";
    raw.points = {{10, -4}, {30, -4}};
    auto e0 = scan_scenario("s", {a0, b0}, {densify(raw, 0.25)}, cfg);

    const double sx = 113.7, sy = -48.2;
    auto a1 = straight_track("a", sx, sy, 0, 5, 30, 0.1);
    auto b1 = straight_track("b", 24 + sx, 0.5 + sy, M_PI, 5, 30, 0.1);
    BoundaryPolyline moved;
    moved.id = "edge";
    moved.points = {{10 + sx, -4 + sy}, {30 + sx, -4 + sy}};
    auto e1 = scan_scenario("s", {a1, b1}, {densify(moved, 0.25)}, cfg);

    REQUIRE(e0.size() == e1.size());
    for (std::size_t i = 0; i < e0.size(); ++i) {
      CHECK(e0[i].event.kind == e1[i].event.kind);
      CHECK(e0[i].event.t_collision ==
            doctest::Approx(e1[i].event.t_collision).epsilon(1e-9));
      CHECK(e0[i].event.corners.first == e1[i].event.corners.first);
      CHECK(e0[i].event.corners.second == e1[i].event.corners.second);
    }
  }

  SUBCASE("epsilon monotonicity of the event set") {
    auto a = straight_track("a", 0, 0.3, 0, 6, 25, 0.1);
    auto b = straight_track("b", 30, -0.2, M_PI, 6, 25, 0.1);
    ScanConfig tight = cfg;
    tight.det.epsilon = 0.15;
    ScanConfig loose = cfg;
    loose.det.epsilon = 0.45;
    auto small_set = scan_scenario("s", {a, b}, {}, tight);
    auto big_set = scan_scenario("s", {a, b}, {}, loose);
    // Every initiating frame in the small set appears in the big set with
    // a ttc that is no larger.
    for (const auto& ev : small_set) {
      bool matched = false;
      for (const auto& bv : big_set) {
        if (bv.event.block_time == ev.event.block_time &&
            bv.event.ego_id == ev.event.ego_id &&
            bv.event.other_id == ev.event.other_id) {
          matched = true;
          CHECK(bv.event.ttc <= ev.event.ttc + 1e-12);
        }
      }
      CHECK(matched);
    }
    CHECK(big_set.size() >= small_set.size());
  }

  SUBCASE("fine-grid oracle agrees on random small scenarios") {
    // Closing speeds are capped below 2*eps/dt = 6 m/s so the sampled
    // per-coordinate check cannot step across the proximity window between
    // samples; above that cap the coarse grid misses contacts by design.
    Rng rng(71);
    int total_events = 0;
    int matched = 0;
    for (int sc = 0; sc < 20; ++sc) {
      const double lead_v = rng.uniform(5, 12);
      const double closing = rng.uniform(1.0, 5.0);
      const double gap = rng.uniform(3, 10);
      const double off = rng.uniform(-0.25, 0.25);
      auto a = straight_track("a", 0, 0, 0, lead_v + closing, 12, 0.1);
      auto b = straight_track("b", gap + 4, off, 0, lead_v, 12, 0.1);

      ScanConfig coarse = cfg;
      ScanConfig fine = cfg;
      fine.det.horizon = {0.01, 300};
      auto ce = scan_scenario("s", {a, b}, {}, coarse);
      auto fe = scan_scenario("s", {a, b}, {}, fine);
      for (const auto& cev : ce) {
        ++total_events;
        for (const auto& fev : fe) {
          if (fev.event.block_time == cev.event.block_time &&
              fev.event.kind == cev.event.kind &&
              fev.event.ego_id == cev.event.ego_id &&
              fev.event.other_id == cev.event.other_id &&
              std::abs(fev.event.ttc - cev.event.ttc) <= 0.1 + 1e-9) {
            ++matched;
            break;
          }
        }
      }
    }
    CHECK(total_events > 0);
    CHECK(matched == total_events);
  }

  SUBCASE("misaligned tracks are rejected") {
    auto a = straight_track("a", 0, 0, 0, 5, 30, 0.1);
    auto b = straight_track("b", 24, 0, M_PI, 5, 29, 0.1);
    CHECK_THROWS_AS(scan_scenario("s", {a, b}, {}, cfg), DataError);
  }
}
