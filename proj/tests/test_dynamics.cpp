#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "corrisk/dynamics.hpp"
#include "doctest.h"

using namespace corrisk::dynamics;

namespace {

// Closed-form constant-curvature motion: turn radius wheelbase/tan(steer),
// heading advancing at speed/radius.
VehicleState circle_solution(const VehicleState& s0, double speed, double steer,
                             double wheelbase, double t) {
  const double radius = wheelbase / std::tan(steer);
  const double omega = speed / radius;
  VehicleState s;
  s.heading = s0.heading + omega * t;
  s.x = s0.x + radius * (std::sin(s.heading) - std::sin(s0.heading));
  s.y = s0.y - radius * (std::cos(s.heading) - std::cos(s0.heading));
  s.speed = speed;
  return s;
}

}  // namespace

TEST_CASE("vector_field matches the bicycle equations") {
  VehicleSpec spec{2.5, 4.5, 1.9};
  ControlInput idle{0.0, 0.0};

  SUBCASE("at rest with zero inputs all rates vanish") {
    JointState s;
    auto k = vector_field(s, idle, idle, spec, spec);
    for (int i = 0; i < 4; ++i) CHECK(k[i] == 0.0);
  }

  SUBCASE("straight motion") {
    JointState s;
    s.a = {0, 0, 0, 10};
    auto k = vector_field(s, ControlInput{2.0, 0.0}, idle, spec, spec);
    CHECK(k[0] == doctest::Approx(10.0));
    CHECK(k[1] == doctest::Approx(0.0));
    CHECK(k[2] == doctest::Approx(0.0));
    CHECK(k[3] == doctest::Approx(2.0));
  }

  SUBCASE("heading and steering terms") {
    JointState s;
    s.a = {0, 0, M_PI / 2, 8};
    ControlInput u{1.5, 0.2};
    auto k = vector_field(s, u, idle, spec, spec);
    CHECK(k[0] == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(k[1] == doctest::Approx(8.0).epsilon(1e-6));
    CHECK(k[2] == doctest::Approx(8.0 * std::tan(0.2) / 2.5).epsilon(1e-6));
    CHECK(k[3] == doctest::Approx(1.5));
  }
}

TEST_CASE("rk4_step") {
  VehicleSpec spec{2.5, 4.5, 1.9};
  ControlInput idle{0.0, 0.0};

  SUBCASE("all-zero rates are a fixed point") {
    JointState s;
    s.a = {3, -2, 0.5, 0};
    s.b = {1, 1, -0.3, 0};
    JointState next = rk4_step(s, idle, idle, spec, spec, 0.1);
    CHECK(next.a.x == s.a.x);
    CHECK(next.a.y == s.a.y);
    CHECK(next.a.heading == s.a.heading);
    CHECK(next.a.speed == s.a.speed);
    CHECK(next.b.x == s.b.x);
  }

  SUBCASE("straight line integrates exactly") {
    JointState s;
    s.a = {0, 0, 0, 10};
    JointState next = rk4_step(s, idle, idle, spec, spec, 0.1);
    CHECK(next.a.x == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(next.a.y == 0.0);
    CHECK(next.a.heading == 0.0);
    CHECK(next.a.speed == 10.0);
  }

  SUBCASE("constant-curvature arc tracks the analytic circle") {
    JointState s;
    s.a = {0, 0, 0, 10};
    ControlInput u{0.0, 0.1};
    for (int n = 0; n < 100; ++n) {
      s = rk4_step(s, u, idle, spec, spec, 0.1);
    }
    VehicleState truth = circle_solution({0, 0, 0, 10}, 10, 0.1, 2.5, 10.0);
    CHECK(std::abs(s.a.x - truth.x) < 1e-5);
    CHECK(std::abs(s.a.y - truth.y) < 1e-5);
  }

  SUBCASE("braking clamps speed at zero") {
    JointState s;
    s.a = {0, 0, 0, 0.5};
    JointState next = rk4_step(s, ControlInput{-10.0, 0.0}, idle, spec, spec, 0.2);
    CHECK(next.a.speed == 0.0);
  }
}

TEST_CASE("simulate_horizon") {
  VehicleSpec spec{2.5, 4.5, 1.9};
  ControlInput idle{0.0, 0.0};

  SUBCASE("one step is s0 plus one rk4 update") {
    JointState s0;
    s0.a = {0, 0, 0.3, 7};
    auto states = simulate_horizon(s0, idle, idle, spec, spec, {0.1, 1});
    REQUIRE(states.size() == 2);
    JointState manual = rk4_step(s0, idle, idle, spec, spec, 0.1);
    CHECK(states[1].a.x == manual.a.x);
    CHECK(states[1].a.y == manual.a.y);
  }

  SUBCASE("stationary vehicles stay put") {
    JointState s0;
    s0.a = {5, 5, 1.0, 0};
    s0.b = {-5, -5, -1.0, 0};
    auto states = simulate_horizon(s0, idle, idle, spec, spec, {0.1, 30});
    for (const auto& st : states) {
      CHECK(st.a.x == 5.0);
      CHECK(st.b.y == -5.0);
    }
  }

  SUBCASE("straight line per-step closed form") {
    JointState s0;
    s0.a = {0, 0, 0, 10};
    auto states = simulate_horizon(s0, idle, idle, spec, spec, {0.1, 30});
    for (int n = 0; n <= 30; ++n) {
      CHECK(states[n].a.x == doctest::Approx(n * 1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("rk4 order: halving dt shrinks circle error by >= 14x") {
  VehicleSpec spec{2.5, 4.5, 1.9};
  ControlInput u{0.0, 0.1};
  ControlInput idle{0.0, 0.0};
  VehicleState truth = circle_solution({0, 0, 0, 10}, 10, 0.1, 2.5, 3.0);

  auto final_error = [&](double dt, int steps) {
    JointState s;
    s.a = {0, 0, 0, 10};
    auto states = simulate_horizon(s, u, idle, spec, spec, {dt, steps});
    const auto& f = states.back().a;
    return std::hypot(f.x - truth.x, f.y - truth.y);
  };

  const double coarse = final_error(0.1, 30);
  const double fine = final_error(0.05, 60);
  CHECK(coarse / fine >= 14.0);
}

TEST_CASE("vehicles are decoupled in the joint simulation") {
  VehicleSpec spec_a{2.5, 4.5, 1.9};
  VehicleSpec spec_b{3.1, 5.2, 2.1};
  ControlInput ua{0.5, 0.05};
  JointState s1;
  s1.a = {0, 0, 0.2, 12};
  s1.b = {40, 3, M_PI, 9};
  JointState s2 = s1;
  s2.b = {-100, 55, 1.1, 25};

  auto run1 = simulate_horizon(s1, ua, ControlInput{1.0, -0.1}, spec_a, spec_b,
                               {0.1, 30});
  auto run2 = simulate_horizon(s2, ua, ControlInput{-2.0, 0.2}, spec_a, spec_b,
                               {0.1, 30});
  for (std::size_t n = 0; n < run1.size(); ++n) {
    CHECK(run1[n].a.x == run2[n].a.x);
    CHECK(run1[n].a.y == run2[n].a.y);
    CHECK(run1[n].a.heading == run2[n].a.heading);
    CHECK(run1[n].a.speed == run2[n].a.speed);
  }
}

TEST_CASE("frame equivariance under rotation") {
  VehicleSpec spec{2.5, 4.5, 1.9};
  ControlInput u{0.8, 0.07};
  ControlInput idle{0.0, 0.0};
  const double phi = 0.83;
  const double c = std::cos(phi), sn = std::sin(phi);

  JointState s0;
  s0.a = {3, -1, 0.4, 11};

  JointState rotated;
  rotated.a = {3 * c - (-1) * sn, 3 * sn + (-1) * c, 0.4 + phi, 11};

  auto plain = simulate_horizon(s0, u, idle, spec, spec, {0.1, 25});
  auto rolled = simulate_horizon(rotated, u, idle, spec, spec, {0.1, 25});
  for (std::size_t n = 0; n < plain.size(); ++n) {
    const auto& p = plain[n].a;
    const auto& r = rolled[n].a;
    CHECK(r.x == doctest::Approx(p.x * c - p.y * sn).epsilon(1e-9));
    CHECK(r.y == doctest::Approx(p.x * sn + p.y * c).epsilon(1e-9));
    CHECK(r.heading == doctest::Approx(p.heading + phi).epsilon(1e-9));
  }
}
