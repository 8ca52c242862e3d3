#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <functional>
#include <vector>

#include "corrisk/errors.hpp"
#include "corrisk/kinematics.hpp"
#include "corrisk/rng.hpp"
#include "doctest.h"

using namespace corrisk;
using namespace corrisk::kinematics;

namespace {

RawTrack make_track(int n, double dt,
                    const std::function<void(double, RawFrame&)>& fill) {
  RawTrack track;
  track.agent_id = "t";
  for (int i = 0; i < n; ++i) {
    RawFrame f;
    f.t = i * dt;
    fill(f.t, f);
    track.frames.push_back(f);
  }
  validate(track);
  return track;
}

double rms(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s / v.size());
}

}  // namespace

TEST_CASE("track validation") {
  RawTrack t;
  t.agent_id = "short";
  for (int i = 0; i < 4; ++i) t.frames.push_back({i * 0.1, 0, 0, 0, 0});
  CHECK_THROWS_AS(validate(t), DataError);

  t.frames.push_back({0.4, 0, 0, 0, 0});
  CHECK_NOTHROW(validate(t));
  CHECK(t.sample_period == doctest::Approx(0.1));

  t.frames[3].t = t.frames[2].t;  // duplicate timestamp
  CHECK_THROWS_AS(validate(t), DataError);
}

TEST_CASE("smooth_positions") {
  SUBCASE("straight line is reproduced") {
    auto track = make_track(50, 0.1, [](double t, RawFrame& f) {
      f.x = t;  // x = k * 0.1 at 10 Hz
      f.y = 0.0;
      f.vx = 1.0;
    });
    auto smooth = smooth_positions(track, 5);
    for (int i = 0; i < 50; ++i) {
      CHECK(std::abs(smooth.frames[i].x - track.frames[i].x) < 1e-9);
      CHECK(std::abs(smooth.frames[i].y) < 1e-9);
      CHECK(smooth.frames[i].t == track.frames[i].t);
      CHECK(smooth.frames[i].vx == track.frames[i].vx);
    }
  }

  SUBCASE("cubic path is reproduced") {
    auto track = make_track(101, 0.01, [](double t, RawFrame& f) {
      f.x = t * t * t;
      f.y = 2.0 * t;
    });
    auto smooth = smooth_positions(track, 5);
    for (int i = 0; i < 101; ++i) {
      CHECK(std::abs(smooth.frames[i].x - track.frames[i].x) < 1e-6);
      CHECK(std::abs(smooth.frames[i].y - track.frames[i].y) < 1e-6);
    }
  }

  SUBCASE("endpoints are interpolated exactly") {
    Rng rng(3);
    auto track = make_track(60, 0.1, [&](double t, RawFrame& f) {
      f.x = 3.0 * t + rng.normal(0, 0.05);
      f.y = -1.0 + 0.5 * t + rng.normal(0, 0.05);
    });
    auto smooth = smooth_positions(track, 5);
    CHECK(smooth.frames.front().x == doctest::Approx(track.frames.front().x).epsilon(1e-12));
    CHECK(smooth.frames.front().y == doctest::Approx(track.frames.front().y).epsilon(1e-12));
    CHECK(smooth.frames.back().x == doctest::Approx(track.frames.back().x).epsilon(1e-12));
    CHECK(smooth.frames.back().y == doctest::Approx(track.frames.back().y).epsilon(1e-12));
  }

  SUBCASE("noise on a line is attenuated") {
    Rng rng(41);
    const double sigma = 0.05;
    std::vector<double> noise_x, noise_y;
    auto track = make_track(110, 0.1, [&](double t, RawFrame& f) {
      noise_x.push_back(rng.normal(0, sigma));
      noise_y.push_back(rng.normal(0, sigma));
      f.x = 4.0 * t + noise_x.back();
      f.y = 1.0 + 0.3 * t + noise_y.back();
    });
    auto smooth = smooth_positions(track, 5);

    std::vector<double> resid_in, resid_out;
    for (int i = 0; i < 110; ++i) {
      const double t = track.frames[i].t;
      resid_in.push_back(track.frames[i].x - 4.0 * t);
      resid_in.push_back(track.frames[i].y - (1.0 + 0.3 * t));
      resid_out.push_back(smooth.frames[i].x - 4.0 * t);
      resid_out.push_back(smooth.frames[i].y - (1.0 + 0.3 * t));
    }
    CHECK(rms(resid_out) < rms(resid_in));

    // Oracle: an unconstrained least-squares line through the noisy x data.
    // The spline with sparse control points should land in its vicinity.
    double sum_t = 0, sum_tt = 0, sum_x = 0, sum_tx = 0;
    for (int i = 0; i < 110; ++i) {
      const double t = track.frames[i].t;
      sum_t += t;
      sum_tt += t * t;
      sum_x += track.frames[i].x;
      sum_tx += t * track.frames[i].x;
    }
    const int n = 110;
    const double slope = (n * sum_tx - sum_t * sum_x) / (n * sum_tt - sum_t * sum_t);
    const double icept = (sum_x - slope * sum_t) / n;
    std::vector<double> line_resid;
    for (int i = 0; i < n; ++i) {
      const double t = track.frames[i].t;
      line_resid.push_back(icept + slope * t - 4.0 * t);
    }
    CHECK(rms(resid_out) < 5.0 * std::max(rms(line_resid), sigma / std::sqrt(n * 1.0)));
  }

  SUBCASE("too-short tracks are rejected") {
    RawTrack t;
    t.agent_id = "x";
    for (int i = 0; i < 4; ++i) t.frames.push_back({i * 0.1, 0, 0, 0, 0});
    CHECK_THROWS_AS(smooth_positions(t, 5), DataError);
  }
}

TEST_CASE("derive_speed") {
  auto track = make_track(5, 0.1, [](double, RawFrame&) {});
  track.frames[0].vx = 3;
  track.frames[0].vy = 4;
  track.frames[1].vx = 0;
  track.frames[1].vy = 0;
  track.frames[2].vx = -6;
  track.frames[2].vy = 8;
  auto v = derive_speed(track);
  CHECK(v[0] == doctest::Approx(5.0));
  CHECK(v[1] == 0.0);
  CHECK(v[2] == doctest::Approx(10.0));

  SUBCASE("invariant under rotation of the velocity vector") {
    Rng rng(9);
    for (int trial = 0; trial < 100; ++trial) {
      const double vx = rng.uniform(-30, 30), vy = rng.uniform(-30, 30);
      const double phi = rng.uniform(0, 6.28);
      RawTrack a = track, b = track;
      a.frames[0].vx = vx;
      a.frames[0].vy = vy;
      b.frames[0].vx = vx * std::cos(phi) - vy * std::sin(phi);
      b.frames[0].vy = vx * std::sin(phi) + vy * std::cos(phi);
      CHECK(derive_speed(a)[0] ==
            doctest::Approx(derive_speed(b)[0]).epsilon(1e-12));
    }
  }
}

TEST_CASE("sg_filter") {
  SUBCASE("constants pass through") {
    std::vector<double> s(40, 7.3);
    for (int w : {5, 11, 21}) {
      auto out = sg_filter(s, w, 2);
      for (double v : out) CHECK(v == doctest::Approx(7.3).epsilon(1e-12));
    }
  }

  SUBCASE("quadratics are reproduced by an order-2 fit") {
    std::vector<double> s;
    for (int i = 0; i < 60; ++i) s.push_back(double(i) * i);
    auto out = sg_filter(s, 11, 2);
    for (int i = 5; i < 55; ++i) {
      CHECK(std::abs(out[i] - s[i]) < 1e-9 * std::max(1.0, std::abs(s[i])));
    }
  }

  SUBCASE("interior values match an explicit normal-equations solve") {
    Rng rng(123);
    std::vector<double> s;
    for (int i = 0; i < 30; ++i) s.push_back(rng.normal());
    auto out = sg_filter(s, 5, 2);
    for (int i = 2; i < 28; ++i) {
      // Fit a + b d + c d^2 over d in {-2..2} by explicit normal equations:
      // with symmetric d the system decouples; solve the 2x2 block for (a, c).
      double s0 = 0, s2 = 0, s4 = 0, m0 = 0, m1 = 0, m2 = 0;
      for (int d = -2; d <= 2; ++d) {
        const double y = s[i + d];
        s0 += 1;
        s2 += d * d;
        s4 += d * d * d * d;
        m0 += y;
        m1 += d * y;
        m2 += d * d * y;
      }
      const double det = s0 * s4 - s2 * s2;
      const double a = (s4 * m0 - s2 * m2) / det;
      CHECK(out[i] == doctest::Approx(a).epsilon(1e-9));
    }
  }

  SUBCASE("linearity") {
    Rng rng(77);
    std::vector<double> s1, s2;
    for (int i = 0; i < 50; ++i) {
      s1.push_back(rng.normal());
      s2.push_back(rng.normal());
    }
    const double a = 2.5, b = -1.25;
    std::vector<double> mix(50);
    for (int i = 0; i < 50; ++i) mix[i] = a * s1[i] + b * s2[i];
    auto fm = sg_filter(mix, 9, 2);
    auto f1 = sg_filter(s1, 9, 2);
    auto f2 = sg_filter(s2, 9, 2);
    for (int i = 0; i < 50; ++i) {
      CHECK(fm[i] == doctest::Approx(a * f1[i] + b * f2[i]).epsilon(1e-9));
    }
  }

  SUBCASE("bad configuration is rejected") {
    std::vector<double> s(20, 1.0);
    CHECK_THROWS_AS(sg_filter(s, 5, 5), ConfigError);
    CHECK_THROWS_AS(sg_filter(s, 5, 7), ConfigError);
    CHECK_THROWS_AS(sg_filter(s, 4, 2), ConfigError);
  }

  SUBCASE("window shrinks to fit short signals") {
    std::vector<double> s;
    for (int i = 0; i < 7; ++i) s.push_back(i * i);
    auto out = sg_filter(s, 109, 2);  // wider than the signal
    for (int i = 0; i < 7; ++i) {
      CHECK(out[i] == doctest::Approx(s[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("derive_dynamics") {
  VehicleDims dims{2.7, 4.5, 1.9};

  SUBCASE("constant speed has zero acceleration") {
    auto track = make_track(50, 0.1, [](double t, RawFrame& f) {
      f.x = 10.0 * t;
      f.vx = 10.0;
    });
    auto p = derive_dynamics(track, dims);
    for (const auto& f : p.frames) CHECK(f.accel == doctest::Approx(0.0));
  }

  SUBCASE("linear ramp gives unit acceleration") {
    auto track = make_track(101, 0.1, [](double t, RawFrame& f) {
      f.x = 0.5 * t * t;
      f.vx = 1.0 * t;  // 0 -> 10 m/s over 10 s
    });
    auto p = derive_dynamics(track, dims);
    for (int i = 0; i < 100; ++i) {
      CHECK(p.frames[i].accel == doctest::Approx(1.0).epsilon(1e-9));
    }
  }

  SUBCASE("circular motion recovers the steering angle") {
    const double R = 20.0, v = 10.0;
    const double omega = v / R;
    auto track = make_track(110, 0.1, [&](double t, RawFrame& f) {
      f.x = R * std::sin(omega * t);
      f.y = R - R * std::cos(omega * t);
      f.vx = v * std::cos(omega * t);
      f.vy = v * std::sin(omega * t);
    });
    auto p = derive_dynamics(track, dims);
    const double expected = std::atan(2.7 / 20.0);
    for (int i = 2; i < 107; ++i) {
      CHECK(std::abs(p.frames[i].steer - expected) < 1e-3);
    }
  }

  SUBCASE("steering is zeroed near standstill") {
    auto track = make_track(10, 0.1, [](double, RawFrame& f) {
      f.vx = 0.01;
    });
    auto p = derive_dynamics(track, dims);
    for (const auto& f : p.frames) CHECK(f.steer == 0.0);
  }

  SUBCASE("heading unwrap keeps steps within pi") {
    Rng rng(55);
    auto track = make_track(200, 0.1, [&](double t, RawFrame& f) {
      // Zig-zag path crossing the +-pi direction repeatedly.
      f.x = -5.0 * t + rng.normal(0, 0.5);
      f.y = rng.normal(0, 0.5);
    });
    auto p = derive_dynamics(track, dims);
    for (std::size_t i = 1; i < p.frames.size(); ++i) {
      CHECK(std::abs(p.frames[i].heading - p.frames[i - 1].heading) <=
            M_PI + 1e-12);
    }
  }

  SUBCASE("Euler reintegration reconstructs smooth tracks") {
    const double R = 60.0, v = 12.0;
    const double omega = v / R;
    auto track = make_track(111, 0.1, [&](double t, RawFrame& f) {
      f.x = R * std::sin(omega * t);
      f.y = R - R * std::cos(omega * t);
      f.vx = v * std::cos(omega * t);
      f.vy = v * std::sin(omega * t);
    });
    auto p = derive_dynamics(track, dims);
    double x = p.frames[0].x, y = p.frames[0].y;
    double worst = 0.0;
    for (std::size_t i = 0; i + 1 < p.frames.size(); ++i) {
      x += p.frames[i].speed * std::cos(p.frames[i].heading) * 0.1;
      y += p.frames[i].speed * std::sin(p.frames[i].heading) * 0.1;
      worst = std::max(worst, std::hypot(x - p.frames[i + 1].x,
                                         y - p.frames[i + 1].y));
    }
    CHECK(worst < 0.5);
  }
}
