#include "corrisk/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>

#include "corrisk/csv.hpp"
#include "corrisk/dynamics.hpp"
#include "corrisk/errors.hpp"
#include "corrisk/geometry.hpp"
#include "corrisk/numeric.hpp"
#include "corrisk/rng.hpp"
#include "json.hpp"

namespace corrisk::synth {

namespace {

namespace fs = std::filesystem;

constexpr double kEpsilon = 0.3;        // detection proximity threshold
constexpr double kHorizon = 3.0;        // detection lookahead in seconds
constexpr double kGroupLength = 160.0;  // m along the corridor
constexpr double kGroupPitch = 200.0;   // region spacing, leaves gaps
constexpr double kCurbY = -10.0;

struct Vehicle {
  std::string id;
  dynamics::VehicleState state;
  dynamics::ControlInput control;
  dynamics::VehicleSpec spec;
};

struct Scenario {
  std::string id;
  int group = 0;  // 0-based
  std::vector<Vehicle> vehicles;
  std::vector<GroundTruthEvent> truth;
};

double group_x0(int k) { return kGroupPitch * k; }

// Earliest time a linearly moving corner set comes within eps of a boundary
// vertex; quadratic per (corner, vertex) pair.
double straight_contact(const geometry::CornerSet& corners, double vx,
                        double vy, const detection::BoundaryPolyline& b,
                        double eps) {
  double best = std::numeric_limits<double>::infinity();
  const double a = vx * vx + vy * vy;
  for (const auto& corner : corners) {
    for (const auto& q : b.points) {
      const double px = corner.x - q.x;
      const double py = corner.y - q.y;
      const double c = px * px + py * py - eps * eps;
      if (c <= 0.0) return 0.0;
      if (a == 0.0) continue;
      const double bb = 2.0 * (px * vx + py * vy);
      const double disc = bb * bb - 4.0 * a * c;
      if (disc < 0.0) continue;
      const double t = (-bb - std::sqrt(disc)) / (2.0 * a);
      if (t >= 0.0) best = std::min(best, t);
    }
  }
  return best;
}

// Earliest time a corner rotating about icc at angular rate omega comes
// within eps of a boundary vertex.
double turning_contact(const geometry::CornerSet& corners,
                       const geometry::Point& icc, double omega,
                       const detection::BoundaryPolyline& b, double eps) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& corner : corners) {
    const double rj = std::hypot(corner.x - icc.x, corner.y - icc.y);
    const double alpha = std::atan2(corner.y - icc.y, corner.x - icc.x);
    for (const auto& q : b.points) {
      const double dq = std::hypot(q.x - icc.x, q.y - icc.y);
      const double beta = std::atan2(q.y - icc.y, q.x - icc.x);
      const double cstar = (rj * rj + dq * dq - eps * eps) / (2.0 * rj * dq);
      if (cstar > 1.0) continue;
      const double theta = std::acos(std::max(cstar, -1.0));
      const double phi0 = wrap_to_pi(alpha - beta);
      double t;
      if (std::abs(phi0) <= theta) {
        t = 0.0;
      } else if (omega > 0.0) {
        double delta = std::fmod(-theta - phi0, 2.0 * M_PI);
        if (delta < 0) delta += 2.0 * M_PI;
        t = delta / omega;
      } else {
        double delta = std::fmod(phi0 - theta, 2.0 * M_PI);
        if (delta < 0) delta += 2.0 * M_PI;
        t = delta / -omega;
      }
      best = std::min(best, t);
    }
  }
  return best;
}

geometry::CornerSet corners_of(const Vehicle& v) {
  return geometry::global_corners(v.state, v.spec);
}

dynamics::VehicleSpec draw_spec(Rng& rng) {
  const double length = 4.2 + rng.uniform(0.0, 1.0);
  return {0.6 * length, length, 1.8 + rng.uniform(0.0, 0.3)};
}

// Scripted minimum TTC for the block: the severity the corridor's groups
// differ in. gap_scale stretches or compresses it per group.
double draw_min_ttc(Rng& rng, const GroupProfile& prof) {
  const double base = std::exp(rng.normal(0.15, 0.45));
  return std::clamp(base * prof.gap_scale, 0.15, 2.5);
}

// Ground-truth row anchored at the first frame whose analytic TTC drops to
// 2.5 s or less.
GroundTruthEvent anchored_truth(const std::string& scenario,
                                const std::string& kind,
                                const std::string& ego,
                                const std::string& other, double t_contact,
                                double dt, double duration) {
  GroundTruthEvent ev;
  ev.scenario = scenario;
  ev.kind = kind;
  ev.ego = ego;
  ev.other = other;
  double frame_t = std::ceil((t_contact - 2.5) / dt - 1e-9) * dt;
  // The last two frames carry degraded derived controls (the forward
  // differences for heading and yaw rate both copy there), so anchor the
  // entry no later than three frames before the end.
  const double last_frame = duration - 3.0 * dt;
  if (frame_t > last_frame) frame_t = last_frame;
  if (frame_t < 0) frame_t = 0;
  ev.frame_t = std::round(frame_t / dt) * dt;
  ev.t_star = t_contact - ev.frame_t;
  return ev;
}

void add_fillers(Scenario& sc, Rng& rng, int max_extra, double speed_scale,
                 double xs) {
  // Fillers trail the conflict by a widening margin so they never enter the
  // vehicle-vehicle gate of the scripted pair.
  const int extra = static_cast<int>(rng.below(max_extra + 1));
  for (int i = 0; i < extra; ++i) {
    Vehicle f;
    f.id = sc.id + "_f" + std::to_string(i + 1);
    const double lane_y = i % 2 == 0 ? -4.5 : -6.0;
    f.state = {xs - 60.0 - 35.0 * i - rng.uniform(0.0, 10.0), lane_y, 0.0,
               std::clamp((4.0 + rng.uniform(0.0, 2.0)) * speed_scale, 3.0, 6.5)};
    f.control = {0.0, 0.0};
    f.spec = draw_spec(rng);
    sc.vehicles.push_back(f);
  }
}

// Places a single-vehicle case by bisection on the start offset so the
// analytic contact with the curb happens exactly at t_contact.
double bisect_start_y(const std::function<double(double)>& contact_at,
                      double lo, double hi, double t_contact) {
  for (int it = 0; it < 60; ++it) {
    const double mid = (lo + hi) / 2;
    if (contact_at(mid) < t_contact) lo = mid;
    else hi = mid;
  }
  return (lo + hi) / 2;
}

Scenario build_scenario(int index, int n_groups, const GroupProfile& prof,
                        int max_extra, double duration, double dt,
                        const detection::BoundaryPolyline& curb, Rng& rng) {
  Scenario sc;
  char buf[16];
  std::snprintf(buf, sizeof(buf), "s%04d", index);
  sc.id = buf;
  sc.group = index % n_groups;
  const int type = (index / n_groups) % 4;
  const double x0 = group_x0(sc.group);
  const double min_ttc = draw_min_ttc(rng, prof);
  const double t_contact = duration + min_ttc;

  if (type == 0) {
    // Head-on closure at 10 m/s combined. The bumper gap is an exact
    // multiple of the per-step advance, so the sampled per-coordinate
    // check lands on the grid.
    const double va = 4.0 + static_cast<double>(rng.below(3));  // 4, 5, 6
    const double vb = 10.0 - va;
    const int gap = static_cast<int>(
        std::lround(10.0 * t_contact + kEpsilon));  // ~110..137
    const double lane_y = -3.5 + rng.uniform(0.0, 1.5);
    const double xs = x0 + 3.0 + rng.uniform(0.0, 4.0);
    Vehicle a, b;
    a.id = sc.id + "_a";
    b.id = sc.id + "_b";
    a.spec = draw_spec(rng);
    b.spec = draw_spec(rng);
    b.spec.width = a.spec.width;  // aligned corners under the AND rule
    a.state = {xs, lane_y, 0.0, va};
    b.state = {xs + a.spec.length / 2 + gap + b.spec.length / 2, lane_y, M_PI,
               vb};
    a.control = b.control = {0.0, 0.0};
    sc.vehicles = {a, b};
    sc.truth.push_back(anchored_truth(sc.id, "VV", a.id, b.id,
                                      (gap - kEpsilon) / 10.0, dt, duration));
    add_fillers(sc, rng, max_extra, prof.speed_scale, xs);
  } else if (type == 1) {
    // Rear-end closure; the closing speed stays below 2*eps/dt so the
    // sampled check cannot step across the proximity window.
    const double lead_v =
        std::clamp((5.0 + rng.uniform(0.0, 1.5)) * prof.speed_scale, 3.5, 6.5);
    const double closing = 1.5 + rng.uniform(0.0, 3.5);
    const double gap = kEpsilon + closing * t_contact;
    const double off = rng.uniform(-0.2, 0.2);
    const double lane_y = -3.0 + rng.uniform(0.0, 1.5);
    const double xs = x0 + 3.0 + rng.uniform(0.0, 5.0);
    Vehicle a, b;
    a.id = sc.id + "_a";  // follower
    b.id = sc.id + "_b";  // leader
    a.spec = draw_spec(rng);
    b.spec = draw_spec(rng);
    b.spec.width = a.spec.width;
    a.state = {xs, lane_y, 0.0, lead_v + closing};
    b.state = {xs + a.spec.length / 2 + gap + b.spec.length / 2, lane_y + off,
               0.0, lead_v};
    a.control = b.control = {0.0, 0.0};
    sc.vehicles = {a, b};
    sc.truth.push_back(anchored_truth(sc.id, "VV", a.id, b.id, t_contact, dt, duration));
    add_fillers(sc, rng, max_extra, prof.speed_scale, xs);
  } else if (type == 2) {
    // Constant-heading drift toward the curb; the start offset is solved so
    // the corner-to-vertex contact lands exactly at t_contact.
    const double v =
        std::clamp((6.0 + rng.uniform(0.0, 3.0)) * prof.speed_scale, 5.0, 10.0);
    const double v_lat = std::clamp(0.9 + rng.uniform(0.0, 1.2), 0.7, 2.2);
    const double heading = -std::asin(v_lat / v);
    const double xs = x0 + 4.0 + rng.uniform(0.0, 6.0);
    Vehicle a;
    a.id = sc.id + "_a";
    a.spec = draw_spec(rng);
    auto contact_from = [&](double y0) {
      Vehicle probe = a;
      probe.state = {xs, y0, heading, v};
      return straight_contact(corners_of(probe), v * std::cos(heading),
                              v * std::sin(heading), curb, kEpsilon);
    };
    // Contact time grows with the start offset; bracket and bisect.
    const double y0 = bisect_start_y(contact_from, kCurbY + 1.0, kCurbY + 45.0,
                                     t_contact);
    a.state = {xs, y0, heading, v};
    a.control = {0.0, 0.0};
    sc.vehicles = {a};
    const double realized = contact_from(y0);
    if (std::isfinite(realized) && realized > duration) {
      sc.truth.push_back(
          anchored_truth(sc.id, "VI", a.id, curb.id, realized, dt, duration));
    }
    add_fillers(sc, rng, max_extra, prof.speed_scale, xs);
  } else {
    // Gentle constant-steer arc into the curb, again placed by bisection on
    // the start offset. Curvature is kept small so the lateral closing
    // speed at contact stays far below the skip limit.
    const double v =
        std::clamp((4.5 + rng.uniform(0.0, 1.5)) * prof.speed_scale, 3.5, 6.5);
    const double omega_target =
        2.0 * (5.0 + rng.uniform(0.0, 3.0)) / (v * t_contact * t_contact);
    const double omega = -std::clamp(omega_target, 0.008, 0.05);
    Vehicle a;
    a.id = sc.id + "_a";
    a.spec = draw_spec(rng);
    const double steer = -std::atan(a.spec.wheelbase * -omega / v);
    const double radius = v / -omega;
    const double xs = x0 + 4.0 + rng.uniform(0.0, 6.0);
    auto contact_from = [&](double y0) {
      Vehicle probe = a;
      probe.state = {xs, y0, 0.0, v};
      const geometry::Point icc{xs, y0 - radius};
      return turning_contact(corners_of(probe), icc, omega, curb, kEpsilon);
    };
    const double y0 = bisect_start_y(contact_from, kCurbY + 1.0, kCurbY + 45.0,
                                     t_contact);
    a.state = {xs, y0, 0.0, v};
    a.control = {0.0, steer};
    sc.vehicles = {a};
    const double realized = contact_from(y0);
    if (std::isfinite(realized) && realized > duration) {
      sc.truth.push_back(
          anchored_truth(sc.id, "VI", a.id, curb.id, realized, dt, duration));
    }
    add_fillers(sc, rng, max_extra, prof.speed_scale, xs);
  }
  return sc;
}

void write_trajectories(const Scenario& sc, const CorridorSpec& spec,
                        const std::string& dir, Rng& noise) {
  const double dt = 1.0 / spec.frame_rate;
  const int frames = static_cast<int>(std::lround(spec.duration * spec.frame_rate));
  csv::Writer out(dir + "/" + sc.id + ".csv");
  out.row({"agent_id", "t", "x", "y", "vx", "vy"});
  for (const auto& v : sc.vehicles) {
    dynamics::JointState joint;
    joint.a = v.state;
    auto states = dynamics::simulate_horizon(joint, v.control, {}, v.spec, {},
                                             {dt, frames - 1});
    for (int f = 0; f < frames; ++f) {
      const auto& s = states[f].a;
      const double nx = spec.noise_sd > 0 ? noise.normal(0, spec.noise_sd) : 0;
      const double ny = spec.noise_sd > 0 ? noise.normal(0, spec.noise_sd) : 0;
      out.row({v.id, format_double(f * dt), format_double(s.x + nx),
               format_double(s.y + ny),
               format_double(s.speed * std::cos(s.heading)),
               format_double(s.speed * std::sin(s.heading))});
    }
  }
  out.close();
}

}  // namespace

CorridorFiles generate_corridor(const CorridorSpec& spec, std::uint64_t seed,
                                const std::string& out_dir) {
  if (spec.n_groups < 1) throw ConfigError("synth: n_groups must be >= 1");
  if (spec.scenarios < 1) throw ConfigError("synth: scenarios must be >= 1");

  CorridorSpec cfg = spec;
  cfg.profiles.resize(static_cast<std::size_t>(cfg.n_groups));
  for (int k = 0; k < cfg.n_groups; ++k) {
    if (spec.profiles.size() > static_cast<std::size_t>(k)) continue;
    const double f =
        cfg.n_groups > 1 ? static_cast<double>(k) / (cfg.n_groups - 1) : 0.0;
    cfg.profiles[k] = {0.85 + 0.3 * f, 1.30 - 0.6 * f};
  }

  fs::create_directories(out_dir);
  const std::string traj_dir = out_dir + "/trajectories";
  fs::create_directories(traj_dir);

  CorridorFiles files;
  files.trajectory_dir = traj_dir;
  files.dims_csv = out_dir + "/dims.csv";
  files.boundaries_json = out_dir + "/boundaries.json";
  files.site_map_json = out_dir + "/site_map.json";
  files.ground_truth_csv = out_dir + "/ground_truth.csv";

  nlohmann::json site = nlohmann::json::array();
  nlohmann::json bounds = nlohmann::json::array();
  std::vector<detection::BoundaryPolyline> curbs;
  for (int k = 0; k < cfg.n_groups; ++k) {
    const double x0 = group_x0(k);
    const double x1 = x0 + kGroupLength;
    nlohmann::json g;
    g["group_id"] = k + 1;
    g["kind"] = k % 2 == 0 ? "segment" : "intersection";
    g["direction"] = k % 2 == 0 ? (k % 4 == 0 ? "NB" : "SB") : "none";
    g["polygon"] = {{x0, -12.0}, {x1, -12.0}, {x1, 40.0}, {x0, 40.0}};
    g["lane_count"] = 2.0 + k % 2;
    g["lane_width"] = 3.2 + 0.08 * k;
    g["driveway_density"] = 0.004 * (k % 3);
    g["median"] = k % 2 == 0 ? "undivided" : "divided";
    site.push_back(g);

    nlohmann::json curb;
    curb["id"] = "curb" + std::to_string(k + 1);
    curb["kind"] = "curb";
    curb["points"] = {{x0, kCurbY}, {x1, kCurbY}};
    bounds.push_back(curb);

    detection::BoundaryPolyline raw;
    raw.id = "curb" + std::to_string(k + 1);
    raw.kind = "curb";
    raw.points = {{x0, kCurbY}, {x1, kCurbY}};
    curbs.push_back(detection::densify(raw, 0.25));
  }
  {
    std::ofstream out(files.site_map_json);
    out << site.dump(2) << "\n";
    std::ofstream bout(files.boundaries_json);
    bout << bounds.dump(2) << "\n";
  }

  csv::Writer dims(files.dims_csv);
  dims.row({"agent_id", "length", "width", "wheelbase"});
  csv::Writer truth(files.ground_truth_csv);
  truth.row({"scenario", "kind", "ego", "other", "frame_t", "t_star"});

  const double dt = 1.0 / cfg.frame_rate;
  int n_truth = 0;
  for (int s = 0; s < cfg.scenarios; ++s) {
    Rng rng(seed, "scenario-" + std::to_string(s));
    const int k = s % cfg.n_groups;
    Scenario sc = build_scenario(s, cfg.n_groups, cfg.profiles[k],
                                 cfg.extra_vehicles, cfg.duration, dt,
                                 curbs[k], rng);
    Rng noise(seed, "noise-" + std::to_string(s));
    write_trajectories(sc, cfg, traj_dir, noise);
    for (const auto& v : sc.vehicles) {
      dims.row({v.id, format_double(v.spec.length), format_double(v.spec.width),
                format_double(v.spec.wheelbase)});
    }
    for (const auto& t : sc.truth) {
      truth.row({t.scenario, t.kind, t.ego, t.other, format_double(t.frame_t),
                 format_double(t.t_star)});
      ++n_truth;
    }
  }
  dims.close();
  truth.close();

  files.n_scenarios = cfg.scenarios;
  files.n_ground_truth = n_truth;
  return files;
}

}  // namespace corrisk::synth
