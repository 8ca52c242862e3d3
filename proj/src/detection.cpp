#include "corrisk/detection.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "corrisk/errors.hpp"
#include "corrisk/numeric.hpp"
#include "json.hpp"

namespace corrisk::detection {

void validate(const BoundaryPolyline& boundary) {
  if (boundary.points.size() < 2) {
    throw DataError("boundary " + boundary.id + ": needs at least 2 points");
  }
  for (std::size_t i = 0; i < boundary.points.size(); ++i) {
    const auto& p = boundary.points[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw DataError("boundary " + boundary.id + ": non-finite coordinate");
    }
    if (i > 0 && p.x == boundary.points[i - 1].x &&
        p.y == boundary.points[i - 1].y) {
      throw DataError("boundary " + boundary.id +
                      ": repeated consecutive point at index " +
                      std::to_string(i));
    }
  }
}

BoundaryPolyline densify(const BoundaryPolyline& boundary, double max_spacing) {
  validate(boundary);
  BoundaryPolyline out;
  out.id = boundary.id;
  out.kind = boundary.kind;
  for (std::size_t i = 0; i + 1 < boundary.points.size(); ++i) {
    const auto& a = boundary.points[i];
    const auto& b = boundary.points[i + 1];
    const double len = geometry::distance(a, b);
    const int pieces = std::max(1, static_cast<int>(std::ceil(len / max_spacing)));
    for (int j = 0; j < pieces; ++j) {
      const double f = static_cast<double>(j) / pieces;
      out.points.push_back({a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)});
    }
  }
  out.points.push_back(boundary.points.back());
  return out;
}

std::vector<BoundaryPolyline> load_boundaries(const std::string& path,
                                              double max_spacing) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  if (!doc.is_array()) throw DataError(path + ": expected a JSON array");
  std::vector<BoundaryPolyline> out;
  for (const auto& item : doc) {
    BoundaryPolyline b;
    b.id = item.at("id").get<std::string>();
    b.kind = item.value("kind", "lane-edge");
    for (const auto& pt : item.at("points")) {
      b.points.push_back({pt.at(0).get<double>(), pt.at(1).get<double>()});
    }
    out.push_back(densify(b, max_spacing));
  }
  return out;
}

std::optional<IndexPair> check_vv(const geometry::CornerSet& a,
                                  const geometry::CornerSet& b,
                                  const DetectionConfig& cfg) {
  for (int j = 0; j < 4; ++j) {
    for (int k = 0; k < 4; ++k) {
      const double dx = std::abs(a[j].x - b[k].x);
      const double dy = std::abs(a[j].y - b[k].y);
      const bool hit = cfg.vv_rule == VvRule::And
                           ? (dx <= cfg.epsilon && dy <= cfg.epsilon)
                           : (dx <= cfg.epsilon || dy <= cfg.epsilon);
      if (hit) return IndexPair{j + 1, k + 1};
    }
  }
  return std::nullopt;
}

std::optional<IndexPair> check_vi(const geometry::CornerSet& corners,
                                  const BoundaryPolyline& boundary,
                                  double epsilon) {
  const double eps2 = epsilon * epsilon;
  for (int j = 0; j < 4; ++j) {
    for (std::size_t l = 0; l < boundary.points.size(); ++l) {
      const double dx = corners[j].x - boundary.points[l].x;
      const double dy = corners[j].y - boundary.points[l].y;
      if (dx * dx + dy * dy <= eps2) {
        return IndexPair{j + 1, static_cast<int>(l) + 1};
      }
    }
  }
  return std::nullopt;
}

namespace {

bool finite_state(const dynamics::VehicleState& s) {
  return std::isfinite(s.x) && std::isfinite(s.y) && std::isfinite(s.heading) &&
         std::isfinite(s.speed);
}

// Proximity checks for one simulated configuration; kept identical for the
// initial state and every integration step.
std::optional<NearMissEvent> check_configuration(
    const dynamics::JointState& joint, const VehicleCase& ego,
    const VehicleCase* other, const std::vector<BoundaryPolyline>& boundaries,
    const DetectionConfig& cfg, double t_c, double block_time) {
  const auto ego_corners = geometry::global_corners(joint.a, ego.spec);

  if (other != nullptr) {
    const auto other_corners = geometry::global_corners(joint.b, other->spec);
    if (auto pair = check_vv(ego_corners, other_corners, cfg)) {
      return NearMissEvent{EventKind::VehicleVehicle, t_c,  t_c,
                           ego.id,                    other->id, *pair,
                           block_time};
    }
  }
  for (const auto& boundary : boundaries) {
    if (auto pair = check_vi(ego_corners, boundary, cfg.epsilon)) {
      return NearMissEvent{EventKind::VehicleInfrastructure,
                           t_c,
                           t_c,
                           ego.id,
                           boundary.id,
                           *pair,
                           block_time};
    }
    if (other != nullptr) {
      const auto other_corners = geometry::global_corners(joint.b, other->spec);
      if (auto pair = check_vi(other_corners, boundary, cfg.epsilon)) {
        return NearMissEvent{EventKind::VehicleInfrastructure,
                             t_c,
                             t_c,
                             other->id,
                             boundary.id,
                             *pair,
                             block_time};
      }
    }
  }
  return std::nullopt;
}

}  // namespace

std::optional<NearMissEvent> detect(const VehicleCase& ego,
                                    const VehicleCase* other,
                                    const std::vector<BoundaryPolyline>& boundaries,
                                    const DetectionConfig& cfg,
                                    double block_time) {
  dynamics::JointState joint;
  joint.a = ego.state;
  if (other != nullptr) joint.b = other->state;
  const dynamics::ControlInput other_control =
      other != nullptr ? other->control : dynamics::ControlInput{};
  const dynamics::VehicleSpec other_spec =
      other != nullptr ? other->spec : dynamics::VehicleSpec{};

  // Already-overlapping initial configurations are reported with
  // t_collision = 0; downstream block maxima sampling drops them.
  if (auto ev = check_configuration(joint, ego, other, boundaries, cfg, 0.0,
                                    block_time)) {
    return ev;
  }

  for (int n = 0; n < cfg.horizon.steps; ++n) {
    joint = dynamics::rk4_step(joint, ego.control, other_control, ego.spec,
                               other_spec, cfg.horizon.dt);
    if (!finite_state(joint.a) || !finite_state(joint.b)) {
      throw NumericError("detect: integration diverged at step " +
                         std::to_string(n + 1));
    }
    const double t_c = (n + 1) * cfg.horizon.dt;
    if (auto ev = check_configuration(joint, ego, other, boundaries, cfg, t_c,
                                      block_time)) {
      return ev;
    }
  }
  return std::nullopt;
}

namespace {

struct FrameView {
  const kinematics::ProcessedFrame* frame;
  const kinematics::ProcessedTrack* track;
};

VehicleCase make_case(const FrameView& v) {
  VehicleCase c;
  c.state = {v.frame->x, v.frame->y, v.frame->heading, v.frame->speed};
  c.control = {v.frame->accel, v.frame->steer};
  c.spec = {v.track->dims.wheelbase, v.track->dims.length, v.track->dims.width};
  c.id = v.track->agent_id;
  return c;
}

double ego_jerk(const kinematics::ProcessedTrack& track, std::size_t f,
                double dt) {
  const auto& frames = track.frames;
  if (frames.size() < 2) return 0.0;
  if (f + 1 < frames.size()) {
    return (frames[f + 1].accel - frames[f].accel) / dt;
  }
  return (frames[f].accel - frames[f - 1].accel) / dt;
}

// Direction of the boundary segment adjacent to the vertex nearest to p.
double boundary_direction(const BoundaryPolyline& b, const geometry::Point& p) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < b.points.size(); ++i) {
    const double d = geometry::distance(p, b.points[i]);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  const std::size_t a = best + 1 < b.points.size() ? best : best - 1;
  const std::size_t c = best + 1 < b.points.size() ? best + 1 : best;
  return std::atan2(b.points[c].y - b.points[a].y,
                    b.points[c].x - b.points[a].x);
}

double min_corner_vertex_distance(const geometry::CornerSet& corners,
                                  const BoundaryPolyline& b) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& corner : corners) {
    for (const auto& v : b.points) {
      best = std::min(best, geometry::distance(corner, v));
    }
  }
  return best;
}

constexpr double kTurnThreshold = 0.03;  // rad of steering

EventCovariates pair_covariates(const kinematics::ProcessedTrack& ego,
                                const kinematics::ProcessedTrack& other,
                                std::size_t f, double dt, int volume) {
  const auto& fe = ego.frames[f];
  const auto& fo = other.frames[f];
  EventCovariates c;
  const double evx = fe.speed * std::cos(fe.heading);
  const double evy = fe.speed * std::sin(fe.heading);
  const double ovx = fo.speed * std::cos(fo.heading);
  const double ovy = fo.speed * std::sin(fo.heading);
  c.rel_speed = std::hypot(evx - ovx, evy - ovy);
  const double rel_a = fe.accel - fo.accel;
  c.rel_acc = std::max(rel_a, 0.0);
  c.rel_dec = std::max(-rel_a, 0.0);
  c.rel_dist = std::hypot(fe.x - fo.x, fe.y - fo.y);
  c.jerk = ego_jerk(ego, f, dt);
  c.heading_diff = std::fmod(std::abs(fe.heading - fo.heading),
                             2.0 * 3.141592653589793238462643);
  c.steering_diff = std::abs(fe.steer - fo.steer);
  c.volume = volume;
  c.turn_left = fe.steer > kTurnThreshold ? 1.0 : 0.0;
  c.turn_right = fe.steer < -kTurnThreshold ? 1.0 : 0.0;
  return c;
}

EventCovariates boundary_covariates(const kinematics::ProcessedTrack& ego,
                                    std::size_t f, double dt,
                                    const BoundaryPolyline& boundary,
                                    int volume) {
  const auto& fe = ego.frames[f];
  EventCovariates c;
  c.rel_speed = fe.speed;
  c.rel_acc = std::max(fe.accel, 0.0);
  c.rel_dec = std::max(-fe.accel, 0.0);
  const auto corners = geometry::global_corners(
      {fe.x, fe.y, fe.heading, fe.speed},
      {ego.dims.wheelbase, ego.dims.length, ego.dims.width});
  c.rel_dist = min_corner_vertex_distance(corners, boundary);
  c.jerk = ego_jerk(ego, f, dt);
  c.heading_diff =
      wrap_to_pi(fe.heading - boundary_direction(boundary, {fe.x, fe.y}));
  c.steering_diff = fe.steer;
  c.volume = volume;
  c.turn_left = fe.steer > kTurnThreshold ? 1.0 : 0.0;
  c.turn_right = fe.steer < -kTurnThreshold ? 1.0 : 0.0;
  return c;
}

struct Bounds {
  double min_x, max_x, min_y, max_y;
};

Bounds boundary_bounds(const BoundaryPolyline& b) {
  Bounds r{b.points[0].x, b.points[0].x, b.points[0].y, b.points[0].y};
  for (const auto& p : b.points) {
    r.min_x = std::min(r.min_x, p.x);
    r.max_x = std::max(r.max_x, p.x);
    r.min_y = std::min(r.min_y, p.y);
    r.max_y = std::max(r.max_y, p.y);
  }
  return r;
}

}  // namespace

std::vector<EventRecord> scan_scenario(
    const std::string& scenario_id,
    const std::vector<kinematics::ProcessedTrack>& tracks,
    const std::vector<BoundaryPolyline>& boundaries, const ScanConfig& cfg) {
  if (tracks.empty()) return {};
  const std::size_t n_frames = tracks[0].frames.size();
  for (const auto& t : tracks) {
    if (t.frames.size() != n_frames) {
      throw DataError("scenario " + scenario_id + ": track " + t.agent_id +
                      " is not aligned to the scenario time grid");
    }
    for (std::size_t f = 0; f < n_frames; ++f) {
      if (std::abs(t.frames[f].t - tracks[0].frames[f].t) > 1e-9) {
        throw DataError("scenario " + scenario_id + ": track " + t.agent_id +
                        " timestamps differ from the scenario grid");
      }
    }
  }
  const double dt =
      n_frames > 1 ? tracks[0].frames[1].t - tracks[0].frames[0].t : 0.1;

  // Track order by agent id fixes ego/other roles deterministically.
  std::vector<const kinematics::ProcessedTrack*> order;
  for (const auto& t : tracks) order.push_back(&t);
  std::sort(order.begin(), order.end(),
            [](const auto* a, const auto* b) { return a->agent_id < b->agent_id; });

  std::vector<Bounds> boxes;
  boxes.reserve(boundaries.size());
  for (const auto& b : boundaries) boxes.push_back(boundary_bounds(b));

  // Single-boundary cases prebuilt so the frame loop does not copy polylines.
  std::vector<std::vector<BoundaryPolyline>> singles;
  singles.reserve(boundaries.size());
  for (const auto& b : boundaries) singles.push_back({b});

  const int volume = static_cast<int>(tracks.size());
  std::vector<EventRecord> out;

  auto scan_error = [&](const NumericError& e, std::size_t f,
                        const std::string& ids) -> NumericError {
    return NumericError("scenario " + scenario_id + ", frame " +
                        std::to_string(f) + ", " + ids + ": " + e.what());
  };

  for (std::size_t f = 0; f < n_frames; ++f) {
    for (std::size_t i = 0; i < order.size(); ++i) {
      const auto& ego_track = *order[i];
      const auto& fe = ego_track.frames[f];
      FrameView ego_view{&fe, &ego_track};

      for (std::size_t j = i + 1; j < order.size(); ++j) {
        const auto& other_track = *order[j];
        const auto& fo = other_track.frames[f];
        if (std::hypot(fe.x - fo.x, fe.y - fo.y) > cfg.vv_gate) continue;

        VehicleCase ego_case = make_case(ego_view);
        VehicleCase other_case = make_case({&fo, &other_track});
        std::optional<NearMissEvent> ev;
        try {
          ev = detect(ego_case, &other_case, {}, cfg.det, fe.t);
        } catch (const NumericError& e) {
          throw scan_error(e, f, ego_track.agent_id + "/" + other_track.agent_id);
        }
        if (ev) {
          EventRecord rec;
          rec.scenario = scenario_id;
          rec.event = *ev;
          rec.covariates = pair_covariates(ego_track, other_track, f, dt, volume);
          rec.ego_x = fe.x;
          rec.ego_y = fe.y;
          rec.ego_heading = fe.heading;
          out.push_back(std::move(rec));
        }
      }

      for (std::size_t b = 0; b < boundaries.size(); ++b) {
        const auto& box = boxes[b];
        if (fe.x < box.min_x - cfg.vi_gate || fe.x > box.max_x + cfg.vi_gate ||
            fe.y < box.min_y - cfg.vi_gate || fe.y > box.max_y + cfg.vi_gate) {
          continue;
        }
        double nearest = std::numeric_limits<double>::infinity();
        for (const auto& p : boundaries[b].points) {
          nearest = std::min(nearest, std::hypot(fe.x - p.x, fe.y - p.y));
        }
        if (nearest > cfg.vi_gate) continue;

        VehicleCase ego_case = make_case(ego_view);
        std::optional<NearMissEvent> ev;
        try {
          ev = detect(ego_case, nullptr, singles[b], cfg.det, fe.t);
        } catch (const NumericError& e) {
          throw scan_error(e, f, ego_track.agent_id + "/" + boundaries[b].id);
        }
        if (ev) {
          EventRecord rec;
          rec.scenario = scenario_id;
          rec.event = *ev;
          rec.covariates =
              boundary_covariates(ego_track, f, dt, boundaries[b], volume);
          rec.ego_x = fe.x;
          rec.ego_y = fe.y;
          rec.ego_heading = fe.heading;
          out.push_back(std::move(rec));
        }
      }
    }
  }

  std::sort(out.begin(), out.end(), [](const EventRecord& a, const EventRecord& b) {
    if (a.event.block_time != b.event.block_time) {
      return a.event.block_time < b.event.block_time;
    }
    if (a.event.ego_id != b.event.ego_id) return a.event.ego_id < b.event.ego_id;
    if (a.event.other_id != b.event.other_id) {
      return a.event.other_id < b.event.other_id;
    }
    return a.event.kind == EventKind::VehicleVehicle &&
           b.event.kind == EventKind::VehicleInfrastructure;
  });
  return out;
}

}  // namespace corrisk::detection
