#pragma once

#include <optional>
#include <string>
#include <vector>

#include "corrisk/dynamics.hpp"
#include "corrisk/geometry.hpp"
#include "corrisk/kinematics.hpp"

namespace corrisk::detection {

// Static roadway boundary as a polyline of discrete points.
struct BoundaryPolyline {
  std::string id;
  std::string kind;  // lane-edge, curb, median, barrier
  std::vector<geometry::Point> points;
};

// Throws DataError on < 2 points, repeated consecutive points, or
// non-finite coordinates.
void validate(const BoundaryPolyline& boundary);

// Inserts points along each segment so consecutive vertices are at most
// max_spacing apart. Vertex sampling then approximates the continuous edge.
BoundaryPolyline densify(const BoundaryPolyline& boundary, double max_spacing);

// Loads a JSON array of {id, kind, points: [[x, y], ...]} and densifies
// every polyline to max_spacing.
std::vector<BoundaryPolyline> load_boundaries(const std::string& path,
                                              double max_spacing = 0.25);

// Corner proximity can demand both coordinate gaps within epsilon (And)
// or either one (Or). And matches the componentwise proximity rule; Or is
// kept as an option because it widens matches considerably.
enum class VvRule { And, Or };

struct DetectionConfig {
  double epsilon = 0.30;  // m
  dynamics::IntegrationConfig horizon{0.1, 30};
  VvRule vv_rule = VvRule::And;
};

// 1-based index pair; first = corner of the ego/first vehicle, second =
// corner of the other vehicle or boundary vertex.
struct IndexPair {
  int first = 0;
  int second = 0;
};

// Scans all 16 corner pairs in row-major (j, k) order and returns the first
// pair whose coordinate gaps satisfy the rule.
std::optional<IndexPair> check_vv(const geometry::CornerSet& a,
                                  const geometry::CornerSet& b,
                                  const DetectionConfig& cfg);

// Scans corners (outer) against boundary vertices (inner) and returns the
// first pair within Euclidean distance epsilon.
std::optional<IndexPair> check_vi(const geometry::CornerSet& corners,
                                  const BoundaryPolyline& boundary,
                                  double epsilon);

enum class EventKind { VehicleVehicle, VehicleInfrastructure };

struct NearMissEvent {
  EventKind kind = EventKind::VehicleVehicle;
  double t_collision = 0.0;  // s into the horizon; equals the 2D-TTC
  double ttc = 0.0;
  std::string ego_id;
  std::string other_id;  // agent id (VV) or boundary id (VI)
  IndexPair corners;     // (j, k) for VV, (j, vertex) for VI
  double block_time = 0.0;  // timestamp of the initiating frame
};

struct VehicleCase {
  dynamics::VehicleState state;
  dynamics::ControlInput control;
  dynamics::VehicleSpec spec;
  std::string id;
};

// Forward-simulates one or two vehicles under zero-order-hold controls and
// returns the earliest proximity event, if any. The initial configuration is
// checked first (t_collision = 0), then each integration step at
// t = (n+1)*dt. At equal steps vehicle-vehicle precedes vehicle-boundary,
// and the lowest scan index wins. Throws NumericError naming the step if
// the state turns non-finite.
std::optional<NearMissEvent> detect(const VehicleCase& ego,
                                    const VehicleCase* other,
                                    const std::vector<BoundaryPolyline>& boundaries,
                                    const DetectionConfig& cfg,
                                    double block_time);

// Interaction descriptors attached to each event at its initiating frame.
// Vehicle-boundary events use the ego quantities alone; heading_diff is
// then measured against the boundary direction at the nearest vertex.
struct EventCovariates {
  double rel_speed = 0.0;     // m/s
  double rel_acc = 0.0;       // m/s^2, positive part
  double rel_dec = 0.0;       // m/s^2, positive part of -rel accel
  double rel_dist = 0.0;      // m at the initiating frame
  double jerk = 0.0;          // m/s^3, ego
  double heading_diff = 0.0;  // rad
  double steering_diff = 0.0; // rad
  double volume = 0.0;        // vehicles present in the scenario
  double turn_left = 0.0;     // indicator from the ego steering angle
  double turn_right = 0.0;
};

struct EventRecord {
  std::string scenario;
  NearMissEvent event;
  EventCovariates covariates;
  double ego_x = 0.0;  // initiating position, drives site assignment
  double ego_y = 0.0;
  double ego_heading = 0.0;
};

struct ScanConfig {
  DetectionConfig det;
  double vv_gate = 50.0;  // m, pair prefilter; conservative at 35 m/s over 3 s
  double vi_gate = 15.0;  // m, boundary prefilter
};

// Runs detect for every frame, every gated unordered vehicle pair, and every
// gated vehicle-boundary combination. Output is sorted by (frame time,
// ego id, other id) and is identical regardless of evaluation order.
// Tracks must share one time grid.
std::vector<EventRecord> scan_scenario(
    const std::string& scenario_id,
    const std::vector<kinematics::ProcessedTrack>& tracks,
    const std::vector<BoundaryPolyline>& boundaries, const ScanConfig& cfg);

}  // namespace corrisk::detection
