#pragma once

#include <array>
#include <vector>

namespace corrisk::dynamics {

// Planar state of one vehicle: global center position, heading, speed.
struct VehicleState {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // radians
  double speed = 0.0;    // m/s, kept >= 0 by the integrator
};

// Zero-order-hold control over the prediction horizon.
struct ControlInput {
  double accel = 0.0;  // m/s^2
  double steer = 0.0;  // radians, |steer| < pi/2
};

struct VehicleSpec {
  double wheelbase = 2.7;  // m, drives turn curvature
  double length = 4.5;     // m, footprint
  double width = 1.9;      // m, footprint
};

// Two-vehicle joint state; component order a then b.
struct JointState {
  VehicleState a;
  VehicleState b;
};

struct IntegrationConfig {
  double dt = 0.1;  // s
  int steps = 30;   // horizon = steps * dt
};

using RateVector = std::array<double, 8>;

// Instantaneous rates (x_dot, y_dot, heading_dot, speed_dot) per vehicle,
// concatenated a-then-b. heading_dot = speed / wheelbase * tan(steer).
RateVector vector_field(const JointState& s, const ControlInput& ua,
                        const ControlInput& ub, const VehicleSpec& spec_a,
                        const VehicleSpec& spec_b);

// Classic fourth-order Runge-Kutta update over dt. Speeds are clamped at
// zero after the update so sustained braking stops the vehicle instead of
// reversing it.
JointState rk4_step(const JointState& s, const ControlInput& ua,
                    const ControlInput& ub, const VehicleSpec& spec_a,
                    const VehicleSpec& spec_b, double dt);

// States at t = 0, dt, ..., steps*dt; index 0 is the initial state.
std::vector<JointState> simulate_horizon(const JointState& s0,
                                         const ControlInput& ua,
                                         const ControlInput& ub,
                                         const VehicleSpec& spec_a,
                                         const VehicleSpec& spec_b,
                                         const IntegrationConfig& cfg);

}  // namespace corrisk::dynamics
