#include "corrisk/dynamics.hpp"

#include <cmath>

namespace corrisk::dynamics {

namespace {

void single_rates(const VehicleState& s, const ControlInput& u,
                  const VehicleSpec& spec, double* out) {
  out[0] = s.speed * std::cos(s.heading);
  out[1] = s.speed * std::sin(s.heading);
  out[2] = s.speed / spec.wheelbase * std::tan(u.steer);
  out[3] = u.accel;
}

JointState offset(const JointState& s, const RateVector& k, double h) {
  JointState r = s;
  r.a.x += h * k[0];
  r.a.y += h * k[1];
  r.a.heading += h * k[2];
  r.a.speed += h * k[3];
  r.b.x += h * k[4];
  r.b.y += h * k[5];
  r.b.heading += h * k[6];
  r.b.speed += h * k[7];
  return r;
}

}  // namespace

RateVector vector_field(const JointState& s, const ControlInput& ua,
                        const ControlInput& ub, const VehicleSpec& spec_a,
                        const VehicleSpec& spec_b) {
  RateVector k;
  single_rates(s.a, ua, spec_a, k.data());
  single_rates(s.b, ub, spec_b, k.data() + 4);
  return k;
}

JointState rk4_step(const JointState& s, const ControlInput& ua,
                    const ControlInput& ub, const VehicleSpec& spec_a,
                    const VehicleSpec& spec_b, double dt) {
  const RateVector k1 = vector_field(s, ua, ub, spec_a, spec_b);
  const RateVector k2 =
      vector_field(offset(s, k1, dt / 2.0), ua, ub, spec_a, spec_b);
  const RateVector k3 =
      vector_field(offset(s, k2, dt / 2.0), ua, ub, spec_a, spec_b);
  const RateVector k4 = vector_field(offset(s, k3, dt), ua, ub, spec_a, spec_b);

  RateVector k;
  for (int i = 0; i < 8; ++i) {
    k[i] = (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
  JointState next = offset(s, k, dt / 6.0);
  if (next.a.speed < 0.0) next.a.speed = 0.0;
  if (next.b.speed < 0.0) next.b.speed = 0.0;
  return next;
}

std::vector<JointState> simulate_horizon(const JointState& s0,
                                         const ControlInput& ua,
                                         const ControlInput& ub,
                                         const VehicleSpec& spec_a,
                                         const VehicleSpec& spec_b,
                                         const IntegrationConfig& cfg) {
  std::vector<JointState> states;
  states.reserve(static_cast<std::size_t>(cfg.steps) + 1);
  states.push_back(s0);
  for (int n = 0; n < cfg.steps; ++n) {
    states.push_back(rk4_step(states.back(), ua, ub, spec_a, spec_b, cfg.dt));
  }
  return states;
}

}  // namespace corrisk::dynamics
