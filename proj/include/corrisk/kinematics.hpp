#pragma once

#include <string>
#include <vector>

namespace corrisk::kinematics {

struct RawFrame {
  double t = 0.0;   // s
  double x = 0.0;   // m
  double y = 0.0;   // m
  double vx = 0.0;  // m/s
  double vy = 0.0;  // m/s
};

// Time-ordered uniformly sampled track as read from the trajectory CSV.
struct RawTrack {
  std::string agent_id;
  std::vector<RawFrame> frames;
  double sample_period = 0.0;  // s, derived from timestamps
};

// Throws DataError unless frames are strictly increasing in t, uniformly
// spaced within 1e-9 s, and at least 5 long. Fills sample_period.
void validate(RawTrack& track);

struct VehicleDims {
  double wheelbase = 2.7;
  double length = 4.5;
  double width = 1.9;
};

struct ProcessedFrame {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  double speed = 0.0;     // m/s, >= 0
  double accel = 0.0;     // m/s^2, forward difference
  double heading = 0.0;   // radians, unwrapped
  double yaw_rate = 0.0;  // rad/s, forward difference of heading
  double steer = 0.0;     // radians, |steer| < pi/2
};

struct ProcessedTrack {
  std::string agent_id;
  std::vector<ProcessedFrame> frames;
  VehicleDims dims;
};

// Replaces x, y with a least-squares clamped cubic B-spline evaluated at the
// original timestamps. Control points: one per control_point_spacing frames,
// minimum 4; the first and last data points are interpolated exactly so the
// track's entry/exit positions stay put. t, vx, vy are untouched.
RawTrack smooth_positions(const RawTrack& track, int control_point_spacing);

// Euclidean norm of the velocity components, per frame.
std::vector<double> derive_speed(const RawTrack& track);

// Savitzky-Golay smoothing: each output is the center value of a local
// least-squares polynomial fit. Edges use shrunken asymmetric windows with
// the fit evaluated at the sample position. Windows longer than the signal
// are shrunk to the largest odd length that fits.
std::vector<double> sg_filter(const std::vector<double>& signal, int window,
                              int poly_order);

// Derives speed, acceleration, heading, yaw rate, and steering angle from a
// track. Headings come from position direction vectors and are unwrapped
// across +-pi. steer = atan(wheelbase * yaw_rate / speed), zeroed below
// 0.1 m/s where it is unobservable.
ProcessedTrack derive_dynamics(const RawTrack& track, const VehicleDims& dims);

// Same, but with a caller-supplied speed sequence (e.g. Savitzky-Golay
// filtered) feeding the acceleration and steering computations.
ProcessedTrack derive_dynamics(const RawTrack& track, const VehicleDims& dims,
                               const std::vector<double>& speed);

}  // namespace corrisk::kinematics
