#include "corrisk/kinematics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "corrisk/errors.hpp"

namespace corrisk::kinematics {

void validate(RawTrack& track) {
  const auto& f = track.frames;
  if (f.size() < 5) {
    throw DataError("track " + track.agent_id + ": too short (" +
                    std::to_string(f.size()) + " frames, need >= 5)");
  }
  const double dt = f[1].t - f[0].t;
  if (!(dt > 0.0)) {
    throw DataError("track " + track.agent_id + ": timestamps not increasing");
  }
  for (std::size_t i = 1; i < f.size(); ++i) {
    const double step = f[i].t - f[i - 1].t;
    if (!(step > 0.0)) {
      throw DataError("track " + track.agent_id +
                      ": timestamps not strictly increasing at frame " +
                      std::to_string(i));
    }
    if (std::abs(step - dt) > 1e-9) {
      throw DataError("track " + track.agent_id +
                      ": non-uniform sampling at frame " + std::to_string(i));
    }
  }
  track.sample_period = dt;
}

namespace {

// Cubic B-spline basis on a clamped knot vector over [0, 1] with
// n_ctrl - 3 uniform spans. Returns the four nonzero basis values at u and
// the index of the first contributing control point.
struct BasisEval {
  int first = 0;
  double n[4] = {0, 0, 0, 0};
};

BasisEval cubic_basis(double u, int n_ctrl) {
  const int spans = n_ctrl - 3;
  int span = static_cast<int>(std::floor(u * spans));
  span = std::clamp(span, 0, spans - 1);
  const double local = u * spans - span;  // in [0, 1] within the span

  // Knot positions in span units; clamped ends repeat knots.
  auto knot = [&](int i) {
    return static_cast<double>(std::clamp(i - 3, 0, spans));
  };
  const double t = span + local;
  const int k = span + 3;  // global index with t in [knot(k), knot(k+1))

  // Cox-de Boor triangle for degree 3.
  double n_prev[4] = {1.0, 0.0, 0.0, 0.0};
  for (int d = 1; d <= 3; ++d) {
    double n_cur[4] = {0, 0, 0, 0};
    for (int j = 0; j <= d; ++j) {
      const int i = k - d + j;
      double left = 0.0;
      double right = 0.0;
      const double den_l = knot(i + d) - knot(i);
      if (den_l > 0 && j > 0) left = (t - knot(i)) / den_l * n_prev[j - 1];
      const double den_r = knot(i + d + 1) - knot(i + 1);
      if (den_r > 0 && j < d) right = (knot(i + d + 1) - t) / den_r * n_prev[j];
      n_cur[j] = left + right;
    }
    std::copy(n_cur, n_cur + 4, n_prev);
  }

  BasisEval out;
  out.first = k - 3;
  std::copy(n_prev, n_prev + 4, out.n);
  return out;
}

}  // namespace

RawTrack smooth_positions(const RawTrack& track, int control_point_spacing) {
  if (track.frames.size() < 5) {
    throw DataError("track " + track.agent_id +
                    ": too short for spline smoothing");
  }
  if (control_point_spacing < 2) {
    throw ConfigError("smooth_positions: control_point_spacing must be >= 2");
  }
  const int n = static_cast<int>(track.frames.size());
  const int n_ctrl =
      std::max(4, (n + control_point_spacing - 1) / control_point_spacing);

  const double t0 = track.frames.front().t;
  const double t1 = track.frames.back().t;

  Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(n, n_ctrl);
  for (int i = 0; i < n; ++i) {
    const double u = (track.frames[i].t - t0) / (t1 - t0);
    const BasisEval b = cubic_basis(u, n_ctrl);
    for (int j = 0; j < 4; ++j) basis(i, b.first + j) = b.n[j];
  }

  // Clamped ends: the spline hits the first and last control point, so
  // pinning those to the data endpoints interpolates them exactly. The
  // interior control points are the least-squares solution.
  Eigen::MatrixXd data(n, 2);
  for (int i = 0; i < n; ++i) {
    data(i, 0) = track.frames[i].x;
    data(i, 1) = track.frames[i].y;
  }
  Eigen::MatrixXd ctrl = Eigen::MatrixXd::Zero(n_ctrl, 2);
  ctrl.row(0) = data.row(0);
  ctrl.row(n_ctrl - 1) = data.row(n - 1);

  if (n_ctrl > 2) {
    Eigen::MatrixXd inner = basis.middleCols(1, n_ctrl - 2);
    Eigen::MatrixXd rhs = data - basis.col(0) * ctrl.row(0) -
                          basis.col(n_ctrl - 1) * ctrl.row(n_ctrl - 1);
    ctrl.middleRows(1, n_ctrl - 2) =
        inner.colPivHouseholderQr().solve(rhs);
  }

  Eigen::MatrixXd fitted = basis * ctrl;
  RawTrack out = track;
  for (int i = 0; i < n; ++i) {
    out.frames[i].x = fitted(i, 0);
    out.frames[i].y = fitted(i, 1);
  }
  return out;
}

std::vector<double> derive_speed(const RawTrack& track) {
  std::vector<double> v;
  v.reserve(track.frames.size());
  for (const auto& f : track.frames) {
    v.push_back(std::hypot(f.vx, f.vy));
  }
  return v;
}

std::vector<double> sg_filter(const std::vector<double>& signal, int window,
                              int poly_order) {
  if (poly_order < 0) throw ConfigError("sg_filter: negative poly_order");
  if (poly_order >= window) {
    throw ConfigError("sg_filter: poly_order (" + std::to_string(poly_order) +
                      ") must be < window (" + std::to_string(window) + ")");
  }
  if (window % 2 == 0) throw ConfigError("sg_filter: window must be odd");

  const int n = static_cast<int>(signal.size());
  if (n == 0) return {};

  int w = window;
  if (w > n) w = (n % 2 == 1) ? n : n - 1;  // largest odd length that fits
  if (w < 1) w = 1;
  const int half = w / 2;

  // Fits a polynomial over [lo, hi] and evaluates it at center.
  auto local_fit = [&](int lo, int hi, int center) {
    const int pts = hi - lo + 1;
    const int order = std::min(poly_order, pts - 1);
    Eigen::MatrixXd design(pts, order + 1);
    Eigen::VectorXd rhs(pts);
    for (int i = 0; i < pts; ++i) {
      const double d = static_cast<double>(lo + i - center);
      double pw = 1.0;
      for (int j = 0; j <= order; ++j) {
        design(i, j) = pw;
        pw *= d;
      }
      rhs(i) = signal[static_cast<std::size_t>(lo + i)];
    }
    Eigen::VectorXd coef = design.colPivHouseholderQr().solve(rhs);
    return coef(0);  // constant term = value at the evaluation point
  };

  // Interior samples share one symmetric stencil; precompute its weights.
  Eigen::VectorXd interior_weights;
  if (n >= w) {
    Eigen::MatrixXd design(w, poly_order + 1);
    for (int i = 0; i < w; ++i) {
      const double d = static_cast<double>(i - half);
      double pw = 1.0;
      for (int j = 0; j <= poly_order; ++j) {
        design(i, j) = pw;
        pw *= d;
      }
    }
    Eigen::MatrixXd gram = design.transpose() * design;
    interior_weights =
        gram.ldlt().solve(design.row(half).transpose().eval());
    interior_weights = design * interior_weights;  // projection row
  }

  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    if (i >= half && i + half < n) {
      double acc = 0.0;
      for (int j = 0; j < w; ++j) {
        acc += interior_weights(j) * signal[static_cast<std::size_t>(i - half + j)];
      }
      out[static_cast<std::size_t>(i)] = acc;
    } else {
      const int lo = std::max(0, i - half);
      const int hi = std::min(n - 1, i + half);
      out[static_cast<std::size_t>(i)] = local_fit(lo, hi, i);
    }
  }
  return out;
}

ProcessedTrack derive_dynamics(const RawTrack& track, const VehicleDims& dims) {
  return derive_dynamics(track, dims, derive_speed(track));
}

ProcessedTrack derive_dynamics(const RawTrack& track, const VehicleDims& dims,
                               const std::vector<double>& speed) {
  if (!(dims.wheelbase > 0.0)) {
    throw ConfigError("derive_dynamics: wheelbase must be positive");
  }
  if (speed.size() != track.frames.size()) {
    throw DataError("derive_dynamics: speed length mismatch");
  }
  const std::size_t n = track.frames.size();
  const double dt = track.sample_period;

  ProcessedTrack out;
  out.agent_id = track.agent_id;
  out.dims = dims;
  out.frames.resize(n);

  for (std::size_t i = 0; i < n; ++i) {
    out.frames[i].t = track.frames[i].t;
    out.frames[i].x = track.frames[i].x;
    out.frames[i].y = track.frames[i].y;
    out.frames[i].speed = std::max(0.0, speed[i]);
  }

  for (std::size_t i = 0; i + 1 < n; ++i) {
    out.frames[i].accel = (out.frames[i + 1].speed - out.frames[i].speed) / dt;
  }
  if (n >= 2) out.frames[n - 1].accel = out.frames[n - 2].accel;

  // Heading from the direction of travel; zero-displacement frames carry the
  // previous heading forward.
  double prev_heading = 0.0;
  if (std::hypot(track.frames[0].vx, track.frames[0].vy) > 1e-9) {
    prev_heading = std::atan2(track.frames[0].vy, track.frames[0].vx);
  }
  for (std::size_t i = 0; i < n; ++i) {
    double heading = prev_heading;
    if (i + 1 < n) {
      const double dx = track.frames[i + 1].x - track.frames[i].x;
      const double dy = track.frames[i + 1].y - track.frames[i].y;
      if (std::hypot(dx, dy) > 1e-9) heading = std::atan2(dy, dx);
    }
    if (i > 0) {
      // Unwrap against the previous frame.
      double delta = heading - out.frames[i - 1].heading;
      const double two_pi = 6.283185307179586476925287;
      delta -= two_pi * std::round(delta / two_pi);
      heading = out.frames[i - 1].heading + delta;
    }
    out.frames[i].heading = heading;
    prev_heading = heading;
  }

  for (std::size_t i = 0; i + 1 < n; ++i) {
    out.frames[i].yaw_rate =
        (out.frames[i + 1].heading - out.frames[i].heading) / dt;
  }
  if (n >= 2) out.frames[n - 1].yaw_rate = out.frames[n - 2].yaw_rate;

  for (std::size_t i = 0; i < n; ++i) {
    const double v = out.frames[i].speed;
    out.frames[i].steer =
        v < 0.1 ? 0.0 : std::atan(dims.wheelbase * out.frames[i].yaw_rate / v);
  }
  return out;
}

}  // namespace corrisk::kinematics
