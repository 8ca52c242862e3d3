#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "corrisk/detection.hpp"

namespace corrisk::synth {

// Per-group generator knobs; the variation across groups is the ground
// truth heterogeneity the hierarchical model is supposed to pick up.
struct GroupProfile {
  double speed_scale = 1.0;
  double gap_scale = 1.0;
};

struct CorridorSpec {
  int n_groups = 6;
  int scenarios = 360;       // distributed round-robin over groups
  int extra_vehicles = 2;    // filler vehicles per scenario, at most
  double noise_sd = 0.005;   // position noise on the emitted tracks
  double frame_rate = 10.0;  // Hz
  double duration = 11.0;    // s per scenario
  std::vector<GroupProfile> profiles;  // resized/defaulted to n_groups
};

struct GroundTruthEvent {
  std::string scenario;
  std::string kind;  // VV | VI
  std::string ego;
  std::string other;   // agent id or boundary id
  double frame_t = 0.0;  // initiating frame the entry refers to
  double t_star = 0.0;   // analytic contact time measured from that frame
};

struct CorridorFiles {
  std::string trajectory_dir;
  std::string dims_csv;
  std::string boundaries_json;
  std::string site_map_json;
  std::string ground_truth_csv;
  int n_scenarios = 0;
  int n_ground_truth = 0;
};

// Writes a bicycle-model-consistent corridor: trajectories with scripted
// conflicts (on-grid head-on closures, rear-end closures, boundary drifts,
// turning paths into a curb), vehicle dimensions, boundary polylines, the
// site map, and the analytic ground-truth contact times. Every conflict is
// built to reach contact just after the scenario ends, so the closure spans
// the whole observation window and the block's minimum TTC is a scripted
// group-dependent quantity rather than a collision artifact. Deterministic
// for a given seed.
CorridorFiles generate_corridor(const CorridorSpec& spec, std::uint64_t seed,
                                const std::string& out_dir);

}  // namespace corrisk::synth
