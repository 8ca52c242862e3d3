#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "corrisk/blocks.hpp"
#include "corrisk/detection.hpp"
#include "corrisk/hbsgrp.hpp"
#include "corrisk/risk.hpp"
#include "corrisk/synth.hpp"

namespace corrisk::pipeline {

struct KinematicsConfig {
  int control_point_spacing = 5;
  int sg_window = 109;  // spans an 11 s scenario at 10 Hz
  int sg_poly_order = 2;
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  int jobs = 1;

  std::string raw_dir;
  std::string dims_path;
  std::string boundaries_path;
  std::string site_map_path;
  std::string out_dir = "out";

  KinematicsConfig kinematics;
  detection::ScanConfig scan;
  double boundary_spacing = 0.25;
  blocks::BlockConfig block;

  std::string dataset = "vv";  // vv | vi
  hbsgrp::ModelSpec model;     // n_groups filled from the site map
  hbsgrp::PriorConfig priors;
  hbsgrp::McmcConfig mcmc;

  risk::CorConfig cor;
  double sweep_lo = -0.9;
  double sweep_hi = -0.1;
  double sweep_step = 0.1;

  synth::CorridorSpec synth_spec;

  std::string config_path;  // source file, hashed into manifests
};

// Parses the single JSON config document. Unknown keys are rejected so
// typos fail loudly. Throws ConfigError.
PipelineConfig load_config(const std::string& path);

// Stage drivers; each writes its outputs plus a manifest JSON recording
// input content hashes, the config hash, the seed, and wall time.
struct StageReport {
  std::string stage;
  int items = 0;       // stage-specific count (tracks, events, records...)
  std::string detail;  // one-line human summary
};

StageReport cmd_synth(const PipelineConfig& cfg);
StageReport cmd_preprocess(const PipelineConfig& cfg);
StageReport cmd_detect(const PipelineConfig& cfg);
StageReport cmd_blocks(const PipelineConfig& cfg);
StageReport cmd_fit(const PipelineConfig& cfg);
StageReport cmd_risk(const PipelineConfig& cfg);
StageReport cmd_validate(const PipelineConfig& cfg);

// FNV-1a content hash, hex-encoded; the manifest chain primitive.
std::string file_hash(const std::string& path);

}  // namespace corrisk::pipeline
