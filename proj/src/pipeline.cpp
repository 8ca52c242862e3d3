#include "corrisk/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "corrisk/csv.hpp"
#include "corrisk/errors.hpp"
#include "corrisk/kinematics.hpp"
#include "corrisk/numeric.hpp"
#include "json.hpp"

namespace corrisk::pipeline {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

double parse_double(const std::string& s, const std::string& context) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc{} || res.ptr != last) {
    throw DataError(context + ": cannot parse number '" + s + "'");
  }
  return v;
}

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& context) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("config " + context + ": unknown key '" + key + "'");
    }
  }
}

std::vector<std::string> sorted_csv_files(const std::string& dir) {
  std::vector<std::string> files;
  if (!fs::exists(dir)) return files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") {
      files.push_back(entry.path().string());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::string stem_of(const std::string& path) {
  return fs::path(path).stem().string();
}

class Manifest {
 public:
  Manifest(const PipelineConfig& cfg, const std::string& stage)
      : cfg_(cfg), stage_(stage), start_(std::chrono::steady_clock::now()) {}

  void input(const std::string& path) { inputs_.push_back(path); }

  void write(int items) {
    json doc;
    doc["stage"] = stage_;
    doc["seed"] = cfg_.seed;
    doc["config"] = cfg_.config_path;
    doc["config_hash"] =
        cfg_.config_path.empty() ? "" : file_hash(cfg_.config_path);
    json in = json::object();
    for (const auto& p : inputs_) in[p] = file_hash(p);
    doc["inputs"] = in;
    doc["items"] = items;
    doc["wall_time_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
            .count();
    fs::create_directories(cfg_.out_dir + "/manifests");
    std::ofstream out(cfg_.out_dir + "/manifests/" + stage_ + ".json");
    out << doc.dump(2) << "\n";
  }

 private:
  const PipelineConfig& cfg_;
  std::string stage_;
  std::chrono::steady_clock::time_point start_;
  std::vector<std::string> inputs_;
};

std::map<std::string, kinematics::VehicleDims> load_dims(
    const std::string& path) {
  auto table = csv::read_file(path);
  const int id = table.require_column("agent_id", path);
  const int len = table.require_column("length", path);
  const int wid = table.require_column("width", path);
  const int wb = table.require_column("wheelbase", path);
  std::map<std::string, kinematics::VehicleDims> dims;
  for (const auto& row : table.rows) {
    dims[row[id]] = {parse_double(row[wb], path), parse_double(row[len], path),
                     parse_double(row[wid], path)};
  }
  return dims;
}

}  // namespace

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot hash missing file " + path);
  std::uint64_t h = 1469598103934665603ULL;
  char buf[65536];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<std::uint8_t>(buf[i]);
      h *= 1099511628211ULL;
    }
    if (!in) break;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx",
                static_cast<unsigned long long>(h));
  return out;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  check_keys(doc,
             {"seed", "jobs", "paths", "kinematics", "detection", "blocks",
              "model", "priors", "mcmc", "cor", "validate", "synth"},
             "root");

  PipelineConfig cfg;
  cfg.config_path = path;
  cfg.seed = doc.value("seed", 1ULL);
  cfg.jobs = doc.value("jobs", 1);

  if (doc.contains("paths")) {
    const auto& p = doc["paths"];
    check_keys(p, {"raw_dir", "dims", "boundaries", "site_map", "out_dir"},
               "paths");
    cfg.raw_dir = p.value("raw_dir", "");
    cfg.dims_path = p.value("dims", "");
    cfg.boundaries_path = p.value("boundaries", "");
    cfg.site_map_path = p.value("site_map", "");
    cfg.out_dir = p.value("out_dir", "out");
  }
  {
    std::set<std::string> distinct = {cfg.raw_dir, cfg.dims_path,
                                      cfg.boundaries_path, cfg.site_map_path,
                                      cfg.out_dir};
    distinct.erase("");
    std::vector<std::string> given;
    for (const auto& s :
         {cfg.raw_dir, cfg.dims_path, cfg.boundaries_path, cfg.site_map_path,
          cfg.out_dir}) {
      if (!s.empty()) given.push_back(s);
    }
    if (distinct.size() != given.size()) {
      throw ConfigError("config paths must be distinct");
    }
  }

  if (doc.contains("kinematics")) {
    const auto& k = doc["kinematics"];
    check_keys(k, {"control_point_spacing", "sg_window", "sg_poly_order"},
               "kinematics");
    cfg.kinematics.control_point_spacing = k.value("control_point_spacing", 5);
    cfg.kinematics.sg_window = k.value("sg_window", 109);
    cfg.kinematics.sg_poly_order = k.value("sg_poly_order", 2);
  }

  if (doc.contains("detection")) {
    const auto& d = doc["detection"];
    check_keys(d,
               {"epsilon", "vv_rule", "dt", "steps", "vv_gate", "vi_gate",
                "boundary_spacing"},
               "detection");
    cfg.scan.det.epsilon = d.value("epsilon", 0.30);
    const std::string rule = d.value("vv_rule", "AND");
    if (rule == "AND") cfg.scan.det.vv_rule = detection::VvRule::And;
    else if (rule == "OR") cfg.scan.det.vv_rule = detection::VvRule::Or;
    else throw ConfigError("detection.vv_rule must be AND or OR");
    cfg.scan.det.horizon.dt = d.value("dt", 0.1);
    cfg.scan.det.horizon.steps = d.value("steps", 30);
    cfg.scan.vv_gate = d.value("vv_gate", 50.0);
    cfg.scan.vi_gate = d.value("vi_gate", 15.0);
    cfg.boundary_spacing = d.value("boundary_spacing", 0.25);
    if (!(cfg.scan.det.epsilon > 0)) {
      throw ConfigError("detection.epsilon must be > 0");
    }
  }

  if (doc.contains("blocks")) {
    const auto& b = doc["blocks"];
    check_keys(b, {"block_duration", "min_blocks_per_group"}, "blocks");
    cfg.block.block_duration = b.value("block_duration", 11.0);
    cfg.block.min_blocks_per_group = b.value("min_blocks_per_group", 30);
  }

  if (doc.contains("model")) {
    const auto& m = doc["model"];
    check_keys(m,
               {"variant", "dataset", "mu_fixed", "mu_random", "sigma_fixed",
                "sigma_random", "xi_fixed"},
               "model");
    const std::string variant = m.value("variant", "HBSGRP");
    if (variant == "HBSFP") {
      cfg.model.variant = hbsgrp::Variant::FixedParameter;
    } else if (variant == "HBSGRP") {
      cfg.model.variant = hbsgrp::Variant::GroupedRandomParameter;
    } else {
      throw ConfigError("model.variant must be HBSFP or HBSGRP");
    }
    cfg.dataset = m.value("dataset", "vv");
    if (cfg.dataset != "vv" && cfg.dataset != "vi") {
      throw ConfigError("model.dataset must be vv or vi");
    }
    auto names = [](const json& j) {
      return j.get<std::vector<std::string>>();
    };
    if (m.contains("mu_fixed")) cfg.model.mu_fixed = names(m["mu_fixed"]);
    if (m.contains("mu_random")) cfg.model.mu_random = names(m["mu_random"]);
    if (m.contains("sigma_fixed")) cfg.model.sigma_fixed = names(m["sigma_fixed"]);
    if (m.contains("sigma_random"))
      cfg.model.sigma_random = names(m["sigma_random"]);
    if (m.contains("xi_fixed")) cfg.model.xi_fixed = names(m["xi_fixed"]);
  } else {
    cfg.model.mu_fixed = {"rel_acc", "rel_dec", "jerk"};
    cfg.model.mu_random = {"intercept", "rel_speed"};
    cfg.model.sigma_fixed = {"jerk"};
    cfg.model.sigma_random = {"intercept"};
  }

  if (doc.contains("priors")) {
    const auto& p = doc["priors"];
    check_keys(p,
               {"coef_mean", "coef_sd", "tau_alpha", "tau_beta", "xi_lower",
                "xi_upper"},
               "priors");
    cfg.priors.coef_mean = p.value("coef_mean", 0.0);
    cfg.priors.coef_sd = p.value("coef_sd", 10.0);
    cfg.priors.tau_alpha = p.value("tau_alpha", 0.01);
    cfg.priors.tau_beta = p.value("tau_beta", 0.01);
    cfg.priors.xi_lower = p.value("xi_lower", -1.0);
    cfg.priors.xi_upper = p.value("xi_upper", 0.5);
    if (!(cfg.priors.coef_sd > 0) || !(cfg.priors.tau_alpha > 0) ||
        !(cfg.priors.tau_beta > 0)) {
      throw ConfigError("priors: sd and inverse-gamma parameters must be > 0");
    }
  }

  if (doc.contains("mcmc")) {
    const auto& m = doc["mcmc"];
    check_keys(m, {"chains", "iterations", "burn_in", "thin", "adapt_interval"},
               "mcmc");
    cfg.mcmc.chains = m.value("chains", 2);
    cfg.mcmc.iterations = m.value("iterations", 50000);
    cfg.mcmc.burn_in = m.value("burn_in", 20000);
    cfg.mcmc.thin = m.value("thin", 10);
    cfg.mcmc.adapt_interval = m.value("adapt_interval", 50);
  }

  if (doc.contains("cor")) {
    const auto& c = doc["cor"];
    check_keys(c, {"omega", "exposure", "mode", "max_posterior_draws"}, "cor");
    cfg.cor.omega = c.value("omega", -0.5);
    cfg.cor.exposure = c.value("exposure", 0.0);
    const std::string mode = c.value("mode", "plug_in");
    if (mode == "plug_in") cfg.cor.mode = risk::CorConfig::Mode::PlugIn;
    else if (mode == "full_posterior")
      cfg.cor.mode = risk::CorConfig::Mode::FullPosterior;
    else throw ConfigError("cor.mode must be plug_in or full_posterior");
    cfg.cor.max_posterior_draws = c.value("max_posterior_draws", 1000);
  }

  if (doc.contains("validate")) {
    const auto& v = doc["validate"];
    check_keys(v, {"sweep_lo", "sweep_hi", "sweep_step"}, "validate");
    cfg.sweep_lo = v.value("sweep_lo", -0.9);
    cfg.sweep_hi = v.value("sweep_hi", -0.1);
    cfg.sweep_step = v.value("sweep_step", 0.1);
    if (!(cfg.sweep_step > 0) || cfg.sweep_lo > cfg.sweep_hi) {
      throw ConfigError("validate: need sweep_lo <= sweep_hi and step > 0");
    }
  }

  if (doc.contains("synth")) {
    const auto& s = doc["synth"];
    check_keys(s,
               {"n_groups", "scenarios", "extra_vehicles", "noise_sd",
                "frame_rate", "duration"},
               "synth");
    cfg.synth_spec.n_groups = s.value("n_groups", 6);
    cfg.synth_spec.scenarios = s.value("scenarios", 360);
    cfg.synth_spec.extra_vehicles = s.value("extra_vehicles", 2);
    cfg.synth_spec.noise_sd = s.value("noise_sd", 0.005);
    cfg.synth_spec.frame_rate = s.value("frame_rate", 10.0);
    cfg.synth_spec.duration = s.value("duration", 11.0);
  }
  return cfg;
}

namespace {

void require_path(const std::string& value, const std::string& name) {
  if (value.empty()) {
    throw ConfigError("config paths." + name + " is required for this stage");
  }
}

}  // namespace

StageReport cmd_synth(const PipelineConfig& cfg) {
  require_path(cfg.raw_dir, "raw_dir");
  Manifest manifest(cfg, "synth");
  const std::string data_dir = fs::path(cfg.raw_dir).parent_path().string();
  auto files = synth::generate_corridor(cfg.synth_spec, cfg.seed,
                                        data_dir.empty() ? "." : data_dir);
  if (files.trajectory_dir != cfg.raw_dir) {
    throw ConfigError("synth writes " + files.trajectory_dir +
                      " but paths.raw_dir is " + cfg.raw_dir +
                      "; point raw_dir at <data>/trajectories");
  }
  manifest.write(files.n_scenarios);
  StageReport rep{"synth", files.n_scenarios, ""};
  rep.detail = std::to_string(files.n_scenarios) + " scenarios, " +
               std::to_string(files.n_ground_truth) +
               " ground-truth events -> " + data_dir;
  return rep;
}

StageReport cmd_preprocess(const PipelineConfig& cfg) {
  require_path(cfg.raw_dir, "raw_dir");
  require_path(cfg.dims_path, "dims");
  Manifest manifest(cfg, "preprocess");

  const auto files = sorted_csv_files(cfg.raw_dir);
  const std::string out_dir = cfg.out_dir + "/processed";
  fs::create_directories(out_dir);

  if (files.empty()) {
    std::cerr << "warning: no trajectory files in " << cfg.raw_dir << "\n";
    manifest.write(0);
    return {"preprocess", 0, "no input files"};
  }

  const auto dims = load_dims(cfg.dims_path);
  manifest.input(cfg.dims_path);

  int n_tracks = 0;
  for (const auto& file : files) {
    manifest.input(file);
    auto table = csv::read_file(file);
    const int c_id = table.require_column("agent_id", file);
    const int c_t = table.require_column("t", file);
    const int c_x = table.require_column("x", file);
    const int c_y = table.require_column("y", file);
    const int c_vx = table.require_column("vx", file);
    const int c_vy = table.require_column("vy", file);

    std::map<std::string, kinematics::RawTrack> tracks;
    std::size_t lineno = 1;
    for (const auto& row : table.rows) {
      ++lineno;
      const std::string ctx = file + ":" + std::to_string(lineno + 0);
      kinematics::RawFrame frame{
          parse_double(row[c_t], ctx), parse_double(row[c_x], ctx),
          parse_double(row[c_y], ctx), parse_double(row[c_vx], ctx),
          parse_double(row[c_vy], ctx)};
      auto& track = tracks[row[c_id]];
      track.agent_id = row[c_id];
      track.frames.push_back(frame);
    }

    csv::Writer out(out_dir + "/" + stem_of(file) + ".csv");
    out.row({"agent_id", "t", "x", "y", "vx", "vy", "v", "a", "theta",
             "yaw_rate", "delta"});
    for (auto& [agent, track] : tracks) {
      std::sort(track.frames.begin(), track.frames.end(),
                [](const auto& a, const auto& b) { return a.t < b.t; });
      kinematics::validate(track);
      auto dit = dims.find(agent);
      if (dit == dims.end()) {
        throw DataError(file + ": agent " + agent + " missing from " +
                        cfg.dims_path);
      }
      auto smooth =
          kinematics::smooth_positions(track, cfg.kinematics.control_point_spacing);
      auto speed = kinematics::sg_filter(kinematics::derive_speed(smooth),
                                         cfg.kinematics.sg_window,
                                         cfg.kinematics.sg_poly_order);
      auto processed = kinematics::derive_dynamics(smooth, dit->second, speed);
      for (std::size_t i = 0; i < processed.frames.size(); ++i) {
        const auto& p = processed.frames[i];
        const auto& r = smooth.frames[i];
        out.row({agent, format_double(p.t), format_double(p.x),
                 format_double(p.y), format_double(r.vx), format_double(r.vy),
                 format_double(p.speed), format_double(p.accel),
                 format_double(p.heading), format_double(p.yaw_rate),
                 format_double(p.steer)});
      }
      ++n_tracks;
    }
    out.close();
  }
  manifest.write(n_tracks);
  return {"preprocess", n_tracks,
          std::to_string(files.size()) + " scenarios, " +
              std::to_string(n_tracks) + " tracks -> " + out_dir};
}

namespace {

std::vector<kinematics::ProcessedTrack> load_processed(
    const std::string& file,
    const std::map<std::string, kinematics::VehicleDims>& dims) {
  auto table = csv::read_file(file);
  const int c_id = table.require_column("agent_id", file);
  const int c_t = table.require_column("t", file);
  const int c_x = table.require_column("x", file);
  const int c_y = table.require_column("y", file);
  const int c_v = table.require_column("v", file);
  const int c_a = table.require_column("a", file);
  const int c_th = table.require_column("theta", file);
  const int c_yr = table.require_column("yaw_rate", file);
  const int c_d = table.require_column("delta", file);

  std::map<std::string, kinematics::ProcessedTrack> tracks;
  for (const auto& row : table.rows) {
    auto& track = tracks[row[c_id]];
    track.agent_id = row[c_id];
    auto dit = dims.find(row[c_id]);
    if (dit == dims.end()) {
      throw DataError(file + ": agent " + row[c_id] + " missing dimensions");
    }
    track.dims = dit->second;
    kinematics::ProcessedFrame f;
    f.t = parse_double(row[c_t], file);
    f.x = parse_double(row[c_x], file);
    f.y = parse_double(row[c_y], file);
    f.speed = parse_double(row[c_v], file);
    f.accel = parse_double(row[c_a], file);
    f.heading = parse_double(row[c_th], file);
    f.yaw_rate = parse_double(row[c_yr], file);
    f.steer = parse_double(row[c_d], file);
    track.frames.push_back(f);
  }
  std::vector<kinematics::ProcessedTrack> out;
  for (auto& [id, track] : tracks) {
    std::sort(track.frames.begin(), track.frames.end(),
              [](const auto& a, const auto& b) { return a.t < b.t; });
    out.push_back(std::move(track));
  }
  return out;
}

std::string kind_str(detection::EventKind k) {
  return k == detection::EventKind::VehicleVehicle ? "VV" : "VI";
}

}  // namespace

StageReport cmd_detect(const PipelineConfig& cfg) {
  require_path(cfg.dims_path, "dims");
  Manifest manifest(cfg, "detect");

  const std::string processed_dir = cfg.out_dir + "/processed";
  const auto files = sorted_csv_files(processed_dir);
  if (files.empty()) {
    throw DataError("no processed tracks in " + processed_dir +
                    "; run the preprocess stage first");
  }
  const auto dims = load_dims(cfg.dims_path);
  manifest.input(cfg.dims_path);

  std::vector<detection::BoundaryPolyline> boundaries;
  if (!cfg.boundaries_path.empty()) {
    boundaries =
        detection::load_boundaries(cfg.boundaries_path, cfg.boundary_spacing);
    manifest.input(cfg.boundaries_path);
  }

  const std::string events_dir = cfg.out_dir + "/events";
  fs::create_directories(events_dir);
  csv::Writer detail(cfg.out_dir + "/events_detail.csv");
  detail.row({"scenario", "kind", "frame_t", "ego", "other", "t_c", "ttc", "j",
              "k_or_l", "ego_x", "ego_y", "ego_heading", "rel_speed", "rel_acc",
              "rel_dec", "rel_dist", "jerk", "heading_diff", "steering_diff",
              "volume", "turn_left", "turn_right"});
  csv::Writer scen(cfg.out_dir + "/scenarios.csv");
  scen.row({"scenario", "duration", "n_tracks"});

  int n_events = 0;
  for (const auto& file : files) {
    manifest.input(file);
    const std::string scenario = stem_of(file);
    auto tracks = load_processed(file, dims);
    auto events = detection::scan_scenario(scenario, tracks, boundaries, cfg.scan);

    csv::Writer out(events_dir + "/" + scenario + ".csv");
    out.row({"kind", "frame_t", "ego", "other", "t_c", "ttc", "j", "k_or_l"});
    for (const auto& ev : events) {
      const auto& e = ev.event;
      const auto& c = ev.covariates;
      out.row({kind_str(e.kind), format_double(e.block_time), e.ego_id,
               e.other_id, format_double(e.t_collision), format_double(e.ttc),
               std::to_string(e.corners.first),
               std::to_string(e.corners.second)});
      detail.row({scenario, kind_str(e.kind), format_double(e.block_time),
                  e.ego_id, e.other_id, format_double(e.t_collision),
                  format_double(e.ttc), std::to_string(e.corners.first),
                  std::to_string(e.corners.second), format_double(ev.ego_x),
                  format_double(ev.ego_y), format_double(ev.ego_heading),
                  format_double(c.rel_speed), format_double(c.rel_acc),
                  format_double(c.rel_dec), format_double(c.rel_dist),
                  format_double(c.jerk), format_double(c.heading_diff),
                  format_double(c.steering_diff), format_double(c.volume),
                  format_double(c.turn_left), format_double(c.turn_right)});
      ++n_events;
    }
    out.close();

    double duration = 0.0;
    if (!tracks.empty() && tracks[0].frames.size() > 1) {
      const auto& f = tracks[0].frames;
      duration = f.back().t - f.front().t + (f[1].t - f[0].t);
    }
    scen.row({scenario, format_double(duration),
              std::to_string(tracks.size())});
  }
  detail.close();
  scen.close();
  manifest.write(n_events);
  return {"detect", n_events,
          std::to_string(files.size()) + " scenarios -> " +
              std::to_string(n_events) + " events"};
}

namespace {

std::vector<detection::EventRecord> load_event_detail(const std::string& path) {
  auto table = csv::read_file(path);
  auto col = [&](const char* name) { return table.require_column(name, path); };
  const int c_scen = col("scenario"), c_kind = col("kind"),
            c_ft = col("frame_t"), c_ego = col("ego"), c_other = col("other"),
            c_tc = col("t_c"), c_ttc = col("ttc"), c_j = col("j"),
            c_kl = col("k_or_l"), c_x = col("ego_x"), c_y = col("ego_y"),
            c_h = col("ego_heading"), c_rs = col("rel_speed"),
            c_ra = col("rel_acc"), c_rd = col("rel_dec"),
            c_dist = col("rel_dist"), c_jerk = col("jerk"),
            c_hd = col("heading_diff"), c_sd = col("steering_diff"),
            c_vol = col("volume"), c_tl = col("turn_left"),
            c_tr = col("turn_right");

  std::vector<detection::EventRecord> events;
  for (const auto& row : table.rows) {
    detection::EventRecord r;
    r.scenario = row[c_scen];
    r.event.kind = row[c_kind] == "VV"
                       ? detection::EventKind::VehicleVehicle
                       : detection::EventKind::VehicleInfrastructure;
    r.event.block_time = parse_double(row[c_ft], path);
    r.event.ego_id = row[c_ego];
    r.event.other_id = row[c_other];
    r.event.t_collision = parse_double(row[c_tc], path);
    r.event.ttc = parse_double(row[c_ttc], path);
    r.event.corners.first = static_cast<int>(parse_double(row[c_j], path));
    r.event.corners.second = static_cast<int>(parse_double(row[c_kl], path));
    r.ego_x = parse_double(row[c_x], path);
    r.ego_y = parse_double(row[c_y], path);
    r.ego_heading = parse_double(row[c_h], path);
    r.covariates.rel_speed = parse_double(row[c_rs], path);
    r.covariates.rel_acc = parse_double(row[c_ra], path);
    r.covariates.rel_dec = parse_double(row[c_rd], path);
    r.covariates.rel_dist = parse_double(row[c_dist], path);
    r.covariates.jerk = parse_double(row[c_jerk], path);
    r.covariates.heading_diff = parse_double(row[c_hd], path);
    r.covariates.steering_diff = parse_double(row[c_sd], path);
    r.covariates.volume = parse_double(row[c_vol], path);
    r.covariates.turn_left = parse_double(row[c_tl], path);
    r.covariates.turn_right = parse_double(row[c_tr], path);
    events.push_back(std::move(r));
  }
  return events;
}

void write_block_table(const blocks::BlockTable& table,
                       const std::string& path) {
  csv::Writer out(path);
  std::vector<std::string> header = {"kind",        "scenario", "group_id",
                                     "block_index", "block_start", "z", "y"};
  for (const auto& n : table.covariate_names) header.push_back(n);
  out.row(header);
  for (std::size_t i = 0; i < table.size(); ++i) {
    std::vector<std::string> row = {
        table.kind[i], table.scenario[i], std::to_string(table.group_id[i]),
        std::to_string(table.block_index[i]),
        format_double(table.block_start[i]), format_double(table.z[i]),
        std::to_string(table.y[i])};
    for (double v : table.row(i)) row.push_back(format_double(v));
    out.row(row);
  }
  out.close();
}

blocks::BlockTable read_block_table(const std::string& path) {
  auto csv_table = csv::read_file(path);
  blocks::BlockTable table;
  const int fixed_cols = 7;
  if (csv_table.header.size() < fixed_cols) {
    throw DataError(path + ": malformed block table header");
  }
  for (std::size_t c = fixed_cols; c < csv_table.header.size(); ++c) {
    table.covariate_names.push_back(csv_table.header[c]);
  }
  for (const auto& row : csv_table.rows) {
    table.kind.push_back(row[0]);
    table.scenario.push_back(row[1]);
    table.group_id.push_back(static_cast<int>(parse_double(row[2], path)));
    table.block_index.push_back(static_cast<int>(parse_double(row[3], path)));
    table.block_start.push_back(parse_double(row[4], path));
    table.z.push_back(parse_double(row[5], path));
    table.y.push_back(static_cast<int>(parse_double(row[6], path)));
    for (std::size_t c = fixed_cols; c < csv_table.header.size(); ++c) {
      table.covariates.push_back(parse_double(row[c], path));
    }
  }
  return table;
}

void write_groups_csv(const std::vector<blocks::GroupSummary>& groups,
                      const std::string& path) {
  csv::Writer out(path);
  out.row({"group_id", "kind", "n_blocks", "below_minimum",
           "exposure_seconds"});
  for (const auto& g : groups) {
    out.row({std::to_string(g.group_id), g.kind, std::to_string(g.n_blocks),
             g.below_minimum ? "1" : "0", format_double(g.exposure_seconds)});
  }
  out.close();
}

}  // namespace

StageReport cmd_blocks(const PipelineConfig& cfg) {
  require_path(cfg.site_map_path, "site_map");
  Manifest manifest(cfg, "blocks");

  const std::string detail_path = cfg.out_dir + "/events_detail.csv";
  const std::string scen_path = cfg.out_dir + "/scenarios.csv";
  if (!fs::exists(detail_path)) {
    throw DataError("missing " + detail_path + "; run the detect stage first");
  }
  manifest.input(detail_path);
  manifest.input(scen_path);
  manifest.input(cfg.site_map_path);

  auto events = load_event_detail(detail_path);
  auto site_map = blocks::load_site_map(cfg.site_map_path);

  std::map<std::string, double> durations;
  {
    auto t = csv::read_file(scen_path);
    const int c_s = t.require_column("scenario", scen_path);
    const int c_d = t.require_column("duration", scen_path);
    for (const auto& row : t.rows) {
      durations[row[c_s]] = parse_double(row[c_d], scen_path);
    }
  }

  auto assigned = blocks::assign_groups(events, site_map);
  if (assigned.dropped > 0) {
    std::cerr << "note: " << assigned.dropped
              << " events outside all site regions were dropped\n";
  }

  int total_blocks = 0;
  for (const std::string kind : {"VV", "VI"}) {
    std::vector<blocks::GroupedEvent> subset;
    for (const auto& e : assigned.events) {
      const bool is_vv =
          e.record.event.kind == detection::EventKind::VehicleVehicle;
      if ((kind == "VV") == is_vv) subset.push_back(e);
    }
    auto set = blocks::extract_block_maxima(subset, site_map, cfg.block,
                                            durations);
    blocks::StandardizationReport report;
    if (set.table.size() >= 2) {
      report = blocks::standardize_covariates(set.table);
    }
    const std::string suffix = kind == "VV" ? "vv" : "vi";
    write_block_table(set.table, cfg.out_dir + "/blocks_" + suffix + ".csv");
    write_groups_csv(set.groups, cfg.out_dir + "/groups_" + suffix + ".csv");

    json rep;
    rep["seed"] = cfg.seed;
    rep["dataset"] = suffix;
    rep["excluded_zero_ttc"] = set.excluded_zero_ttc;
    rep["dropped_outside_regions"] = assigned.dropped;
    json cols = json::array();
    for (const auto& c : report.columns) {
      json col;
      col["name"] = c.name;
      col["indicator"] = c.indicator;
      col["excluded"] = c.excluded;
      col["mean"] = c.mean;
      col["sd"] = c.sd;
      cols.push_back(col);
    }
    rep["columns"] = cols;
    std::ofstream out(cfg.out_dir + "/standardization_" + suffix + ".json");
    out << rep.dump(2) << "\n";

    total_blocks += static_cast<int>(set.table.size());
    for (const auto& g : set.groups) {
      if (g.below_minimum && g.n_blocks > 0) {
        std::cerr << "note: group " << g.group_id << " (" << suffix << ") has "
                  << g.n_blocks << " blocks, below the minimum of "
                  << cfg.block.min_blocks_per_group << "\n";
      }
    }
  }
  manifest.write(total_blocks);
  return {"blocks", total_blocks,
          std::to_string(total_blocks) + " block records (vv + vi)"};
}

namespace {

int site_map_group_count(const std::string& path) {
  auto map = blocks::load_site_map(path);
  int max_id = 0;
  for (const auto& g : map.groups) max_id = std::max(max_id, g.group_id);
  if (max_id != static_cast<int>(map.groups.size())) {
    throw ConfigError(path + ": group ids must be contiguous 1..K");
  }
  return max_id;
}

}  // namespace

StageReport cmd_fit(const PipelineConfig& cfg) {
  require_path(cfg.site_map_path, "site_map");
  Manifest manifest(cfg, "fit");

  const std::string blocks_path =
      cfg.out_dir + "/blocks_" + cfg.dataset + ".csv";
  if (!fs::exists(blocks_path)) {
    throw DataError("missing " + blocks_path + "; run the blocks stage first");
  }
  manifest.input(blocks_path);
  manifest.input(cfg.site_map_path);

  auto table = read_block_table(blocks_path);
  if (table.size() == 0) {
    throw DataError(blocks_path + " holds no records; nothing to fit");
  }

  hbsgrp::ModelSpec spec = cfg.model;
  spec.n_groups = site_map_group_count(cfg.site_map_path);

  hbsgrp::McmcConfig mcfg = cfg.mcmc;
  mcfg.seed = cfg.seed;
  mcfg.jobs = cfg.jobs;

  auto chain = hbsgrp::run_mcmc(table, spec, cfg.priors, mcfg);
  auto summaries = hbsgrp::summarize(chain);
  auto metrics = hbsgrp::fit_metrics(chain, table, spec, cfg.priors);

  const std::string fit_dir = cfg.out_dir + "/fit";
  fs::create_directories(fit_dir);

  csv::Writer chains_csv(fit_dir + "/chains.csv");
  chains_csv.row({"iteration", "chain", "parameter", "value"});
  for (std::size_t c = 0; c < chain.chains.size(); ++c) {
    const auto& res = chain.chains[c];
    for (int i = 0; i < res.n_stored; ++i) {
      for (int j = 0; j < res.n_params; ++j) {
        chains_csv.row({std::to_string(i), std::to_string(c + 1),
                        chain.parameter_names[j],
                        format_double(res.draws[static_cast<std::size_t>(i) *
                                                    res.n_params +
                                                j])});
      }
    }
  }
  chains_csv.close();

  json doc;
  doc["seed"] = cfg.seed;
  doc["dataset"] = cfg.dataset;
  doc["variant"] = cfg.model.variant == hbsgrp::Variant::FixedParameter
                       ? "HBSFP"
                       : "HBSGRP";
  doc["n_groups"] = spec.n_groups;
  doc["records"] = table.size();
  doc["chains"] = cfg.mcmc.chains;
  doc["iterations"] = cfg.mcmc.iterations;
  doc["burn_in"] = cfg.mcmc.burn_in;
  doc["thin"] = cfg.mcmc.thin;
  json params = json::array();
  double worst_bgr = 0.0;
  for (const auto& s : summaries) {
    json p;
    p["name"] = s.name;
    p["mean"] = s.mean;
    p["sd"] = s.sd;
    p["q025"] = s.q025;
    p["q50"] = s.q50;
    p["q975"] = s.q975;
    if (std::isnan(s.bgr)) p["bgr"] = nullptr;
    else p["bgr"] = s.bgr;
    params.push_back(p);
    if (!std::isnan(s.bgr)) worst_bgr = std::max(worst_bgr, s.bgr);
  }
  doc["parameters"] = params;
  doc["metrics"] = {{"dic", metrics.dic},     {"p_dic", metrics.p_dic},
                    {"waic", metrics.waic},   {"p_waic", metrics.p_waic},
                    {"looic", metrics.looic}};
  {
    std::ofstream out(fit_dir + "/summary.json");
    out << doc.dump(2) << "\n";
  }
  if (worst_bgr > 1.1) {
    std::cerr << "warning: worst BGR " << worst_bgr
              << " exceeds 1.1; chains may not have converged\n";
  }

  manifest.write(static_cast<int>(table.size()));
  char line[160];
  std::snprintf(line, sizeof(line),
                "%zu records, DIC %.1f, WAIC %.1f, LOOIC %.1f, worst BGR %.3f",
                table.size(), metrics.dic, metrics.waic, metrics.looic,
                worst_bgr);
  return {"fit", static_cast<int>(table.size()), line};
}

namespace {

hbsgrp::PosteriorChain read_chains(const std::string& path,
                                   const std::vector<std::string>& names) {
  auto table = csv::read_file(path);
  const int c_it = table.require_column("iteration", path);
  const int c_ch = table.require_column("chain", path);
  const int c_par = table.require_column("parameter", path);
  const int c_val = table.require_column("value", path);

  std::map<std::string, int> name_index;
  for (std::size_t i = 0; i < names.size(); ++i) {
    name_index[names[i]] = static_cast<int>(i);
  }

  std::map<int, std::map<int, std::vector<double>>> store;  // chain -> iter -> row
  for (const auto& row : table.rows) {
    const int chain_id = static_cast<int>(parse_double(row[c_ch], path));
    const int iter = static_cast<int>(parse_double(row[c_it], path));
    auto it = name_index.find(row[c_par]);
    if (it == name_index.end()) {
      throw ConfigError(path + ": parameter '" + row[c_par] +
                        "' does not match the configured model; re-run the "
                        "fit stage with this config");
    }
    auto& vec = store[chain_id][iter];
    vec.resize(names.size(), 0.0);
    vec[it->second] = parse_double(row[c_val], path);
  }
  if (store.empty()) throw DataError(path + ": no draws");

  hbsgrp::PosteriorChain out;
  out.parameter_names = names;
  for (auto& [chain_id, iters] : store) {
    mcmc::ChainResult res;
    res.n_params = static_cast<int>(names.size());
    res.n_stored = static_cast<int>(iters.size());
    for (auto& [iter, vec] : iters) {
      if (vec.size() != names.size()) {
        throw DataError(path + ": incomplete draw at iteration " +
                        std::to_string(iter));
      }
      res.draws.insert(res.draws.end(), vec.begin(), vec.end());
    }
    out.chains.push_back(std::move(res));
  }
  return out;
}

std::map<int, double> read_group_exposure(const std::string& path) {
  auto table = csv::read_file(path);
  const int c_g = table.require_column("group_id", path);
  const int c_e = table.require_column("exposure_seconds", path);
  std::map<int, double> out;
  for (const auto& row : table.rows) {
    out[static_cast<int>(parse_double(row[c_g], path))] =
        parse_double(row[c_e], path);
  }
  return out;
}

struct RiskInputs {
  blocks::BlockTable table;
  hbsgrp::PosteriorChain chain;
  hbsgrp::ModelSpec spec;
  std::map<int, double> exposure;
};

RiskInputs load_risk_inputs(const PipelineConfig& cfg, Manifest& manifest) {
  require_path(cfg.site_map_path, "site_map");
  const std::string blocks_path =
      cfg.out_dir + "/blocks_" + cfg.dataset + ".csv";
  const std::string chains_path = cfg.out_dir + "/fit/chains.csv";
  const std::string groups_path =
      cfg.out_dir + "/groups_" + cfg.dataset + ".csv";
  for (const auto& p : {blocks_path, chains_path, groups_path}) {
    if (!fs::exists(p)) {
      throw DataError("missing " + p + "; run the upstream stage first");
    }
    manifest.input(p);
  }
  RiskInputs in;
  in.table = read_block_table(blocks_path);
  in.spec = cfg.model;
  in.spec.n_groups = site_map_group_count(cfg.site_map_path);
  const auto layout = hbsgrp::build_layout(in.spec, in.table.covariate_names);
  in.chain = read_chains(chains_path, layout.names);
  in.exposure = read_group_exposure(groups_path);
  return in;
}

}  // namespace

StageReport cmd_risk(const PipelineConfig& cfg) {
  Manifest manifest(cfg, "risk");
  auto in = load_risk_inputs(cfg, manifest);

  auto result = risk::compute_cor(in.table, in.chain, in.spec, cfg.cor,
                                  in.exposure);

  const std::string risk_dir = cfg.out_dir + "/risk";
  fs::create_directories(risk_dir);

  csv::Writer blocks_csv(risk_dir + "/cor_blocks.csv");
  blocks_csv.row({"record", "scenario", "group_id", "block_index", "z", "y",
                  "p_crash", "p_lo", "p_hi"});
  for (const auto& b : result.blocks) {
    blocks_csv.row({std::to_string(b.record), in.table.scenario[b.record],
                    std::to_string(b.group_id),
                    std::to_string(in.table.block_index[b.record]),
                    format_double(in.table.z[b.record]),
                    std::to_string(in.table.y[b.record]),
                    format_double(b.p_crash), format_double(b.lo),
                    format_double(b.hi)});
  }
  blocks_csv.close();

  csv::Writer groups_csv(risk_dir + "/cor_groups.csv");
  groups_csv.row({"group_id", "n_blocks", "exposure_seconds", "cor", "cor_lo",
                  "cor_hi"});
  for (const auto& g : result.groups) {
    groups_csv.row({std::to_string(g.group_id), std::to_string(g.n_blocks),
                    format_double(g.exposure), format_double(g.cor),
                    format_double(g.lo), format_double(g.hi)});
  }
  groups_csv.close();

  json doc;
  doc["seed"] = cfg.seed;
  doc["dataset"] = cfg.dataset;
  doc["omega"] = cfg.cor.omega;
  doc["mode"] = cfg.cor.mode == risk::CorConfig::Mode::PlugIn
                    ? "plug_in"
                    : "full_posterior";
  doc["cf_total"] = result.cf_total;
  doc["cf_lo"] = result.cf_lo;
  doc["cf_hi"] = result.cf_hi;
  {
    std::ofstream out(risk_dir + "/cor_summary.json");
    out << doc.dump(2) << "\n";
  }

  manifest.write(static_cast<int>(result.blocks.size()));
  char line[120];
  std::snprintf(line, sizeof(line), "CF_total %.6g over %zu blocks, %zu groups",
                result.cf_total, result.blocks.size(), result.groups.size());
  return {"risk", static_cast<int>(result.blocks.size()), line};
}

StageReport cmd_validate(const PipelineConfig& cfg) {
  Manifest manifest(cfg, "validate");
  auto in = load_risk_inputs(cfg, manifest);

  std::vector<double> grid;
  const int n_steps = static_cast<int>(
      std::floor((cfg.sweep_hi - cfg.sweep_lo) / cfg.sweep_step + 1e-9));
  for (int i = 0; i <= n_steps; ++i) {
    const double w = cfg.sweep_lo + i * cfg.sweep_step;
    grid.push_back(std::round(w * 1e9) / 1e9);
  }
  auto rows = risk::threshold_sweep(in.table, in.chain, in.spec, grid,
                                    in.exposure);

  const std::string risk_dir = cfg.out_dir + "/risk";
  fs::create_directories(risk_dir);
  csv::Writer out(risk_dir + "/roc_sweep.csv");
  out.row({"omega", "auc", "n_case", "n_control", "skipped"});
  int usable = 0;
  for (const auto& r : rows) {
    out.row({format_double(r.omega),
             r.skipped ? "" : format_double(r.auc), std::to_string(r.n_case),
             std::to_string(r.n_control), r.skipped ? "1" : "0"});
    usable += r.skipped ? 0 : 1;
  }
  out.close();

  manifest.write(static_cast<int>(rows.size()));
  return {"validate", static_cast<int>(rows.size()),
          std::to_string(usable) + "/" + std::to_string(rows.size()) +
              " thresholds scored -> " + risk_dir + "/roc_sweep.csv"};
}

}  // namespace corrisk::pipeline
