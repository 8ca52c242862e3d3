#include "corrisk/blocks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "corrisk/errors.hpp"
#include "json.hpp"

namespace corrisk::blocks {

namespace {

double cross(const geometry::Point& o, const geometry::Point& a,
             const geometry::Point& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

bool on_segment(const geometry::Point& p, const geometry::Point& a,
                const geometry::Point& b) {
  if (std::abs(cross(a, b, p)) > 1e-12) return false;
  return p.x >= std::min(a.x, b.x) - 1e-12 &&
         p.x <= std::max(a.x, b.x) + 1e-12 &&
         p.y >= std::min(a.y, b.y) - 1e-12 && p.y <= std::max(a.y, b.y) + 1e-12;
}

// Proper crossing of open segments (interiors intersect).
bool segments_cross(const geometry::Point& a, const geometry::Point& b,
                    const geometry::Point& c, const geometry::Point& d) {
  const double d1 = cross(c, d, a);
  const double d2 = cross(c, d, b);
  const double d3 = cross(a, b, c);
  const double d4 = cross(a, b, d);
  return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
         ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

bool polygons_overlap(std::span<const geometry::Point> a,
                      std::span<const geometry::Point> b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& a0 = a[i];
    const auto& a1 = a[(i + 1) % a.size()];
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (segments_cross(a0, a1, b[j], b[(j + 1) % b.size()])) return true;
    }
  }
  // Containment without edge crossings: test one strictly interior probe.
  auto strictly_inside = [](const geometry::Point& p,
                            std::span<const geometry::Point> poly) {
    for (std::size_t i = 0; i < poly.size(); ++i) {
      if (on_segment(p, poly[i], poly[(i + 1) % poly.size()])) return false;
    }
    return point_in_polygon(p, poly);
  };
  geometry::Point ca{0, 0}, cb{0, 0};
  for (const auto& p : a) {
    ca.x += p.x / a.size();
    ca.y += p.y / a.size();
  }
  for (const auto& p : b) {
    cb.x += p.x / b.size();
    cb.y += p.y / b.size();
  }
  return strictly_inside(ca, b) || strictly_inside(cb, a);
}

}  // namespace

bool point_in_polygon(const geometry::Point& p,
                      std::span<const geometry::Point> polygon) {
  // Boundary counts as inside.
  for (std::size_t i = 0; i < polygon.size(); ++i) {
    if (on_segment(p, polygon[i], polygon[(i + 1) % polygon.size()])) {
      return true;
    }
  }
  // Winding number.
  int winding = 0;
  for (std::size_t i = 0; i < polygon.size(); ++i) {
    const auto& a = polygon[i];
    const auto& b = polygon[(i + 1) % polygon.size()];
    if (a.y <= p.y) {
      if (b.y > p.y && cross(a, b, p) > 0) ++winding;
    } else {
      if (b.y <= p.y && cross(a, b, p) < 0) --winding;
    }
  }
  return winding != 0;
}

SiteMap load_site_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  if (!doc.is_array()) throw DataError(path + ": expected a JSON array");

  SiteMap map;
  std::set<int> seen;
  for (const auto& item : doc) {
    GroupSpec g;
    g.group_id = item.at("group_id").get<int>();
    g.kind = item.at("kind").get<std::string>();
    g.direction = item.value("direction", "none");
    g.lane_count = item.value("lane_count", 0.0);
    g.lane_width = item.value("lane_width", 0.0);
    g.driveway_density = item.value("driveway_density", 0.0);
    g.median_divided = item.value("median", "undivided") == std::string("divided");
    for (const auto& pt : item.at("polygon")) {
      g.polygon.push_back({pt.at(0).get<double>(), pt.at(1).get<double>()});
    }
    if (g.polygon.size() < 3) {
      throw ConfigError("site map group " + std::to_string(g.group_id) +
                        ": polygon needs >= 3 points");
    }
    if (g.kind != "intersection" && g.kind != "segment") {
      throw ConfigError("site map group " + std::to_string(g.group_id) +
                        ": kind must be intersection or segment");
    }
    if (!seen.insert(g.group_id).second) {
      throw ConfigError("site map: duplicate group_id " +
                        std::to_string(g.group_id));
    }
    map.groups.push_back(std::move(g));
  }
  if (map.groups.empty()) throw ConfigError(path + ": no groups defined");

  std::sort(map.groups.begin(), map.groups.end(),
            [](const GroupSpec& a, const GroupSpec& b) {
              return a.group_id < b.group_id;
            });
  for (std::size_t i = 0; i < map.groups.size(); ++i) {
    for (std::size_t j = i + 1; j < map.groups.size(); ++j) {
      if (polygons_overlap(map.groups[i].polygon, map.groups[j].polygon)) {
        throw ConfigError("site map: regions " +
                          std::to_string(map.groups[i].group_id) + " and " +
                          std::to_string(map.groups[j].group_id) + " overlap");
      }
    }
  }
  return map;
}

AssignResult assign_groups(const std::vector<detection::EventRecord>& events,
                           const SiteMap& site_map) {
  AssignResult result;
  for (const auto& ev : events) {
    const GroupSpec* owner = nullptr;
    for (const auto& g : site_map.groups) {
      if (point_in_polygon({ev.ego_x, ev.ego_y}, g.polygon)) {
        owner = &g;
        break;  // groups are disjoint; lowest id wins on shared boundaries
      }
    }
    if (owner == nullptr) {
      ++result.dropped;
      continue;
    }
    result.events.push_back({ev, owner->group_id});
  }
  return result;
}

const std::vector<std::string>& event_covariate_names() {
  static const std::vector<std::string> names = {
      "rel_speed", "rel_acc",   "rel_dec",    "rel_dist",
      "jerk",      "heading_diff", "steering_diff", "volume",
      "turn_left", "turn_right", "left_lane"};
  return names;
}

const std::vector<std::string>& group_covariate_names() {
  static const std::vector<std::string> names = {
      "intersection", "dir_nb", "dir_sb",
      "lane_count",   "lane_width", "driveway_density", "median_undivided"};
  return names;
}

namespace {

// Lateral side of the group centroid relative to the travel direction;
// positive cross product = event sits left of the centroid axis.
double left_lane_indicator(const detection::EventRecord& ev,
                           const GroupSpec& group) {
  geometry::Point c{0, 0};
  for (const auto& p : group.polygon) {
    c.x += p.x / group.polygon.size();
    c.y += p.y / group.polygon.size();
  }
  const double dx = std::cos(ev.ego_heading);
  const double dy = std::sin(ev.ego_heading);
  const double rx = ev.ego_x - c.x;
  const double ry = ev.ego_y - c.y;
  return (dx * ry - dy * rx) > 0 ? 1.0 : 0.0;
}

std::vector<double> covariate_row(const GroupedEvent& ge,
                                  const GroupSpec& group) {
  const auto& c = ge.record.covariates;
  std::vector<double> row = {
      c.rel_speed, c.rel_acc, c.rel_dec, c.rel_dist,
      c.jerk,      c.heading_diff, c.steering_diff, c.volume,
      c.turn_left, c.turn_right, left_lane_indicator(ge.record, group)};
  row.push_back(group.kind == "intersection" ? 1.0 : 0.0);
  row.push_back(group.direction == "NB" ? 1.0 : 0.0);
  row.push_back(group.direction == "SB" ? 1.0 : 0.0);
  row.push_back(group.lane_count);
  row.push_back(group.lane_width);
  row.push_back(group.driveway_density);
  row.push_back(group.median_divided ? 0.0 : 1.0);
  return row;
}

}  // namespace

BlockSet extract_block_maxima(
    const std::vector<GroupedEvent>& events, const SiteMap& site_map,
    const BlockConfig& cfg,
    const std::map<std::string, double>& scenario_duration) {
  if (cfg.block_duration < 0) {
    throw ConfigError("block_duration must be >= 0");
  }
  std::map<int, const GroupSpec*> groups_by_id;
  for (const auto& g : site_map.groups) groups_by_id[g.group_id] = &g;

  // Window key: (group, scenario, window index); duration 0 makes every
  // event its own block.
  struct Key {
    int group;
    std::string scenario;
    long window;
    bool operator<(const Key& o) const {
      if (group != o.group) return group < o.group;
      if (scenario != o.scenario) return scenario < o.scenario;
      return window < o.window;
    }
  };
  struct Acc {
    const GroupedEvent* extremal = nullptr;
    int count = 0;
    double start = 0.0;
  };

  BlockSet out;
  std::map<Key, Acc> windows;
  long serial = 0;
  for (const auto& ge : events) {
    const double ttc = ge.record.event.ttc;
    if (!(ttc > 0.0)) {
      ++out.excluded_zero_ttc;
      continue;
    }
    Key key;
    key.group = ge.group_id;
    key.scenario = ge.record.scenario;
    key.window = cfg.block_duration > 0
                     ? static_cast<long>(std::floor(ge.record.event.block_time /
                                                    cfg.block_duration))
                     : serial++;
    auto& acc = windows[key];
    acc.start = cfg.block_duration > 0 ? key.window * cfg.block_duration
                                       : ge.record.event.block_time;
    ++acc.count;
    if (acc.extremal == nullptr ||
        ttc < acc.extremal->record.event.ttc) {
      acc.extremal = &ge;
    }
  }

  BlockTable& table = out.table;
  table.covariate_names = event_covariate_names();
  for (const auto& n : group_covariate_names()) {
    table.covariate_names.push_back(n);
  }

  std::map<int, int> per_group_counter;
  std::map<int, std::set<std::string>> group_scenarios;
  for (const auto& [key, acc] : windows) {
    const auto git = groups_by_id.find(key.group);
    if (git == groups_by_id.end()) {
      throw DataError("block extraction: unknown group " +
                      std::to_string(key.group));
    }
    const GroupedEvent& ex = *acc.extremal;
    table.kind.push_back(ex.record.event.kind ==
                                 detection::EventKind::VehicleVehicle
                             ? "VV"
                             : "VI");
    table.scenario.push_back(key.scenario);
    table.group_id.push_back(key.group);
    table.block_index.push_back(++per_group_counter[key.group]);
    table.block_start.push_back(acc.start);
    table.z.push_back(-ex.record.event.ttc);
    table.y.push_back(acc.count);
    auto row = covariate_row(ex, *git->second);
    table.covariates.insert(table.covariates.end(), row.begin(), row.end());
    group_scenarios[key.group].insert(key.scenario);
  }

  for (const auto& g : site_map.groups) {
    GroupSummary s;
    s.group_id = g.group_id;
    s.kind = g.kind;
    s.n_blocks = per_group_counter.count(g.group_id)
                     ? per_group_counter[g.group_id]
                     : 0;
    s.below_minimum = s.n_blocks < cfg.min_blocks_per_group;
    double exposure = 0.0;
    if (auto it = group_scenarios.find(g.group_id);
        it != group_scenarios.end()) {
      for (const auto& sc : it->second) {
        auto dit = scenario_duration.find(sc);
        if (dit != scenario_duration.end()) exposure += dit->second;
      }
    }
    s.exposure_seconds = exposure;
    out.groups.push_back(s);
  }
  return out;
}

StandardizationReport standardize_covariates(BlockTable& table) {
  const std::size_t n = table.size();
  const std::size_t n_cols = table.covariate_names.size();
  if (n < 2) {
    throw DataError("standardize_covariates: need >= 2 records, have " +
                    std::to_string(n));
  }
  StandardizationReport report;
  for (std::size_t c = 0; c < n_cols; ++c) {
    ColumnScaling col;
    col.name = table.covariate_names[c];

    bool indicator = true;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = table.covariates[i * n_cols + c];
      if (v != 0.0 && v != 1.0) indicator = false;
      sum += v;
    }
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = table.covariates[i * n_cols + c];
      ss += (v - mean) * (v - mean);
    }
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));

    if (indicator) {
      col.indicator = true;
    } else if (sd == 0.0) {
      col.excluded = true;  // constant continuous column
    } else {
      col.mean = mean;
      col.sd = sd;
      for (std::size_t i = 0; i < n; ++i) {
        double& v = table.covariates[i * n_cols + c];
        v = (v - mean) / sd;
      }
    }
    report.columns.push_back(col);
  }
  return report;
}

double unstandardize(const StandardizationReport& report,
                     const std::string& column, double value) {
  for (const auto& col : report.columns) {
    if (col.name == column) {
      if (col.indicator || col.excluded) return value;
      return value * col.sd + col.mean;
    }
  }
  throw ConfigError("unstandardize: unknown column " + column);
}

}  // namespace corrisk::blocks
