#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "corrisk/detection.hpp"
#include "corrisk/geometry.hpp"

namespace corrisk::blocks {

// One spatial cluster (intersection or directional segment) sharing
// random-parameter draws and geometry covariates.
struct GroupSpec {
  int group_id = 0;  // 1..K
  std::string kind;  // intersection | segment
  std::string direction;  // NB | SB | none
  std::vector<geometry::Point> polygon;
  double lane_count = 0.0;
  double lane_width = 0.0;       // m
  double driveway_density = 0.0; // per meter
  bool median_divided = false;
};

struct SiteMap {
  std::vector<GroupSpec> groups;
};

// Loads the site-map JSON array and validates that group ids are unique,
// polygons are closed rings of >= 3 points, and no two regions overlap.
SiteMap load_site_map(const std::string& path);

// Winding-number containment; boundary points count as inside.
bool point_in_polygon(const geometry::Point& p,
                      std::span<const geometry::Point> polygon);

struct GroupedEvent {
  detection::EventRecord record;
  int group_id = 0;
};

struct AssignResult {
  std::vector<GroupedEvent> events;
  int dropped = 0;  // events outside every region
};

// Labels each event by the region containing its initiating position and
// derives the left-lane indicator from the event's lateral offset within
// the region. Events outside all regions are dropped and counted.
AssignResult assign_groups(const std::vector<detection::EventRecord>& events,
                           const SiteMap& site_map);

struct BlockConfig {
  // Window length in seconds; 0 treats every interaction event as its own
  // block (the one-block-per-interaction reading).
  double block_duration = 11.0;
  int min_blocks_per_group = 30;
};

// Columnar block-maxima table. Covariate column order is fixed and
// documented in the README data dictionary.
struct BlockTable {
  std::vector<std::string> covariate_names;
  std::vector<std::string> kind;         // VV | VI per record
  std::vector<std::string> scenario;
  std::vector<int> group_id;             // 1..K
  std::vector<int> block_index;          // 1..N_k within group
  std::vector<double> block_start;       // s
  std::vector<double> z;                 // negated minimum ttc, < 0
  std::vector<int> y;                    // event count in the block
  std::vector<double> covariates;        // row-major, stride = names.size()

  std::size_t size() const { return z.size(); }
  std::span<const double> row(std::size_t i) const {
    return {covariates.data() + i * covariate_names.size(),
            covariate_names.size()};
  }
};

struct GroupSummary {
  int group_id = 0;
  std::string kind;
  int n_blocks = 0;
  bool below_minimum = false;
  double exposure_seconds = 0.0;
};

struct BlockSet {
  BlockTable table;
  std::vector<GroupSummary> groups;
  int excluded_zero_ttc = 0;  // t_c = 0 events excluded from sampling
};

// Event-level covariate column names, in table order.
const std::vector<std::string>& event_covariate_names();

// Group-level covariate column names appended after the event columns.
const std::vector<std::string>& group_covariate_names();

// Per (group, scenario, window): z = max of negated ttc values (= -min ttc),
// y = number of events, covariates from the event attaining the minimum.
// Exposure per group sums the durations of scenarios contributing events.
BlockSet extract_block_maxima(const std::vector<GroupedEvent>& events,
                              const SiteMap& site_map, const BlockConfig& cfg,
                              const std::map<std::string, double>& scenario_duration);

struct ColumnScaling {
  std::string name;
  bool indicator = false;  // left untouched
  bool excluded = false;   // zero-variance continuous column
  double mean = 0.0;
  double sd = 1.0;
};

struct StandardizationReport {
  std::vector<ColumnScaling> columns;
};

// Centers and scales continuous covariates to unit sample sd (n-1
// denominator) in place. Indicator columns (values only 0/1) and
// zero-variance columns are untouched; the report allows exact inversion.
StandardizationReport standardize_covariates(BlockTable& table);

// Inverse transform for one column value, for reporting in natural units.
double unstandardize(const StandardizationReport& report,
                     const std::string& column, double value);

}  // namespace corrisk::blocks
