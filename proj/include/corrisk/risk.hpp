#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "corrisk/blocks.hpp"
#include "corrisk/gev.hpp"
#include "corrisk/hbsgrp.hpp"

namespace corrisk::risk {

// Probability that the block's 2D-TTC falls at or below the critical
// threshold. The model lives on the negated-TTC axis, so the threshold is
// mapped to -|omega| and the result is the upper-tail complement of the
// fitted CDF there. Support clamping in the CDF gives exact 0 and 1
// outside bounded tails.
double exceedance_prob(const gev::GevParams& p, double omega);

struct CorConfig {
  double omega = -0.5;   // critical threshold, negated-TTC axis
  double exposure = 0.0; // s; > 0 overrides the per-group observed exposure
  enum class Mode { PlugIn, FullPosterior };
  Mode mode = Mode::PlugIn;
  int max_posterior_draws = 1000;  // stride cap in full-posterior mode
};

struct BlockCor {
  std::size_t record = 0;
  int group_id = 0;
  double p_crash = 0.0;  // plug-in (posterior-mean coefficients)
  double lo = 0.0;       // 2.5% band in full-posterior mode
  double hi = 0.0;       // 97.5%
};

struct GroupCor {
  int group_id = 0;
  int n_blocks = 0;
  double exposure = 0.0;
  double cor = 0.0;  // events per second of exposure
  double lo = 0.0;
  double hi = 0.0;
};

struct CorResult {
  std::vector<BlockCor> blocks;
  std::vector<GroupCor> groups;
  double cf_total = 0.0;
  double cf_lo = 0.0;
  double cf_hi = 0.0;
};

// Blockwise exceedance probabilities, exposure-normalized group risk, and
// the corridor total. group_exposure maps group_id to observed seconds;
// throws ConfigError when an exposure is missing or nonpositive.
CorResult compute_cor(const blocks::BlockTable& table,
                      const hbsgrp::PosteriorChain& chain,
                      const hbsgrp::ModelSpec& spec, const CorConfig& cfg,
                      const std::map<int, double>& group_exposure);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocResult {
  double auc = 0.0;
  std::vector<RocPoint> points;  // one per distinct score threshold
  int n_case = 0;
  int n_control = 0;
};

// Rank (Mann-Whitney) AUC with half credit for ties, plus the full curve.
// Throws DataError when labels contain a single class.
RocResult roc_auc(std::span<const double> scores, std::span<const int> labels);

struct SweepRow {
  double omega = 0.0;
  double auc = 0.0;
  int n_case = 0;
  int n_control = 0;
  bool skipped = false;  // single-class labels at this threshold
};

// One classification row per threshold: scores are plug-in exceedance
// probabilities at omega, labels mark blocks whose observed minimum TTC is
// at or below |omega|.
std::vector<SweepRow> threshold_sweep(const blocks::BlockTable& table,
                                      const hbsgrp::PosteriorChain& chain,
                                      const hbsgrp::ModelSpec& spec,
                                      std::span<const double> omega_grid,
                                      const std::map<int, double>& group_exposure);

}  // namespace corrisk::risk
