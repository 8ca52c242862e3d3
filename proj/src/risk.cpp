#include "corrisk/risk.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "corrisk/errors.hpp"
#include "corrisk/numeric.hpp"

namespace corrisk::risk {

double exceedance_prob(const gev::GevParams& p, double omega) {
  return 1.0 - gev::gev_cdf(-std::abs(omega), p);
}

namespace {

// Per-block exceedance probabilities for one coefficient vector.
std::vector<double> block_probs(const blocks::BlockTable& table,
                                const hbsgrp::ParameterLayout& layout,
                                std::span<const double> params, double omega) {
  const auto coeffs = hbsgrp::coefficients_at(layout, params);
  std::vector<double> out(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto p = gev::link_params(coeffs, table.row(i), table.group_id[i]);
    out[i] = exceedance_prob(p, omega);
  }
  return out;
}

std::vector<int> sorted_group_ids(const blocks::BlockTable& table) {
  std::vector<int> ids = table.group_id;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

}  // namespace

CorResult compute_cor(const blocks::BlockTable& table,
                      const hbsgrp::PosteriorChain& chain,
                      const hbsgrp::ModelSpec& spec, const CorConfig& cfg,
                      const std::map<int, double>& group_exposure) {
  const auto layout = hbsgrp::build_layout(spec, table.covariate_names);
  const auto ids = sorted_group_ids(table);

  auto exposure_of = [&](int gid) {
    if (cfg.exposure > 0.0) return cfg.exposure;
    auto it = group_exposure.find(gid);
    if (it == group_exposure.end() || !(it->second > 0.0)) {
      throw ConfigError("compute_cor: nonpositive exposure for group " +
                        std::to_string(gid));
    }
    return it->second;
  };

  const auto mean_params = hbsgrp::posterior_mean(chain);
  const auto plug_probs = block_probs(table, layout, mean_params, cfg.omega);

  auto accumulate_cor = [&](const std::vector<double>& probs,
                            std::map<int, double>& cor_by_group) {
    for (const auto gid : ids) cor_by_group[gid] = 0.0;
    for (std::size_t i = 0; i < table.size(); ++i) {
      cor_by_group[table.group_id[i]] += table.y[i] * probs[i];
    }
    double total = 0.0;
    for (const auto gid : ids) {
      cor_by_group[gid] /= exposure_of(gid);
      total += cor_by_group[gid];
    }
    return total;
  };

  CorResult result;
  std::map<int, double> plug_cor;
  result.cf_total = accumulate_cor(plug_probs, plug_cor);

  for (std::size_t i = 0; i < table.size(); ++i) {
    BlockCor b;
    b.record = i;
    b.group_id = table.group_id[i];
    b.p_crash = plug_probs[i];
    b.lo = b.hi = plug_probs[i];
    result.blocks.push_back(b);
  }
  std::map<int, int> counts;
  for (int gid : table.group_id) counts[gid]++;
  for (const auto gid : ids) {
    GroupCor g;
    g.group_id = gid;
    g.n_blocks = counts[gid];
    g.exposure = exposure_of(gid);
    g.cor = plug_cor[gid];
    g.lo = g.hi = g.cor;
    result.groups.push_back(g);
  }
  result.cf_lo = result.cf_hi = result.cf_total;

  if (cfg.mode == CorConfig::Mode::FullPosterior) {
    // Evaluate the whole chain on a deterministic stride and summarize the
    // per-draw values by quantiles.
    std::vector<std::pair<int, int>> subset;
    long total = 0;
    for (const auto& c : chain.chains) total += c.n_stored;
    const long stride =
        std::max<long>(1, total / std::max(1, cfg.max_posterior_draws));
    long serial = 0;
    for (std::size_t c = 0; c < chain.chains.size(); ++c) {
      for (int i = 0; i < chain.chains[c].n_stored; ++i, ++serial) {
        if (serial % stride == 0) subset.push_back({static_cast<int>(c), i});
      }
    }
    const int s_draws = static_cast<int>(subset.size());
    const int p = chain.n_params();

    std::vector<std::vector<double>> prob_draws(
        table.size(), std::vector<double>(s_draws));
    std::map<int, std::vector<double>> cor_draws;
    for (const auto gid : ids) cor_draws[gid].resize(s_draws);
    std::vector<double> cf_draws(s_draws);

    std::vector<double> params(static_cast<std::size_t>(p));
    for (int s = 0; s < s_draws; ++s) {
      const auto [c, it] = subset[s];
      for (int j = 0; j < p; ++j) params[j] = chain.draw(c, it, j);
      const auto probs = block_probs(table, layout, params, cfg.omega);
      for (std::size_t i = 0; i < table.size(); ++i) {
        prob_draws[i][s] = probs[i];
      }
      std::map<int, double> cor;
      cf_draws[s] = accumulate_cor(probs, cor);
      for (const auto gid : ids) cor_draws[gid][s] = cor[gid];
    }

    auto band = [](std::vector<double>& v, double& lo, double& hi) {
      std::sort(v.begin(), v.end());
      lo = quantile_sorted(v, 0.025);
      hi = quantile_sorted(v, 0.975);
    };
    for (std::size_t i = 0; i < table.size(); ++i) {
      band(prob_draws[i], result.blocks[i].lo, result.blocks[i].hi);
    }
    for (auto& g : result.groups) {
      band(cor_draws[g.group_id], g.lo, g.hi);
    }
    band(cf_draws, result.cf_lo, result.cf_hi);
  }
  return result;
}

RocResult roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw DataError("roc_auc: scores and labels must be equal-length");
  }
  long n_case = 0, n_control = 0;
  for (int l : labels) (l ? n_case : n_control)++;
  if (n_case == 0 || n_control == 0) {
    throw DataError("roc_auc: both classes required, have " +
                    std::to_string(n_case) + " cases and " +
                    std::to_string(n_control) + " controls");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  // Midrank sum over the cases.
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() &&
           scores[order[j + 1]] == scores[order[i]]) {
      ++j;
    }
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]]) rank_sum += midrank;
    }
    i = j + 1;
  }
  const double u = rank_sum - static_cast<double>(n_case) *
                                  (static_cast<double>(n_case) + 1.0) / 2.0;

  RocResult result;
  result.n_case = static_cast<int>(n_case);
  result.n_control = static_cast<int>(n_control);
  result.auc = u / (static_cast<double>(n_case) * static_cast<double>(n_control));

  // Curve points: descending distinct thresholds, classify score >= thr.
  result.points.push_back({0.0, 0.0});
  long tp = 0, fp = 0;
  for (std::size_t k = order.size(); k-- > 0;) {
    if (labels[order[k]]) ++tp;
    else ++fp;
    const bool boundary = k == 0 || scores[order[k - 1]] != scores[order[k]];
    if (boundary) {
      result.points.push_back(
          {static_cast<double>(fp) / n_control, static_cast<double>(tp) / n_case});
    }
  }
  return result;
}

std::vector<SweepRow> threshold_sweep(
    const blocks::BlockTable& table, const hbsgrp::PosteriorChain& chain,
    const hbsgrp::ModelSpec& spec, std::span<const double> omega_grid,
    const std::map<int, double>& group_exposure) {
  if (omega_grid.empty()) throw ConfigError("threshold_sweep: empty grid");
  (void)group_exposure;
  const auto layout = hbsgrp::build_layout(spec, table.covariate_names);
  const auto mean_params = hbsgrp::posterior_mean(chain);

  std::vector<SweepRow> rows;
  for (double omega : omega_grid) {
    SweepRow row;
    row.omega = omega;
    const auto scores = block_probs(table, layout, mean_params, omega);
    std::vector<int> labels(table.size());
    for (std::size_t i = 0; i < table.size(); ++i) {
      // Observed minimum TTC at or below |omega| marks a case.
      labels[i] = table.z[i] >= -std::abs(omega) ? 1 : 0;
    }
    try {
      const auto roc = roc_auc(scores, labels);
      row.auc = roc.auc;
      row.n_case = roc.n_case;
      row.n_control = roc.n_control;
    } catch (const DataError&) {
      row.skipped = true;
      row.auc = std::nan("");
      for (int l : labels) (l ? row.n_case : row.n_control)++;
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace corrisk::risk
