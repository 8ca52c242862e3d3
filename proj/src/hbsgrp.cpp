#include "corrisk/hbsgrp.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>

#include "corrisk/errors.hpp"
#include "corrisk/numeric.hpp"

namespace corrisk::hbsgrp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLogTwoPi = 1.8378770664093454835607;

int resolve_column(const std::string& name,
                   const std::vector<std::string>& covariate_names) {
  if (name == "intercept") return -1;
  for (std::size_t i = 0; i < covariate_names.size(); ++i) {
    if (covariate_names[i] == name) return static_cast<int>(i);
  }
  throw ConfigError("model spec references unknown covariate '" + name + "'");
}

double log_normal_pdf(double x, double mean, double sd) {
  const double t = (x - mean) / sd;
  return -0.5 * kLogTwoPi - std::log(sd) - 0.5 * t * t;
}

// log inverse-gamma density of variance x, plus nothing; the caller adds
// the Jacobian when sampling on the log scale.
double log_inv_gamma_pdf(double x, double alpha, double beta) {
  return alpha * std::log(beta) - std::lgamma(alpha) -
         (alpha + 1.0) * std::log(x) - beta / x;
}

double log_sum_exp(std::span<const double> v) {
  double mx = kNegInf;
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

}  // namespace

ParameterLayout build_layout(const ModelSpec& spec,
                             const std::vector<std::string>& covariate_names) {
  if (spec.n_groups < 1) throw ConfigError("model spec: n_groups must be >= 1");
  const bool fixed_variant = spec.variant == Variant::FixedParameter;
  if (fixed_variant && (!spec.mu_random.empty() || !spec.sigma_random.empty())) {
    throw ConfigError(
        "fixed-parameter variant cannot carry random-effect covariates");
  }
  if (!fixed_variant && spec.mu_random.empty() && spec.sigma_random.empty()) {
    throw ConfigError(
        "grouped-random-parameter variant needs at least one random covariate");
  }

  ParameterLayout layout;
  layout.n_groups = spec.n_groups;
  int next = 0;

  auto add_family = [&](const std::vector<std::string>& fixed,
                        const std::vector<std::string>& random,
                        const std::string& tag) {
    ParameterLayout::Family fam;
    for (const auto& name : fixed) {
      fam.fixed_cols.push_back(resolve_column(name, covariate_names));
      fam.fixed_idx.push_back(next);
      layout.names.push_back("beta_" + tag + "[" + name + "]");
      ++next;
    }
    for (const auto& name : random) {
      fam.random_cols.push_back(resolve_column(name, covariate_names));
      fam.popmean_idx.push_back(next);
      layout.names.push_back("gamma_" + tag + "_mean[" + name + "]");
      ++next;
    }
    const int jr = static_cast<int>(random.size());
    if (jr > 0) {
      fam.group_idx.resize(static_cast<std::size_t>(spec.n_groups) * jr);
      for (int k = 0; k < spec.n_groups; ++k) {
        for (int j = 0; j < jr; ++j) {
          fam.group_idx[static_cast<std::size_t>(k) * jr + j] = next;
          layout.names.push_back("gamma_" + tag + "[" + random[j] + ":" +
                                 std::to_string(k + 1) + "]");
          ++next;
        }
      }
    }
    return fam;
  };

  layout.mu = add_family(spec.mu_fixed, spec.mu_random, "mu");
  layout.sigma = add_family(spec.sigma_fixed, spec.sigma_random, "sigma");

  for (const auto& name : spec.xi_fixed) {
    layout.xi_cols.push_back(resolve_column(name, covariate_names));
    layout.xi_idx.push_back(next);
    layout.names.push_back("beta_xi[" + name + "]");
    ++next;
  }
  if (layout.xi_idx.empty()) {
    throw ConfigError("model spec: the shape parameter needs an intercept");
  }

  if (!layout.mu.random_cols.empty()) {
    layout.mu.log_tau2_idx = next;
    layout.names.push_back("log_tau2_mu");
    ++next;
  }
  if (!layout.sigma.random_cols.empty()) {
    layout.sigma.log_tau2_idx = next;
    layout.names.push_back("log_tau2_sigma");
    ++next;
  }
  layout.n_params = next;

  // Sampler blocks: fixed coefficients, population means, per-group
  // coefficients, the shape block, and the process variances. Population
  // means live in their own block: they are process-layer quantities whose
  // posterior is much wider than the data-pinned betas, and a shared
  // proposal scale would strangle their mixing.
  auto family_blocks = [&](const ParameterLayout::Family& fam,
                           const std::string& tag) {
    if (!fam.fixed_idx.empty()) {
      layout.blocks.push_back({tag + "_fixed", fam.fixed_idx, 0.05});
    }
    if (!fam.popmean_idx.empty()) {
      layout.blocks.push_back({tag + "_popmean", fam.popmean_idx, 0.2});
    }
    const int jr = static_cast<int>(fam.random_cols.size());
    for (int k = 0; k < spec.n_groups && jr > 0; ++k) {
      std::vector<int> idx(fam.group_idx.begin() + static_cast<long>(k) * jr,
                           fam.group_idx.begin() + static_cast<long>(k + 1) * jr);
      layout.blocks.push_back(
          {tag + "_group_" + std::to_string(k + 1), idx, 0.1});
    }
  };
  family_blocks(layout.mu, "mu");
  family_blocks(layout.sigma, "sigma");
  layout.blocks.push_back({"xi", layout.xi_idx, 0.02});
  std::vector<int> tau_idx;
  if (layout.mu.log_tau2_idx >= 0) tau_idx.push_back(layout.mu.log_tau2_idx);
  if (layout.sigma.log_tau2_idx >= 0) tau_idx.push_back(layout.sigma.log_tau2_idx);
  if (!tau_idx.empty()) layout.blocks.push_back({"tau2", tau_idx, 0.5});

  return layout;
}

gev::CoefficientSet coefficients_at(const ParameterLayout& layout,
                                    std::span<const double> params) {
  gev::CoefficientSet coeffs;
  coeffs.n_groups = layout.n_groups;
  auto fill = [&](const ParameterLayout::Family& fam,
                  gev::CoefficientSet::LinearPart& part) {
    part.fixed_cols = fam.fixed_cols;
    for (int idx : fam.fixed_idx) part.beta.push_back(params[idx]);
    part.random_cols = fam.random_cols;
    for (int idx : fam.group_idx) part.gamma.push_back(params[idx]);
  };
  fill(layout.mu, coeffs.mu);
  fill(layout.sigma, coeffs.log_scale);
  coeffs.xi_cols = layout.xi_cols;
  for (int idx : layout.xi_idx) coeffs.beta_xi.push_back(params[idx]);
  return coeffs;
}

Posterior::Posterior(const blocks::BlockTable& table, const ModelSpec& spec,
                     const PriorConfig& priors)
    : table_(table),
      spec_(spec),
      priors_(priors),
      layout_(build_layout(spec, table.covariate_names)) {
  for (int g : table.group_id) {
    if (g < 1 || g > spec.n_groups) {
      throw ConfigError("record group id " + std::to_string(g) +
                        " outside 1.." + std::to_string(spec.n_groups));
    }
  }
}

namespace {

double linear_term(std::span<const double> params,
                   const ParameterLayout::Family& fam,
                   std::span<const double> row, int group_index) {
  double acc = 0.0;
  for (std::size_t j = 0; j < fam.fixed_cols.size(); ++j) {
    const int c = fam.fixed_cols[j];
    acc += params[fam.fixed_idx[j]] * (c < 0 ? 1.0 : row[c]);
  }
  const std::size_t jr = fam.random_cols.size();
  if (jr > 0) {
    const int* idx = fam.group_idx.data() + static_cast<std::size_t>(group_index) * jr;
    for (std::size_t j = 0; j < jr; ++j) {
      const int c = fam.random_cols[j];
      acc += params[idx[j]] * (c < 0 ? 1.0 : row[c]);
    }
  }
  return acc;
}

// GEV log density with the scale given on the log link; shares the Gumbel
// switchover with gev_logpdf.
double logpdf_log_scale(double z, double mu, double log_sigma, double xi) {
  const double t = (z - mu) * std::exp(-log_sigma);
  if (std::abs(xi) < gev::kGumbelShapeTol) {
    return -log_sigma - t - std::exp(-t);
  }
  const double w = xi * t;
  if (1.0 + w <= 0.0) return kNegInf;
  const double lu = std::log1p(w);
  return -log_sigma - (1.0 + 1.0 / xi) * lu - std::exp(-lu / xi);
}

}  // namespace

double Posterior::record_loglik(std::span<const double> params,
                                std::size_t i) const {
  const auto row = table_.row(i);
  const int k = table_.group_id[i] - 1;
  const double mu = linear_term(params, layout_.mu, row, k);
  const double log_sigma = linear_term(params, layout_.sigma, row, k);
  double xi = 0.0;
  for (std::size_t j = 0; j < layout_.xi_cols.size(); ++j) {
    const int c = layout_.xi_cols[j];
    xi += params[layout_.xi_idx[j]] * (c < 0 ? 1.0 : row[c]);
  }
  return logpdf_log_scale(table_.z[i], mu, log_sigma, xi);
}

Posterior::Components Posterior::components(
    std::span<const double> params) const {
  Components out;

  // Shape truncation first: out-of-bounds proposals are rejected outright.
  for (int idx : layout_.xi_idx) {
    if (params[idx] <= priors_.xi_lower || params[idx] >= priors_.xi_upper) {
      out.prior = kNegInf;
      return out;
    }
  }

  static thread_local std::vector<double> scratch;
  scratch.clear();
  scratch.reserve(table_.size());
  for (std::size_t i = 0; i < table_.size(); ++i) {
    const double ll = record_loglik(params, i);
    if (ll == kNegInf) {
      out.data = kNegInf;
      return out;
    }
    scratch.push_back(ll);
  }
  out.data = pairwise_sum(scratch);

  auto process_family = [&](const ParameterLayout::Family& fam) {
    if (fam.random_cols.empty()) return 0.0;
    const double tau2 = std::exp(params[fam.log_tau2_idx]);
    const double tau = std::sqrt(tau2);
    double acc = 0.0;
    const std::size_t jr = fam.random_cols.size();
    for (int k = 0; k < layout_.n_groups; ++k) {
      for (std::size_t j = 0; j < jr; ++j) {
        const double g = params[fam.group_idx[static_cast<std::size_t>(k) * jr + j]];
        acc += log_normal_pdf(g, params[fam.popmean_idx[j]], tau);
      }
    }
    return acc;
  };
  out.process = process_family(layout_.mu) + process_family(layout_.sigma);

  double prior = 0.0;
  auto prior_family = [&](const ParameterLayout::Family& fam) {
    for (int idx : fam.fixed_idx) {
      prior += log_normal_pdf(params[idx], priors_.coef_mean, priors_.coef_sd);
    }
    for (int idx : fam.popmean_idx) {
      prior += log_normal_pdf(params[idx], priors_.coef_mean, priors_.coef_sd);
    }
    if (fam.log_tau2_idx >= 0) {
      const double theta = params[fam.log_tau2_idx];
      // Inverse-gamma on tau^2 sampled through theta = log tau^2.
      prior += log_inv_gamma_pdf(std::exp(theta), priors_.tau_alpha,
                                 priors_.tau_beta) +
               theta;
    }
  };
  prior_family(layout_.mu);
  prior_family(layout_.sigma);
  for (int idx : layout_.xi_idx) {
    prior += log_normal_pdf(params[idx], priors_.coef_mean, priors_.coef_sd);
  }
  out.prior = prior;
  return out;
}

double Posterior::operator()(std::span<const double> params) const {
  const Components c = components(params);
  if (c.prior == kNegInf || c.data == kNegInf) return kNegInf;
  return c.data + c.process + c.prior;
}

namespace {

std::vector<double> initial_point(const blocks::BlockTable& table,
                                  const ParameterLayout& layout) {
  std::vector<double> init(static_cast<std::size_t>(layout.n_params), 0.0);
  const double mean_z = mean_of(table.z);
  const double sd_z = std::max(1e-3, sample_sd(table.z));
  // Method-of-moments Gumbel start keeps every record inside the support.
  const double mu0 = mean_z;
  const double log_sigma0 = std::log(sd_z * std::sqrt(6.0) / M_PI);

  auto seed_family = [&](const ParameterLayout::Family& fam, double value) {
    for (std::size_t j = 0; j < fam.fixed_cols.size(); ++j) {
      if (fam.fixed_cols[j] < 0) init[fam.fixed_idx[j]] = value;
    }
    const std::size_t jr = fam.random_cols.size();
    for (std::size_t j = 0; j < jr; ++j) {
      if (fam.random_cols[j] < 0) {
        init[fam.popmean_idx[j]] = value;
        for (int k = 0; k < layout.n_groups; ++k) {
          init[fam.group_idx[static_cast<std::size_t>(k) * jr + j]] = value;
        }
      }
    }
    if (fam.log_tau2_idx >= 0) {
      init[fam.log_tau2_idx] = std::log(0.01);  // tau = 0.1
    }
  };
  seed_family(layout.mu, mu0);
  seed_family(layout.sigma, log_sigma0);
  for (std::size_t j = 0; j < layout.xi_cols.size(); ++j) {
    if (layout.xi_cols[j] < 0) init[layout.xi_idx[j]] = -0.1;
  }
  return init;
}

}  // namespace

PosteriorChain run_mcmc(const blocks::BlockTable& table, const ModelSpec& spec,
                        const PriorConfig& priors, const McmcConfig& cfg) {
  if (table.size() == 0) throw DataError("run_mcmc: no records");
  if (cfg.chains < 1) throw ConfigError("run_mcmc: chains must be >= 1");

  const Posterior posterior(table, spec, priors);
  const ParameterLayout& layout = posterior.layout();
  const std::vector<double> init = initial_point(table, layout);

  {
    const double lp0 = posterior(init);
    if (!std::isfinite(lp0)) {
      throw NumericError(
          "run_mcmc: initial log posterior is not finite; check that the "
          "records lie inside the GEV support at the starting point");
    }
  }

  mcmc::SamplerConfig scfg;
  scfg.iterations = cfg.iterations;
  scfg.burn_in = cfg.burn_in;
  scfg.thin = cfg.thin;
  scfg.adapt_interval = cfg.adapt_interval;

  PosteriorChain out;
  out.parameter_names = layout.names;
  out.burn_in = cfg.burn_in;
  out.thinning = cfg.thin;
  out.seed = cfg.seed;
  out.chains.resize(static_cast<std::size_t>(cfg.chains));

  auto run_one = [&](int c) {
    Rng rng(cfg.seed, "chain-" + std::to_string(c));
    return mcmc::run_chain(
        [&posterior](std::span<const double> p) { return posterior(p); }, init,
        layout.blocks, scfg, rng);
  };

  const int workers = std::max(1, std::min(cfg.jobs, cfg.chains));
  if (workers == 1) {
    for (int c = 0; c < cfg.chains; ++c) out.chains[c] = run_one(c);
  } else {
    std::vector<std::future<mcmc::ChainResult>> futures;
    for (int c = 0; c < cfg.chains; ++c) {
      futures.push_back(
          std::async(std::launch::async, [&run_one, c] { return run_one(c); }));
    }
    for (int c = 0; c < cfg.chains; ++c) out.chains[c] = futures[c].get();
  }
  return out;
}

std::vector<double> bgr_diagnostic(const PosteriorChain& chain) {
  const int n_chains = static_cast<int>(chain.chains.size());
  if (n_chains < 2) {
    throw ConfigError("bgr_diagnostic: needs at least 2 chains, have " +
                      std::to_string(n_chains));
  }
  const int n = chain.stored_per_chain();
  const int p = chain.n_params();
  for (const auto& c : chain.chains) {
    if (c.n_stored != n) {
      throw DataError("bgr_diagnostic: chains have unequal lengths");
    }
  }

  std::vector<double> out(static_cast<std::size_t>(p));
  std::vector<double> values(static_cast<std::size_t>(n));
  for (int j = 0; j < p; ++j) {
    double grand = 0.0;
    std::vector<double> means(n_chains), vars(n_chains);
    for (int c = 0; c < n_chains; ++c) {
      for (int i = 0; i < n; ++i) values[i] = chain.draw(c, i, j);
      means[c] = mean_of(values);
      vars[c] = sample_variance(values);
      grand += means[c] / n_chains;
    }
    double b_over_n = 0.0;
    for (int c = 0; c < n_chains; ++c) {
      b_over_n += (means[c] - grand) * (means[c] - grand);
    }
    b_over_n /= (n_chains - 1);
    double w = 0.0;
    for (int c = 0; c < n_chains; ++c) w += vars[c] / n_chains;
    if (w == 0.0) {
      out[j] = b_over_n == 0.0 ? std::sqrt((n - 1.0) / n)
                               : std::numeric_limits<double>::infinity();
      continue;
    }
    out[j] = std::sqrt(((n - 1.0) / n * w + b_over_n) / w);
  }
  return out;
}

std::vector<double> posterior_mean(const PosteriorChain& chain) {
  const int p = chain.n_params();
  std::vector<double> mean(static_cast<std::size_t>(p), 0.0);
  long total = 0;
  for (const auto& c : chain.chains) total += c.n_stored;
  for (const auto& c : chain.chains) {
    for (int i = 0; i < c.n_stored; ++i) {
      for (int j = 0; j < p; ++j) {
        mean[j] += c.draws[static_cast<std::size_t>(i) * p + j] / total;
      }
    }
  }
  return mean;
}

std::vector<ParameterSummary> summarize(const PosteriorChain& chain) {
  const int p = chain.n_params();
  std::vector<double> bgr;
  if (chain.chains.size() >= 2) bgr = bgr_diagnostic(chain);

  std::vector<ParameterSummary> out;
  std::vector<double> pooled;
  for (int j = 0; j < p; ++j) {
    pooled.clear();
    for (const auto& c : chain.chains) {
      for (int i = 0; i < c.n_stored; ++i) {
        pooled.push_back(c.draws[static_cast<std::size_t>(i) * p + j]);
      }
    }
    ParameterSummary s;
    s.name = chain.parameter_names[j];
    s.mean = mean_of(pooled);
    s.sd = sample_sd(pooled);
    std::sort(pooled.begin(), pooled.end());
    s.q025 = quantile_sorted(pooled, 0.025);
    s.q50 = quantile_sorted(pooled, 0.5);
    s.q975 = quantile_sorted(pooled, 0.975);
    s.bgr = bgr.empty() ? std::nan("") : bgr[j];
    out.push_back(s);
  }
  return out;
}

FitMetrics fit_metrics(const PosteriorChain& chain,
                       const blocks::BlockTable& table, const ModelSpec& spec,
                       const PriorConfig& priors, int max_loglik_draws) {
  const Posterior posterior(table, spec, priors);
  const int p = chain.n_params();
  const std::size_t n_rec = table.size();

  // Deterministic stride over pooled draws caps the pointwise matrix.
  std::vector<std::pair<int, int>> subset;  // (chain, iter)
  long total = 0;
  for (const auto& c : chain.chains) total += c.n_stored;
  const long stride = std::max<long>(1, total / std::max(1, max_loglik_draws));
  {
    long serial = 0;
    for (std::size_t c = 0; c < chain.chains.size(); ++c) {
      for (int i = 0; i < chain.chains[c].n_stored; ++i, ++serial) {
        if (serial % stride == 0) subset.push_back({static_cast<int>(c), i});
      }
    }
  }
  const int s_draws = static_cast<int>(subset.size());

  FitMetrics metrics;
  metrics.n_draws = s_draws;
  metrics.n_records = static_cast<int>(n_rec);
  metrics.pointwise.resize(static_cast<std::size_t>(s_draws) * n_rec);

  std::vector<double> params(static_cast<std::size_t>(p));
  std::vector<double> deviance(s_draws);
  for (int s = 0; s < s_draws; ++s) {
    const auto [c, i] = subset[s];
    for (int j = 0; j < p; ++j) params[j] = chain.draw(c, i, j);
    double total_ll = 0.0;
    for (std::size_t r = 0; r < n_rec; ++r) {
      const double ll = posterior.record_loglik(params, r);
      metrics.pointwise[static_cast<std::size_t>(s) * n_rec + r] = ll;
      total_ll += ll;
    }
    deviance[s] = -2.0 * total_ll;
  }

  const double mean_deviance = mean_of(deviance);
  const std::vector<double> theta_bar = posterior_mean(chain);
  double ll_at_mean = 0.0;
  for (std::size_t r = 0; r < n_rec; ++r) {
    ll_at_mean += posterior.record_loglik(theta_bar, r);
  }
  metrics.p_dic = mean_deviance - (-2.0 * ll_at_mean);
  metrics.dic = mean_deviance + metrics.p_dic;

  // WAIC and truncated importance-sampling LOO share the pointwise matrix.
  double lppd = 0.0, p_waic = 0.0, elpd_loo = 0.0;
  std::vector<double> col(s_draws), neg(s_draws);
  for (std::size_t r = 0; r < n_rec; ++r) {
    for (int s = 0; s < s_draws; ++s) {
      col[s] = metrics.pointwise[static_cast<std::size_t>(s) * n_rec + r];
    }
    lppd += log_sum_exp(col) - std::log(static_cast<double>(s_draws));
    p_waic += sample_variance(col);

    // Raw log weights are -loglik; truncate at the 99.9th percentile.
    for (int s = 0; s < s_draws; ++s) neg[s] = -col[s];
    std::vector<double> sorted_neg = neg;
    std::sort(sorted_neg.begin(), sorted_neg.end());
    const double cap = quantile_sorted(sorted_neg, 0.999);
    std::vector<double> num(s_draws), den(s_draws);
    for (int s = 0; s < s_draws; ++s) {
      const double lw = std::min(neg[s], cap);
      num[s] = lw + col[s];
      den[s] = lw;
    }
    elpd_loo += log_sum_exp(num) - log_sum_exp(den);
  }
  metrics.p_waic = p_waic;
  metrics.waic = -2.0 * (lppd - p_waic);
  metrics.looic = -2.0 * elpd_loo;
  return metrics;
}

}  // namespace corrisk::hbsgrp
