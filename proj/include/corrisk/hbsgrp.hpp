#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "corrisk/blocks.hpp"
#include "corrisk/gev.hpp"
#include "corrisk/sampler.hpp"

namespace corrisk::hbsgrp {

// Fixed-parameter baseline vs grouped-random-parameter model: the grouped
// variant lets selected coefficients vary by spatial group around a
// population mean with an inverse-gamma-distributed variance.
enum class Variant { FixedParameter, GroupedRandomParameter };

// Covariate names reference BlockTable columns; "intercept" denotes the
// constant term. Random lists must be empty under the fixed variant.
struct ModelSpec {
  Variant variant = Variant::GroupedRandomParameter;
  int n_groups = 0;  // K
  std::vector<std::string> mu_fixed;
  std::vector<std::string> mu_random;
  std::vector<std::string> sigma_fixed;   // log-scale link
  std::vector<std::string> sigma_random;
  std::vector<std::string> xi_fixed = {"intercept"};
};

struct PriorConfig {
  double coef_mean = 0.0;
  double coef_sd = 10.0;     // normal prior on every beta and population mean
  double tau_alpha = 0.01;   // inverse-gamma on the process variances
  double tau_beta = 0.01;
  double xi_lower = -1.0;    // truncation bounds on the shape coefficients
  double xi_upper = 0.5;
};

// Index map from the flat parameter vector to model roles.
struct ParameterLayout {
  struct Family {
    std::vector<int> fixed_cols;    // column ids; -1 = intercept
    std::vector<int> fixed_idx;     // parameter indices of the betas
    std::vector<int> random_cols;
    std::vector<int> popmean_idx;   // population means, one per random col
    std::vector<int> group_idx;     // row-major K x J': gamma_{j,k}
    int log_tau2_idx = -1;
  };
  Family mu;
  Family sigma;
  std::vector<int> xi_cols;
  std::vector<int> xi_idx;
  int n_params = 0;
  int n_groups = 0;
  std::vector<std::string> names;
  std::vector<mcmc::ParameterBlock> blocks;
};

ParameterLayout build_layout(const ModelSpec& spec,
                             const std::vector<std::string>& covariate_names);

// Extracts regression coefficients from a parameter vector for link_params.
gev::CoefficientSet coefficients_at(const ParameterLayout& layout,
                                    std::span<const double> params);

// Three-layer log posterior: GEV data likelihood through the covariate
// links, normal process layer of group coefficients around population
// means, and the prior layer. Out-of-support records yield -infinity.
class Posterior {
 public:
  Posterior(const blocks::BlockTable& table, const ModelSpec& spec,
            const PriorConfig& priors);

  double operator()(std::span<const double> params) const;

  struct Components {
    double data = 0.0;
    double process = 0.0;
    double prior = 0.0;
  };
  Components components(std::span<const double> params) const;

  // Per-record data log likelihood at the given parameters.
  double record_loglik(std::span<const double> params, std::size_t i) const;

  const ParameterLayout& layout() const { return layout_; }

 private:
  const blocks::BlockTable& table_;
  ModelSpec spec_;
  PriorConfig priors_;
  ParameterLayout layout_;
};

struct McmcConfig {
  int chains = 2;
  int iterations = 50000;
  int burn_in = 20000;
  int thin = 10;           // storage stride for post-burn-in draws
  int adapt_interval = 50;
  std::uint64_t seed = 1;
  int jobs = 1;            // chains run in parallel up to this many workers
};

struct PosteriorChain {
  std::vector<std::string> parameter_names;
  int burn_in = 0;
  int thinning = 1;
  std::uint64_t seed = 0;
  std::vector<mcmc::ChainResult> chains;

  int n_params() const { return chains.empty() ? 0 : chains[0].n_params; }
  int stored_per_chain() const {
    return chains.empty() ? 0 : chains[0].n_stored;
  }
  double draw(int chain, int iter, int param) const {
    return chains[chain]
        .draws[static_cast<std::size_t>(iter) * n_params() + param];
  }
};

// Runs the blocked adaptive sampler on the model posterior. Deterministic
// given the seed; chain c draws from substream "chain-c". Throws
// NumericError if the initial log posterior is not finite.
PosteriorChain run_mcmc(const blocks::BlockTable& table, const ModelSpec& spec,
                        const PriorConfig& priors, const McmcConfig& cfg);

// Potential scale reduction factor per parameter from >= 2 chains.
std::vector<double> bgr_diagnostic(const PosteriorChain& chain);

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q50 = 0.0;
  double q975 = 0.0;
  double bgr = 0.0;
};

std::vector<ParameterSummary> summarize(const PosteriorChain& chain);

// Posterior-mean parameter vector across all chains and draws.
std::vector<double> posterior_mean(const PosteriorChain& chain);

struct FitMetrics {
  double dic = 0.0;
  double p_dic = 0.0;
  double waic = 0.0;
  double p_waic = 0.0;
  double looic = 0.0;
  // Pointwise log likelihood, draws x records, on the (possibly strided)
  // draw subset used by all three criteria.
  std::vector<double> pointwise;
  int n_draws = 0;
  int n_records = 0;
};

// DIC, WAIC, and truncated-importance-sampling LOOIC from one chain set.
// max_loglik_draws caps the draw subset (deterministic stride) so the
// pointwise matrix stays small.
FitMetrics fit_metrics(const PosteriorChain& chain,
                       const blocks::BlockTable& table, const ModelSpec& spec,
                       const PriorConfig& priors,
                       int max_loglik_draws = 2000);

}  // namespace corrisk::hbsgrp
