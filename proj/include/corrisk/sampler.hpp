#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "corrisk/rng.hpp"

namespace corrisk::mcmc {

// One Metropolis update block: the named indices are perturbed jointly by
// independent normal increments sharing a single adaptive scale.
struct ParameterBlock {
  std::string name;
  std::vector<int> indices;
  double initial_scale = 0.05;
};

struct SamplerConfig {
  int iterations = 50000;  // total, including burn-in
  int burn_in = 20000;
  int thin = 1;            // keep every thin-th post-burn-in draw
  int adapt_interval = 50; // batch length for scale adaptation
  double target_acceptance = 0.3;
};

struct ChainResult {
  std::vector<double> draws;  // row-major, n_stored x n_params
  int n_stored = 0;
  int n_params = 0;
  std::vector<double> scales_at_burn_in_end;  // per block
  std::vector<double> final_scales;           // identical when frozen
  std::vector<double> shape_at_burn_in_end;   // concatenated proposal Cholesky
  std::vector<double> final_shape;            // identical when frozen
  std::vector<double> acceptance;             // post-burn-in rate per block
  double final_log_density = 0.0;
};

using LogDensity = std::function<double(std::span<const double>)>;

// Adaptive random-walk Metropolis over the given blocks. Each block
// proposes x_B + scale_B * L_B z with z standard normal: the scalar scale
// chases the target acceptance while L_B is the Cholesky factor of the
// block's running posterior covariance (Haario-style adaptation), so
// correlated coefficients get correlated proposals. Both adapt during
// burn-in only; afterwards they are frozen so the post-burn-in draws
// target the exact posterior. The trajectory is fully determined by the
// Rng, making chains reproducible. Throws NumericError when the initial
// log density is not finite.
ChainResult run_chain(const LogDensity& target, std::vector<double> init,
                      const std::vector<ParameterBlock>& blocks,
                      const SamplerConfig& cfg, Rng& rng);

}  // namespace corrisk::mcmc
