#pragma once

#include <span>
#include <vector>

#include "corrisk/rng.hpp"

namespace corrisk::gev {

struct GevParams {
  double location = 0.0;  // mu
  double scale = 1.0;     // sigma > 0
  double shape = 0.0;     // xi; < 0 bounded tail, > 0 heavy tail
};

// Shape magnitudes below this use the Gumbel limit forms; naive evaluation
// of the generic expressions loses precision as shape -> 0.
inline constexpr double kGumbelShapeTol = 1e-8;

// Log density. Out-of-support points return -infinity (the sampler must
// reject, not crash). Throws NumericError when scale <= 0.
double gev_logpdf(double z, const GevParams& p);

// Distribution function with support clamping: exact 0 below the lower
// endpoint (shape > 0), exact 1 above the upper endpoint (shape < 0).
double gev_cdf(double z, const GevParams& p);

// Inverse of gev_cdf for u in (0, 1).
double gev_quantile(double u, const GevParams& p);

// Inverse-CDF sampling; the sequence is fully determined by the Rng state.
std::vector<double> gev_sample(const GevParams& p, int n, Rng& rng);

// Regression coefficients mapping a covariate row to GEV parameters.
// Column index -1 denotes the constant intercept term. Random-effect
// coefficients vary by group: gamma is row-major with n_groups rows.
struct CoefficientSet {
  struct LinearPart {
    std::vector<int> fixed_cols;
    std::vector<double> beta;         // parallel to fixed_cols
    std::vector<int> random_cols;
    std::vector<double> gamma;        // n_groups x random_cols.size()
  };
  LinearPart mu;
  LinearPart log_scale;               // scale = exp(linear predictor)
  std::vector<int> xi_cols;
  std::vector<double> beta_xi;
  int n_groups = 0;
};

// Evaluates the three linear predictors for one observation.
// group_id is 1-based; values outside 1..n_groups throw ConfigError.
GevParams link_params(const CoefficientSet& coeffs,
                      std::span<const double> covariates, int group_id);

}  // namespace corrisk::gev
