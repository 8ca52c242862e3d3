#include "corrisk/gev.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "corrisk/errors.hpp"

namespace corrisk::gev {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require_scale(const GevParams& p) {
  if (!(p.scale > 0.0)) {
    throw NumericError("gev: scale must be positive, got " +
                       std::to_string(p.scale));
  }
}

}  // namespace

double gev_logpdf(double z, const GevParams& p) {
  require_scale(p);
  const double t = (z - p.location) / p.scale;
  if (std::abs(p.shape) < kGumbelShapeTol) {
    return -std::log(p.scale) - t - std::exp(-t);
  }
  const double w = p.shape * t;
  if (1.0 + w <= 0.0) return kNegInf;
  const double lu = std::log1p(w);  // log(1 + xi*t), accurate near 0
  return -std::log(p.scale) - (1.0 + 1.0 / p.shape) * lu -
         std::exp(-lu / p.shape);
}

double gev_cdf(double z, const GevParams& p) {
  require_scale(p);
  const double t = (z - p.location) / p.scale;
  if (std::abs(p.shape) < kGumbelShapeTol) {
    return std::exp(-std::exp(-t));
  }
  const double w = p.shape * t;
  if (1.0 + w <= 0.0) {
    return p.shape > 0.0 ? 0.0 : 1.0;
  }
  return std::exp(-std::exp(-std::log1p(w) / p.shape));
}

double gev_quantile(double u, const GevParams& p) {
  require_scale(p);
  if (!(u > 0.0 && u < 1.0)) {
    throw NumericError("gev_quantile: u must lie in (0, 1)");
  }
  const double g = -std::log(u);  // > 0
  if (std::abs(p.shape) < kGumbelShapeTol) {
    return p.location - p.scale * std::log(g);
  }
  // ((-log u)^(-xi) - 1) / xi, evaluated via expm1 for small shapes.
  return p.location + p.scale * std::expm1(-p.shape * std::log(g)) / p.shape;
}

std::vector<double> gev_sample(const GevParams& p, int n, Rng& rng) {
  require_scale(p);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    out.push_back(gev_quantile(rng.uniform_open(), p));
  }
  return out;
}

namespace {

double linear_predictor(const CoefficientSet::LinearPart& part,
                        std::span<const double> covariates, int group_index) {
  double acc = 0.0;
  for (std::size_t j = 0; j < part.fixed_cols.size(); ++j) {
    const int c = part.fixed_cols[j];
    acc += part.beta[j] * (c < 0 ? 1.0 : covariates[static_cast<std::size_t>(c)]);
  }
  const std::size_t jr = part.random_cols.size();
  const double* row = part.gamma.data() + static_cast<std::size_t>(group_index) * jr;
  for (std::size_t j = 0; j < jr; ++j) {
    const int c = part.random_cols[j];
    acc += row[j] * (c < 0 ? 1.0 : covariates[static_cast<std::size_t>(c)]);
  }
  return acc;
}

}  // namespace

GevParams link_params(const CoefficientSet& coeffs,
                      std::span<const double> covariates, int group_id) {
  if (group_id < 1 || group_id > coeffs.n_groups) {
    throw ConfigError("link_params: unknown group " + std::to_string(group_id) +
                      " (have 1.." + std::to_string(coeffs.n_groups) + ")");
  }
  const int k = group_id - 1;
  GevParams p;
  p.location = linear_predictor(coeffs.mu, covariates, k);
  p.scale = std::exp(linear_predictor(coeffs.log_scale, covariates, k));
  double xi = 0.0;
  for (std::size_t j = 0; j < coeffs.xi_cols.size(); ++j) {
    const int c = coeffs.xi_cols[j];
    xi += coeffs.beta_xi[j] *
          (c < 0 ? 1.0 : covariates[static_cast<std::size_t>(c)]);
  }
  p.shape = xi;
  return p;
}

}  // namespace corrisk::gev
