#include "corrisk/sampler.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "corrisk/errors.hpp"

namespace corrisk::mcmc {

namespace {

// Per-block proposal geometry and its running covariance estimate.
struct BlockState {
  int dim = 0;
  double scale = 1.0;
  double floor_sd = 1e-8;    // keeps stalled coordinates exploring
  Eigen::MatrixXd chol;      // lower-triangular proposal shape
  Eigen::VectorXd run_mean;
  Eigen::MatrixXd run_cov;   // scatter accumulator
  long run_n = 0;
};

void refresh_cholesky(BlockState& bs) {
  if (bs.run_n < 2) return;
  Eigen::MatrixXd cov = bs.run_cov / static_cast<double>(bs.run_n - 1);
  // The floor keeps the factorization well-posed and prevents a coordinate
  // whose chain has not moved yet from freezing at zero step size.
  cov.diagonal().array() += bs.floor_sd * bs.floor_sd;
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) {
    bs.chol = llt.matrixL();
  }
}

}  // namespace

ChainResult run_chain(const LogDensity& target, std::vector<double> init,
                      const std::vector<ParameterBlock>& blocks,
                      const SamplerConfig& cfg, Rng& rng) {
  if (cfg.burn_in < 0 || cfg.burn_in >= cfg.iterations) {
    throw ConfigError("sampler: burn_in must lie in [0, iterations)");
  }
  if (cfg.thin < 1) throw ConfigError("sampler: thin must be >= 1");
  const int n_params = static_cast<int>(init.size());
  const int n_blocks = static_cast<int>(blocks.size());

  std::vector<double> x = std::move(init);
  double lp = target(x);
  if (!std::isfinite(lp)) {
    throw NumericError("sampler: initial log density is not finite");
  }

  std::vector<BlockState> state(static_cast<std::size_t>(n_blocks));
  for (int b = 0; b < n_blocks; ++b) {
    auto& bs = state[b];
    bs.dim = static_cast<int>(blocks[b].indices.size());
    bs.scale = 2.38 / std::sqrt(static_cast<double>(bs.dim));
    bs.chol = Eigen::MatrixXd::Identity(bs.dim, bs.dim) *
              std::max(blocks[b].initial_scale, 1e-8);
    bs.floor_sd = std::max(0.02 * blocks[b].initial_scale, 1e-8);
    bs.run_mean = Eigen::VectorXd::Zero(bs.dim);
    bs.run_cov = Eigen::MatrixXd::Zero(bs.dim, bs.dim);
  }

  std::vector<int> batch_accepts(n_blocks, 0);
  std::vector<long> post_accepts(n_blocks, 0);
  long post_proposals = 0;
  int batch_number = 0;
  bool shape_adopted = false;

  ChainResult result;
  result.n_params = n_params;
  const int kept = (cfg.iterations - cfg.burn_in + cfg.thin - 1) / cfg.thin;
  result.draws.reserve(static_cast<std::size_t>(kept) * n_params);

  auto snapshot_shape = [&](std::vector<double>& out) {
    out.clear();
    for (const auto& bs : state) {
      for (int i = 0; i < bs.dim; ++i) {
        for (int j = 0; j <= i; ++j) out.push_back(bs.chol(i, j));
      }
    }
  };

  std::vector<double> proposal(x.size());
  Eigen::VectorXd z, step;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const bool warm = iter < cfg.burn_in;
    for (int b = 0; b < n_blocks; ++b) {
      auto& bs = state[b];
      proposal = x;
      z.resize(bs.dim);
      for (int i = 0; i < bs.dim; ++i) z(i) = rng.normal();
      step = bs.chol * z;
      for (int i = 0; i < bs.dim; ++i) {
        proposal[static_cast<std::size_t>(blocks[b].indices[i])] +=
            bs.scale * step(i);
      }
      const double lp_new = target(proposal);
      const double log_u = std::log(rng.uniform_open());
      if (log_u < lp_new - lp) {
        x.swap(proposal);
        lp = lp_new;
        if (warm) ++batch_accepts[b];
        else ++post_accepts[b];
      }
    }
    if (!warm) ++post_proposals;

    if (warm) {
      // Skip the earliest transient so the covariance reflects the posterior
      // rather than the initial approach to it.
      if (iter >= 10 * cfg.adapt_interval) {
        for (int b = 0; b < n_blocks; ++b) {
          auto& bs = state[b];
          ++bs.run_n;
          Eigen::VectorXd v(bs.dim);
          for (int i = 0; i < bs.dim; ++i) {
            v(i) = x[static_cast<std::size_t>(blocks[b].indices[i])];
          }
          const Eigen::VectorXd delta = v - bs.run_mean;
          bs.run_mean += delta / static_cast<double>(bs.run_n);
          bs.run_cov += delta * (v - bs.run_mean).transpose();
        }
      }
      if ((iter + 1) % cfg.adapt_interval == 0) {
        ++batch_number;
        const double gain =
            std::min(0.25, 1.0 / std::sqrt(static_cast<double>(batch_number)));
        for (int b = 0; b < n_blocks; ++b) {
          const double rate =
              static_cast<double>(batch_accepts[b]) / cfg.adapt_interval;
          state[b].scale *= std::exp(gain * (rate - cfg.target_acceptance));
          state[b].scale = std::clamp(state[b].scale, 1e-8, 1e3);
          batch_accepts[b] = 0;
        }
        if ((iter + 1) >= 30 * cfg.adapt_interval) {
          for (auto& bs : state) refresh_cholesky(bs);
          if (!shape_adopted) {
            // The empirical shape changes proposal magnitudes wholesale;
            // restart the scalar scales at the dimension-standard optimum.
            for (auto& bs : state) {
              bs.scale = 2.38 / std::sqrt(static_cast<double>(bs.dim));
            }
            shape_adopted = true;
          }
        }
      }
    }

    if (iter == cfg.burn_in - 1 || (cfg.burn_in == 0 && iter == 0)) {
      result.scales_at_burn_in_end.resize(n_blocks);
      for (int b = 0; b < n_blocks; ++b) {
        result.scales_at_burn_in_end[b] = state[b].scale;
      }
      snapshot_shape(result.shape_at_burn_in_end);
    }
    if (!warm && (iter - cfg.burn_in) % cfg.thin == 0) {
      result.draws.insert(result.draws.end(), x.begin(), x.end());
      ++result.n_stored;
    }
  }

  result.final_scales.resize(n_blocks);
  for (int b = 0; b < n_blocks; ++b) {
    result.final_scales[b] = state[b].scale;
  }
  snapshot_shape(result.final_shape);
  if (result.scales_at_burn_in_end.empty()) {
    result.scales_at_burn_in_end = result.final_scales;
    result.shape_at_burn_in_end = result.final_shape;
  }
  result.acceptance.resize(n_blocks);
  for (int b = 0; b < n_blocks; ++b) {
    result.acceptance[b] =
        post_proposals > 0
            ? static_cast<double>(post_accepts[b]) / post_proposals
            : 0.0;
  }
  result.final_log_density = lp;
  return result;
}

}  // namespace corrisk::mcmc
