#pragma once

#include <cstdint>
#include <cstring>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cgc/common.hpp"
#include "cgc/covariance.hpp"
#include "cgc/estimators.hpp"
#include "cgc/graphcut.hpp"
#include "cgc/mse.hpp"
#include "cgc/region_graph.hpp"
#include "cgc/synth_env.hpp"

namespace cgc {

enum class CovarianceMode { kCumulative, kSingleBatch };

inline std::string to_string(CovarianceMode m) {
  return m == CovarianceMode::kCumulative ? "cumulative" : "single-batch";
}

inline CovarianceMode parse_covariance_mode(const std::string& s) {
  if (s == "cumulative") return CovarianceMode::kCumulative;
  if (s == "single-batch" || s == "single_batch") return CovarianceMode::kSingleBatch;
  throw ConfigError("unknown covariance mode '" + s + "'");
}

struct CgcConfig {
  int batch_size = 20;
  int total_repetitions = 100;
  std::optional<Clustering> initial_design;  // unset: individual design
  CovarianceMode covariance_mode = CovarianceMode::kCumulative;
  double shrinkage = 0.1;
  OutcomeSpec regression;
  int m_max = 0;
  SpectralConfig spectral;
  std::uint64_t seed = 0;
  int crossfit_folds = 0;  // < 2 disables cross-fitting

  int rounds() const { return total_repetitions / batch_size; }

  void validate() const {
    if (batch_size < 1 || total_repetitions < 1) throw ConfigError("cgc: B and N must be positive");
    if (batch_size > total_repetitions) throw ConfigError("cgc: B must not exceed N");
    if (total_repetitions % batch_size != 0) throw ConfigError("cgc: B must divide N");
    if (!(shrinkage >= 0.0 && shrinkage <= 1.0)) throw ConfigError("cgc: shrinkage must lie in [0, 1]");
    if (crossfit_folds >= 2 && crossfit_folds > batch_size)
      throw ConfigError("cgc: more cross-fitting folds than repetitions per batch");
    spectral.validate();
  }
};

// Produces n repetitions under `design`. `round` is 1-based; `first_rep` is
// the global index of the first repetition in the batch.
using DataSource =
    std::function<ExperimentBatch(const Clustering& design, int n, int round, int first_rep)>;

inline DataSource synthetic_source(const SyntheticEnv& env, std::uint64_t seed) {
  return [&env, seed](const Clustering& design, int n, int, int first_rep) {
    return sample_batch(env, design, n, seed, first_rep);
  };
}

struct CgcRound {
  int round = 0;
  Clustering design;              // deployed for this round's batch
  std::uint64_t covariance_hash;  // FNV-1a over the estimated matrix
  std::vector<std::pair<int, double>> sweep;
  int chosen_m = 0;               // of the design selected for the next round
  double ate = 0.0;
};

struct CgcTrace {
  std::vector<CgcRound> rounds;
  Clustering next_design;
  double ate = 0.0;
};

inline std::uint64_t fnv1a(const Eigen::MatrixXd& m) {
  std::uint64_t h = 1469598103934665603ULL;
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      unsigned char bytes[sizeof(double)];
      const double v = m(r, c);
      std::memcpy(bytes, &v, sizeof v);
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ULL;
      }
    }
  }
  return h;
}

// Batch loop: run the current design, refit the outcome model on everything
// seen so far, re-estimate the residual covariance, re-select the design and
// score this round's batch with the design that generated it.
inline CgcTrace run_cgc(const RegionGraph& g, const DataSource& source, const CgcConfig& cfg) {
  cfg.validate();
  const int r = g.size();
  Clustering design = cfg.initial_design ? *cfg.initial_design : Clustering::individual(r);
  if (design.region_count() != r) throw ConfigError("cgc: initial design does not match the graph");

  CgcTrace trace{{}, design, 0.0};
  std::vector<ExperimentBatch> batches;
  for (int l = 1; l <= cfg.rounds(); ++l) {
    ExperimentBatch batch = source(design, cfg.batch_size, l, (l - 1) * cfg.batch_size);
    if (batch.size() != cfg.batch_size) throw std::runtime_error("cgc: data source returned a short batch");
    batch.design = design;
    check_batch(g, batch);
    batches.push_back(std::move(batch));
    const ExperimentBatch& current = batches.back();

    const OutcomeModel model = fit_outcome_model(g, batches, cfg.regression);

    RowMatrixXd resid;
    if (cfg.covariance_mode == CovarianceMode::kCumulative) {
      resid.resize(static_cast<Eigen::Index>(l) * cfg.batch_size, r);
      for (int b = 0; b < l; ++b)
        resid.middleRows(static_cast<Eigen::Index>(b) * cfg.batch_size, cfg.batch_size) =
            residuals(g, batches[b], model);
    } else {
      resid = residuals(g, current, model);
    }
    const CovarianceMatrix sigma_hat = empirical_covariance(resid, cfg.shrinkage);

    SpectralConfig spectral = cfg.spectral;
    spectral.rng_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(l));
    SelectOptions opt;
    opt.m_max = cfg.m_max;
    const DesignSelection sel = select_design(g, sigma_hat.values(), cfg.total_repetitions, spectral, opt);

    double ate_round;
    if (cfg.crossfit_folds >= 2) {
      ate_round = crossfit_dr(g, current, cfg.crossfit_folds, cfg.regression);
    } else {
      ate_round = dr_estimate(g, current, model);
    }

    trace.rounds.push_back({l, design, fnv1a(sigma_hat.values()), sel.per_m_mse, sel.chosen_m, ate_round});
    design = sel.clustering;
  }
  trace.next_design = design;
  double sum = 0.0;
  for (const auto& round : trace.rounds) sum += round.ate;
  trace.ate = sum / static_cast<double>(trace.rounds.size());
  return trace;
}

inline CgcTrace run_cgc(const SyntheticEnv& env, const CgcConfig& cfg) {
  return run_cgc(env.graph(), synthetic_source(env, cfg.seed), cfg);
}

// Design selected from the true covariance (the oracle baseline).
inline DesignSelection run_with_known_covariance(const RegionGraph& g, const Eigen::MatrixXd& sigma,
                                                 int n_experiments, const CgcConfig& cfg) {
  if (sigma.rows() != g.size() || sigma.cols() != g.size())
    throw std::invalid_argument("known covariance: dimension mismatch");
  SpectralConfig spectral = cfg.spectral;
  spectral.rng_seed = cfg.seed;
  SelectOptions opt;
  opt.m_max = cfg.m_max;
  return select_design(g, sigma, n_experiments, spectral, opt);
}

struct SingleExperimentResult {
  DesignSelection selection;
  std::vector<std::string> warnings;
  std::optional<double> reference_mse;  // exact sigma_1^2 under the reference covariance
};

// Design for a single experiment from a prior covariance, scored with N = 1.
// The global design cannot identify the ATE from one repetition, so it is
// dropped from the candidates and a warning is recorded when it would have won.
inline SingleExperimentResult run_single_experiment(const RegionGraph& g, const Eigen::MatrixXd& prior,
                                                    const CgcConfig& cfg,
                                                    const Eigen::MatrixXd* reference = nullptr) {
  if (prior.rows() != g.size() || prior.cols() != g.size())
    throw std::invalid_argument("single experiment: dimension mismatch");
  if ((prior - prior.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, prior.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("single experiment: prior covariance not symmetric");
  SpectralConfig spectral = cfg.spectral;
  spectral.rng_seed = cfg.seed;
  SelectOptions opt;
  opt.m_max = cfg.m_max;
  opt.include_global = false;
  SingleExperimentResult out{select_design(g, prior, 1, spectral, opt), {}, std::nullopt};

  const double global = sigma1_squared(g, Clustering::global(g.size()), prior, 1);
  if (global <= out.selection.chosen_mse())
    out.warnings.push_back("global design excluded: one experiment cannot identify the ATE under it");
  if (reference) out.reference_mse = sigma1_squared(g, out.selection.clustering, *reference, 1);
  return out;
}

}  // namespace cgc
