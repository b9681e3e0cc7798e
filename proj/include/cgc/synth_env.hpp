#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "cgc/common.hpp"
#include "cgc/covariance.hpp"
#include "cgc/estimators.hpp"
#include "cgc/outcome_model.hpp"
#include "cgc/region_graph.hpp"

namespace cgc {

struct CovariateLaw {
  enum class Kind { kUniform, kConstant };
  Kind kind = Kind::kUniform;
  double low = 0.5;
  double high = 1.5;
  double value = 1.0;

  static CovariateLaw uniform(double a, double b) { return {Kind::kUniform, a, b, 0.0}; }
  static CovariateLaw constant(double c) { return {Kind::kConstant, 0.0, 0.0, c}; }

  double mean() const { return kind == Kind::kConstant ? value : 0.5 * (low + high); }
};

// Sinusoidal outcome model with neighbourhood interference and Gaussian
// residuals e ~ N(0, Sigma):
//   Y_it = 3 O_it sin(l_x + l_y + s (A_it + 0.5 Abar_it)) + e_it.
class SyntheticEnv {
 public:
  SyntheticEnv(RegionGraph graph, CovarianceMatrix covariance, double signal = 0.025,
               CovariateLaw law = {}, std::uint64_t seed = 0, double noise_scale = 1.0)
      : graph_(std::move(graph)),
        covariance_(std::move(covariance)),
        signal_(signal),
        law_(law),
        seed_(seed),
        noise_scale_(noise_scale) {
    if (!(signal_ > 0.0)) throw std::invalid_argument("SyntheticEnv: signal strength must be > 0");
    if (covariance_.size() != graph_.size())
      throw std::invalid_argument("SyntheticEnv: covariance dimension != region count");
    if (law_.kind == CovariateLaw::Kind::kUniform && !(law_.high > law_.low))
      throw std::invalid_argument("SyntheticEnv: empty covariate range");
    factor_ = factorize_for_sampling(covariance_.values());
  }

  const RegionGraph& graph() const { return graph_; }
  const CovarianceMatrix& covariance() const { return covariance_; }
  double signal() const { return signal_; }
  const CovariateLaw& covariate_law() const { return law_; }
  std::uint64_t seed() const { return seed_; }
  double noise_scale() const { return noise_scale_; }
  const Eigen::MatrixXd& noise_factor() const { return factor_; }

  // Noise-free outcome g_i(a, o).
  double mean_outcome(int i, std::span<const int> a, std::span<const double> o) const {
    const Coord& c = graph_.coord(i);
    const double exposure = a[i] + 0.5 * neighbour_mean_treatment(graph_, i, a);
    return 3.0 * o[i] * std::sin(c.x + c.y + signal_ * exposure);
  }

 private:
  RegionGraph graph_;
  CovarianceMatrix covariance_;
  double signal_;
  CovariateLaw law_;
  std::uint64_t seed_;
  double noise_scale_;
  Eigen::MatrixXd factor_;
};

// The true g as an OutcomeModel (tests and diagnostics).
inline OutcomeModel oracle_model(const SyntheticEnv& env) {
  auto copy = std::make_shared<const SyntheticEnv>(env);
  return OutcomeModel(OutcomeModel::Kind::kOracle, "oracle",
                      [copy](const RegionGraph&, int i, std::span<const int> a,
                             std::span<const double> o) { return copy->mean_outcome(i, a, o); });
}

namespace detail {

// Independent random streams per repetition so that every design sees the
// same covariates and residuals for repetition t under the same seed.
struct RepetitionStreams {
  std::mt19937_64 coins;
  std::mt19937_64 covariates;
  std::mt19937_64 noise;

  RepetitionStreams(std::uint64_t seed, std::uint64_t rep)
      : coins(derive_seed(seed, 3 * rep)),
        covariates(derive_seed(seed, 3 * rep + 1)),
        noise(derive_seed(seed, 3 * rep + 2)) {}
};

inline void draw_covariates(const SyntheticEnv& env, std::mt19937_64& rng, std::span<double> o) {
  const auto& law = env.covariate_law();
  if (law.kind == CovariateLaw::Kind::kConstant) {
    std::fill(o.begin(), o.end(), law.value);
    return;
  }
  std::uniform_real_distribution<double> u(law.low, law.high);
  for (double& v : o) v = u(rng);
}

inline Eigen::VectorXd draw_noise(const SyntheticEnv& env, std::mt19937_64& rng) {
  const int r = env.graph().size();
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(r);
  for (int i = 0; i < r; ++i) z(i) = normal(rng);
  return env.noise_scale() * (env.noise_factor() * z);
}

}  // namespace detail

// Draws n repetitions under `design`; repetition k of the batch uses the
// random streams of global repetition index first_rep + k.
inline ExperimentBatch sample_batch(const SyntheticEnv& env, const Clustering& design, int n,
                                    std::uint64_t seed, int first_rep = 0) {
  const auto& g = env.graph();
  const int r = g.size();
  if (design.region_count() != r) throw std::invalid_argument("sample_batch: design size mismatch");
  if (n < 0) throw std::invalid_argument("sample_batch: negative size");
  ExperimentBatch b{RowMatrixXd(n, r), RowMatrixXi(n, r), RowMatrixXd(n, r), design};
  std::bernoulli_distribution coin(0.5);
  std::vector<int> cluster_arm(design.cluster_count());
  for (int t = 0; t < n; ++t) {
    detail::RepetitionStreams streams(seed, static_cast<std::uint64_t>(first_rep + t));
    for (int& a : cluster_arm) a = coin(streams.coins) ? 1 : 0;
    for (int i = 0; i < r; ++i) b.treatments(t, i) = cluster_arm[design.label(i)];
    std::span<double> o(b.covariates.row(t).data(), r);
    detail::draw_covariates(env, streams.covariates, o);
    const Eigen::VectorXd e = detail::draw_noise(env, streams.noise);
    const auto a = b.treatment_row(t);
    for (int i = 0; i < r; ++i) b.outcomes(t, i) = env.mean_outcome(i, a, o) + e(i);
  }
  return b;
}

inline ExperimentBatch sample_batch(const SyntheticEnv& env, const Clustering& design, int n) {
  return sample_batch(env, design, n, env.seed());
}

// Analytic ATE: 3 mu_O sum_i [sin(l_x + l_y + s * shift_i) - sin(l_x + l_y)],
// shift_i = 1.5 when region i has neighbours and 1 when it is isolated.
inline double true_ate(const SyntheticEnv& env) {
  const auto& g = env.graph();
  const double mu = env.covariate_law().mean();
  double sum = 0.0;
  for (int i = 0; i < g.size(); ++i) {
    const double phase = g.coord(i).x + g.coord(i).y;
    const double shift = g.degree(i) > 0 ? 1.5 : 1.0;
    sum += std::sin(phase + env.signal() * shift) - std::sin(phase);
  }
  return 3.0 * mu * sum;
}

struct McEstimate {
  double value = 0.0;
  double standard_error = 0.0;
};

// Paired all-treated / all-control runs sharing covariates and residuals.
inline McEstimate mc_ate(const SyntheticEnv& env, int n_mc, std::uint64_t seed) {
  if (n_mc < 1) throw std::invalid_argument("mc_ate: need at least one repetition");
  const auto& g = env.graph();
  const int r = g.size();
  std::vector<int> ones(r, 1), zeros(r, 0);
  std::vector<double> o(r);
  std::vector<double> diffs(n_mc);
  for (int t = 0; t < n_mc; ++t) {
    detail::RepetitionStreams streams(seed, static_cast<std::uint64_t>(t));
    detail::draw_covariates(env, streams.covariates, o);
    const Eigen::VectorXd e = detail::draw_noise(env, streams.noise);
    double d = 0.0;
    for (int i = 0; i < r; ++i) d += (env.mean_outcome(i, ones, o) + e(i)) - (env.mean_outcome(i, zeros, o) + e(i));
    diffs[t] = d;
  }
  double mean = 0.0;
  for (double d : diffs) mean += d;
  mean /= n_mc;
  if (n_mc == 1) return {mean, std::numeric_limits<double>::quiet_NaN()};
  double ss = 0.0;
  for (double d : diffs) ss += (d - mean) * (d - mean);
  return {mean, std::sqrt(ss / (n_mc - 1) / n_mc)};
}

inline McEstimate mc_ate(const SyntheticEnv& env, int n_mc) { return mc_ate(env, n_mc, env.seed()); }

// Mean of ((estimate - truth) / truth)^2.
inline double relative_mse(std::span<const double> estimates, double truth) {
  if (truth == 0.0) throw std::invalid_argument("relative_mse: truth is zero");
  if (estimates.empty()) throw std::invalid_argument("relative_mse: no estimates");
  double sum = 0.0;
  for (double e : estimates) sum += (e - truth) * (e - truth) / (truth * truth);
  return sum / static_cast<double>(estimates.size());
}

}  // namespace cgc
