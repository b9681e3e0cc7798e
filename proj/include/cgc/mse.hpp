#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "cgc/covariance.hpp"
#include "cgc/outcome_model.hpp"
#include "cgc/region_graph.hpp"

namespace cgc {

// Exact MSE components of the DR estimator under a cluster-randomized design
// with p = 1/2. sigma1_sq = sc + i1 + j1 + j2 + j3 and total = da + sigma1_sq.
struct MseBreakdown {
  double da = 0.0;
  double sc = 0.0;
  double i1 = 0.0;
  double j1 = 0.0;
  double j2 = 0.0;
  double j3 = 0.0;
  double sigma1_sq = 0.0;
  double total = 0.0;

  double i2() const { return j1 + j2 + j3; }
};

namespace detail {
inline void check_inputs(const RegionGraph& g, const Clustering& c, const Eigen::MatrixXd& s) {
  if (g.size() != c.region_count() || s.rows() != g.size() || s.cols() != g.size())
    throw std::invalid_argument("dimension mismatch between graph, clustering and covariance");
}
}  // namespace detail

// sigma_1^2 = (1/N) sum_{i,i'} (p^-m + (1-p)^-m) Sigma_{ii'} [m > 0], with
// m = m_{ii'} the number of clusters touched by both N_i and N_{i'}.
inline double sigma1_squared(const RegionGraph& g, const Clustering& c, const Eigen::MatrixXd& s,
                             int n_experiments, double p = 0.5) {
  detail::check_inputs(g, c, s);
  if (n_experiments < 1) throw std::invalid_argument("sigma1_squared: N < 1");
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("sigma1_squared: p outside (0, 1)");
  TouchTable touch(g, c);
  const int r = g.size();
  int max_touch = 0;
  for (int i = 0; i < r; ++i) max_touch = std::max(max_touch, touch.count(i));
  std::vector<double> weight(max_touch + 1, 0.0);
  for (int m = 1; m <= max_touch; ++m) weight[m] = std::pow(p, -m) + std::pow(1.0 - p, -m);
  double total = 0.0;
  for (int i = 0; i < r; ++i) {
    double row = 0.0;
    for (int k = 0; k < r; ++k) {
      const int m = touch.shared(i, k);
      if (m > 0) row += weight[m] * s(i, k);
    }
    total += row;
  }
  return total / n_experiments;
}

// Term-by-term decomposition at p = 1/2. sigma1_sq is evaluated through
// sigma1_squared, independently of the five terms.
inline MseBreakdown decompose(const RegionGraph& g, const Clustering& c, const Eigen::MatrixXd& s,
                              int n_experiments, double da = 0.0) {
  detail::check_inputs(g, c, s);
  if (n_experiments < 1) throw std::invalid_argument("decompose: N < 1");
  constexpr double p = 0.5;
  const int r = g.size();
  const double inv_n = 1.0 / n_experiments;
  TouchTable touch(g, c);
  std::vector<char> boundary(r);
  for (int i = 0; i < r; ++i) boundary[i] = is_boundary(g, c, i);

  MseBreakdown out;
  double sc = 0.0, i1 = 0.0, j1 = 0.0, j2 = 0.0, j3 = 0.0;
  for (int i = 0; i < r; ++i) {
    const int ci = c.label(i);
    for (int k = 0; k < r; ++k) {
      const int ck = c.label(k);
      const double sik = s(i, k);
      if (ci == ck) {
        sc += sik;
        if (boundary[i] && boundary[k]) {
          const int m = touch.shared(i, k);
          j1 += sik * (1.0 - std::pow(p, m - 1)) / std::pow(p, 1 + m);
        }
        continue;
      }
      // i in C_j, k in the boundary of C_k != C_j, weighted by whether N_k meets C_j.
      if (!boundary[k]) continue;
      const bool k_meets_ci = touch.touches(k, ci);
      if (k_meets_ci) i1 += sik;
      if (boundary[i]) {
        const int m = touch.shared(i, k);
        const double scaled = sik / std::pow(p, m + 1);
        if (k_meets_ci) j2 += scaled - 2.0 * sik / (p * p);
        j3 += scaled * ((m > 0 ? 1.0 : 0.0) - (k_meets_ci ? 1.0 : 0.0));
      }
    }
  }
  out.sc = 4.0 * sc * inv_n;
  out.i1 = 8.0 * i1 * inv_n;
  out.j1 = j1 * inv_n;
  out.j2 = j2 * inv_n;
  out.j3 = j3 * inv_n;
  out.da = da;
  out.sigma1_sq = sigma1_squared(g, c, s, n_experiments, p);
  out.total = out.da + out.sigma1_sq;
  return out;
}

// Brute-force randomization variance of sum_i q_i(A) e_i over all 2^m cluster
// treatment vectors, where q_i = T_i(1)/E T_i(1) - T_i(0)/E T_i(0). Exposure
// probabilities are themselves obtained by enumeration. Returns the
// per-experiment variance (N * sigma_1^2).
inline double exact_variance_oracle(const RegionGraph& g, const Clustering& c,
                                    const Eigen::MatrixXd& s, double p = 0.5) {
  detail::check_inputs(g, c, s);
  const int m = c.cluster_count();
  if (m > 20) throw std::invalid_argument("exact_variance_oracle: more than 20 clusters");
  const int r = g.size();
  const std::uint64_t count = std::uint64_t{1} << m;

  auto exposure = [&](std::uint64_t mask, int i, int arm) {
    for (int j : g.neighbourhood(i)) {
      const int a = static_cast<int>((mask >> c.label(j)) & 1U);
      if (a != arm) return 0.0;
    }
    return 1.0;
  };
  auto probability = [&](std::uint64_t mask) {
    double pr = 1.0;
    for (int j = 0; j < m; ++j) pr *= ((mask >> j) & 1U) ? p : 1.0 - p;
    return pr;
  };

  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(r), e0 = Eigen::VectorXd::Zero(r);
  for (std::uint64_t mask = 0; mask < count; ++mask) {
    const double pr = probability(mask);
    for (int i = 0; i < r; ++i) {
      e1(i) += pr * exposure(mask, i, 1);
      e0(i) += pr * exposure(mask, i, 0);
    }
  }
  double variance = 0.0;
  Eigen::VectorXd q(r);
  for (std::uint64_t mask = 0; mask < count; ++mask) {
    for (int i = 0; i < r; ++i) q(i) = exposure(mask, i, 1) / e1(i) - exposure(mask, i, 0) / e0(i);
    variance += probability(mask) * q.dot(s * q);
  }
  return variance;
}

// (8R/N) sum over cross pairs of W Sigma^+: the interference part of the
// two-cluster surrogate, an upper bound on I_1 for decaying covariances.
inline double surrogate_interference_term(const RegionGraph& g, const Eigen::MatrixXd& s,
                                          const std::vector<bool>& in_first, int n_experiments) {
  const int r = g.size();
  if (static_cast<int>(in_first.size()) != r || s.rows() != r)
    throw std::invalid_argument("surrogate: dimension mismatch");
  double cross = 0.0;
  for (int i = 0; i < r; ++i) {
    if (!in_first[i]) continue;
    for (int k = 0; k < r; ++k)
      if (!in_first[k] && g.adjacent(i, k)) cross += std::max(s(i, k), 0.0);
  }
  return 8.0 * r * cross / n_experiments;
}

// Two-cluster surrogate: (8R/N) sum_{C1 x C2} W Sigma^+ - (8/N) sum_{C1 x C2} Sigma.
// `in_first` marks C_1; C_2 is the complement and may be empty.
inline double surrogate_two(const RegionGraph& g, const Eigen::MatrixXd& s,
                            const std::vector<bool>& in_first, int n_experiments) {
  const int r = g.size();
  double cross = 0.0;
  if (static_cast<int>(in_first.size()) != r || s.rows() != r)
    throw std::invalid_argument("surrogate: dimension mismatch");
  for (int i = 0; i < r; ++i) {
    if (!in_first[i]) continue;
    for (int k = 0; k < r; ++k)
      if (!in_first[k]) cross += s(i, k);
  }
  return surrogate_interference_term(g, s, in_first, n_experiments) -
         8.0 * cross / n_experiments;
}

inline double surrogate_two(const RegionGraph& g, const Eigen::MatrixXd& s, const Clustering& c,
                            int n_experiments) {
  if (c.cluster_count() != 2) throw std::invalid_argument("surrogate_two: need exactly 2 clusters");
  std::vector<bool> in_first(c.region_count());
  for (int i = 0; i < c.region_count(); ++i) in_first[i] = c.label(i) == 0;
  return surrogate_two(g, s, in_first, n_experiments);
}

// General-m surrogate, (8/N) sum over unordered cross-cluster pairs of
// (2R/m) W Sigma^+ - Sigma. Zero for the global design.
inline double surrogate_general(const RegionGraph& g, const Eigen::MatrixXd& s, const Clustering& c,
                                int n_experiments) {
  detail::check_inputs(g, c, s);
  const int r = g.size();
  const double scale = 2.0 * r / c.cluster_count();
  double total = 0.0;
  for (int i = 0; i < r; ++i) {
    for (int k = i + 1; k < r; ++k) {
      if (c.label(i) == c.label(k)) continue;
      total += (g.adjacent(i, k) ? scale * std::max(s(i, k), 0.0) : 0.0) - s(i, k);
    }
  }
  return 8.0 * total / n_experiments;
}

// omega_{ii'} = (2R/m) W_{ii'} Sigma^+_{ii'} - Sigma_{ii'}, zero diagonal.
inline Eigen::MatrixXd weight_matrix(const RegionGraph& g, const Eigen::MatrixXd& s, int m) {
  const int r = g.size();
  if (s.rows() != r || s.cols() != r) throw std::invalid_argument("weight_matrix: dimension mismatch");
  if (m < 2) throw std::invalid_argument("weight_matrix: need m >= 2");
  const double scale = 2.0 * r / m;
  Eigen::MatrixXd w(r, r);
  for (int i = 0; i < r; ++i) {
    for (int k = 0; k < r; ++k) {
      if (i == k) {
        w(i, k) = 0.0;
        continue;
      }
      const double sym = 0.5 * (s(i, k) + s(k, i));
      w(i, k) = (g.adjacent(i, k) ? scale * std::max(sym, 0.0) : 0.0) - sym;
    }
  }
  return w;
}

// Total weight of unordered pairs split by the clustering.
inline double cut_loss(const Eigen::MatrixXd& omega, const Clustering& c) {
  double total = 0.0;
  for (int i = 0; i < c.region_count(); ++i)
    for (int k = i + 1; k < c.region_count(); ++k)
      if (c.label(i) != c.label(k)) total += omega(i, k);
  return total;
}

// (1/N) times the unbiased sample variance of CATE draws.
inline double da_term_from_cate(std::span<const double> cate, int n_experiments) {
  if (cate.size() < 2) throw std::invalid_argument("da_term: need at least two samples");
  double mean = 0.0;
  for (double v : cate) mean += v;
  mean /= static_cast<double>(cate.size());
  double ss = 0.0;
  for (double v : cate) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(cate.size() - 1) / n_experiments;
}

// Design-agnostic term from an outcome model and covariate draws (one row per
// draw). Diagnostic only; never part of design comparison.
inline double da_term(const RegionGraph& g, const OutcomeModel& model,
                      const Eigen::Ref<const RowMatrixXd>& covariates, int n_experiments) {
  const int r = g.size();
  if (covariates.cols() != r) throw std::invalid_argument("da_term: dimension mismatch");
  std::vector<int> ones(r, 1), zeros(r, 0);
  std::vector<double> cate(covariates.rows());
  for (Eigen::Index t = 0; t < covariates.rows(); ++t) {
    std::span<const double> o(covariates.row(t).data(), r);
    double sum = 0.0;
    for (int i = 0; i < r; ++i) sum += model.predict(g, i, ones, o) - model.predict(g, i, zeros, o);
    cate[t] = sum;
  }
  return da_term_from_cate(cate, n_experiments);
}

}  // namespace cgc
