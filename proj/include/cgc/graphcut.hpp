#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "cgc/common.hpp"
#include "cgc/kmeans.hpp"
#include "cgc/mse.hpp"
#include "cgc/region_graph.hpp"

namespace cgc {

struct SpectralConfig {
  double eigen_tolerance = 1e-9;
  // Relative to the spectral norm of L.
  double zero_eigen_threshold = 1e-8;
  int kmeans_restarts = 10;
  int kmeans_max_iters = 100;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (!(eigen_tolerance > 0.0) || !(zero_eigen_threshold > 0.0))
      throw std::invalid_argument("SpectralConfig: tolerances must be positive");
    if (kmeans_restarts < 1 || kmeans_max_iters < 1)
      throw std::invalid_argument("SpectralConfig: k-means restarts/iterations must be >= 1");
  }
};

struct DesignSelection {
  Clustering clustering;
  int chosen_m = 1;
  // (m, sigma_1^2) for every candidate, ascending in m.
  std::vector<std::pair<int, double>> per_m_mse;

  double chosen_mse() const {
    for (auto [m, v] : per_m_mse)
      if (m == chosen_m) return v;
    return std::numeric_limits<double>::quiet_NaN();
  }
};

// L = D - Omega with D the diagonal of row sums. May be indefinite.
inline Eigen::MatrixXd laplacian(const Eigen::MatrixXd& omega) {
  if (omega.rows() != omega.cols()) throw std::invalid_argument("laplacian: not square");
  const double scale = std::max(1.0, omega.cwiseAbs().maxCoeff());
  if ((omega - omega.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale)
    throw std::invalid_argument("laplacian: weight matrix not symmetric");
  Eigen::MatrixXd l = -omega;
  l.diagonal() += omega.rowwise().sum();
  return l;
}

struct SpectralEmbedding {
  Eigen::MatrixXd coords;      // R x k
  Eigen::VectorXd eigenvalues;  // eigenvalue for each column
  bool skipped_constant = false;
};

inline int embedding_dimension(int m) {
  int k = 0;
  while ((1 << k) < m) ++k;
  return std::max(1, k);
}

// Eigenvectors used for partitioning: when the smallest eigenvalue of L is
// zero the constant direction is skipped (Fiedler-style); otherwise the first
// k eigenvectors are used. Each column has its largest-magnitude entry positive.
inline SpectralEmbedding spectral_embed(const Eigen::MatrixXd& lap, int m, const SpectralConfig& cfg) {
  cfg.validate();
  if (m < 2) throw std::invalid_argument("spectral_embed: need m >= 2");
  const int r = static_cast<int>(lap.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(lap);
  if (eig.info() != Eigen::Success) throw std::runtime_error("spectral_embed: eigensolver failed");
  const double norm = std::max(eig.eigenvalues().cwiseAbs().maxCoeff(), 0.0);
  const bool zero_smallest =
      std::abs(eig.eigenvalues()(0)) <= cfg.zero_eigen_threshold * std::max(norm, 1e-300) ||
      norm == 0.0;

  SpectralEmbedding out;
  out.skipped_constant = zero_smallest;
  const int k = std::min(embedding_dimension(m), zero_smallest ? std::max(r - 1, 1) : r);
  Eigen::MatrixXd vectors;
  Eigen::VectorXd values;
  if (zero_smallest && r > 1) {
    // Push the constant direction to the top of the spectrum; L 1 = 0 so the
    // remaining eigenpairs are those of L restricted to the complement of 1.
    const double shift = 2.0 * norm + 1.0;
    Eigen::MatrixXd shifted = lap + Eigen::MatrixXd::Constant(r, r, shift / r);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> deflated(shifted);
    if (deflated.info() != Eigen::Success) throw std::runtime_error("spectral_embed: eigensolver failed");
    vectors = deflated.eigenvectors().leftCols(k);
    values = deflated.eigenvalues().head(k);
  } else {
    vectors = eig.eigenvectors().leftCols(k);
    values = eig.eigenvalues().head(k);
  }

  for (int c = 0; c < k; ++c) {
    auto col = vectors.col(c);
    col.normalize();
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < col.size(); ++i) {
      if (std::abs(col(i)) > best + 1e-12) {
        best = std::abs(col(i));
        arg = i;
      }
    }
    if (col(arg) < 0.0) col = -col;
    values(c) = col.dot(lap * col);
    const double residual = (lap * col - values(c) * col).norm();
    if (residual > cfg.eigen_tolerance * std::max(norm, 1.0))
      throw std::runtime_error("spectral_embed: eigenpair did not converge");
  }
  out.coords = std::move(vectors);
  out.eigenvalues = std::move(values);
  return out;
}

// weight_matrix -> laplacian -> spectral_embed -> kmeans.
inline Clustering cut_partition(const RegionGraph& g, const Eigen::MatrixXd& s, int m,
                                const SpectralConfig& cfg) {
  if (m < 2 || m > g.size()) throw std::invalid_argument("cut_partition: need 2 <= m <= R");
  auto embedding = spectral_embed(laplacian(weight_matrix(g, s, m)), m, cfg);
  return kmeans(embedding.coords, m, {cfg.kmeans_restarts, cfg.kmeans_max_iters, cfg.rng_seed});
}

// Baseline that ignores the covariance: spectral clustering of the adjacency
// matrix alone (standard graph Laplacian, same embedding and k-means steps).
inline Clustering adjacency_spectral_partition(const RegionGraph& g, int m, const SpectralConfig& cfg) {
  if (m < 2 || m > g.size()) throw std::invalid_argument("adjacency spectral: need 2 <= m <= R");
  auto embedding = spectral_embed(laplacian(g.adjacency()), m, cfg);
  return kmeans(embedding.coords, m, {cfg.kmeans_restarts, cfg.kmeans_max_iters, cfg.rng_seed});
}

inline int default_max_clusters(int regions) {
  return static_cast<int>(std::ceil(std::pow(static_cast<double>(regions), 2.0 / 3.0) - 1e-9));
}

struct SelectOptions {
  int m_max = 0;  // 0 selects ceil(R^(2/3))
  bool include_individual = true;
  bool include_global = true;
};

// Sweeps m = 1..m_max (global design at m = 1, graph cuts above) plus the
// individual design, scoring each by the exact sigma_1^2 at p = 1/2. The
// argmin is taken in (score, m) order so ties go to the smaller m.
inline DesignSelection select_design(const RegionGraph& g, const Eigen::MatrixXd& s, int n_experiments,
                                     const SpectralConfig& cfg, const SelectOptions& opt = {}) {
  const int r = g.size();
  const int m_max = std::min(opt.m_max > 0 ? opt.m_max : default_max_clusters(r), r);
  std::vector<int> ms;
  if (opt.include_global) ms.push_back(1);
  for (int m = 2; m <= m_max; ++m) ms.push_back(m);
  if (opt.include_individual && m_max < r) ms.push_back(r);
  if (ms.empty()) throw std::invalid_argument("select_design: empty candidate set");

  std::vector<std::optional<Clustering>> designs(ms.size());
  std::vector<double> scores(ms.size());
  parallel_for(static_cast<int>(ms.size()), [&](int idx) {
    const int m = ms[idx];
    Clustering c = m == 1 ? Clustering::global(r)
                   : m == r ? Clustering::individual(r)
                            : [&] {
                                SpectralConfig local = cfg;
                                local.rng_seed = cfg.rng_seed ^ static_cast<std::uint64_t>(m);
                                return cut_partition(g, s, m, local);
                              }();
    scores[idx] = sigma1_squared(g, c, s, n_experiments, 0.5);
    designs[idx] = std::move(c);
  });

  std::size_t best = 0;
  for (std::size_t idx = 1; idx < ms.size(); ++idx) {
    if (scores[idx] < scores[best] || (scores[idx] == scores[best] && ms[idx] < ms[best])) best = idx;
  }
  DesignSelection out{*designs[best], ms[best], {}};
  for (std::size_t idx = 0; idx < ms.size(); ++idx) out.per_m_mse.emplace_back(ms[idx], scores[idx]);
  return out;
}

}  // namespace cgc
