#pragma once

#include <functional>
#include <random>
#include <vector>

#include "cgc/covariance.hpp"
#include "cgc/region_graph.hpp"

namespace cgc::fixtures {

// Uniform labels in [0, m) with every label used (m <= r).
inline Clustering random_partition(int r, int m, std::mt19937_64& rng) {
  std::vector<int> labels(r);
  for (int i = 0; i < r; ++i) labels[i] = i < m ? i : std::uniform_int_distribution<int>(0, m - 1)(rng);
  std::shuffle(labels.begin(), labels.end(), rng);
  return Clustering(std::move(labels), m);
}

inline RegionGraph random_grid(int max_w, int max_h, std::mt19937_64& rng) {
  const int w = std::uniform_int_distribution<int>(1, max_w)(rng);
  const int h = std::uniform_int_distribution<int>(1, max_h)(rng);
  return build_grid(GridSpec::rectangle(w, h));
}

// A A^T / k + 0.1 I with Gaussian A: positive definite, mixed-sign entries.
inline Eigen::MatrixXd random_psd(int r, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd a(r, r + 2);
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = normal(rng);
  Eigen::MatrixXd s = a * a.transpose() / static_cast<double>(a.cols());
  s.diagonal().array() += 0.1;
  return s;
}

// Symmetric matrix that is decaying on g: every neighbour entry of row i is
// at least every non-neighbour entry of row i. Entries are drawn in
// [hi_floor, 1] for neighbour pairs and [lo, hi_floor] otherwise.
inline Eigen::MatrixXd random_decaying(const RegionGraph& g, double lo, double hi_floor, std::mt19937_64& rng) {
  const int r = g.size();
  std::uniform_real_distribution<double> near(hi_floor, 1.0), far(lo, hi_floor);
  Eigen::MatrixXd s(r, r);
  for (int i = 0; i < r; ++i) {
    s(i, i) = 1.0;
    for (int k = i + 1; k < r; ++k) s(i, k) = s(k, i) = g.adjacent(i, k) ? near(rng) : far(rng);
  }
  return s;
}

// Calls fn for every set partition of {0..r-1} (restricted growth strings).
inline void for_each_partition(int r, const std::function<void(const Clustering&)>& fn) {
  std::vector<int> a(r, 0);
  std::function<void(int, int)> rec = [&](int pos, int used) {
    if (pos == r) {
      fn(Clustering(a, used));
      return;
    }
    for (int v = 0; v <= used && v < r; ++v) {
      a[pos] = v;
      rec(pos + 1, std::max(used, v + 1));
    }
  };
  if (r == 0) return;
  a[0] = 0;
  rec(1, 1);
}

}  // namespace cgc::fixtures
