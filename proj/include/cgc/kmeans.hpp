#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "cgc/common.hpp"
#include "cgc/region_graph.hpp"

namespace cgc {

struct KMeansOptions {
  int restarts = 10;
  int max_iters = 100;
  std::uint64_t seed = 0;
};

namespace detail {

inline double squared_distance(const Eigen::MatrixXd& pts, int i, const Eigen::MatrixXd& centers,
                               int c) {
  return (pts.row(i) - centers.row(c)).squaredNorm();
}

// k-means++ seeding: first center uniform, later ones proportional to D^2.
inline Eigen::MatrixXd seed_centers(const Eigen::MatrixXd& pts, int m, std::mt19937_64& rng) {
  const int n = static_cast<int>(pts.rows());
  Eigen::MatrixXd centers(m, pts.cols());
  std::uniform_int_distribution<int> first(0, n - 1);
  centers.row(0) = pts.row(first(rng));
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int c = 1; c < m; ++c) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(pts, i, centers, c - 1));
      total += d2[i];
    }
    int pick = n - 1;
    if (total > 0.0) {
      double u = unit(rng) * total;
      for (int i = 0; i < n; ++i) {
        u -= d2[i];
        if (u < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = first(rng);
    }
    centers.row(c) = pts.row(pick);
  }
  return centers;
}

// Moves the point farthest from its centroid (taken from a cluster with more
// than one member) into each empty cluster.
inline void repair_empty(const Eigen::MatrixXd& pts, const Eigen::MatrixXd& centers,
                         std::vector<int>& labels, int m) {
  const int n = static_cast<int>(pts.rows());
  for (;;) {
    std::vector<int> size(m, 0);
    for (int l : labels) ++size[l];
    int empty = -1;
    for (int c = 0; c < m; ++c)
      if (size[c] == 0) {
        empty = c;
        break;
      }
    if (empty < 0) return;
    int far = -1;
    double best = -1.0;
    for (int i = 0; i < n; ++i) {
      if (size[labels[i]] < 2) continue;
      double d = squared_distance(pts, i, centers, labels[i]);
      if (d > best) {
        best = d;
        far = i;
      }
    }
    labels[far] = empty;
  }
}

}  // namespace detail

// Best-of-restarts Lloyd iterations with k-means++ seeding. Labels in the
// result are ordered by first occurrence.
inline Clustering kmeans(const Eigen::MatrixXd& pts, int m, const KMeansOptions& opt) {
  const int n = static_cast<int>(pts.rows());
  if (m < 1 || m > n) throw std::invalid_argument("kmeans: need 1 <= m <= number of points");
  if (opt.restarts < 1 || opt.max_iters < 1) throw std::invalid_argument("kmeans: bad options");
  if (m == n) return Clustering::individual(n);
  if (m == 1) return Clustering::global(n);

  std::mt19937_64 rng(opt.seed);
  std::vector<int> best_labels;
  double best_cost = std::numeric_limits<double>::infinity();

  for (int restart = 0; restart < opt.restarts; ++restart) {
    Eigen::MatrixXd centers = detail::seed_centers(pts, m, rng);
    std::vector<int> labels(n, -1);
    for (int iter = 0; iter < opt.max_iters; ++iter) {
      bool changed = false;
      for (int i = 0; i < n; ++i) {
        int arg = 0;
        double dmin = std::numeric_limits<double>::infinity();
        for (int c = 0; c < m; ++c) {
          double d = detail::squared_distance(pts, i, centers, c);
          if (d < dmin) {
            dmin = d;
            arg = c;
          }
        }
        if (labels[i] != arg) {
          labels[i] = arg;
          changed = true;
        }
      }
      detail::repair_empty(pts, centers, labels, m);
      Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(m, pts.cols());
      std::vector<int> size(m, 0);
      for (int i = 0; i < n; ++i) {
        sums.row(labels[i]) += pts.row(i);
        ++size[labels[i]];
      }
      for (int c = 0; c < m; ++c) centers.row(c) = sums.row(c) / size[c];
      if (!changed && iter > 0) break;
    }
    double cost = 0.0;
    for (int i = 0; i < n; ++i) cost += detail::squared_distance(pts, i, centers, labels[i]);
    if (cost < best_cost) {
      best_cost = cost;
      best_labels = labels;
    }
  }
  return Clustering(std::move(best_labels), m).canonical();
}

}  // namespace cgc
