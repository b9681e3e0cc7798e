#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "cgc/common.hpp"
#include "cgc/region_graph.hpp"

namespace cgc {

enum class CovarianceModel { kConstant, kTruncatedConstant, kExponential };

inline std::string to_string(CovarianceModel m) {
  switch (m) {
    case CovarianceModel::kConstant: return "constant";
    case CovarianceModel::kTruncatedConstant: return "truncated-constant";
    case CovarianceModel::kExponential: return "exponential";
  }
  return "?";
}

inline CovarianceModel parse_covariance_model(const std::string& s) {
  if (s == "constant") return CovarianceModel::kConstant;
  if (s == "truncated-constant" || s == "truncated_constant") return CovarianceModel::kTruncatedConstant;
  if (s == "exponential") return CovarianceModel::kExponential;
  throw ConfigError("unknown covariance model '" + s + "'");
}

// Where a covariance matrix came from; reported alongside results.
struct CovarianceOrigin {
  enum class Kind { kModel, kEmpirical, kExternal };
  Kind kind = Kind::kExternal;
  CovarianceModel model = CovarianceModel::kExponential;
  double rho = 0.0;
  int samples = 0;
  double shrinkage = 0.0;
};

// Symmetric R x R residual covariance with strictly positive diagonal.
class CovarianceMatrix {
 public:
  static constexpr double kSymmetryTolerance = 1e-12;

  explicit CovarianceMatrix(Eigen::MatrixXd values, CovarianceOrigin origin = {})
      : values_(std::move(values)), origin_(origin) {
    if (values_.rows() != values_.cols() || values_.rows() == 0)
      throw std::invalid_argument("CovarianceMatrix: not a non-empty square matrix");
    for (Eigen::Index i = 0; i < values_.rows(); ++i) {
      if (!(values_(i, i) > 0.0))
        throw std::invalid_argument("CovarianceMatrix: non-positive diagonal entry");
      for (Eigen::Index j = 0; j < i; ++j) {
        if (std::abs(values_(i, j) - values_(j, i)) > kSymmetryTolerance)
          throw std::invalid_argument("CovarianceMatrix: not symmetric");
      }
    }
  }

  int size() const { return static_cast<int>(values_.rows()); }
  const Eigen::MatrixXd& values() const { return values_; }
  double operator()(int i, int j) const { return values_(i, j); }
  const CovarianceOrigin& origin() const { return origin_; }

  // max off-diagonal entry over the smallest entry.
  double spread_ratio() const {
    double hi = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < size(); ++i)
      for (int j = 0; j < size(); ++j)
        if (i != j) hi = std::max(hi, values_(i, j));
    return hi / values_.minCoeff();
  }

  // Largest |Sigma_ij| over pairs that are not adjacent in g.
  double non_neighbour_bound(const RegionGraph& g) const {
    double d = 0.0;
    for (int i = 0; i < size(); ++i)
      for (int j = 0; j < size(); ++j)
        if (i != j && !g.adjacent(i, j)) d = std::max(d, std::abs(values_(i, j)));
    return d;
  }

 private:
  Eigen::MatrixXd values_;
  CovarianceOrigin origin_;
};

// |i - j| is the row-major region index distance.
inline CovarianceMatrix build_model_covariance(CovarianceModel model, double rho, int regions) {
  if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("rho must lie in (0, 1]");
  if (regions < 1) throw std::invalid_argument("need at least one region");
  Eigen::MatrixXd s(regions, regions);
  for (int i = 0; i < regions; ++i) {
    for (int j = 0; j < regions; ++j) {
      const int d = std::abs(i - j);
      if (d == 0) {
        s(i, j) = 1.0;
        continue;
      }
      switch (model) {
        case CovarianceModel::kConstant: s(i, j) = rho; break;
        case CovarianceModel::kTruncatedConstant:
          s(i, j) = d <= rho * regions ? rho - static_cast<double>(d) / regions : 0.0;
          break;
        case CovarianceModel::kExponential: s(i, j) = std::pow(rho, d); break;
      }
    }
  }
  CovarianceOrigin origin{CovarianceOrigin::Kind::kModel, model, rho, 0, 0.0};
  return CovarianceMatrix(std::move(s), origin);
}

inline Eigen::MatrixXd positive_part(const Eigen::MatrixXd& s) { return s.cwiseMax(0.0); }

// Uncentred second moment of the residual rows, shrunk toward its diagonal:
// (1 - lambda) * S + lambda * diag(S).
inline CovarianceMatrix empirical_covariance(const Eigen::Ref<const RowMatrixXd>& residuals,
                                             double shrinkage) {
  const Eigen::Index n = residuals.rows();
  if (n == 0) throw std::invalid_argument("empirical_covariance: no samples");
  if (!(shrinkage >= 0.0 && shrinkage <= 1.0))
    throw std::invalid_argument("empirical_covariance: shrinkage outside [0, 1]");
  Eigen::MatrixXd raw = (residuals.transpose() * residuals) / static_cast<double>(n);
  raw = 0.5 * (raw + raw.transpose()).eval();
  Eigen::MatrixXd out = (1.0 - shrinkage) * raw;
  out.diagonal() = raw.diagonal();
  CovarianceOrigin origin{CovarianceOrigin::Kind::kEmpirical, CovarianceModel::kExponential, 0.0,
                          static_cast<int>(n), shrinkage};
  return CovarianceMatrix(std::move(out), origin);
}

// For every region i1, every neighbour i2 and every non-neighbour i3 of i1
// (i3 != i1), requires Sigma(i1,i2) >= Sigma(i1,i3).
inline bool check_decaying(const RegionGraph& g, const Eigen::MatrixXd& s) {
  const int r = g.size();
  if (s.rows() != r || s.cols() != r) throw std::invalid_argument("check_decaying: dimension mismatch");
  for (int i = 0; i < r; ++i) {
    if (g.degree(i) == 0) continue;
    double min_near = std::numeric_limits<double>::infinity();
    double max_far = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < r; ++j) {
      if (j == i) continue;
      if (g.adjacent(i, j)) {
        min_near = std::min(min_near, s(i, j));
      } else {
        max_far = std::max(max_far, s(i, j));
      }
    }
    if (min_near < max_far) return false;
  }
  return true;
}

// Returns F with F F^T equal to sigma, or to its projection onto the PSD cone
// (negative eigenvalues clipped) when sigma is indefinite.
inline Eigen::MatrixXd factorize_for_sampling(const Eigen::MatrixXd& s) {
  if (s.rows() != s.cols()) throw std::invalid_argument("factorize_for_sampling: not square");
  Eigen::MatrixXd sym = 0.5 * (s + s.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(sym);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal();
}

inline void write_matrix_csv(std::ostream& os, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) os << ',';
      os << format_double(m(i, j));
    }
    os << '\n';
  }
}

inline void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_matrix_csv(os, m);
}

inline Eigen::MatrixXd read_matrix_csv(std::istream& is) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(parse_double(cell));
    if (!rows.empty() && row.size() != rows.front().size())
      throw ConfigError("matrix csv: ragged rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError("matrix csv: empty");
  Eigen::MatrixXd m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

inline CovarianceMatrix read_covariance_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open covariance file: " + path);
  try {
    return CovarianceMatrix(read_matrix_csv(is));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace cgc
