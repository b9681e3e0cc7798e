#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "cgc/common.hpp"
#include "cgc/outcome_model.hpp"
#include "cgc/region_graph.hpp"

namespace cgc {

// n repetitions of (O, A, Y) over all R regions, drawn under `design`.
struct ExperimentBatch {
  RowMatrixXd covariates;
  RowMatrixXi treatments;
  RowMatrixXd outcomes;
  Clustering design;

  int size() const { return static_cast<int>(outcomes.rows()); }
  int regions() const { return static_cast<int>(outcomes.cols()); }

  std::span<const int> treatment_row(int t) const {
    return {treatments.row(t).data(), static_cast<std::size_t>(regions())};
  }
  std::span<const double> covariate_row(int t) const {
    return {covariates.row(t).data(), static_cast<std::size_t>(regions())};
  }
};

// Throws unless shapes agree and treatments are 0/1 and constant within each
// cluster of the batch design in every repetition.
inline void check_batch(const RegionGraph& g, const ExperimentBatch& b) {
  const int r = g.size();
  const int n = b.size();
  if (b.regions() != r || b.covariates.rows() != n || b.covariates.cols() != r ||
      b.treatments.rows() != n || b.treatments.cols() != r || b.design.region_count() != r)
    throw std::invalid_argument("batch: dimension mismatch");
  std::vector<int> seen(b.design.cluster_count());
  for (int t = 0; t < n; ++t) {
    std::fill(seen.begin(), seen.end(), -1);
    for (int i = 0; i < r; ++i) {
      const int a = b.treatments(t, i);
      if (a != 0 && a != 1) throw std::invalid_argument("batch: treatment not binary");
      int& s = seen[b.design.label(i)];
      if (s < 0) {
        s = a;
      } else if (s != a) {
        throw std::invalid_argument("batch: treatment varies within a cluster (repetition " +
                                    std::to_string(t) + ")");
      }
    }
  }
}

enum class Arm { kControl = 0, kTreated = 1 };

// T_{i,t}(a): every region of N_i received arm a in repetition t.
inline int exposure_indicator(const RegionGraph& g, const ExperimentBatch& b, int i, int t, Arm arm) {
  const int want = static_cast<int>(arm);
  for (int j : g.neighbourhood(i))
    if (b.treatments(t, j) != want) return 0;
  return 1;
}

// Pr(T_i(a) = 1) = p^{c_i} (treated) or (1-p)^{c_i} (control), c_i the
// number of clusters touching N_i.
inline double exposure_probability(const RegionGraph& g, const Clustering& c, int i, Arm arm,
                                   double p = 0.5) {
  const int ci = cluster_touch_count(g, c, i);
  return std::pow(arm == Arm::kTreated ? p : 1.0 - p, ci);
}

namespace detail {

struct ExposureWeights {
  std::vector<double> treated;  // 1 / E T_i(1)
  std::vector<double> control;  // 1 / E T_i(0)
};

inline ExposureWeights exposure_weights(const RegionGraph& g, const Clustering& c) {
  TouchTable touch(g, c);
  ExposureWeights w;
  for (int i = 0; i < g.size(); ++i) {
    const double e = std::pow(0.5, touch.count(i));
    w.treated.push_back(1.0 / e);
    w.control.push_back(1.0 / e);
  }
  return w;
}

// sum_i [nu_i(1) - nu_i(0)] for repetition t.
inline double dr_contrast(const RegionGraph& g, const ExperimentBatch& b, int t,
                          const ExposureWeights& w, const OutcomeModel& model,
                          std::span<const int> ones, std::span<const int> zeros) {
  const auto o = b.covariate_row(t);
  double sum = 0.0;
  for (int i = 0; i < b.regions(); ++i) {
    const double y = b.outcomes(t, i);
    const double w1 = exposure_indicator(g, b, i, t, Arm::kTreated) ? w.treated[i] : 0.0;
    const double w0 = exposure_indicator(g, b, i, t, Arm::kControl) ? w.control[i] : 0.0;
    const double g1 = model.predict(g, i, ones, o);
    const double g0 = model.predict(g, i, zeros, o);
    sum += (g1 + w1 * (y - g1)) - (g0 + w0 * (y - g0));
  }
  return sum;
}

}  // namespace detail

// (1/n) sum_t sum_i [T(1)/E T(1) - T(0)/E T(0)] Y.
inline double is_estimate(const RegionGraph& g, const ExperimentBatch& b) {
  check_batch(g, b);
  const auto w = detail::exposure_weights(g, b.design);
  double total = 0.0;
  for (int t = 0; t < b.size(); ++t) {
    double sum = 0.0;
    for (int i = 0; i < b.regions(); ++i) {
      const double y = b.outcomes(t, i);
      const double w1 = exposure_indicator(g, b, i, t, Arm::kTreated) ? w.treated[i] : 0.0;
      const double w0 = exposure_indicator(g, b, i, t, Arm::kControl) ? w.control[i] : 0.0;
      sum += w1 * y - w0 * y;
    }
    total += sum;
  }
  return total / b.size();
}

inline double dr_estimate(const RegionGraph& g, const ExperimentBatch& b, const OutcomeModel& model) {
  check_batch(g, b);
  if (b.size() < 1) throw std::invalid_argument("dr_estimate: empty batch");
  const auto w = detail::exposure_weights(g, b.design);
  std::vector<int> ones(b.regions(), 1), zeros(b.regions(), 0);
  double total = 0.0;
  for (int t = 0; t < b.size(); ++t) total += detail::dr_contrast(g, b, t, w, model, ones, zeros);
  return total / b.size();
}

struct OutcomeSpec {
  enum class Kind { kZero, kPooledRidge };
  Kind kind = Kind::kPooledRidge;
  double penalty = 1e-3;

  static OutcomeSpec zero() { return {Kind::kZero, 0.0}; }
  static OutcomeSpec ridge(double penalty) { return {Kind::kPooledRidge, penalty}; }
};

// A single repetition inside a list of batches.
struct RepetitionRef {
  int batch;
  int t;
};

inline std::vector<RepetitionRef> all_repetitions(std::span<const ExperimentBatch> batches) {
  std::vector<RepetitionRef> out;
  for (int b = 0; b < static_cast<int>(batches.size()); ++b)
    for (int t = 0; t < batches[b].size(); ++t) out.push_back({b, t});
  return out;
}

// Pooled ridge over every (region, repetition) row: minimises the mean squared
// error plus penalty * |beta|^2, the intercept left unpenalised.
inline OutcomeModel fit_outcome_model(const RegionGraph& g, std::span<const ExperimentBatch> batches,
                                      std::span<const RepetitionRef> rows, const OutcomeSpec& spec) {
  if (spec.kind == OutcomeSpec::Kind::kZero) return OutcomeModel::zero();
  if (!(spec.penalty > 0.0)) throw std::invalid_argument("pooled ridge needs a positive penalty");
  if (rows.empty()) throw std::invalid_argument("pooled ridge needs at least one repetition");
  constexpr int p = kRidgeFeatureCount;
  Eigen::Matrix<double, p, p> xtx = Eigen::Matrix<double, p, p>::Zero();
  Eigen::Matrix<double, p, 1> xty = Eigen::Matrix<double, p, 1>::Zero();
  double count = 0.0;
  for (const auto& ref : rows) {
    const auto& b = batches[ref.batch];
    const auto a = b.treatment_row(ref.t);
    const auto o = b.covariate_row(ref.t);
    for (int i = 0; i < b.regions(); ++i) {
      const auto f = ridge_features(g, i, a, o);
      Eigen::Map<const Eigen::Matrix<double, p, 1>> x(f.data());
      xtx.noalias() += x * x.transpose();
      xty.noalias() += x * b.outcomes(ref.t, i);
      count += 1.0;
    }
  }
  Eigen::Matrix<double, p, p> lhs = xtx / count;
  for (int k = 1; k < p; ++k) lhs(k, k) += spec.penalty;
  Eigen::Matrix<double, p, 1> beta = lhs.ldlt().solve(xty / count);
  std::array<double, p> coef{};
  for (int k = 0; k < p; ++k) coef[k] = beta(k);
  return make_ridge_model(coef, spec.penalty);
}

inline OutcomeModel fit_outcome_model(const RegionGraph& g, std::span<const ExperimentBatch> batches,
                                      const OutcomeSpec& spec) {
  for (const auto& b : batches) check_batch(g, b);
  auto rows = all_repetitions(batches);
  return fit_outcome_model(g, batches, rows, spec);
}

inline OutcomeModel fit_outcome_model(const RegionGraph& g, const ExperimentBatch& batch,
                                      const OutcomeSpec& spec) {
  return fit_outcome_model(g, std::span<const ExperimentBatch>(&batch, 1), spec);
}

// e_hat_{it} = Y_{it} - g_hat_i(A_t, O_t).
inline RowMatrixXd residuals(const RegionGraph& g, const ExperimentBatch& b, const OutcomeModel& model) {
  RowMatrixXd out(b.size(), b.regions());
  for (int t = 0; t < b.size(); ++t) {
    const auto a = b.treatment_row(t);
    const auto o = b.covariate_row(t);
    for (int i = 0; i < b.regions(); ++i) out(t, i) = b.outcomes(t, i) - model.predict(g, i, a, o);
  }
  return out;
}

// K-fold cross-fitted DR. Repetitions are pooled in batch order and the one at
// pooled index u belongs to fold u mod K; each fold is scored with a model fit
// on the other folds, using the exposure weights of its own batch design.
inline double crossfit_dr(const RegionGraph& g, std::span<const ExperimentBatch> batches, int folds,
                          const OutcomeSpec& spec) {
  for (const auto& b : batches) check_batch(g, b);
  const auto reps = all_repetitions(batches);
  const int total = static_cast<int>(reps.size());
  if (folds < 2) throw std::invalid_argument("crossfit_dr: need K >= 2");
  if (total < folds) throw std::invalid_argument("crossfit_dr: fewer repetitions than folds");

  std::vector<detail::ExposureWeights> weights;
  for (const auto& b : batches) weights.push_back(detail::exposure_weights(g, b.design));
  const int r = g.size();
  std::vector<int> ones(r, 1), zeros(r, 0);

  double sum = 0.0;
  for (int k = 0; k < folds; ++k) {
    std::vector<RepetitionRef> train;
    for (int u = 0; u < total; ++u)
      if (u % folds != k) train.push_back(reps[u]);
    const OutcomeModel model = fit_outcome_model(g, batches, train, spec);
    for (int u = k; u < total; u += folds) {
      const auto& ref = reps[u];
      sum += detail::dr_contrast(g, batches[ref.batch], ref.t, weights[ref.batch], model, ones, zeros);
    }
  }
  return sum / total;
}

inline double crossfit_dr(const RegionGraph& g, const ExperimentBatch& batch, int folds,
                          const OutcomeSpec& spec) {
  return crossfit_dr(g, std::span<const ExperimentBatch>(&batch, 1), folds, spec);
}

// Long-format batch CSV: header "t,i,O,A,Y", one row per (repetition,
// region) with repetitions outermost. The design travels separately as a
// region file.
inline void write_batch_csv(std::ostream& os, const ExperimentBatch& b) {
  os << "t,i,O,A,Y\n";
  for (int t = 0; t < b.size(); ++t)
    for (int i = 0; i < b.regions(); ++i)
      os << t << ',' << i << ',' << format_double(b.covariates(t, i)) << ',' << b.treatments(t, i) << ','
         << format_double(b.outcomes(t, i)) << '\n';
}

inline ExperimentBatch read_batch_csv(std::istream& is, const Clustering& design,
                                      const std::string& origin = "batch") {
  const int regions = design.region_count();
  std::string line;
  if (!std::getline(is, line)) throw ConfigError(origin + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "t,i,O,A,Y") throw ConfigError(origin + ": unexpected header '" + line + "'");
  struct Row {
    int t, i;
    double o;
    int a;
    double y;
  };
  std::vector<Row> rows;
  int n = 0;
  int number = 1;
  while (std::getline(is, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f[5];
    for (auto& field : f)
      if (!std::getline(ss, field, ','))
        throw ConfigError(origin + ":" + std::to_string(number) + ": expected 5 fields");
    try {
      Row r{std::stoi(f[0]), std::stoi(f[1]), parse_double(f[2]), std::stoi(f[3]), parse_double(f[4])};
      if (r.t < 0 || r.i < 0 || r.i >= regions) throw ConfigError("index out of range");
      n = std::max(n, r.t + 1);
      rows.push_back(r);
    } catch (const std::exception& e) {
      throw ConfigError(origin + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  if (static_cast<long long>(rows.size()) != static_cast<long long>(n) * regions)
    throw ConfigError(origin + ": expected " + std::to_string(n) + " x " + std::to_string(regions) + " rows");
  ExperimentBatch b{RowMatrixXd(n, regions), RowMatrixXi(n, regions), RowMatrixXd(n, regions), design};
  std::vector<char> seen(static_cast<std::size_t>(n) * regions, 0);
  for (const auto& r : rows) {
    char& s = seen[static_cast<std::size_t>(r.t) * regions + r.i];
    if (s) throw ConfigError(origin + ": duplicate row t=" + std::to_string(r.t) + " i=" + std::to_string(r.i));
    s = 1;
    b.covariates(r.t, r.i) = r.o;
    b.treatments(r.t, r.i) = r.a;
    b.outcomes(r.t, r.i) = r.y;
  }
  return b;
}

inline ExperimentBatch read_batch_csv(const std::string& path, const Clustering& design) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open batch file: " + path);
  return read_batch_csv(is, design, path);
}

}  // namespace cgc
