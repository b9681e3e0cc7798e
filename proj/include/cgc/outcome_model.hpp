#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>

#include "cgc/region_graph.hpp"

namespace cgc {

// Predicts g_i(a, o) for region i. The treatment row `a` and covariate row `o`
// are full length-R rows; a predictor must read them only at the indices in
// the closed neighbourhood of i.
class OutcomeModel {
 public:
  enum class Kind { kZero, kPooledRidge, kOracle, kCustom };
  using Predictor =
      std::function<double(const RegionGraph&, int, std::span<const int>, std::span<const double>)>;

  static OutcomeModel zero() { return OutcomeModel(Kind::kZero, "zero", nullptr); }

  OutcomeModel(Kind kind, std::string descriptor, Predictor predictor)
      : kind_(kind),
        descriptor_(std::move(descriptor)),
        predictor_(predictor ? std::make_shared<const Predictor>(std::move(predictor)) : nullptr) {
    if (kind_ != Kind::kZero && !predictor_)
      throw std::invalid_argument("OutcomeModel: missing predictor");
  }

  double predict(const RegionGraph& g, int i, std::span<const int> a,
                 std::span<const double> o) const {
    if (kind_ == Kind::kZero) return 0.0;
    return (*predictor_)(g, i, a, o);
  }

  Kind kind() const { return kind_; }
  const std::string& descriptor() const { return descriptor_; }

 private:
  Kind kind_;
  std::string descriptor_;
  std::shared_ptr<const Predictor> predictor_;
};

// Neighbour-average treatment, excluding i itself; 0 for an isolated region.
inline double neighbour_mean_treatment(const RegionGraph& g, int i, std::span<const int> a) {
  int n = 0;
  double sum = 0.0;
  for (int j : g.neighbourhood(i)) {
    if (j == i) continue;
    sum += a[j];
    ++n;
  }
  return n == 0 ? 0.0 : sum / n;
}

// Pooled regression features:
// [1, O_i, A_i, Abar_i, O_i A_i, O_i Abar_i, l_x, l_y, O_i sin(l_x + l_y), O_i cos(l_x + l_y)].
inline constexpr int kRidgeFeatureCount = 10;
inline constexpr const char* kRidgeFeatureMapId = "trig10";

inline std::array<double, kRidgeFeatureCount> ridge_features(const RegionGraph& g, int i,
                                                             std::span<const int> a,
                                                             std::span<const double> o) {
  const double oi = o[i];
  const double ai = a[i];
  const double abar = neighbour_mean_treatment(g, i, a);
  const Coord& c = g.coord(i);
  const double phase = c.x + c.y;
  return {1.0, oi, ai, abar, oi * ai, oi * abar, c.x, c.y, oi * std::sin(phase), oi * std::cos(phase)};
}

inline OutcomeModel make_ridge_model(const std::array<double, kRidgeFeatureCount>& beta,
                                     double penalty) {
  auto predictor = [beta](const RegionGraph& g, int i, std::span<const int> a,
                          std::span<const double> o) {
    auto f = ridge_features(g, i, a, o);
    double y = 0.0;
    for (int k = 0; k < kRidgeFeatureCount; ++k) y += beta[k] * f[k];
    return y;
  };
  return OutcomeModel(OutcomeModel::Kind::kPooledRidge,
                      std::string("pooled-ridge{") + kRidgeFeatureMapId + "," +
                          format_double(penalty) + "}",
                      predictor);
}

}  // namespace cgc
