// Picks a design for a 12x12 grid with strongly correlated noise and compares
// it with the two naive extremes.
#include <iostream>

#include "cgc/graphcut.hpp"

int main() {
  using namespace cgc;
  const RegionGraph g = build_grid(GridSpec::square(12));
  const CovarianceMatrix sigma = build_model_covariance(CovarianceModel::kExponential, 0.9, g.size());

  const DesignSelection sel = select_design(g, sigma.values(), 1, SpectralConfig{});
  std::cout << "m  sigma1^2\n";
  for (auto [m, v] : sel.per_m_mse) std::cout << m << "  " << v << (m == sel.chosen_m ? "  <- chosen" : "") << '\n';

  const double global = sigma1_squared(g, Clustering::global(g.size()), sigma.values(), 1);
  const double individual = sigma1_squared(g, Clustering::individual(g.size()), sigma.values(), 1);
  std::cout << "global " << global << ", individual " << individual << ", chosen " << sel.chosen_mse() << '\n';
}
