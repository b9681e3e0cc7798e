#include <gtest/gtest.h>

#include <random>

#include "cgc/benchmark.hpp"
#include "cgc/synth_env.hpp"
#include "support.hpp"

using namespace cgc;

namespace {

SyntheticEnv square_env(int side, double rho, std::uint64_t seed = 0, double noise = 1.0,
                        CovariateLaw law = {}, double signal = 0.025) {
  auto g = build_grid(GridSpec::square(side));
  const int r = g.size();
  return SyntheticEnv(std::move(g), build_model_covariance(CovarianceModel::kExponential, rho, r), signal,
                      law, seed, noise);
}

SyntheticEnv single_region(double noise) {
  return SyntheticEnv(RegionGraph::isolated({{0, 0}}), CovarianceMatrix(Eigen::MatrixXd::Ones(1, 1)), 0.025,
                      CovariateLaw::constant(1.0), 0, noise);
}

}  // namespace

TEST(SyntheticEnv, Validation) {
  auto g = build_grid(GridSpec::square(2));
  const auto s = build_model_covariance(CovarianceModel::kExponential, 0.5, 4);
  EXPECT_THROW(SyntheticEnv(g, s, 0.0), std::invalid_argument);
  EXPECT_THROW(SyntheticEnv(g, build_model_covariance(CovarianceModel::kExponential, 0.5, 3)),
               std::invalid_argument);
  EXPECT_THROW(SyntheticEnv(g, s, 0.025, CovariateLaw::uniform(1, 1)), std::invalid_argument);
}

TEST(SampleBatch, SingleRegionFormula) {
  const auto env = single_region(0.0);
  const auto b = sample_batch(env, Clustering::global(1), 40, 1);
  int treated = 0;
  for (int t = 0; t < b.size(); ++t) {
    if (b.treatments(t, 0) == 1) {
      EXPECT_DOUBLE_EQ(b.outcomes(t, 0), 3.0 * std::sin(0.025));
      ++treated;
    } else {
      EXPECT_DOUBLE_EQ(b.outcomes(t, 0), 0.0);
    }
  }
  EXPECT_GT(treated, 0);
}

TEST(SampleBatch, AllTreatedShift) {
  const auto env = square_env(3, 0.5, 0, 0.0, CovariateLaw::constant(1.0));
  std::vector<int> ones(9, 1);
  std::vector<double> o(9, 1.0);
  for (int i = 0; i < 9; ++i) {
    const auto& c = env.graph().coord(i);
    EXPECT_DOUBLE_EQ(env.mean_outcome(i, ones, o), 3.0 * std::sin(c.x + c.y + 1.5 * 0.025));
  }
}

TEST(SampleBatch, DesignConsistentAndDeterministic) {
  const auto env = square_env(4, 0.5, 3);
  const auto design = tiling_partition(env.graph(), 2);
  const auto a = sample_batch(env, design, 10, 77);
  const auto b = sample_batch(env, design, 10, 77);
  EXPECT_NO_THROW(check_batch(env.graph(), a));
  EXPECT_EQ(a.outcomes, b.outcomes);
  EXPECT_EQ(a.treatments, b.treatments);
  EXPECT_NE(sample_batch(env, design, 10, 78).outcomes, a.outcomes);
  EXPECT_EQ(sample_batch(env, design, 10).outcomes, sample_batch(env, design, 10, 3).outcomes);
}

TEST(SampleBatch, SharedStreamsAcrossDesigns) {
  const auto env = square_env(4, 0.5);
  const auto x = sample_batch(env, Clustering::individual(16), 6, 5);
  const auto y = sample_batch(env, Clustering::global(16), 6, 5);
  EXPECT_EQ(x.covariates, y.covariates);
  // A split batch continues the same global repetition sequence.
  const auto head = sample_batch(env, Clustering::global(16), 3, 5);
  const auto tail = sample_batch(env, Clustering::global(16), 3, 5, 3);
  EXPECT_EQ(head.outcomes, y.outcomes.topRows(3));
  EXPECT_EQ(tail.outcomes, y.outcomes.bottomRows(3));
}

TEST(SampleBatch, NoiseCovarianceConverges) {
  auto g = build_grid(GridSpec::rectangle(5, 1));
  const auto sigma = build_model_covariance(CovarianceModel::kExponential, 0.5, 5);
  const SyntheticEnv env(std::move(g), sigma, 0.025, CovariateLaw::constant(1.0), 4);
  const auto b = sample_batch(env, Clustering::global(5), 100000, 4);
  RowMatrixXd e = b.outcomes;
  for (int t = 0; t < b.size(); ++t)
    for (int i = 0; i < 5; ++i) e(t, i) -= env.mean_outcome(i, b.treatment_row(t), b.covariate_row(t));
  const auto est = empirical_covariance(e, 0.0);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) EXPECT_NEAR(est(i, j), sigma(i, j), 0.05 * sigma(i, j));
}

TEST(SampleBatch, OutcomeDependsOnNeighbourhoodOnly) {
  const auto env = square_env(5, 0.5);
  std::mt19937_64 rng(6);
  std::bernoulli_distribution coin(0.5);
  std::vector<int> a(25);
  std::vector<double> o(25, 1.1);
  for (int& v : a) v = coin(rng);
  for (int i = 0; i < 25; ++i) {
    const double before = env.mean_outcome(i, a, o);
    auto flipped = a;
    const auto nb = env.graph().neighbourhood(i);
    for (int j = 0; j < 25; ++j)
      if (std::find(nb.begin(), nb.end(), j) == nb.end()) flipped[j] = 1 - flipped[j];
    EXPECT_EQ(env.mean_outcome(i, flipped, o), before);
  }
}

TEST(TrueAte, Examples) {
  EXPECT_LT(std::abs(true_ate(square_env(4, 0.5, 0, 1.0, {}, 1e-12))), 1e-9);
  // An isolated region has no neighbours, so all-treated shifts the phase by s.
  EXPECT_DOUBLE_EQ(true_ate(single_region(1.0)), 3.0 * std::sin(0.025));
  // Frozen value from the independent numpy oracle.
  EXPECT_NEAR(true_ate(square_env(8, 0.5)), 0.20784178971963957, 1e-13);
}

TEST(TrueAte, MatchesMonteCarloOnLargeGrid) {
  const auto env = square_env(12, 0.9);
  const auto mc = mc_ate(env, 100000, 13);
  EXPECT_LE(std::abs(mc.value - true_ate(env)), 4 * mc.standard_error);
}

TEST(TrueAte, MatchesMonteCarloOnEveryShape) {
  for (const auto& spec : {GridSpec::rectangle(5, 3), GridSpec::circle(3), GridSpec::fan(4, 3)}) {
    auto g = build_grid(spec);
    const int r = g.size();
    const SyntheticEnv env(std::move(g), build_model_covariance(CovarianceModel::kExponential, 0.5, r), 0.025,
                           {}, 0);
    const auto mc = mc_ate(env, 20000, 14);
    EXPECT_LE(std::abs(mc.value - true_ate(env)), 4 * mc.standard_error) << to_string(spec.shape);
  }
}

TEST(McAte, NoiselessSingleDrawIsExact) {
  const auto env = square_env(6, 0.5, 0, 0.0, CovariateLaw::constant(1.0));
  const auto mc = mc_ate(env, 1, 5);
  EXPECT_NEAR(mc.value, true_ate(env), 1e-12);
  EXPECT_TRUE(std::isnan(mc.standard_error));
}

TEST(McAte, SeedIndependentWithinError) {
  const auto env = square_env(6, 0.5);
  const auto a = mc_ate(env, 1000, 1);
  const auto b = mc_ate(env, 1000, 2);
  EXPECT_NE(a.value, b.value);
  EXPECT_LE(std::abs(a.value - b.value), 4 * std::hypot(a.standard_error, b.standard_error));
  EXPECT_THROW(mc_ate(env, 0, 1), std::invalid_argument);
}

TEST(RelativeMse, Examples) {
  const std::vector<double> exact{2.0, 2.0, 2.0};
  EXPECT_EQ(relative_mse(exact, 2.0), 0.0);
  const std::vector<double> doubled{4.0};
  EXPECT_EQ(relative_mse(doubled, 2.0), 1.0);
  EXPECT_THROW(relative_mse(exact, 0.0), std::invalid_argument);
  EXPECT_THROW(relative_mse(std::vector<double>{}, 1.0), std::invalid_argument);
}

namespace {

double fixed_design_rel_mse(const SyntheticEnv& env, const Clustering& design, int n, int reps) {
  CgcConfig cfg;
  cfg.regression = OutcomeSpec::zero();
  std::vector<double> estimates;
  const double truth = true_ate(env);
  for (int k = 0; k < reps; ++k) {
    const auto out = detail::fixed_design_estimate(env, design, n, derive_seed(41, k), cfg);
    EXPECT_TRUE(out.defined);
    estimates.push_back(out.estimate);
  }
  return relative_mse(estimates, truth);
}

}  // namespace

TEST(BenchmarkRegimes, NoInterferenceFavoursIndividual) {
  std::vector<Coord> coords;
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) coords.push_back({double(x), double(y)});
  const SyntheticEnv env(RegionGraph::isolated(coords), build_model_covariance(CovarianceModel::kConstant, 0.5, 16),
                         0.025, {}, 0);
  const double id = fixed_design_rel_mse(env, Clustering::individual(16), 20, 100);
  const double gd = fixed_design_rel_mse(env, Clustering::global(16), 20, 100);
  const double tiles = fixed_design_rel_mse(env, tiling_partition(build_grid(GridSpec::square(4)), 2), 20, 100);
  EXPECT_LT(id, gd);
  EXPECT_LT(id, tiles);
}

TEST(BenchmarkRegimes, NeighbourCovarianceFavoursGlobal) {
  auto g = build_grid(GridSpec::square(4));
  Eigen::MatrixXd s = 0.3 * g.adjacency();
  s.diagonal().setOnes();
  const SyntheticEnv env(g, CovarianceMatrix(s), 0.025, {}, 0);
  const double gd = fixed_design_rel_mse(env, Clustering::global(16), 20, 100);
  const double id = fixed_design_rel_mse(env, Clustering::individual(16), 20, 100);
  EXPECT_LT(gd, id);
}

TEST(Benchmark, ReportShapeAndCommonSeeds) {
  BenchmarkConfig cfg;
  cfg.env.grid = GridSpec::square(4);
  cfg.methods = {parse_method("OCGC"), parse_method("GD"), parse_method("ID"), parse_method("tiling(2)")};
  cfg.replications = 6;
  cfg.values = {0.3, 0.7};
  cfg.cgc.batch_size = 5;
  cfg.cgc.total_repetitions = 10;
  cfg.record_wall_time = false;
  set_max_threads(4);
  const auto report = benchmark(cfg);
  set_max_threads(0);
  ASSERT_EQ(report.rows.size(), 8u);
  ASSERT_EQ(report.truths.size(), 2u);
  for (const auto& row : report.rows) {
    EXPECT_EQ(row.replications, 6);
    if (row.defined) {
      EXPECT_GE(row.rel_mse, 0.0);
    }
    EXPECT_EQ(row.wall_ms, 0.0);
  }
  std::stringstream a, b;
  write_benchmark_csv(a, report);
  set_max_threads(1);
  write_benchmark_csv(b, benchmark(cfg));
  set_max_threads(0);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str().substr(0, a.str().find('\n')), "method,param_name,param_value,rel_mse,se,replications,wall_ms");
}

TEST(Benchmark, GlobalDesignUndefinedWithSingleRepetition) {
  BenchmarkConfig cfg;
  cfg.env.grid = GridSpec::square(3);
  cfg.methods = {parse_method("GD"), parse_method("ID")};
  cfg.replications = 3;
  cfg.values = {0.5};
  cfg.cgc.batch_size = 1;
  cfg.cgc.total_repetitions = 1;
  cfg.cgc.regression = OutcomeSpec::zero();
  const auto report = benchmark(cfg);
  EXPECT_FALSE(report.rows[0].defined);
  std::stringstream csv;
  write_benchmark_csv(csv, report);
  EXPECT_NE(csv.str().find("GD,rho,0.5,undefined,undefined"), std::string::npos);
}

TEST(Benchmark, MethodParsing) {
  EXPECT_EQ(parse_method("tiling(3)").param, 3);
  EXPECT_EQ(parse_method("adjacency-spectral").kind, MethodKind::kAdjacencySpectral);
  EXPECT_EQ(parse_method("adjacency-spectral(5)").name(), "adjacency-spectral(5)");
  EXPECT_THROW(parse_method("tiling(0)"), ConfigError);
  EXPECT_THROW(parse_method("XYZ"), ConfigError);
}

TEST(Benchmark, SvgIsWellFormed) {
  BenchmarkReport report;
  for (double rho : {0.3, 0.5}) {
    BenchmarkRow row;
    row.method = "ID";
    row.param_name = "rho";
    row.param_value = rho;
    row.rel_mse = rho;
    row.se = 0.01;
    row.replications = 1;
    report.rows.push_back(row);
  }
  std::stringstream svg;
  write_benchmark_svg(svg, report);
  EXPECT_EQ(svg.str().rfind("<svg", 0), 0u);
  EXPECT_NE(svg.str().find("</svg>"), std::string::npos);
}
