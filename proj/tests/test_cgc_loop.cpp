#include <gtest/gtest.h>

#include <random>

#include "cgc/cgc_loop.hpp"
#include "support.hpp"

using namespace cgc;

namespace {

SyntheticEnv square_env(int side, double rho, std::uint64_t seed = 0) {
  auto g = build_grid(GridSpec::square(side));
  const int r = g.size();
  return SyntheticEnv(std::move(g), build_model_covariance(CovarianceModel::kExponential, rho, r), 0.025, {},
                      seed);
}

// Wraps a source and keeps every batch it hands out.
struct Recorder {
  explicit Recorder(DataSource s) : inner(std::move(s)) {}
  DataSource inner;
  std::vector<ExperimentBatch> batches;
  DataSource source() {
    return [this](const Clustering& d, int n, int round, int first) {
      batches.push_back(inner(d, n, round, first));
      return batches.back();
    };
  }
};

CgcConfig small_config(std::uint64_t seed) {
  CgcConfig cfg;
  cfg.batch_size = 10;
  cfg.total_repetitions = 40;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST(CgcConfig, Validation) {
  CgcConfig cfg;
  cfg.batch_size = 30;
  EXPECT_THROW(cfg.validate(), ConfigError);  // 100 not divisible by 30
  cfg.batch_size = 200;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.batch_size = 20;
  cfg.shrinkage = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.shrinkage = 0.1;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.rounds(), 5);
}

TEST(CgcConfig, CovarianceModeNames) {
  EXPECT_EQ(parse_covariance_mode("cumulative"), CovarianceMode::kCumulative);
  EXPECT_EQ(parse_covariance_mode("single-batch"), CovarianceMode::kSingleBatch);
  EXPECT_EQ(to_string(CovarianceMode::kSingleBatch), "single-batch");
  EXPECT_THROW(parse_covariance_mode("rolling"), ConfigError);
}

TEST(RunCgc, SingleRoundKeepsInitialDesign) {
  const auto env = square_env(4, 0.5);
  CgcConfig cfg;
  cfg.batch_size = cfg.total_repetitions = 12;
  Recorder rec{synthetic_source(env, 3)};
  const auto trace = run_cgc(env.graph(), rec.source(), cfg);
  ASSERT_EQ(trace.rounds.size(), 1u);
  EXPECT_EQ(trace.rounds[0].design, Clustering::individual(16));
  const auto model = fit_outcome_model(env.graph(), rec.batches[0], cfg.regression);
  EXPECT_EQ(trace.ate, dr_estimate(env.graph(), rec.batches[0], model));
}

TEST(RunCgc, RoundStructure) {
  const auto env = square_env(5, 0.7);
  const auto cfg = small_config(4);
  Recorder rec{synthetic_source(env, 4)};
  const auto trace = run_cgc(env.graph(), rec.source(), cfg);
  ASSERT_EQ(trace.rounds.size(), 4u);
  double sum = 0.0;
  for (std::size_t l = 0; l < trace.rounds.size(); ++l) {
    const auto& round = trace.rounds[l];
    EXPECT_EQ(round.round, static_cast<int>(l) + 1);
    EXPECT_EQ(rec.batches[l].design, round.design);
    if (l > 0) {
      EXPECT_EQ(round.design.cluster_count(), trace.rounds[l - 1].chosen_m);
    }
    sum += round.ate;
  }
  EXPECT_EQ(trace.ate, sum / 4.0);
  EXPECT_EQ(trace.next_design.cluster_count(), trace.rounds.back().chosen_m);
}

TEST(RunCgc, RoundEstimateUsesDeployedDesignAndCumulativeResiduals) {
  const auto env = square_env(4, 0.6);
  const auto cfg = small_config(5);
  Recorder rec{synthetic_source(env, 5)};
  const auto trace = run_cgc(env.graph(), rec.source(), cfg);
  const auto& g = env.graph();
  for (int l = 1; l <= 4; ++l) {
    std::span<const ExperimentBatch> seen(rec.batches.data(), l);
    const auto model = fit_outcome_model(g, seen, cfg.regression);
    RowMatrixXd resid(l * cfg.batch_size, 16);
    for (int b = 0; b < l; ++b) resid.middleRows(b * cfg.batch_size, cfg.batch_size) = residuals(g, rec.batches[b], model);
    EXPECT_EQ(trace.rounds[l - 1].covariance_hash, fnv1a(empirical_covariance(resid, cfg.shrinkage).values()));
    EXPECT_EQ(trace.rounds[l - 1].ate, dr_estimate(g, rec.batches[l - 1], model));
  }
}

TEST(RunCgc, SingleBatchModeUsesOnlyCurrentBatch) {
  const auto env = square_env(4, 0.6);
  auto cfg = small_config(6);
  cfg.covariance_mode = CovarianceMode::kSingleBatch;
  Recorder rec{synthetic_source(env, 6)};
  const auto trace = run_cgc(env.graph(), rec.source(), cfg);
  const auto& g = env.graph();
  for (int l = 1; l <= 4; ++l) {
    const auto model = fit_outcome_model(g, std::span<const ExperimentBatch>(rec.batches.data(), l), cfg.regression);
    EXPECT_EQ(trace.rounds[l - 1].covariance_hash,
              fnv1a(empirical_covariance(residuals(g, rec.batches[l - 1], model), cfg.shrinkage).values()));
  }
}

TEST(RunCgc, CrossfitOption) {
  const auto env = square_env(4, 0.6);
  auto cfg = small_config(7);
  cfg.crossfit_folds = 2;
  Recorder rec{synthetic_source(env, 7)};
  const auto trace = run_cgc(env.graph(), rec.source(), cfg);
  for (int l = 0; l < 4; ++l)
    EXPECT_EQ(trace.rounds[l].ate, crossfit_dr(env.graph(), rec.batches[l], 2, cfg.regression));
}

TEST(RunCgc, ReproducibleAcrossThreadCounts) {
  const auto env = square_env(6, 0.7);
  const auto cfg = small_config(8);
  set_max_threads(1);
  const auto a = run_cgc(env, cfg);
  set_max_threads(4);
  const auto b = run_cgc(env, cfg);
  set_max_threads(0);
  ASSERT_EQ(a.rounds.size(), b.rounds.size());
  for (std::size_t l = 0; l < a.rounds.size(); ++l) {
    EXPECT_EQ(a.rounds[l].design, b.rounds[l].design);
    EXPECT_EQ(a.rounds[l].covariance_hash, b.rounds[l].covariance_hash);
    EXPECT_EQ(a.rounds[l].sweep, b.rounds[l].sweep);
    EXPECT_EQ(a.rounds[l].ate, b.rounds[l].ate);
  }
  EXPECT_EQ(a.ate, b.ate);
}

TEST(RunCgc, RejectsBadSources) {
  const auto env = square_env(3, 0.5);
  const auto cfg = small_config(1);
  DataSource short_source = [&](const Clustering& d, int n, int, int first) {
    return sample_batch(env, d, n - 1, 1, first);
  };
  EXPECT_THROW(run_cgc(env.graph(), short_source, cfg), std::runtime_error);
  auto bad = cfg;
  bad.initial_design = Clustering::global(4);
  EXPECT_THROW(run_cgc(env, bad), ConfigError);
}

TEST(RunCgc, TracksOracleChoice) {
  const auto env = square_env(6, 0.7);
  CgcConfig cfg;
  cfg.batch_size = 20;
  cfg.total_repetitions = 100;
  const int oracle_m = run_with_known_covariance(env.graph(), env.covariance().values(), 100, cfg).chosen_m;
  int agree = 0;
  for (int rep = 0; rep < 50; ++rep) {
    auto local = cfg;
    local.seed = derive_seed(51, rep);
    if (run_cgc(env, local).rounds.back().chosen_m == oracle_m) ++agree;
  }
  EXPECT_GE(agree, 40) << "oracle m = " << oracle_m;
}

TEST(RunCgc, CumulativeNoWorseThanSingleBatch) {
  const auto env = square_env(6, 0.7);
  const double truth = true_ate(env);
  CgcConfig cfg;
  cfg.batch_size = 20;
  cfg.total_repetitions = 100;
  std::vector<double> cumulative, single;
  for (int rep = 0; rep < 50; ++rep) {
    auto local = cfg;
    local.seed = derive_seed(52, rep);
    cumulative.push_back(run_cgc(env, local).ate);
    local.covariance_mode = CovarianceMode::kSingleBatch;
    single.push_back(run_cgc(env, local).ate);
  }
  EXPECT_LE(relative_mse(cumulative, truth), relative_mse(single, truth));
}

TEST(KnownCovariance, NeighbourOnlyPicksGlobal) {
  const auto g = build_grid(GridSpec::rectangle(3, 2));
  Eigen::MatrixXd s = 0.3 * g.adjacency();
  s.diagonal().setOnes();
  const auto sel = run_with_known_covariance(g, s, 10, {});
  EXPECT_EQ(sel.chosen_m, 1);
  fixtures::for_each_partition(6, [&](const Clustering& c) {
    EXPECT_LE(sel.chosen_mse(), sigma1_squared(g, c, s, 10) + 1e-12);
  });
}

TEST(KnownCovariance, NoInterferencePicksIndividual) {
  std::vector<Coord> coords;
  for (int i = 0; i < 9; ++i) coords.push_back({double(i % 3), double(i / 3)});
  const auto g = RegionGraph::isolated(coords);
  const auto s = build_model_covariance(CovarianceModel::kConstant, 0.4, 9).values();
  const auto sel = run_with_known_covariance(g, s, 1, {});
  EXPECT_EQ(sel.clustering, Clustering::individual(9));
}

TEST(KnownCovariance, TwelveByTwelveBeatsBothExtremes) {
  const auto g = build_grid(GridSpec::square(12));
  const auto s = build_model_covariance(CovarianceModel::kExponential, 0.9, 144).values();
  const auto sel = run_with_known_covariance(g, s, 1, {});
  EXPECT_LT(sel.chosen_mse(), sigma1_squared(g, Clustering::global(144), s, 1));
  EXPECT_LT(sel.chosen_mse(), sigma1_squared(g, Clustering::individual(144), s, 1));
}

TEST(SingleExperiment, TruePriorMatchesOracle) {
  const auto g = build_grid(GridSpec::square(8));
  const auto s = build_model_covariance(CovarianceModel::kExponential, 0.9, 64).values();
  CgcConfig cfg;
  cfg.seed = 3;
  const auto known = run_with_known_covariance(g, s, 1, cfg);
  ASSERT_GT(known.chosen_m, 1);
  const auto single = run_single_experiment(g, s, cfg, &s);
  EXPECT_EQ(single.selection.clustering, known.clustering);
  EXPECT_EQ(single.selection.chosen_m, known.chosen_m);
  ASSERT_TRUE(single.reference_mse.has_value());
  EXPECT_EQ(*single.reference_mse, known.chosen_mse());
  EXPECT_TRUE(single.warnings.empty());
  for (auto [m, v] : single.selection.per_m_mse) EXPECT_NE(m, 1);
}

TEST(SingleExperiment, GlobalWinnerIsExcludedWithWarning) {
  const auto g = build_grid(GridSpec::rectangle(3, 2));
  Eigen::MatrixXd s = 0.3 * g.adjacency();
  s.diagonal().setOnes();
  const auto out = run_single_experiment(g, s, {});
  EXPECT_GT(out.selection.chosen_m, 1);
  ASSERT_EQ(out.warnings.size(), 1u);
  EXPECT_FALSE(out.reference_mse.has_value());
}

TEST(SingleExperiment, RejectsAsymmetricPrior) {
  const auto g = build_grid(GridSpec::square(2));
  Eigen::MatrixXd s = Eigen::MatrixXd::Identity(4, 4);
  s(0, 1) = 0.5;
  EXPECT_THROW(run_single_experiment(g, s, {}), std::invalid_argument);
}
