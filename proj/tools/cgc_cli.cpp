// Command-line front end: design selection, exact MSE, estimation, the batch
// CGC loop, simulation and the benchmark harness. Every run writes its outputs
// plus manifest.txt (the fully resolved config) into the output directory.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "cgc/benchmark.hpp"
#include "cgc/cgc_loop.hpp"
#include "cgc/config.hpp"
#include "cgc/covariance.hpp"
#include "cgc/estimators.hpp"
#include "cgc/graphcut.hpp"
#include "cgc/mse.hpp"
#include "cgc/region_graph.hpp"
#include "cgc/synth_env.hpp"

namespace fs = std::filesystem;
using namespace cgc;

namespace {

struct Context {
  RunConfig cfg;
  std::uint64_t seed = 0;
  fs::path out;
};

std::ofstream open_output(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  return os;
}

GridSpec grid_spec(RunConfig& cfg) {
  const GridShape shape = [&] {
    try {
      return parse_grid_shape(cfg.get_string("grid.shape", "square"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }();
  switch (shape) {
    case GridShape::kSquare: return GridSpec::square(cfg.get_int("grid.side", 8));
    case GridShape::kRectangle:
      return GridSpec::rectangle(cfg.get_int("grid.width", 8), cfg.get_int("grid.height", 8));
    case GridShape::kCircle: return GridSpec::circle(cfg.get_int("grid.radius", 4));
    case GridShape::kFan: return GridSpec::fan(cfg.get_int("grid.radius", 4), cfg.get_int("grid.sectors", 3));
  }
  throw ConfigError("unsupported grid shape");
}

// A region file (grid.file) takes precedence over the generated lattice.
RegionGraph load_graph(RunConfig& cfg) {
  if (cfg.has("grid.file")) return read_region_file(cfg.get_string("grid.file", "")).graph;
  try {
    return build_grid(grid_spec(cfg));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("grid: ") + e.what());
  }
}

CovarianceMatrix load_covariance(RunConfig& cfg, int regions) {
  if (cfg.has("covariance.csv")) {
    const std::string path = cfg.get_string("covariance.csv", "");
    CovarianceMatrix s = read_covariance_csv(path);
    if (s.size() != regions)
      throw ConfigError(path + ": covariance is " + std::to_string(s.size()) + "x" + std::to_string(s.size()) +
                        " but the grid has " + std::to_string(regions) + " regions");
    return s;
  }
  try {
    const CovarianceModel model = parse_covariance_model(cfg.get_string("covariance.model", "exponential"));
    return build_model_covariance(model, cfg.get_double("covariance.rho", 0.5), regions);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("covariance: ") + e.what());
  }
}

// The k-means seed is only configurable for one-shot selection; the loop and
// the benchmark derive their own per-round seeds from run.seed.
SpectralConfig spectral_config(RunConfig& cfg, std::uint64_t seed, bool seed_key = true) {
  SpectralConfig s;
  s.eigen_tolerance = cfg.get_double("design.eigen_tolerance", s.eigen_tolerance);
  s.zero_eigen_threshold = cfg.get_double("design.zero_eigen_threshold", s.zero_eigen_threshold);
  s.kmeans_restarts = cfg.get_int("design.kmeans_restarts", s.kmeans_restarts);
  s.kmeans_max_iters = cfg.get_int("design.kmeans_max_iters", s.kmeans_max_iters);
  s.rng_seed = seed_key ? cfg.get_u64("design.seed", seed) : seed;
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return s;
}

// "global", "individual", "tiling(k)" or "file" (labels from design.file).
Clustering named_design(RunConfig& cfg, const RegionGraph& g, const std::string& key, const std::string& fallback) {
  const std::string name = cfg.get_string(key, fallback);
  if (name == "global") return Clustering::global(g.size());
  if (name == "individual") return Clustering::individual(g.size());
  if (name == "file") {
    RegionFile f = read_region_file(cfg.get_string("design.file", ""));
    if (f.graph.coords().size() != g.coords().size())
      throw ConfigError("design.file: region count does not match the grid");
    for (int i = 0; i < g.size(); ++i)
      if (f.graph.coord(i).x != g.coord(i).x || f.graph.coord(i).y != g.coord(i).y)
        throw ConfigError("design.file: coordinates do not match the grid");
    return f.clustering;
  }
  if (name.rfind("tiling(", 0) == 0 && name.back() == ')') {
    try {
      return tiling_partition(g, std::stoi(name.substr(7, name.size() - 8)));
    } catch (const std::exception& e) {
      throw ConfigError(key + ": " + e.what());
    }
  }
  throw ConfigError(key + ": unknown design '" + name + "'");
}

OutcomeSpec regression_spec(RunConfig& cfg) {
  const std::string kind = cfg.get_string("cgc.regression", "ridge");
  if (kind == "zero") return OutcomeSpec::zero();
  if (kind == "ridge") {
    const double penalty = cfg.get_double("cgc.ridge_penalty", 1e-3);
    if (!(penalty > 0.0)) throw ConfigError("cgc.ridge_penalty must be positive");
    return OutcomeSpec::ridge(penalty);
  }
  throw ConfigError("cgc.regression: expected ridge or zero, got '" + kind + "'");
}

CovariateLaw covariate_law(RunConfig& cfg) {
  const std::string law = cfg.get_string("env.covariate_law", "uniform");
  if (law == "uniform")
    return CovariateLaw::uniform(cfg.get_double("env.covariate_low", 0.5), cfg.get_double("env.covariate_high", 1.5));
  if (law == "constant") return CovariateLaw::constant(cfg.get_double("env.covariate_value", 1.0));
  throw ConfigError("env.covariate_law: expected uniform or constant, got '" + law + "'");
}

SyntheticEnv synthetic_env(RunConfig& cfg, std::uint64_t seed) {
  RegionGraph g = load_graph(cfg);
  CovarianceMatrix s = load_covariance(cfg, g.size());
  const double signal = cfg.get_double("env.signal", 0.025);
  const CovariateLaw law = covariate_law(cfg);
  const double noise = cfg.get_double("env.noise_scale", 1.0);
  if (!(noise > 0.0)) throw ConfigError("env.noise_scale must be positive");
  try {
    return SyntheticEnv(std::move(g), std::move(s), signal, law, seed, noise);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

CgcConfig cgc_config(RunConfig& cfg, const RegionGraph& g, std::uint64_t seed) {
  CgcConfig c;
  c.batch_size = cfg.get_int("cgc.B", 20);
  c.total_repetitions = cfg.get_int("cgc.N", 100);
  c.shrinkage = cfg.get_double("cgc.lambda", 0.1);
  c.covariance_mode = parse_covariance_mode(cfg.get_string("cgc.covariance_mode", "cumulative"));
  c.regression = regression_spec(cfg);
  c.crossfit_folds = cfg.get_int("cgc.folds", 0);
  c.initial_design = named_design(cfg, g, "cgc.initial_design", "individual");
  c.m_max = cfg.get_int("design.m_max", 0);
  c.spectral = spectral_config(cfg, seed, false);
  c.seed = seed;
  c.validate();
  return c;
}

// Called once a subcommand has read all of its settings: rejects leftover
// keys before any work is done or any file is written.
void ready(Context& ctx) {
  ctx.cfg.check_all_used();
  fs::create_directories(ctx.out);
}

void write_sweep(std::ostream& os, const DesignSelection& sel) {
  os << "m,sigma1_sq\n";
  for (auto [m, v] : sel.per_m_mse) os << m << ',' << format_double(v) << '\n';
}

void run_design(Context& ctx) {
  auto& cfg = ctx.cfg;
  const RegionGraph g = load_graph(cfg);
  const CovarianceMatrix s = load_covariance(cfg, g.size());
  const int n = cfg.get_int("design.N", 1);
  if (n < 1) throw ConfigError("design.N must be >= 1");
  SelectOptions opt;
  opt.m_max = cfg.get_int("design.m_max", 0);
  opt.include_individual = cfg.get_bool("design.include_individual", true);
  opt.include_global = cfg.get_bool("design.include_global", true);
  const SpectralConfig spectral = spectral_config(cfg, ctx.seed);
  ready(ctx);
  const DesignSelection sel = select_design(g, s.values(), n, spectral, opt);
  auto os = open_output(ctx.out / "sweep.csv");
  write_sweep(os, sel);
  write_region_file((ctx.out / "design.txt").string(), g, sel.clustering);
  std::cout << "chosen m = " << sel.chosen_m << ", sigma1_sq = " << format_double(sel.chosen_mse()) << '\n';
}

void run_mse(Context& ctx) {
  auto& cfg = ctx.cfg;
  const RegionGraph g = load_graph(cfg);
  const CovarianceMatrix s = load_covariance(cfg, g.size());
  const Clustering c = named_design(cfg, g, "design.source", "global");
  const int n = cfg.get_int("mse.N", 1);
  if (n < 1) throw ConfigError("mse.N must be >= 1");
  ready(ctx);
  const MseBreakdown b = decompose(g, c, s.values(), n);
  auto os = open_output(ctx.out / "mse.csv");
  os << "da,sc,i1,j1,j2,j3,sigma1_sq,total\n";
  os << format_double(b.da) << ',' << format_double(b.sc) << ',' << format_double(b.i1) << ','
     << format_double(b.j1) << ',' << format_double(b.j2) << ',' << format_double(b.j3) << ','
     << format_double(b.sigma1_sq) << ',' << format_double(b.total) << '\n';
  std::cout << "sigma1_sq = " << format_double(b.sigma1_sq) << '\n';
}

void run_estimate(Context& ctx) {
  auto& cfg = ctx.cfg;
  const RegionGraph g = load_graph(cfg);
  const Clustering design = named_design(cfg, g, "design.source", "file");
  const ExperimentBatch batch = read_batch_csv(cfg.get_string("estimate.batch", "batch.csv"), design);
  try {
    check_batch(g, batch);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("estimate.batch: ") + e.what());
  }
  const OutcomeSpec spec = regression_spec(cfg);
  const int folds = cfg.get_int("estimate.folds", 2);
  if (folds != 0 && (folds < 2 || folds > batch.size()))
    throw ConfigError("estimate.folds must be 0 (off) or between 2 and the number of repetitions");
  ready(ctx);
  auto os = open_output(ctx.out / "estimate.csv");
  os << "estimator,value\n";
  os << "IS," << format_double(is_estimate(g, batch)) << '\n';
  os << "DR," << format_double(dr_estimate(g, batch, fit_outcome_model(g, batch, spec))) << '\n';
  if (folds >= 2) os << "DR-CF," << format_double(crossfit_dr(g, batch, folds, spec)) << '\n';
}

void run_cgc_command(Context& ctx) {
  auto& cfg = ctx.cfg;
  const SyntheticEnv env = synthetic_env(cfg, ctx.seed);
  const CgcConfig c = cgc_config(cfg, env.graph(), ctx.seed);
  const bool write_designs = cfg.get_bool("cgc.write_designs", false);
  ready(ctx);
  const CgcTrace trace = run_cgc(env, c);

  auto os = open_output(ctx.out / "trace.csv");
  os << "round,chosen_m,ate_round\n";
  for (const auto& r : trace.rounds) os << r.round << ',' << r.chosen_m << ',' << format_double(r.ate) << '\n';
  auto detail = open_output(ctx.out / "rounds.csv");
  detail << "round,deployed_m,covariance_hash,m,sigma1_sq\n";
  for (const auto& r : trace.rounds)
    for (auto [m, v] : r.sweep)
      detail << r.round << ',' << r.design.cluster_count() << ',' << r.covariance_hash << ',' << m << ','
             << format_double(v) << '\n';
  if (write_designs) {
    for (const auto& r : trace.rounds)
      write_region_file((ctx.out / ("round_" + std::to_string(r.round) + "_design.txt")).string(), env.graph(),
                        r.design);
    write_region_file((ctx.out / "next_design.txt").string(), env.graph(), trace.next_design);
  }
  std::cout << "final_ate = " << format_double(trace.ate) << " over " << trace.rounds.size()
            << " rounds; true_ate = " << format_double(true_ate(env)) << '\n';
}

void run_simulate(Context& ctx) {
  auto& cfg = ctx.cfg;
  const SyntheticEnv env = synthetic_env(cfg, ctx.seed);
  const Clustering design = named_design(cfg, env.graph(), "design.source", "individual");
  const int n = cfg.get_int("simulate.n", 100);
  const int n_mc = cfg.get_int("simulate.n_mc", 1000);
  if (n < 1 || n_mc < 1) throw ConfigError("simulate.n and simulate.n_mc must be >= 1");
  ready(ctx);
  const ExperimentBatch batch = sample_batch(env, design, n, ctx.seed);
  auto os = open_output(ctx.out / "batch.csv");
  write_batch_csv(os, batch);
  const McEstimate mc = mc_ate(env, n_mc, derive_seed(ctx.seed, 0x6d63));
  auto truth = open_output(ctx.out / "truth.csv");
  truth << "true_ate,mc_ate,mc_se,n_mc\n"
        << format_double(true_ate(env)) << ',' << format_double(mc.value) << ',' << format_double(mc.standard_error)
        << ',' << n_mc << '\n';
  write_region_file((ctx.out / "design.txt").string(), env.graph(), design);
}

void run_benchmark(Context& ctx) {
  auto& cfg = ctx.cfg;
  BenchmarkConfig b;
  b.env.grid = grid_spec(cfg);
  b.env.model = parse_covariance_model(cfg.get_string("covariance.model", "exponential"));
  b.env.signal = cfg.get_double("env.signal", 0.025);
  b.env.law = covariate_law(cfg);
  b.env.noise_scale = cfg.get_double("env.noise_scale", 1.0);
  if (!(b.env.noise_scale > 0.0)) throw ConfigError("env.noise_scale must be positive");
  for (const auto& m : cfg.get_list("benchmark.methods", "OCGC,GD,ID,CGC")) b.methods.push_back(parse_method(m));
  b.replications = cfg.get_int("benchmark.replications", 50);
  const std::string param = cfg.get_string("benchmark.param", "rho");
  if (param == "rho") {
    b.sweep = SweepParameter::kRho;
    b.values = cfg.get_double_list("benchmark.rhos", "0.3,0.5,0.7");
  } else if (param == "N") {
    b.sweep = SweepParameter::kN;
    b.env.rho = cfg.get_double("covariance.rho", 0.5);
    b.values = cfg.get_double_list("benchmark.Ns", "20,40,60,80,100");
  } else {
    throw ConfigError("benchmark.param: expected rho or N, got '" + param + "'");
  }
  b.record_wall_time = cfg.get_bool("benchmark.wall_time", true);
  const bool svg = cfg.get_bool("benchmark.svg", false);
  const RegionGraph g = build_grid(b.env.grid);
  b.cgc = cgc_config(cfg, g, ctx.seed);
  for (double v : b.values) {
    if (b.sweep == SweepParameter::kN && static_cast<int>(v) % b.cgc.batch_size != 0)
      throw ConfigError("benchmark.Ns: every N must be a multiple of cgc.B");
    if (b.sweep == SweepParameter::kRho && !(v > 0.0 && v <= 1.0))
      throw ConfigError("benchmark.rhos: values must lie in (0, 1]");
  }
  ready(ctx);
  const BenchmarkReport report = benchmark(b);
  auto os = open_output(ctx.out / "benchmark.csv");
  write_benchmark_csv(os, report);
  if (svg) {
    auto chart = open_output(ctx.out / "benchmark.svg");
    write_benchmark_svg(chart, report);
  }
  for (auto [v, truth] : report.truths)
    std::cout << report.rows.front().param_name << " = " << format_double(v) << ": true_ate = " << format_double(truth)
              << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cluster-randomized spatial experiment design"};
  app.require_subcommand(1);
  app.fallthrough();
  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::optional<std::string> out;
  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("--seed", seed, "Base random seed (run.seed)");
  app.add_option("--threads", threads, "Worker thread cap, 0 = all cores")->check(CLI::NonNegativeNumber);
  app.add_option("--out", out, "Output directory (run.out)");
  app.add_option("--config", config_path, "key = value config file or a previous manifest");
  app.add_option("--set", overrides, "Extra key=value setting, may be repeated");

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"design", "Select a design by sweeping the number of clusters"},
      {"mse", "Exact MSE decomposition of a fixed design"},
      {"estimate", "IS and DR estimates from a batch CSV"},
      {"cgc", "Run the batch design loop on a synthetic environment"},
      {"simulate", "Draw a batch and the true ATE from a synthetic environment"},
      {"benchmark", "Relative MSE of several design methods over replications"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  const std::string subcommand = app.get_subcommands().front()->get_name();

  try {
    set_max_threads(threads);
    Context ctx;
    ctx.cfg = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
    if (seed) ctx.cfg.set("run.seed", std::to_string(*seed));
    if (out) ctx.cfg.set("run.out", *out);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      ctx.cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    ctx.cfg.get_string("artifact.version", kArtifactVersion);
    const std::string recorded = ctx.cfg.get_string("run.subcommand", subcommand);
    if (recorded != subcommand)
      throw ConfigError("config was written for '" + recorded + "', not '" + subcommand + "'");
    ctx.seed = ctx.cfg.get_u64("run.seed", 0);
    ctx.out = ctx.cfg.get_string("run.out", "cgc_out");

    if (subcommand == "design") run_design(ctx);
    else if (subcommand == "mse") run_mse(ctx);
    else if (subcommand == "estimate") run_estimate(ctx);
    else if (subcommand == "cgc") run_cgc_command(ctx);
    else if (subcommand == "simulate") run_simulate(ctx);
    else run_benchmark(ctx);
    auto manifest = open_output(ctx.out / "manifest.txt");
    ctx.cfg.write_manifest(manifest);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
