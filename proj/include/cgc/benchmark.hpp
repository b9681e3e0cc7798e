#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cgc/cgc_loop.hpp"
#include "cgc/common.hpp"
#include "cgc/covariance.hpp"
#include "cgc/estimators.hpp"
#include "cgc/graphcut.hpp"
#include "cgc/region_graph.hpp"
#include "cgc/synth_env.hpp"

namespace cgc {

enum class MethodKind { kCgc, kOcgc, kGlobal, kIndividual, kTiling, kAdjacencySpectral };

struct Method {
  MethodKind kind = MethodKind::kCgc;
  int param = 0;  // tiles per side, or cluster count (0: ceil(R^(2/3)))

  std::string name() const {
    switch (kind) {
      case MethodKind::kCgc: return "CGC";
      case MethodKind::kOcgc: return "OCGC";
      case MethodKind::kGlobal: return "GD";
      case MethodKind::kIndividual: return "ID";
      case MethodKind::kTiling: return "tiling(" + std::to_string(param) + ")";
      case MethodKind::kAdjacencySpectral:
        return param > 0 ? "adjacency-spectral(" + std::to_string(param) + ")" : "adjacency-spectral";
    }
    return "?";
  }
};

// Accepts CGC, OCGC, GD, ID, tiling(k), adjacency-spectral and adjacency-spectral(m).
inline Method parse_method(const std::string& text) {
  auto with_arg = [&](const std::string& head, int& out) {
    if (text.rfind(head + "(", 0) != 0 || text.back() != ')') return false;
    const std::string arg = text.substr(head.size() + 1, text.size() - head.size() - 2);
    try {
      std::size_t used = 0;
      out = std::stoi(arg, &used);
      if (used != arg.size() || out < 1) throw ConfigError("");
    } catch (...) {
      throw ConfigError("bad method argument in '" + text + "'");
    }
    return true;
  };
  if (text == "CGC") return {MethodKind::kCgc, 0};
  if (text == "OCGC") return {MethodKind::kOcgc, 0};
  if (text == "GD") return {MethodKind::kGlobal, 0};
  if (text == "ID") return {MethodKind::kIndividual, 0};
  if (text == "adjacency-spectral") return {MethodKind::kAdjacencySpectral, 0};
  Method m;
  if (with_arg("tiling", m.param)) {
    m.kind = MethodKind::kTiling;
    return m;
  }
  if (with_arg("adjacency-spectral", m.param)) {
    m.kind = MethodKind::kAdjacencySpectral;
    return m;
  }
  throw ConfigError("unknown method '" + text + "'");
}

// Everything needed to build a SyntheticEnv, minus the swept parameter.
struct EnvFamily {
  GridSpec grid = GridSpec::square(8);
  CovarianceModel model = CovarianceModel::kExponential;
  double rho = 0.5;
  double signal = 0.025;
  CovariateLaw law;
  double noise_scale = 1.0;

  SyntheticEnv make(double rho_value, std::uint64_t seed) const {
    RegionGraph g = build_grid(grid);
    const int r = g.size();
    return SyntheticEnv(std::move(g), build_model_covariance(model, rho_value, r), signal, law, seed,
                        noise_scale);
  }
};

enum class SweepParameter { kRho, kN };

struct BenchmarkConfig {
  EnvFamily env;
  std::vector<Method> methods;
  int replications = 50;
  SweepParameter sweep = SweepParameter::kRho;
  std::vector<double> values;
  CgcConfig cgc;  // B, N (when not swept), shrinkage, regression, spectral, seed
  bool record_wall_time = true;
};

struct BenchmarkRow {
  std::string method;
  std::string param_name;
  double param_value = 0.0;
  double rel_mse = 0.0;
  double se = 0.0;
  int replications = 0;
  double wall_ms = 0.0;
  bool defined = true;
  // Designs the method deployed, for diagnostics (CGC: design of the last round).
  std::map<int, int> chosen_m_counts;
};

struct BenchmarkReport {
  std::vector<BenchmarkRow> rows;
  std::vector<std::pair<double, double>> truths;  // (param value, true ATE)
};

namespace detail {

struct MethodOutcome {
  double estimate = 0.0;
  bool defined = true;
  int m = 0;
  double ms = 0.0;
};

inline bool both_arms_exposed(const RegionGraph& g, const ExperimentBatch& b) {
  bool treated = false, control = false;
  for (int t = 0; t < b.size() && !(treated && control); ++t)
    for (int i = 0; i < g.size(); ++i) {
      treated = treated || exposure_indicator(g, b, i, t, Arm::kTreated);
      control = control || exposure_indicator(g, b, i, t, Arm::kControl);
    }
  return treated && control;
}

inline MethodOutcome fixed_design_estimate(const SyntheticEnv& env, const Clustering& design, int n,
                                           std::uint64_t seed, const CgcConfig& cfg) {
  const auto& g = env.graph();
  MethodOutcome out;
  out.m = design.cluster_count();
  const ExperimentBatch b = sample_batch(env, design, n, seed);
  if (!both_arms_exposed(g, b)) {
    out.defined = false;
    return out;
  }
  if (cfg.crossfit_folds >= 2 && n >= cfg.crossfit_folds) {
    out.estimate = crossfit_dr(g, b, cfg.crossfit_folds, cfg.regression);
  } else {
    out.estimate = dr_estimate(g, b, fit_outcome_model(g, b, cfg.regression));
  }
  return out;
}

inline double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace detail

// Runs every method on the same replication seeds at each parameter point.
// Replication r uses derive_seed(cfg.cgc.seed, r) for all methods.
inline BenchmarkReport benchmark(const BenchmarkConfig& cfg) {
  if (cfg.methods.empty()) throw ConfigError("benchmark: no methods");
  if (cfg.replications < 1) throw ConfigError("benchmark: replications must be >= 1");
  if (cfg.values.empty()) throw ConfigError("benchmark: no parameter values");
  const std::string param_name = cfg.sweep == SweepParameter::kRho ? "rho" : "N";
  BenchmarkReport report;

  for (double value : cfg.values) {
    const double rho = cfg.sweep == SweepParameter::kRho ? value : cfg.env.rho;
    CgcConfig cgc_cfg = cfg.cgc;
    if (cfg.sweep == SweepParameter::kN) {
      if (value != std::floor(value) || value < 1) throw ConfigError("benchmark: N values must be integers");
      cgc_cfg.total_repetitions = static_cast<int>(value);
    }
    const int n = cgc_cfg.total_repetitions;
    const SyntheticEnv env = cfg.env.make(rho, cgc_cfg.seed);
    const auto& g = env.graph();
    const int r = g.size();
    const double truth = true_ate(env);
    report.truths.emplace_back(value, truth);

    // Designs that do not depend on the replication.
    std::vector<std::optional<Clustering>> fixed(cfg.methods.size());
    for (std::size_t k = 0; k < cfg.methods.size(); ++k) {
      const Method& method = cfg.methods[k];
      switch (method.kind) {
        case MethodKind::kCgc: break;
        case MethodKind::kOcgc:
          fixed[k] = run_with_known_covariance(g, env.covariance().values(), n, cgc_cfg).clustering;
          break;
        case MethodKind::kGlobal: fixed[k] = Clustering::global(r); break;
        case MethodKind::kIndividual: fixed[k] = Clustering::individual(r); break;
        case MethodKind::kTiling: fixed[k] = tiling_partition(g, method.param); break;
        case MethodKind::kAdjacencySpectral: {
          const int m = std::min(method.param > 0 ? method.param : default_max_clusters(r), r);
          SpectralConfig spectral = cgc_cfg.spectral;
          spectral.rng_seed = cgc_cfg.seed;
          fixed[k] = m == 1 ? Clustering::global(r) : adjacency_spectral_partition(g, m, spectral);
          break;
        }
      }
    }

    const std::size_t methods = cfg.methods.size();
    std::vector<detail::MethodOutcome> outcomes(methods * cfg.replications);
    parallel_for(cfg.replications, [&](int rep) {
      const std::uint64_t seed = derive_seed(cgc_cfg.seed, static_cast<std::uint64_t>(rep));
      for (std::size_t k = 0; k < methods; ++k) {
        const auto start = std::chrono::steady_clock::now();
        detail::MethodOutcome out;
        if (cfg.methods[k].kind == MethodKind::kCgc) {
          CgcConfig local = cgc_cfg;
          local.seed = seed;
          const CgcTrace trace = run_cgc(env.graph(), synthetic_source(env, seed), local);
          out.estimate = trace.ate;
          out.m = trace.rounds.back().design.cluster_count();
        } else {
          out = detail::fixed_design_estimate(env, *fixed[k], n, seed, cgc_cfg);
        }
        out.ms = detail::elapsed_ms(start);
        outcomes[k * cfg.replications + rep] = out;
      }
    });

    for (std::size_t k = 0; k < methods; ++k) {
      BenchmarkRow row;
      row.method = cfg.methods[k].name();
      row.param_name = param_name;
      row.param_value = value;
      row.replications = cfg.replications;
      std::vector<double> errors;
      for (int rep = 0; rep < cfg.replications; ++rep) {
        const auto& out = outcomes[k * cfg.replications + rep];
        row.wall_ms += out.ms;
        ++row.chosen_m_counts[out.m];
        if (!out.defined) row.defined = false;
        const double rel = (out.estimate - truth) / truth;
        errors.push_back(rel * rel);
      }
      if (!cfg.record_wall_time) row.wall_ms = 0.0;
      if (!row.defined) {
        row.rel_mse = row.se = std::numeric_limits<double>::quiet_NaN();
      } else {
        double mean = 0.0;
        for (double e : errors) mean += e;
        mean /= errors.size();
        double ss = 0.0;
        for (double e : errors) ss += (e - mean) * (e - mean);
        row.rel_mse = mean;
        row.se = errors.size() > 1 ? std::sqrt(ss / (errors.size() - 1) / errors.size()) : 0.0;
      }
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

inline void write_benchmark_csv(std::ostream& os, const BenchmarkReport& report) {
  os << "method,param_name,param_value,rel_mse,se,replications,wall_ms\n";
  for (const auto& row : report.rows) {
    os << row.method << ',' << row.param_name << ',' << format_double(row.param_value) << ',';
    if (row.defined) {
      os << format_double(row.rel_mse) << ',' << format_double(row.se);
    } else {
      os << "undefined,undefined";
    }
    os << ',' << row.replications << ',' << format_double(std::round(row.wall_ms * 1000.0) / 1000.0) << '\n';
  }
}

// Line chart of relative MSE against the swept parameter, log-scale y.
inline void write_benchmark_svg(std::ostream& os, const BenchmarkReport& report) {
  constexpr double width = 640, height = 400, left = 70, right = 160, top = 20, bottom = 50;
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::pair<double, double>>> series;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = std::numeric_limits<double>::infinity(), ymax = -ymin;
  for (const auto& row : report.rows) {
    if (!series.count(row.method)) order.push_back(row.method);
    auto& pts = series[row.method];
    xmin = std::min(xmin, row.param_value);
    xmax = std::max(xmax, row.param_value);
    if (!row.defined || !(row.rel_mse > 0.0)) continue;
    pts.emplace_back(row.param_value, row.rel_mse);
    ymin = std::min(ymin, row.rel_mse);
    ymax = std::max(ymax, row.rel_mse);
  }
  if (!(ymax >= ymin)) ymin = ymax = 1.0;
  const double ly0 = std::floor(std::log10(ymin)), ly1 = std::max(std::ceil(std::log10(ymax)), ly0 + 1);
  if (!(xmax > xmin)) xmax = xmin + 1.0;
  const double pw = width - left - right, ph = height - top - bottom;
  auto px = [&](double x) { return left + pw * (x - xmin) / (xmax - xmin); };
  auto py = [&](double y) { return top + ph * (1.0 - (std::log10(y) - ly0) / (ly1 - ly0)); };
  const std::string param = report.rows.empty() ? "" : report.rows.front().param_name;
  static const char* colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double e = ly0; e <= ly1; e += 1.0) {
    const double y = py(std::pow(10.0, e));
    os << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << y << "\" y2=\"" << y
       << "\" stroke=\"#ddd\"/>\n<text x=\"" << left - 8 << "\" y=\"" << y + 4
       << "\" font-size=\"11\" text-anchor=\"end\">1e" << e << "</text>\n";
  }
  std::vector<double> xs;
  for (const auto& row : report.rows) xs.push_back(row.param_value);
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  for (double x : xs)
    os << "<text x=\"" << px(x) << "\" y=\"" << top + ph + 16 << "\" font-size=\"11\" text-anchor=\"middle\">"
       << format_double(x) << "</text>\n";
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 12 << "\" font-size=\"12\" text-anchor=\"middle\">"
     << param << "</text>\n";
  os << "<text x=\"16\" y=\"" << top + ph / 2 << "\" font-size=\"12\" transform=\"rotate(-90 16 " << top + ph / 2
     << ")\" text-anchor=\"middle\">relative MSE</text>\n";
  for (std::size_t s = 0; s < order.size(); ++s) {
    const char* colour = colours[s % (sizeof(colours) / sizeof(colours[0]))];
    const auto& pts = series[order[s]];
    os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"";
    for (auto [x, y] : pts) os << px(x) << ',' << py(y) << ' ';
    os << "\"/>\n";
    for (auto [x, y] : pts) os << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"3\" fill=\"" << colour << "\"/>\n";
    const double ly = top + 14 + 18 * static_cast<double>(s);
    os << "<line x1=\"" << left + pw + 10 << "\" x2=\"" << left + pw + 30 << "\" y1=\"" << ly << "\" y2=\"" << ly
       << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n<text x=\"" << left + pw + 36 << "\" y=\"" << ly + 4
       << "\" font-size=\"11\">" << order[s] << "</text>\n";
  }
  os << "</svg>\n";
}

}  // namespace cgc
