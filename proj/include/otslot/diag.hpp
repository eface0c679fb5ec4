#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "otslot/entropy.hpp"
#include "otslot/error.hpp"
#include "otslot/io.hpp"
#include "otslot/mesh.hpp"
#include "otslot/plot.hpp"
#include "otslot/random.hpp"
#include "otslot/sinkhorn.hpp"

namespace otslot {

/// Sweep of cost = −factor·I over a log grid of factors.
struct SweepConfig {
  std::size_t size = 10;
  double min_factor = 1e-3;
  double max_factor = 1e3;
  std::size_t points = 60;
  std::vector<double> temperatures{0.1, 1.0};
  std::vector<double> learning_rates{0.1, 0.3, 1.0, 3.0};
  /// Temperature of the MESH inner and final solves.
  double mesh_temperature = 1.0;
  std::size_t mesh_steps = 10;
  std::uint64_t seed = 0;

  std::vector<double> factors() const {
    if (points == 1) return {min_factor};
    std::vector<double> out(points);
    const double lo = std::log10(min_factor);
    const double hi = std::log10(max_factor);
    for (std::size_t k = 0; k < points; ++k) {
      out[k] = std::pow(10.0, lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(points - 1));
    }
    return out;
  }

  void validate() const {
    if (size < 2) throw ConfigError("sweep size must be at least 2");
    if (!(min_factor > 0.0) || !(max_factor >= min_factor)) throw ConfigError("sweep factors must be positive and ordered");
    if (points < 1) throw ConfigError("sweep needs at least one factor");
    if (temperatures.empty() && learning_rates.empty()) throw ConfigError("sweep has no methods");
    for (double t : temperatures)
      if (!(t > 0.0)) throw ConfigError("temperatures must be positive");
    for (double l : learning_rates)
      if (!(l > 0.0)) throw ConfigError("learning rates must be positive");
    if (!(mesh_temperature > 0.0) || mesh_steps < 1) throw ConfigError("invalid MESH sweep settings");
  }
};

struct ResultRow {
  std::string method;  // "sinkhorn" (param = τ) or "mesh" (param = λ)
  double param = 0.0;
  double factor = 0.0;
  double entropy_norm = 0.0;
  double grad_norm_raw = 0.0;
  double grad_norm_methodnorm = 0.0;

  bool operator==(const ResultRow&) const = default;
};

inline constexpr const char* kSweepCsvHeader = "method,param,factor,entropy_norm,grad_norm_raw,grad_norm_methodnorm";

namespace detail {

inline double frobenius(const Tensor& g) {
  double s = 0.0;
  for (double x : g.values()) s += x * x;
  return std::sqrt(s);
}

inline double clamp_unit(double x) { return std::clamp(x, 0.0, 1.0) + 0.0; }

inline SinkhornConfig sweep_solver(double temperature) {
  return {temperature, 100000, 1e-10, SinkhornDomain::kLog};
}

}  // namespace detail

/// Normalized entropy of the plan and the norm of ∂H/∂cost for one point.
inline std::pair<double, double> sweep_point(const Tensor& cost, const Marginals& marg, const std::string& method,
                                             double param, const SweepConfig& cfg, Rng& rng) {
  Tape tape;
  Tensor c = tape.variable(cost);
  Tensor plan;
  if (method == "sinkhorn") {
    plan = sinkhorn(c, marg, detail::sweep_solver(param)).plan.values;
  } else {
    MeshConfig mc;
    mc.steps = cfg.mesh_steps;
    mc.learning_rate = param;
    mc.sinkhorn = detail::sweep_solver(cfg.mesh_temperature);
    plan = mesh(c, marg, mc, rng).plan.values;
  }
  const double h = detail::clamp_unit(normalized_entropy(plan.detached(), marg).item());
  const double g = detail::frobenius(tape.backward(entropy(plan))[c]);
  return {h, g};
}

inline std::vector<ResultRow> entropy_sweep(const SweepConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.size;
  const Marginals marg{Tensor::ones({n}), Tensor::ones({n})};
  std::vector<std::pair<std::string, double>> methods;
  for (double t : cfg.temperatures) methods.emplace_back("sinkhorn", t);
  for (double l : cfg.learning_rates) methods.emplace_back("mesh", l);

  std::vector<ResultRow> rows;
  const std::vector<double> factors = cfg.factors();
  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    const auto& [method, param] = methods[mi];
    std::vector<ResultRow> block;
    for (std::size_t fi = 0; fi < factors.size(); ++fi) {
      Rng rng = substream(cfg.seed, mi * factors.size() + fi);
      const Tensor cost = ops::scale(Tensor::identity(n), -factors[fi]);
      auto [h, g] = sweep_point(cost, marg, method, param, cfg, rng);
      block.push_back({method, param, factors[fi], h, g, 0.0});
    }
    double peak = 0.0;
    for (const auto& r : block) peak = std::max(peak, r.grad_norm_raw);
    for (auto& r : block) r.grad_norm_methodnorm = peak > 0.0 ? r.grad_norm_raw / peak : 0.0;
    rows.insert(rows.end(), block.begin(), block.end());
  }
  std::sort(rows.begin(), rows.end(), [](const ResultRow& x, const ResultRow& y) {
    return std::tie(x.method, x.param, x.factor) < std::tie(y.method, y.param, y.factor);
  });
  return rows;
}

/// Width in decades of the factors whose normalized gradient norm reaches
/// `threshold`; zero if fewer than one factor qualifies.
inline double decade_width(const std::vector<ResultRow>& rows, const std::string& method, double param,
                           double threshold = 0.01) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& r : rows) {
    if (r.method != method || r.param != param || r.grad_norm_methodnorm < threshold) continue;
    lo = std::min(lo, std::log10(r.factor));
    hi = std::max(hi, std::log10(r.factor));
  }
  return hi >= lo ? hi - lo : 0.0;
}

inline const ResultRow& find_row(const std::vector<ResultRow>& rows, const std::string& method, double param,
                                 double factor) {
  const ResultRow* best = nullptr;
  for (const auto& r : rows) {
    if (r.method != method || r.param != param) continue;
    if (!best || std::abs(std::log(r.factor / factor)) < std::abs(std::log(best->factor / factor))) best = &r;
  }
  if (!best) throw ConfigError("no sweep rows for " + method + " " + format_real(param));
  return *best;
}

inline void write_sweep_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << kSweepCsvHeader << '\n';
  for (const auto& r : rows) {
    out << r.method << ',' << format_real(r.param) << ',' << format_real(r.factor) << ','
        << format_real(r.entropy_norm) << ',' << format_real(r.grad_norm_raw) << ','
        << format_real(r.grad_norm_methodnorm) << '\n';
  }
}

inline std::vector<ResultRow> read_sweep_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line != kSweepCsvHeader) throw ParseError("unexpected sweep CSV header", 1, 1);
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw ParseError("expected 6 fields", line_no, 1);
    ResultRow r;
    r.method = cells[0];
    double* fields[] = {&r.param, &r.factor, &r.entropy_norm, &r.grad_norm_raw, &r.grad_norm_methodnorm};
    std::size_t column = cells[0].size() + 2;
    for (std::size_t k = 0; k < 5; ++k) {
      *fields[k] = detail::parse_real({cells[k + 1], column}, line_no);
      column += cells[k + 1].size() + 1;
    }
    rows.push_back(r);
  }
  return rows;
}

inline std::string series_name(const std::string& method, double param) {
  return method + (method == "sinkhorn" ? " tau=" : " lambda=") + format_real(param);
}

/// Entropy and gradient-norm charts, both on log-log axes.
inline std::pair<std::string, std::string> sweep_svgs(const std::vector<ResultRow>& rows) {
  std::map<std::pair<std::string, double>, Series> entropy_series, grad_series;
  for (const auto& r : rows) {
    auto key = std::make_pair(r.method, r.param);
    Series& e = entropy_series[key];
    Series& g = grad_series[key];
    e.name = g.name = series_name(r.method, r.param);
    e.x.push_back(r.factor);
    e.y.push_back(r.entropy_norm);
    g.x.push_back(r.factor);
    g.y.push_back(r.grad_norm_methodnorm);
  }
  auto values = [](const auto& m) {
    std::vector<Series> out;
    for (const auto& [k, s] : m) out.push_back(s);
    return out;
  };
  ChartOptions eo{"Normalized entropy of the plan", "scaling factor", "normalized entropy (floor 1e-4)", true, true,
                  1e-4};
  ChartOptions go{"Entropy gradient norm, per-method normalized", "scaling factor",
                  "gradient norm / method max (floor 1e-6)", true, true, 1e-6};
  return {svg_line_chart(values(entropy_series), eo), svg_line_chart(values(grad_series), go)};
}

struct WarmstartConfig {
  std::vector<std::size_t> steps{1, 2, 3, 4, 6, 8};
  std::size_t trials = 50;
  std::size_t size = 8;
  double temperature = 1.0;
  double learning_rate = 1.0;
  std::size_t inner_iterations = 5;
  std::uint64_t seed = 0;

  void validate() const {
    if (trials < 1) throw ConfigError("warmstart needs at least one trial");
    if (steps.empty()) throw ConfigError("warmstart needs at least one MESH step count");
    for (std::size_t s : steps)
      if (s < 1) throw ConfigError("MESH step counts must be positive");
    if (size < 1 || inner_iterations < 1) throw ConfigError("invalid warmstart sizes");
    if (!(temperature > 0.0) || !(learning_rate > 0.0)) throw ConfigError("invalid warmstart temperature or rate");
  }
};

struct GapRow {
  std::size_t steps = 0;
  double warm_gap = 0.0;
  double cold_gap = 0.0;
};

/// Mean absolute gap between the inner plan at MESH step t and the fully
/// converged plan of the same descended cost.
inline double gap_to_converged(const MeshTrace& trace, std::size_t t, const Marginals& marg, double temperature) {
  SinkhornConfig full{temperature, 1000000, 1e-13, SinkhornDomain::kAuto};
  const Tensor ideal = sinkhorn(trace.costs[t], marg, full).plan.values;
  double total = 0.0;
  for (std::size_t k = 0; k < ideal.size(); ++k) total += std::abs(ideal[k] - trace.plans[t][k]);
  return total / static_cast<double>(ideal.size());
}

inline std::vector<GapRow> warmstart_gap(const WarmstartConfig& cfg) {
  cfg.validate();
  const std::size_t longest = *std::max_element(cfg.steps.begin(), cfg.steps.end());
  const std::size_t n = cfg.size;
  const Marginals marg{Tensor::ones({n}), Tensor::ones({n})};
  std::vector<double> warm(longest, 0.0), cold(longest, 0.0);
  for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
    Rng rng = substream(cfg.seed, trial);
    const Tensor cost = gaussian({n, n}, 1.0, rng);
    MeshConfig mc;
    mc.steps = longest;
    mc.learning_rate = cfg.learning_rate;
    mc.inner_iterations = cfg.inner_iterations;
    mc.sinkhorn.temperature = cfg.temperature;
    const Tensor noise = gaussian({n, n}, mc.noise_std, rng);
    for (bool reuse : {true, false}) {
      mc.warm_start = reuse;
      MeshResult r = mesh(cost, marg, mc, noise);
      auto& acc = reuse ? warm : cold;
      for (std::size_t t = 0; t < longest; ++t) acc[t] += gap_to_converged(r.trace, t, marg, cfg.temperature);
    }
  }
  std::vector<GapRow> rows;
  for (std::size_t s : cfg.steps) {
    rows.push_back({s, warm[s - 1] / static_cast<double>(cfg.trials), cold[s - 1] / static_cast<double>(cfg.trials)});
  }
  return rows;
}

inline void write_gap_csv(std::ostream& out, const std::vector<GapRow>& rows) {
  out << "mesh_steps,warm_gap,cold_gap\n";
  for (const auto& r : rows) out << r.steps << ',' << format_real(r.warm_gap) << ',' << format_real(r.cold_gap) << '\n';
}

inline std::string gap_svg(const std::vector<GapRow>& rows) {
  Series warm{"reuse u, v", {}, {}};
  Series cold{"cold restart", {}, {}};
  for (const auto& r : rows) {
    warm.x.push_back(static_cast<double>(r.steps));
    warm.y.push_back(r.warm_gap);
    cold.x.push_back(static_cast<double>(r.steps));
    cold.y.push_back(r.cold_gap);
  }
  ChartOptions opt{"Gap of inner plans to converged Sinkhorn", "MESH steps", "mean absolute gap", false,
                   true, 1e-16};
  return svg_line_chart({warm, cold}, opt);
}

}  // namespace otslot
