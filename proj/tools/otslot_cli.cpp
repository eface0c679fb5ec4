// otslot: transport solves, entropy/gradient sweeps, warm-start gaps and the
// random-objects benchmark from the command line.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "otslot/bench.hpp"
#include "otslot/checkpoint.hpp"
#include "otslot/diag.hpp"
#include "otslot/emd.hpp"
#include "otslot/entropy.hpp"
#include "otslot/io.hpp"
#include "otslot/mesh.hpp"
#include "otslot/plot.hpp"
#include "otslot/sinkhorn.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace otslot;

namespace {

struct Global {
  std::uint64_t seed = 0;
  std::string out_dir = ".";
};

std::string out_path(const Global& g, const std::string& name) {
  fs::create_directories(g.out_dir);
  return (fs::path(g.out_dir) / name).string();
}

void print_line(const json& j) { std::cout << j.dump() << std::endl; }

void print_error(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << std::endl;
}

struct SolveOptions {
  std::string cost_file;
  std::string method = "sinkhorn";
  std::string plan_file;
  double temperature = 1.0;
  std::size_t max_iterations = 1000;
  double tolerance = 1e-6;
  std::string domain = "auto";
  std::size_t mesh_steps = 4;
  double mesh_lr = 1.0;
};

void run_solve(const Global& g, const SolveOptions& o) {
  TransportProblem problem = read_problem_file(o.cost_file);
  const Marginals marg = problem.marginals ? *problem.marginals : Marginals::uniform(problem.cost.rows(), problem.cost.cols());
  SinkhornConfig cfg{o.temperature, o.max_iterations, o.tolerance, parse_domain(o.domain)};
  TransportPlan plan;
  if (o.method == "sinkhorn") {
    plan = sinkhorn(problem.cost, marg, cfg).plan;
  } else if (o.method == "emd") {
    plan = emd_exact(problem.cost, marg);
  } else if (o.method == "mesh") {
    MeshConfig mc;
    mc.steps = o.mesh_steps;
    mc.learning_rate = o.mesh_lr;
    mc.sinkhorn = cfg;
    Rng rng(g.seed);
    plan = mesh(problem.cost, marg, mc, rng).plan;
  } else {
    throw ConfigError("unknown method '" + o.method + "' (expected sinkhorn, emd or mesh)");
  }
  const std::string path = o.plan_file.empty() ? out_path(g, "plan.txt") : o.plan_file;
  write_matrix_file(path, plan.values);
  print_line({{"command", "solve"},
              {"method", o.method},
              {"plan", path},
              {"entropy", entropy(plan.values).item()},
              {"cost", transport_cost(problem.cost, plan.values)},
              {"iterations", plan.iterations},
              {"converged", plan.converged},
              {"marginal_violation", plan.marginal_violation}});
}

void run_sweep(const Global& g, SweepConfig cfg) {
  cfg.seed = g.seed;
  std::vector<ResultRow> rows = entropy_sweep(cfg);
  const std::string csv = out_path(g, "sweep.csv");
  std::ofstream out(csv);
  if (!out) throw IoError("cannot open '" + csv + "' for writing");
  write_sweep_csv(out, rows);
  auto [entropy_svg, grad_svg] = sweep_svgs(rows);
  write_text_file(out_path(g, "sweep_entropy.svg"), entropy_svg);
  write_text_file(out_path(g, "sweep_gradnorm.svg"), grad_svg);
  json widths = json::object();
  for (double t : cfg.temperatures) widths[series_name("sinkhorn", t)] = decade_width(rows, "sinkhorn", t);
  for (double l : cfg.learning_rates) widths[series_name("mesh", l)] = decade_width(rows, "mesh", l);
  print_line({{"command", "sweep"}, {"csv", csv}, {"rows", rows.size()}, {"gradient_decades", widths}});
}

void run_warmstart(const Global& g, WarmstartConfig cfg) {
  cfg.seed = g.seed;
  std::vector<GapRow> rows = warmstart_gap(cfg);
  const std::string csv = out_path(g, "warmstart.csv");
  std::ofstream out(csv);
  if (!out) throw IoError("cannot open '" + csv + "' for writing");
  write_gap_csv(out, rows);
  write_text_file(out_path(g, "warmstart.svg"), gap_svg(rows));
  json gaps = json::array();
  for (const auto& r : rows) gaps.push_back({{"steps", r.steps}, {"warm", r.warm_gap}, {"cold", r.cold_gap}});
  print_line({{"command", "warmstart"}, {"csv", csv}, {"gaps", gaps}});
}

struct BenchOptions {
  std::string variant = "sa-mesh";
  double sigma = 1.0;
  std::size_t sinkhorn_iterations = 20;
  double temperature = 1.0;
  std::size_t iterations = 3;
  std::size_t mesh_steps = 4;
  double mesh_lr = 1.0;
};

void run_bench(const Global& g, const BenchOptions& o, TrainConfig cfg) {
  cfg.seed = g.seed;
  SAConfig sa = benchmark_model(parse_variant(o.variant), cfg);
  sa.iterations = o.iterations;
  sa.sinkhorn.temperature = o.temperature;
  sa.sinkhorn.max_iterations = o.sinkhorn_iterations;
  sa.mesh.steps = o.mesh_steps;
  sa.mesh.learning_rate = o.mesh_lr;

  const std::string stem = "bench_" + o.variant + "_sigma" + format_real(o.sigma);
  const std::string log_path = out_path(g, stem + "_log.csv");
  std::ofstream log(log_path);
  if (!log) throw IoError("cannot open '" + log_path + "' for writing");
  log << "epoch,step,loss,eval_rmse_normalized,wall_seconds\n";
  TrainResult result = train(sa, o.sigma, cfg, [&](const TrainLogRow& r) {
    log << r.epoch << ',' << r.step << ',' << format_real(r.loss) << ',' << format_real(r.eval_rmse_normalized) << ','
        << format_real(r.wall_seconds) << std::endl;
  });
  const std::string ck_path = out_path(g, stem + "_checkpoint.json");
  save_checkpoint(ck_path, {result.params, sa, g.seed});
  if (result.diverged) throw NumericalError(result.divergence + "; last finite parameters saved to " + ck_path);
  print_line({{"command", "bench"},
              {"variant", o.variant},
              {"sigma", o.sigma},
              {"rmse_normalized", result.final_rmse_normalized},
              {"steps", result.step_losses.size()},
              {"log", log_path},
              {"checkpoint", ck_path}});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimal transport attention diagnostics and benchmarks"};
  app.require_subcommand(1);
  app.fallthrough();
  Global g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "Directory for output files")->capture_default_str();
  app.set_config("--config", "", "Config file (TOML or INI) supplying option values");

  SolveOptions solve;
  auto* solve_cmd = app.add_subcommand("solve", "Solve one transport problem from a text cost file");
  solve_cmd->add_option("cost", solve.cost_file, "Cost file: 'm n', m rows, optional marginal lines")->required();
  solve_cmd->add_option("--method", solve.method, "sinkhorn, emd or mesh")->capture_default_str();
  solve_cmd->add_option("--plan", solve.plan_file, "Output plan file (default <out-dir>/plan.txt)");
  solve_cmd->add_option("--temperature", solve.temperature)->capture_default_str();
  solve_cmd->add_option("--max-iterations", solve.max_iterations)->capture_default_str();
  solve_cmd->add_option("--tolerance", solve.tolerance)->capture_default_str();
  solve_cmd->add_option("--domain", solve.domain, "auto, plain or log")->capture_default_str();
  solve_cmd->add_option("--mesh-steps", solve.mesh_steps)->capture_default_str();
  solve_cmd->add_option("--mesh-lr", solve.mesh_lr)->capture_default_str();

  SweepConfig sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Entropy and gradient norm over scaled identity costs");
  sweep_cmd->add_option("--size", sweep.size)->capture_default_str();
  sweep_cmd->add_option("--points", sweep.points)->capture_default_str();
  sweep_cmd->add_option("--min-factor", sweep.min_factor)->capture_default_str();
  sweep_cmd->add_option("--max-factor", sweep.max_factor)->capture_default_str();
  sweep_cmd->add_option("--temperatures", sweep.temperatures, "Sinkhorn temperatures")->capture_default_str();
  sweep_cmd->add_option("--learning-rates", sweep.learning_rates, "MESH step sizes")->capture_default_str();
  sweep_cmd->add_option("--mesh-steps", sweep.mesh_steps)->capture_default_str();
  sweep_cmd->add_option("--mesh-temperature", sweep.mesh_temperature)->capture_default_str();

  WarmstartConfig warm;
  auto* warm_cmd = app.add_subcommand("warmstart", "Gap of short inner solves with and without reuse");
  warm_cmd->add_option("--steps", warm.steps, "MESH step counts")->capture_default_str();
  warm_cmd->add_option("--trials", warm.trials)->capture_default_str();
  warm_cmd->add_option("--size", warm.size)->capture_default_str();
  warm_cmd->add_option("--inner-iterations", warm.inner_iterations)->capture_default_str();
  warm_cmd->add_option("--temperature", warm.temperature)->capture_default_str();
  warm_cmd->add_option("--learning-rate", warm.learning_rate)->capture_default_str();

  BenchOptions bench;
  TrainConfig train_cfg;
  auto* bench_cmd = app.add_subcommand("bench", "Train and evaluate on random objects");
  bench_cmd->add_option("--variant", bench.variant, "sa, sa-sh, sa-emd or sa-mesh")->capture_default_str();
  bench_cmd->add_option("--sigma", bench.sigma)->capture_default_str();
  bench_cmd->add_option("--dataset-size", train_cfg.dataset_size)->capture_default_str();
  bench_cmd->add_option("--epochs", train_cfg.epochs)->capture_default_str();
  bench_cmd->add_option("--batch-size", train_cfg.batch_size)->capture_default_str();
  bench_cmd->add_option("--lr", train_cfg.learning_rate)->capture_default_str();
  bench_cmd->add_option("--eval-size", train_cfg.eval_size)->capture_default_str();
  bench_cmd->add_option("--epoch-eval-size", train_cfg.epoch_eval_size, "0 means --eval-size")->capture_default_str();
  bench_cmd->add_option("--iterations", bench.iterations, "Slot attention iterations")->capture_default_str();
  bench_cmd->add_option("--sinkhorn-iterations", bench.sinkhorn_iterations)->capture_default_str();
  bench_cmd->add_option("--temperature", bench.temperature)->capture_default_str();
  bench_cmd->add_option("--mesh-steps", bench.mesh_steps)->capture_default_str();
  bench_cmd->add_option("--mesh-lr", bench.mesh_lr)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage_error", e.what());
    return 2;
  }

  try {
    if (*solve_cmd) run_solve(g, solve);
    if (*sweep_cmd) run_sweep(g, sweep);
    if (*warm_cmd) run_warmstart(g, warm);
    if (*bench_cmd) run_bench(g, bench, train_cfg);
  } catch (const otslot::Error& e) {
    print_error(e.kind(), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("internal_error", e.what());
    return 1;
  }
  return 0;
}
