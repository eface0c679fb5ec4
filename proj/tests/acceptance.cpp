// Acceptance suite: one PASS/FAIL line per criterion. Optional arguments
// select criteria by number, e.g. `acceptance 2 5 9`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "otslot/bench.hpp"
#include "otslot/costs.hpp"
#include "otslot/diag.hpp"
#include "otslot/emd.hpp"
#include "otslot/entropy.hpp"
#include "otslot/hungarian.hpp"
#include "otslot/layers.hpp"
#include "otslot/mesh.hpp"
#include "otslot/slot_attention.hpp"
#include "support/oracles.hpp"

using namespace otslot;
namespace o = otslot::ops;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", x);
  return buf;
}

void info(const std::string& line) {
  std::printf("  %s\n", line.c_str());
  std::fflush(stdout);
}

Tensor permute_rows(const Tensor& x, const std::vector<std::size_t>& perm) {
  std::vector<double> out(x.size());
  const std::size_t n = x.cols();
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x(perm[i], j);
  return Tensor::matrix(x.rows(), n, out);
}

std::size_t row_argmax(const Tensor& a, std::size_t i) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < a.cols(); ++j)
    if (a(i, j) > a(i, best)) best = j;
  return best;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double marginal_violation(const Tensor& plan, const Marginals& marg) {
  double worst = 0.0;
  for (std::size_t i = 0; i < plan.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < plan.cols(); ++j) s += plan(i, j);
    worst = std::max(worst, std::abs(s - marg.a[i]));
  }
  for (std::size_t j = 0; j < plan.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < plan.rows(); ++i) s += plan(i, j);
    worst = std::max(worst, std::abs(s - marg.b[j]));
  }
  return worst;
}

// 1. Random objects at σ = 0.01, desk scale.
Verdict criterion_training() {
  Verdict v;
  TrainConfig cfg;
  cfg.dataset_size = 16000;
  cfg.epochs = 10;
  cfg.batch_size = 64;
  cfg.epoch_eval_size = 640;
  const double sigma = 0.01;
  const auto start = std::chrono::steady_clock::now();
  std::map<Variant, double> medians;
  for (Variant variant : {Variant::kSAMesh, Variant::kSASinkhorn, Variant::kSA}) {
    std::vector<double> scores;
    for (std::uint64_t seed : {0, 1, 2}) {
      cfg.seed = seed;
      const auto t0 = std::chrono::steady_clock::now();
      TrainResult r = train(benchmark_model(variant, cfg), sigma, cfg);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      scores.push_back(r.diverged ? std::numeric_limits<double>::infinity() : r.final_rmse_normalized);
      info(variant_name(variant) + " seed " + std::to_string(seed) + ": normalized RMSE " + fmt(scores.back()) + " (" +
           fmt(secs) + " s)");
    }
    medians[variant] = median(scores);
  }
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60.0;
  const double mesh = medians[Variant::kSAMesh];
  const double sh = medians[Variant::kSASinkhorn];
  const double sa = medians[Variant::kSA];
  v.detail = "medians sa-mesh " + fmt(mesh) + ", sa-sh " + fmt(sh) + ", sa " + fmt(sa) + "; " + fmt(minutes) + " min";
  v.require(mesh <= sh, "sa-mesh above sa-sh");
  v.require(sh < sa, "sa-sh not below sa");
  v.require(mesh <= 0.5, "sa-mesh above 0.5");
  v.require(minutes <= 45.0, "over the 45 minute budget");
  return v;
}

// 2. Always-zero predictor.
Verdict criterion_zero_baseline() {
  Verdict v;
  TrainConfig cfg;
  for (double sigma : {1.0, 0.1, 0.01}) {
    const double score = normalized_rmse(
        [&](const RandomObjectsSample& s, std::uint64_t) { return Tensor::zeros(s.targets.shape()); }, sigma, cfg,
        cfg.eval_size);
    v.detail += (v.detail.empty() ? "" : ", ") + std::string("sigma ") + fmt(sigma) + ": " + fmt(score);
    v.require(std::abs(score - 1.0) <= 0.02, "sigma " + fmt(sigma) + " outside 1 +- 0.02");
  }
  return v;
}

// 3. Entropy and gradient-norm sweep.
Verdict criterion_sweep() {
  Verdict v;
  SweepConfig cfg;
  cfg.temperatures = {0.1, 1.0};
  cfg.learning_rates = {0.3, 1.0};
  cfg.min_factor = 1e-3;
  cfg.max_factor = 1e3;
  const std::vector<ResultRow> rows = entropy_sweep(cfg);
  const double sh_low = find_row(rows, "sinkhorn", 1.0, 1e-3).entropy_norm;
  const double mesh_low = find_row(rows, "mesh", 1.0, 1e-3).entropy_norm;
  v.require(sh_low >= 0.95, "sinkhorn entropy at 1e-3 is " + fmt(sh_low));
  v.require(sh_low - mesh_low >= 0.2, "mesh entropy drop at 1e-3 is " + fmt(sh_low - mesh_low));
  double widest_sinkhorn = 0.0;
  double narrowest_mesh = std::numeric_limits<double>::infinity();
  for (double t : cfg.temperatures) widest_sinkhorn = std::max(widest_sinkhorn, decade_width(rows, "sinkhorn", t));
  for (double l : cfg.learning_rates) narrowest_mesh = std::min(narrowest_mesh, decade_width(rows, "mesh", l));
  v.require(narrowest_mesh > widest_sinkhorn, "gradient band not wider for mesh");
  double worst_high = 0.0;
  for (double t : cfg.temperatures) worst_high = std::max(worst_high, find_row(rows, "sinkhorn", t, 1e3).entropy_norm);
  for (double l : cfg.learning_rates) worst_high = std::max(worst_high, find_row(rows, "mesh", l, 1e3).entropy_norm);
  v.require(worst_high <= 0.05, "entropy at 1e3 reaches " + fmt(worst_high));
  v.detail += (v.detail.empty() ? "" : "; ") + std::string("entropy at 1e-3 sinkhorn ") + fmt(sh_low) + " mesh " +
              fmt(mesh_low) + "; decades mesh >= " + fmt(narrowest_mesh) + " vs sinkhorn <= " +
              fmt(widest_sinkhorn) + "; max entropy at 1e3 " + fmt(worst_high);
  return v;
}

// 4. Warm-start gap.
Verdict criterion_warmstart() {
  Verdict v;
  WarmstartConfig cfg;
  cfg.steps = {1, 2, 3, 4, 6, 8};
  cfg.trials = 50;
  cfg.size = 8;
  cfg.inner_iterations = 5;
  for (const GapRow& r : warmstart_gap(cfg)) {
    v.detail += (v.detail.empty() ? "" : ", ") + std::to_string(r.steps) + ": " + fmt(r.warm_gap) + "/" +
                fmt(r.cold_gap);
    if (r.steps == 1) {
      v.require(r.warm_gap == r.cold_gap, "gaps differ at one step");
    } else {
      v.require(r.warm_gap < r.cold_gap, "reuse not better at " + std::to_string(r.steps) + " steps");
    }
  }
  v.detail = "warm/cold " + v.detail;
  return v;
}

// 5. Exact transport against permutation brute force.
Verdict criterion_emd() {
  Verdict v;
  std::mt19937_64 rng(5);
  double worst = 0.0;
  std::size_t worst_support = 0;
  for (std::size_t n = 2; n <= 6; ++n) {
    const Marginals marg{Tensor::ones({n}), Tensor::ones({n})};
    for (int trial = 0; trial < 100; ++trial) {
      auto c = oracle::gaussian_vector(n * n, rng);
      TransportPlan plan = emd_exact(Tensor::matrix(n, n, c), marg);
      worst = std::max(worst, std::abs(transport_cost(Tensor::matrix(n, n, c), plan.values) -
                                       oracle::brute_force_assignment(c, n, n)));
      std::size_t support = 0;
      for (double p : plan.values.values()) support += p != 0.0;
      worst_support = std::max(worst_support, support);
      v.require(support <= 2 * n - 1, "support " + std::to_string(support) + " at n = " + std::to_string(n));
    }
  }
  v.require(worst <= 1e-9, "cost gap " + fmt(worst));
  v.detail += (v.detail.empty() ? "" : "; ") + std::string("max cost gap ") + fmt(worst) + ", max support " +
              std::to_string(worst_support);
  return v;
}

// 6. Hungarian against permutation brute force.
Verdict criterion_hungarian() {
  Verdict v;
  std::mt19937_64 rng(6);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    auto c = oracle::gaussian_vector(36, rng);
    Tensor cost = Tensor::matrix(6, 6, c);
    Assignment a = hungarian(cost);
    double total = 0.0;
    for (std::size_t i = 0; i < 6; ++i) total += cost(i, a.columns[i]);
    worst = std::max(worst, std::abs(total - oracle::brute_force_assignment(c, 6, 6)));
  }
  v.require(worst <= 1e-9, "cost gap " + fmt(worst));
  v.detail = "max cost gap " + fmt(worst);
  return v;
}

double tape_vs_fd(const std::function<Tensor(const Tensor&)>& f, const Shape& shape, const std::vector<double>& x0,
                  std::mt19937_64& rng) {
  const Shape out_shape = f(Tensor(shape, x0)).shape();
  const Tensor w(out_shape, oracle::gaussian_vector(shape_size(out_shape), rng));
  Tape tape;
  Tensor x = tape.variable(Tensor(shape, x0));
  auto grads = tape.backward(o::sum(o::mul(f(x), w)));
  auto value = [&](const std::vector<double>& v) { return o::sum(o::mul(f(Tensor(shape, v)), w)).item(); };
  return oracle::relative_error(grads[x].to_vector(), oracle::finite_difference(value, x0));
}

// 7. Reverse mode against central differences.
Verdict criterion_gradients() {
  Verdict v;
  std::mt19937_64 rng(7);
  const Shape shape{2, 3};
  const Tensor other = Tensor::matrix(2, 3, {0.3, -1.2, 0.8, 1.5, -0.4, 0.9});
  const Tensor positive = Tensor::matrix(2, 3, {0.7, 1.2, 0.8, 1.5, 2.4, 0.9});
  const Tensor keys = Tensor::matrix(4, 3, {0.2, -0.7, 1.1, 0.9, 0.4, -0.3, -1.2, 0.5, 0.6, 0.1, 0.8, -0.9});
  const Tensor gain = Tensor::vector({1.3, 0.6, -0.8});
  const Tensor bias = Tensor::vector({0.1, -0.2, 0.4});
  using F = std::function<Tensor(const Tensor&)>;
  struct Case {
    const char* name;
    F f;
    bool positive_input;
  };
  const std::vector<Case> cases = {
      {"add", [&](const Tensor& x) { return o::add(x, other); }, false},
      {"sub", [&](const Tensor& x) { return o::sub(other, x); }, false},
      {"mul", [&](const Tensor& x) { return o::mul(x, other); }, false},
      {"div numerator", [&](const Tensor& x) { return o::div(x, positive); }, false},
      {"div denominator", [&](const Tensor& x) { return o::div(other, x); }, true},
      {"scalar broadcast", [&](const Tensor& x) { return o::mul(o::sum(x), other); }, false},
      {"scale", [](const Tensor& x) { return o::scale(x, -2.5); }, false},
      {"add_scalar", [](const Tensor& x) { return o::add_scalar(x, 0.7); }, false},
      {"exp", [](const Tensor& x) { return o::exp(x); }, false},
      {"log", [](const Tensor& x) { return o::log(x); }, true},
      {"neg", [](const Tensor& x) { return o::neg(x); }, false},
      {"relu", [](const Tensor& x) { return o::relu(x); }, false},
      {"tanh", [](const Tensor& x) { return o::tanh(x); }, false},
      {"sigmoid", [](const Tensor& x) { return o::sigmoid(x); }, false},
      {"sqrt", [](const Tensor& x) { return o::sqrt(x); }, true},
      {"square", [](const Tensor& x) { return o::square(x); }, false},
      {"xlogx", [](const Tensor& x) { return o::xlogx(x); }, true},
      {"transpose", [](const Tensor& x) { return o::transpose(x); }, false},
      {"reshape", [](const Tensor& x) { return o::reshape(x, {3, 2}); }, false},
      {"slice_rows", [](const Tensor& x) { return o::slice_rows(x, 1, 1); }, false},
      {"gather_rows", [](const Tensor& x) { return o::gather_rows(x, {1, 0, 1}); }, false},
      {"broadcast_rows", [](const Tensor& x) { return o::broadcast_rows(o::sum(x, 0), 4); }, false},
      {"broadcast_cols", [](const Tensor& x) { return o::broadcast_cols(o::sum(x, 1), 4); }, false},
      {"matmul left", [&](const Tensor& x) { return o::matmul(x, o::transpose(other)); }, false},
      {"matmul right", [&](const Tensor& x) { return o::matmul(other, o::transpose(x)); }, false},
      {"matvec", [](const Tensor& x) { return o::matvec(x, Tensor::vector({0.5, -1.0, 2.0})); }, false},
      {"matvec_transposed", [](const Tensor& x) { return o::matvec_transposed(x, Tensor::vector({0.5, -1.0})); }, false},
      {"sum axis 0", [](const Tensor& x) { return o::sum(x, 0); }, false},
      {"sum axis 1", [](const Tensor& x) { return o::sum(x, 1); }, false},
      {"sum", [](const Tensor& x) { return o::sum(x); }, false},
      {"mean", [](const Tensor& x) { return o::mean(x); }, false},
      {"logsumexp axis 0", [](const Tensor& x) { return o::logsumexp(x, 0); }, false},
      {"logsumexp axis 1", [](const Tensor& x) { return o::logsumexp(x, 1); }, false},
      {"softmax axis 0", [](const Tensor& x) { return o::softmax(x, 0); }, false},
      {"softmax axis 1", [](const Tensor& x) { return o::softmax(x, 1); }, false},
      {"frobenius_norm", [](const Tensor& x) { return o::frobenius_norm(x); }, false},
      {"entropy", [](const Tensor& x) { return entropy(x); }, true},
      {"layer_norm", [&](const Tensor& x) { return layer_norm(x, gain, bias); }, false},
      {"neg_dot costs", [&](const Tensor& x) { return distance_costs(x, keys, Metric::kNegDot); }, false},
      {"l2 costs", [&](const Tensor& x) { return distance_costs(x, keys, Metric::kL2); }, false},
      {"cosine costs", [&](const Tensor& x) { return distance_costs(x, keys, Metric::kCosine); }, false},
  };
  double worst_primitive = 0.0;
  for (const Case& c : cases) {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      auto x0 = c.positive_input ? oracle::uniform_vector(6, rng, 0.2, 2.0) : oracle::uniform_vector(6, rng, -2.0, 2.0);
      if (std::string(c.name) == "relu") {
        for (double& e : x0)
          if (std::abs(e) < 1e-3) e += 0.01;
      }
      worst = std::max(worst, tape_vs_fd(c.f, shape, x0, rng));
    }
    v.require(worst <= 1e-4, std::string(c.name) + " rel err " + fmt(worst));
    worst_primitive = std::max(worst_primitive, worst);
  }

  double worst_sinkhorn = 0.0;
  const Marginals marg45 = Marginals::uniform(4, 5);
  for (double tau : {0.5, 1.0}) {
    const SinkhornConfig cfg{tau, 200, 0.0, SinkhornDomain::kAuto};
    for (int trial = 0; trial < 100; ++trial) {
      auto c0 = oracle::gaussian_vector(20, rng);
      Tape tape;
      Tensor c = tape.variable(Tensor::matrix(4, 5, c0));
      auto grads = tape.backward(entropy(sinkhorn(c, marg45, cfg).plan));
      auto f = [&](const std::vector<double>& x) {
        return entropy(sinkhorn(Tensor::matrix(4, 5, x), marg45, cfg).plan).item();
      };
      worst_sinkhorn =
          std::max(worst_sinkhorn, oracle::relative_error(grads[c].to_vector(), oracle::finite_difference(f, c0)));
    }
  }
  v.require(worst_sinkhorn <= 1e-4, "entropy of sinkhorn rel err " + fmt(worst_sinkhorn));

  double worst_mesh = 0.0;
  MeshConfig mc;
  mc.straight_through = false;
  mc.sinkhorn.tolerance = 0.0;
  mc.sinkhorn.max_iterations = 30;
  Rng data(77);
  for (int trial = 0; trial < 100; ++trial) {
    auto c0 = gaussian({4, 5}, 1.0, data).to_vector();
    Tensor noise = gaussian({4, 5}, mc.noise_std, data);
    Tape tape;
    Tensor c = tape.variable(Tensor::matrix(4, 5, c0));
    auto grads = tape.backward(entropy(mesh(c, marg45, mc, noise).plan.values));
    auto f = [&](const std::vector<double>& x) {
      return entropy(mesh(Tensor::matrix(4, 5, x), marg45, mc, noise).plan.values).item();
    };
    worst_mesh = std::max(worst_mesh, oracle::relative_error(grads[c].to_vector(), oracle::finite_difference(f, c0)));
  }
  v.require(worst_mesh <= 1e-4, "unrolled mesh rel err " + fmt(worst_mesh));
  v.detail += (v.detail.empty() ? "" : "; ") + std::to_string(cases.size()) + " primitives max rel err " +
              fmt(worst_primitive) + ", entropy of sinkhorn " + fmt(worst_sinkhorn) + ", unrolled mesh " +
              fmt(worst_mesh);
  return v;
}

// 8. Equivariance and tiebreaking.
Verdict criterion_equivariance() {
  Verdict v;
  double worst_perm = 0.0;
  for (Variant variant : {Variant::kSA, Variant::kSASinkhorn}) {
    SAConfig cfg;
    cfg.variant = variant;
    for (std::uint64_t s = 0; s < 10; ++s) {
      Rng init(s);
      Parameters p = init_params(cfg, init);
      Rng draw(s + 100);
      Tensor z0 = gaussian({cfg.num_slots, cfg.slot_dim}, 1.0, draw);
      Tensor x = gaussian({20, cfg.input_dim}, 1.0, draw);
      std::vector<std::size_t> perm(cfg.num_slots);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), draw);
      Rng r1(0), r2(0);
      Tensor out = forward_from(x, z0, p, cfg, r1).slots;
      Tensor moved = forward_from(x, permute_rows(z0, perm), p, cfg, r2).slots;
      worst_perm = std::max(worst_perm, oracle::max_abs_diff(permute_rows(out, perm).values(), moved.values()));
    }
  }
  v.require(worst_perm <= 1e-9, "slot permutation error " + fmt(worst_perm));

  const Marginals unit2{Tensor::ones({2}), Tensor::ones({2})};
  const Tensor tied = Tensor::full({2, 2}, 1.0);
  double worst_mesh_tie = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    MeshConfig mc;
    mc.steps = 8;
    const Tensor p = mesh(tied, unit2, mc, rng).plan.values;
    const double identity = std::max({std::abs(p[0] - 1), std::abs(p[1]), std::abs(p[2]), std::abs(p[3] - 1)});
    const double swap = std::max({std::abs(p[0]), std::abs(p[1] - 1), std::abs(p[2] - 1), std::abs(p[3])});
    worst_mesh_tie = std::max(worst_mesh_tie, std::min(identity, swap));
  }
  double worst_uniform = 0.0;
  const Tensor uniform = sinkhorn(tied, unit2, {}).plan.values;
  for (double e : uniform.values()) worst_uniform = std::max(worst_uniform, std::abs(e - 0.5));
  v.require(worst_mesh_tie <= 1e-3, "mesh plan " + fmt(worst_mesh_tie) + " from a permutation");
  v.require(worst_uniform <= 1e-9, "sinkhorn plan " + fmt(worst_uniform) + " from uniform");

  SAConfig cfg;
  cfg.variant = Variant::kSAMesh;
  cfg.num_slots = 2;
  cfg.identical_init = true;
  Rng init(1);
  const Parameters params = init_params(cfg, init);
  Rng draw(2);
  auto object = gaussian({cfg.input_dim}, 1.0, draw).to_vector();
  std::vector<double> twins = object;
  twins.insert(twins.end(), object.begin(), object.end());
  const Tensor x = Tensor::matrix(2, cfg.input_dim, twins);
  std::size_t separated = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    ForwardResult out = forward(x, params, cfg, rng);
    const Tensor& last = out.trace.attention.back();
    separated += row_argmax(last, 0) != row_argmax(last, 1);
  }
  v.require(separated == 20, "identical objects shared a slot in " + std::to_string(20 - separated) + " of 20 seeds");
  v.detail += (v.detail.empty() ? "" : "; ") + std::string("slot permutation error ") + fmt(worst_perm) +
              ", mesh tie " + fmt(worst_mesh_tie) + ", sinkhorn tie " + fmt(worst_uniform) + ", twins separated " +
              std::to_string(separated) + "/20";
  return v;
}

// 9. Sinkhorn feasibility and the temperature identity.
Verdict criterion_sinkhorn() {
  Verdict v;
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<std::size_t> dim(2, 16);
  double worst_violation = 0.0;
  std::size_t unconverged = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = dim(rng), n = dim(rng);
    Tensor cost = Tensor::matrix(m, n, oracle::gaussian_vector(m * n, rng));
    auto a = oracle::uniform_vector(m, rng, 0.1, 1.0);
    auto b = oracle::uniform_vector(n, rng, 0.1, 1.0);
    const double sa = std::accumulate(a.begin(), a.end(), 0.0);
    const double sb = std::accumulate(b.begin(), b.end(), 0.0);
    for (double& e : b) e *= sa / sb;
    const Marginals marg{Tensor::vector(a), Tensor::vector(b)};
    auto res = sinkhorn(cost, marg, SinkhornConfig{});
    unconverged += !res.plan.converged;
    worst_violation = std::max(worst_violation, marginal_violation(res.plan.values, marg));
  }
  v.require(unconverged == 0, std::to_string(unconverged) + " instances hit the iteration cap");
  v.require(worst_violation <= 1e-6, "marginal violation " + fmt(worst_violation));

  double worst_identity = 0.0;
  for (double tau : {0.01, 0.1, 0.5, 2.0}) {
    for (int trial = 0; trial < 10; ++trial) {
      Tensor cost = Tensor::matrix(6, 5, oracle::gaussian_vector(30, rng, 0.1));
      const Marginals marg = Marginals::uniform(6, 5);
      SinkhornConfig cfg{tau, 100000, 1e-12, SinkhornDomain::kAuto};
      SinkhornConfig unit = cfg;
      unit.temperature = 1.0;
      unit.domain = cfg.log_domain() ? SinkhornDomain::kLog : SinkhornDomain::kPlain;
      auto lhs = sinkhorn(cost, marg, cfg).plan.values;
      auto rhs = sinkhorn(o::scale(cost, 1.0 / tau), marg, unit).plan.values;
      worst_identity = std::max(worst_identity, oracle::max_abs_diff(lhs.values(), rhs.values()));
    }
  }
  v.require(worst_identity <= 1e-9, "temperature identity error " + fmt(worst_identity));
  v.detail += (v.detail.empty() ? "" : "; ") + std::string("max violation ") + fmt(worst_violation) +
              ", temperature identity error " + fmt(worst_identity);
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"random objects ordering at sigma 0.01", criterion_training},
      {"always-zero baseline scores 1", criterion_zero_baseline},
      {"entropy and gradient sweep", criterion_sweep},
      {"warm-start gap", criterion_warmstart},
      {"exact transport vs brute force", criterion_emd},
      {"hungarian vs brute force", criterion_hungarian},
      {"gradients vs finite differences", criterion_gradients},
      {"equivariance and tiebreaking", criterion_equivariance},
      {"sinkhorn feasibility and temperature identity", criterion_sinkhorn},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  const std::map<int, double> budget_seconds = {{2, 60}, {3, 120}, {4, 120}, {5, 60}, {6, 60}, {7, 120}, {8, 60}, {9, 60}};
  std::vector<int> order = {2, 3, 4, 5, 6, 7, 8, 9, 1};
  bool all = true;
  for (int k : order) {
    if (!selected.empty() && !selected.count(k)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[k - 1].second();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (auto it = budget_seconds.find(k); it != budget_seconds.end()) {
      v.require(secs <= it->second, "over the " + fmt(it->second) + " s budget");
    }
    std::printf("%s %d %s: %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", k, criteria[k - 1].first, v.detail.c_str(), secs);
    std::fflush(stdout);
    all = all && v.pass;
  }
  return all ? 0 : 1;
}
