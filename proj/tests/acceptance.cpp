// Acceptance gate: prints one PASS/FAIL line per criterion and exits non-zero
// when any criterion fails. An optional argument names the mkmmd executable,
// which is then also checked for byte-identical re-runs.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "mkmmd/checkpoint.hpp"
#include "mkmmd/data.hpp"
#include "mkmmd/diagnostics.hpp"
#include "mkmmd/kernel_selection.hpp"
#include "mkmmd/mmd.hpp"
#include "mkmmd/rng.hpp"
#include "mkmmd/trainer.hpp"
#include "net_helpers.hpp"
#include "oracles.hpp"

using namespace mkmmd;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o) {
  std::printf("%s criterion %d: %s (%s)\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

MatrixXd gaussian_sample(Rng& rng, Index n, double shift) {
  MatrixXd x(n, 2);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  x.col(0).array() += shift;
  return x;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

KernelFamilyd median_kernel(const MatrixXd& s, const MatrixXd& t) {
  MatrixXd pooled(s.rows() + t.rows(), s.cols());
  pooled << s, t;
  return KernelFamilyd::single(median_heuristic(pooled));
}

// ------------------------------------------------------------------ 1

Outcome estimator_agreement() {
  const auto t0 = Clock::now();
  Rng rng(101);
  const MatrixXd s = gaussian_sample(rng, 200, 0.0);
  const MatrixXd t = gaussian_sample(rng, 200, 0.5);
  const auto fam = build_family(median_heuristic(MatrixXd(s)), 2.0, 1.0);
  const double quad = mmd2_quadratic_unbiased(s, t, fam);
  Rng perm(102);
  std::vector<double> lin;
  for (int r = 0; r < 200; ++r) {
    const auto ps = random_permutation(200, perm);
    const auto pt = random_permutation(200, perm);
    lin.push_back(mmd2_linear(s(ps, Eigen::all), t(pt, Eigen::all), fam));
  }
  const double se = sd_of(lin) / std::sqrt(200.0);
  const double gap = std::abs(mean_of(lin) - quad);
  const double secs = seconds_since(t0);
  return {gap <= 3.0 * se && secs < 10.0,
          fmt("linear mean %.6f, quadratic %.6f, |gap| %.2e <= 3 SE %.2e, %.2fs", mean_of(lin), quad, gap, 3 * se,
              secs)};
}

// ------------------------------------------------------------------ 2, 3

double rejection_rate(int trials, double shift, std::uint64_t base_seed) {
  int rejects = 0;
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng(derive_seed(base_seed, static_cast<std::uint64_t>(trial)));
    const MatrixXd s = gaussian_sample(rng, 100, 0.0);
    const MatrixXd t = gaussian_sample(rng, 100, shift);
    const auto res = permutation_test(s, t, median_kernel(s, t), 200, 0.05, rng.next());
    if (res.reject) ++rejects;
  }
  return static_cast<double>(rejects) / trials;
}

Outcome null_calibration() {
  const auto t0 = Clock::now();
  const double rate = rejection_rate(500, 0.0, 201);
  const double secs = seconds_since(t0);
  return {rate >= 0.03 && rate <= 0.07 && secs < 120.0,
          fmt("rejection rate %.3f over 500 trials, target [0.03, 0.07], %.1fs", rate, secs)};
}

Outcome power() {
  const double rate = rejection_rate(100, 1.0, 301);
  return {rate >= 0.95, fmt("rejection rate %.2f over 100 trials, need >= 0.95", rate)};
}

// ------------------------------------------------------------------ 4

Outcome gradient_check() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  Index checked = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto net = initial_network(2, {8}, 2, seed);
    Rng rng(seed + 400);
    for (auto& p : net.mutable_params()) {
      for (Index i = 0; i < p.bias.size(); ++i) p.bias(i) = 0.1 * rng.normal();
    }
    Batch batch;
    batch.source.resize(8, 2);
    batch.target.resize(8, 2);
    for (Index i = 0; i < 8; ++i) {
      batch.source.row(i) << rng.normal(), rng.normal();
      batch.target.row(i) << 1.0 + rng.normal(), 0.7 * rng.normal();
      batch.source_labels.push_back(static_cast<int>(rng.below(2)));
    }
    const std::vector<std::size_t> layers{0};
    const std::vector<KernelFamilyd> families{
        KernelFamilyd((VectorXd(2) << 0.5, 2.0).finished(), (VectorXd(2) << 0.3, 0.7).finished())};
    const double lambda = 1.0;
    const auto lg = dan_loss_and_grads(net, batch, layers, families, lambda);
    const VectorXd analytic = testing_util::flatten(lg.grads);
    const VectorXd numeric = oracle::central_difference(
        [&](const VectorXd& theta) {
          return dan_loss_and_grads(testing_util::with_params(net, theta), batch, layers, families, lambda).total_loss;
        },
        testing_util::flatten(net.params()), 1e-5);
    for (Index i = 0; i < analytic.size(); ++i) worst = std::max(worst, oracle::relative_error(analytic(i), numeric(i)));
    checked += analytic.size();
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-4 && secs < 30.0,
          fmt("%ld parameters over 5 seeds, worst relative error %.2e, %.2fs", static_cast<long>(checked), worst, secs)};
}

// ------------------------------------------------------------------ 5

Outcome qp_optimality() {
  Rng rng(501);
  double worst_gap = -1e300, worst_kkt = 0.0, worst_feas = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const Index m = 1 + static_cast<Index>(rng.below(4));
    MatrixXd a(m, m);
    for (Index i = 0; i < a.size(); ++i) a.data()[i] = 0.3 * rng.normal();
    const MatrixXd q = a * a.transpose();
    VectorXd d(m);
    for (Index i = 0; i < m; ++i) d(i) = rng.uniform(-0.5, 1.0);
    d(static_cast<Index>(rng.below(static_cast<std::uint64_t>(m)))) = rng.uniform(0.05, 1.0);
    const auto sol = solve_beta<double>(d, q, kDefaultQpEpsilon);
    const MatrixXd h = q + kDefaultQpEpsilon * MatrixXd::Identity(m, m);
    worst_gap = std::max(worst_gap, sol.objective - oracle::qp_grid_minimum(d, h));
    worst_kkt = std::max(worst_kkt, sol.kkt_residual);
    worst_feas = std::max(worst_feas, std::abs(d.dot(sol.beta) - 1.0));
  }
  return {worst_gap <= 1e-4 && worst_kkt <= 1e-6 && worst_feas <= 1e-8,
          fmt("50 instances: max objective - grid %.2e, max KKT %.2e, max |d'b - 1| %.2e", worst_gap, worst_kkt,
              worst_feas)};
}

// ------------------------------------------------------------------ 6, 7, 8

struct MoonsTask {
  LabeledDataset source, target;
};

MoonsTask rotated_moons(std::uint64_t seed) {
  return {gen_moons(500, 0.1, 0.0, derive_seed(seed, 0)), gen_moons(500, 0.1, 30.0, derive_seed(seed, 1))};
}

const std::vector<Index> kHidden{16, 16};

struct RunResult {
  double target_acc = 0.0;
  double a_distance = 0.0;
};

RunResult run_variant(const MoonsTask& data, Variant variant, double lambda, std::size_t single_layer,
                      std::uint64_t seed) {
  AdaptationConfig cfg;
  cfg.variant = variant;
  cfg.lambda = lambda;
  cfg.single_layer = single_layer;
  cfg.adapted_layers = default_adapted_layers(kHidden.size() + 1);
  cfg.seed = seed;
  const auto task = make_task(data.source, data.target);
  const auto res = train(initial_network(2, kHidden, 2, seed), task, cfg);
  RunResult out;
  out.target_acc = res.diverged ? 0.0 : evaluate(res.network, data.target.features, data.target.labels);
  const std::size_t top_hidden = kHidden.size() - 1;
  out.a_distance = a_distance(layer_features(res.network, data.source.features, top_hidden),
                              layer_features(res.network, data.target.features, top_hidden), seed)
                       .a_distance;
  return out;
}

struct TransferOutcomes {
  Outcome trend, adist, sweep;
};

TransferOutcomes transfer() {
  const auto t0 = Clock::now();

  // Lambda chosen by the unsupervised selection score on a separate task draw.
  const auto sweep_data = rotated_moons(6000);
  AdaptationConfig sweep_cfg;
  sweep_cfg.variant = Variant::dan;
  sweep_cfg.adapted_layers = default_adapted_layers(kHidden.size() + 1);
  const std::vector<std::uint64_t> sweep_seeds{6001, 6002, 6003, 6004, 6005};
  const auto rows = sweep_lambda(kHidden, sweep_data.source, sweep_data.target, sweep_cfg, kLambdaGrid, sweep_seeds);
  const auto& chosen = select_lambda(rows);
  const double lambda = chosen.lambda;
  std::printf("  lambda sweep (5 seeds):\n");
  for (const auto& r : rows) {
    std::printf("    lambda %.1f  target acc %.4f +- %.4f  selection score %.4f%s\n", r.lambda, r.mean_target_acc,
                r.std_target_acc, r.mean_selection_score, &r == &chosen ? "  <- selected" : "");
  }

  std::vector<double> so, dan, sk, layer[3], ad_so, ad_dan;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto data = rotated_moons(seed);
    const auto r_so = run_variant(data, Variant::source_only, 0.0, 0, seed);
    const auto r_dan = run_variant(data, Variant::dan, lambda, 0, seed);
    so.push_back(r_so.target_acc);
    dan.push_back(r_dan.target_acc);
    ad_so.push_back(r_so.a_distance);
    ad_dan.push_back(r_dan.a_distance);
    sk.push_back(run_variant(data, Variant::dan_single_kernel, lambda, 0, seed).target_acc);
    for (std::size_t l = 0; l < 3; ++l) {
      layer[l].push_back(run_variant(data, Variant::dan_single_layer, lambda, l, seed).target_acc);
    }
  }
  const double secs = seconds_since(t0);
  const double m_so = mean_of(so), m_dan = mean_of(dan), m_sk = mean_of(sk);
  double best_layer = 0.0;
  std::size_t best_l = 0;
  for (std::size_t l = 0; l < 3; ++l) {
    if (mean_of(layer[l]) > best_layer) {
      best_layer = mean_of(layer[l]);
      best_l = l;
    }
  }
  std::printf("  transfer (10 seeds, lambda %.1f): source-only %.4f, dan %.4f, dan-sk %.4f, dan-layer %.4f/%.4f/%.4f\n",
              lambda, m_so, m_dan, m_sk, mean_of(layer[0]), mean_of(layer[1]), mean_of(layer[2]));

  TransferOutcomes out;
  out.trend.pass = m_dan >= m_so + 0.05 && m_dan >= m_sk && m_dan >= best_layer && secs < 600.0;
  out.trend.detail = fmt("dan %.4f vs source-only %.4f (gap %+.1f points, need >= 5), dan-sk %.4f, "
                         "best single layer %zu %.4f, %.0fs",
                         m_dan, m_so, 100 * (m_dan - m_so), m_sk, best_l, best_layer, secs);

  out.adist.pass = mean_of(ad_dan) < mean_of(ad_so);
  out.adist.detail = fmt("mean A-distance on top hidden layer: dan %.4f, source-only %.4f", mean_of(ad_dan),
                         mean_of(ad_so));

  const LambdaSweepRow* low = nullptr;
  for (const auto& r : rows) {
    if (std::abs(r.lambda - 0.1) < 1e-12) low = &r;
  }
  bool complete = low != nullptr && rows.size() == kLambdaGrid.size();
  for (const auto& r : rows) complete = complete && r.failed == 0;
  const double pooled = low ? std::sqrt((chosen.std_target_acc * chosen.std_target_acc +
                                         low->std_target_acc * low->std_target_acc) / 2.0)
                            : 0.0;
  out.sweep.pass = complete && chosen.mean_target_acc >= low->mean_target_acc - pooled;
  out.sweep.detail = fmt("selected lambda %.1f acc %.4f, lambda 0.1 acc %.4f, pooled std %.4f", chosen.lambda,
                         chosen.mean_target_acc, low ? low->mean_target_acc : 0.0, pooled);
  return out;
}

// ------------------------------------------------------------------ 9

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism(const std::string& cli) {
  const auto data = rotated_moons(900);
  AdaptationConfig cfg;
  cfg.variant = Variant::dan;
  cfg.adapted_layers = default_adapted_layers(3);
  cfg.epochs = 20;
  cfg.seed = 900;
  cfg.beta_update_period = 10;
  const auto task = make_task(data.source, data.target);
  const auto a = train(initial_network(2, kHidden, 2, 900), task, cfg);
  const auto b = train(initial_network(2, kHidden, 2, 900), task, cfg);
  bool same = format_history_csv(a.history, a.layers) == format_history_csv(b.history, b.layers) &&
              serialize_network(a.network) == serialize_network(b.network);
  std::string detail = same ? "library history and checkpoint identical" : "library runs differ";

  if (!cli.empty()) {
    const auto dir = std::filesystem::temp_directory_path() / "mkmmd_acceptance";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    write_csv(data.source, dir / "s.csv");
    write_csv(data.target, dir / "t.csv");
    auto run = [&](const std::string& out) {
      const std::string cmd = "\"" + cli + "\" train --variant dan --epochs 20 --seed 900 --source \"" +
                              (dir / "s.csv").string() + "\" --target \"" + (dir / "t.csv").string() +
                              "\" --out \"" + (dir / out).string() + "\"";
      return std::system(cmd.c_str()) == 0;
    };
    const bool ran = run("r1") && run("r2");
    const bool cli_same = ran && read_file(dir / "r1" / "history.csv") == read_file(dir / "r2" / "history.csv") &&
                          read_file(dir / "r1" / "checkpoint.bin") == read_file(dir / "r2" / "checkpoint.bin") &&
                          !read_file(dir / "r1" / "history.csv").empty();
    same = same && cli_same;
    detail += cli_same ? "; CLI history.csv and checkpoint.bin byte identical" : "; CLI re-run differs or failed";
    std::filesystem::remove_all(dir);
  }
  return {same, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";
  report(1, "linear estimator agrees with the quadratic U-statistic", estimator_agreement());
  report(2, "permutation test null calibration", null_calibration());
  report(3, "permutation test power at mean shift 1", power());
  report(4, "full objective gradient matches finite differences", gradient_check());
  report(5, "kernel-weight QP optimality, stationarity and feasibility", qp_optimality());
  const auto tr = transfer();
  report(6, "transfer trend on rotated moons", tr.trend);
  report(7, "A-distance of adapted features below source-only", tr.adist);
  report(8, "lambda sweep weak-bell property", tr.sweep);
  report(9, "determinism of history and checkpoint", determinism(cli));
  std::printf("%d criterion failure(s)\n", failures);
  return failures == 0 ? 0 : 1;
}
