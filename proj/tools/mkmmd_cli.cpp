// mkmmd command-line front end.
//
// Exit codes: 0 success, 2 usage or invalid input, 3 numeric failure or
// divergence, 4 file IO.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mkmmd/checkpoint.hpp"
#include "mkmmd/data.hpp"
#include "mkmmd/diagnostics.hpp"
#include "mkmmd/errors.hpp"
#include "mkmmd/kernel_selection.hpp"
#include "mkmmd/mmd.hpp"
#include "mkmmd/rng.hpp"
#include "mkmmd/trainer.hpp"
#include "mkmmd/version.hpp"

using namespace mkmmd;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;
constexpr int kSchemaVersion = 1;

// Stream ids for seeds derived inside the CLI.
constexpr std::uint64_t kStreamGenSource = 0;
constexpr std::uint64_t kStreamGenTarget = 1;
constexpr std::uint64_t kStreamMedian = 10;
constexpr std::uint64_t kStreamBetaSplit = 11;
constexpr std::uint64_t kStreamPermutation = 12;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<double> parse_doubles(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(what + ": cannot parse '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError(what + ": empty list");
  return out;
}

template <typename T>
std::vector<T> parse_integers(const std::string& text, const std::string& what) {
  std::vector<T> out;
  for (double v : parse_doubles(text, what)) {
    if (v < 0 || v != std::floor(v)) throw UsageError(what + ": expected non-negative integers");
    out.push_back(static_cast<T>(v));
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json vector_json(const VectorXd& v) {
  json arr = json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

// ---------------------------------------------------------------- gen

struct GenArgs {
  std::string kind = "moons";
  Index n = 500;
  std::uint64_t seed = 0;
  double rotation = 30.0;
  double noise = 0.1;
  std::string shift = "1,0";
  std::string means = "-2,0;2,0";
  double sigma = 1.0;
  std::vector<std::string> out;
};

MatrixXd parse_means(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::stringstream ss(text);
  std::string row;
  while (std::getline(ss, row, ';')) rows.push_back(parse_doubles(row, "--means"));
  if (rows.empty()) throw UsageError("--means: empty");
  MatrixXd m(static_cast<Index>(rows.size()), static_cast<Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) throw UsageError("--means: rows differ in dimension");
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  }
  return m;
}

int run_gen(const GenArgs& a) {
  LabeledDataset src, tgt;
  if (a.kind == "moons") {
    src = gen_moons(a.n, a.noise, 0.0, derive_seed(a.seed, kStreamGenSource));
    tgt = gen_moons(a.n, a.noise, a.rotation, derive_seed(a.seed, kStreamGenTarget));
  } else {
    const auto shift = parse_doubles(a.shift, "--shift");
    std::tie(src, tgt) = gen_gaussians(a.n, parse_means(a.means), a.sigma,
                                       Eigen::Map<const VectorXd>(shift.data(), static_cast<Index>(shift.size())),
                                       a.seed);
  }
  write_csv(src, a.out[0]);
  write_csv(tgt, a.out[1]);
  return kExitOk;
}

// ---------------------------------------------------------------- mmd-test

struct MmdTestArgs {
  std::string source, target;
  std::string kernels = "median";
  bool select_beta = false;
  int permutations = 500;
  double alpha = 0.05;
  std::uint64_t seed = 0;
};

int run_mmd_test(const MmdTestArgs& a) {
  const auto src = read_csv(a.source);
  const auto tgt = read_csv(a.target);
  if (src.dimension() != tgt.dimension()) throw InputError("source and target dimensions differ");

  MatrixXd pooled(src.size() + tgt.size(), src.dimension());
  pooled << src.features, tgt.features;
  const double gamma = median_heuristic(pooled, derive_seed(a.seed, kStreamMedian));
  KernelFamilyd family = a.kernels == "grid" ? build_family(gamma, 8.0, 0.5) : KernelFamilyd::single(gamma);

  json report;
  report["schema_version"] = kSchemaVersion;
  report["kernels"] = a.kernels;
  report["median_bandwidth"] = gamma;
  report["bandwidths"] = vector_json(family.bandwidths());

  MatrixXd test_s = src.features;
  MatrixXd test_t = tgt.features;
  if (a.select_beta) {
    // Weights are chosen on one seeded half of each sample and the test runs
    // on the other half, so the selection does not bias the p-value.
    Rng rng(derive_seed(a.seed, kStreamBetaSplit));
    const auto ps = random_permutation(src.size(), rng);
    const auto pt = random_permutation(tgt.size(), rng);
    const Index hs = src.size() / 2, ht = tgt.size() / 2;
    const MatrixXd shuffled_s = src.features(ps, Eigen::all);
    const MatrixXd shuffled_t = tgt.features(pt, Eigen::all);
    const auto stats = per_kernel_stats(shuffled_s.topRows(hs), shuffled_t.topRows(ht), family);
    report["per_kernel_d"] = vector_json(stats.per_kernel_d);
    try {
      const auto sol = solve_beta<double>(stats.per_kernel_d, stats.covariance_q);
      family.set_weights(rescale_to_simplex<double>(sol.beta));
      report["beta_status"] = "selected";
      report["beta_pre_rescale"] = vector_json(sol.beta);
      report["d_dot_beta_pre_rescale"] = stats.per_kernel_d.dot(sol.beta);
      report["qp_objective"] = sol.objective;
      report["kkt_residual"] = sol.kkt_residual;
    } catch (const InfeasibleDirectionError&) {
      report["beta_status"] = "infeasible_uniform";
    }
    test_s = shuffled_s.bottomRows(src.size() - hs);
    test_t = shuffled_t.bottomRows(tgt.size() - ht);
  } else {
    report["per_kernel_d"] = vector_json(per_kernel_stats(src.features, tgt.features, family).per_kernel_d);
  }
  report["beta"] = vector_json(family.weights());

  const auto res = permutation_test(test_s, test_t, family, a.permutations, a.alpha,
                                    derive_seed(a.seed, kStreamPermutation));
  report["statistic"] = res.statistic;
  report["p_value"] = res.p_value;
  report["alpha"] = a.alpha;
  report["reject"] = res.reject;
  report["permutations"] = a.permutations;
  report["seed"] = a.seed;
  std::cout << dump(report);
  return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string variant = "dan";
  double lambda = 1.0;
  std::string layers;
  std::string hidden = "16,16";
  int epochs = AdaptationConfig{}.epochs;
  Index batch_size = AdaptationConfig{}.batch_size;
  double lr = AdaptationConfig{}.base_lr;
  int beta_period = AdaptationConfig{}.beta_update_period;
  std::uint64_t seed = 0;
  std::string source, target, target_labeled;
  std::string out;
};

AdaptationConfig make_config(const std::string& variant, double lambda, const std::string& layers,
                             std::size_t layer_count) {
  AdaptationConfig cfg;
  cfg.lambda = lambda;
  cfg.adapted_layers =
      layers.empty() ? default_adapted_layers(layer_count) : parse_integers<std::size_t>(layers, "--layers");
  if (variant == "source-only") {
    cfg.variant = Variant::source_only;
  } else if (variant == "dan") {
    cfg.variant = Variant::dan;
  } else if (variant == "dan-sk") {
    cfg.variant = Variant::dan_single_kernel;
  } else if (variant.rfind("dan-layer=", 0) == 0) {
    cfg.variant = Variant::dan_single_layer;
    cfg.single_layer = parse_integers<std::size_t>(variant.substr(10), "--variant dan-layer")[0];
  } else {
    throw UsageError("--variant: expected source-only, dan, dan-sk or dan-layer=K, got '" + variant + "'");
  }
  return cfg;
}

json config_json(const AdaptationConfig& cfg, const std::vector<Index>& hidden) {
  json j;
  j["variant"] = to_string(cfg.variant);
  j["lambda"] = cfg.lambda;
  j["layers"] = cfg.effective_layers();
  j["hidden"] = hidden;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["beta_update_period"] = cfg.beta_update_period;
  j["beta_eval_samples"] = cfg.beta_eval_samples;
  j["base_lr"] = cfg.base_lr;
  j["momentum"] = cfg.momentum;
  j["schedule"] = cfg.schedule.kind == LrSchedule::Kind::inv ? "inv" : "constant";
  j["span_exponent"] = cfg.span_exponent;
  j["step_exponent"] = cfg.step_exponent;
  j["qp_epsilon"] = cfg.qp_epsilon;
  j["seed"] = cfg.seed;
  return j;
}

json nan_to_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

int run_train(const TrainArgs& a) {
  const auto source = read_csv(a.source);
  const auto target = read_csv(a.target);
  LabeledDataset labeled;
  if (!a.target_labeled.empty()) labeled = read_csv(a.target_labeled);
  const auto task = make_task(source, target, labeled);
  const auto hidden = parse_integers<Index>(a.hidden, "--hidden");

  auto cfg = make_config(a.variant, a.lambda, a.layers, hidden.size() + 1);
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch_size;
  cfg.base_lr = a.lr;
  cfg.beta_update_period = a.beta_period;
  cfg.seed = a.seed;

  const std::filesystem::path dir(a.out);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());

  json manifest;
  manifest["schema_version"] = kSchemaVersion;
  manifest["tool"] = "mkmmd";
  manifest["version"] = kVersion;
  manifest["command"] = "train";
  manifest["config"] = config_json(cfg, hidden);
  manifest["inputs"] = {{"source", a.source}, {"target", a.target}, {"target_labeled", a.target_labeled}};
  manifest["class_count"] = task.class_count;
  write_text(dir / "manifest.json", dump(manifest));

  const auto net = initial_network(source.dimension(), hidden, task.class_count, a.seed);
  const auto res = train(net, task, cfg);
  write_text(dir / "history.csv", format_history_csv(res.history, res.layers));

  json summary;
  summary["schema_version"] = kSchemaVersion;
  summary["epochs_completed"] = res.history.size();
  summary["diverged"] = res.diverged;
  summary["failure"] = res.failure;
  summary["source_acc"] = res.history.empty() ? json(nullptr) : nan_to_null(res.history.back().source_acc);
  summary["target_acc"] = res.history.empty() ? json(nullptr) : nan_to_null(res.history.back().target_acc);
  summary["warnings"] = res.warnings;
  write_text(dir / "summary.json", dump(summary));

  if (res.diverged) {
    std::cerr << "mkmmd train: diverged: " << res.failure << "\n";
    return kExitNumeric;
  }
  save_checkpoint(res.network, dir / "checkpoint.bin");
  for (std::size_t l = 0; l < res.network.layer_count(); ++l) {
    const auto tag = "layer" + std::to_string(l);
    write_features_csv(layer_features(res.network, source.features, l), source.labels,
                       dir / ("features_" + tag + "_source.csv"));
    write_features_csv(layer_features(res.network, target.features, l), target.labels,
                       dir / ("features_" + tag + "_target.csv"));
  }
  return kExitOk;
}

// ---------------------------------------------------------------- sweep-lambda

struct SweepArgs {
  std::string variant = "dan";
  std::string layers;
  std::string hidden = "16,16";
  std::string lambdas;
  int seeds = 5;
  std::uint64_t seed = 0;
  int epochs = AdaptationConfig{}.epochs;
  std::string source, target;
  std::string out;
};

int run_sweep(const SweepArgs& a) {
  const auto source = read_csv(a.source);
  const auto target = read_csv(a.target);
  const auto hidden = parse_integers<Index>(a.hidden, "--hidden");
  auto cfg = make_config(a.variant, 1.0, a.layers, hidden.size() + 1);
  if (cfg.variant == Variant::source_only) throw UsageError("sweep-lambda: source-only has no lambda");
  cfg.epochs = a.epochs;
  const auto lambdas = a.lambdas.empty() ? kLambdaGrid : parse_doubles(a.lambdas, "--lambdas");
  if (a.seeds < 1) throw UsageError("--seeds must be positive");
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < a.seeds; ++i) seeds.push_back(a.seed + static_cast<std::uint64_t>(i));

  const auto rows = sweep_lambda(hidden, source, target, cfg, lambdas, seeds);
  const auto& best = select_lambda(rows);
  std::string csv = "lambda,mean_target_acc,std_target_acc,mean_selection_score,runs,failed,selected\n";
  auto num = [](double v) {
    if (!std::isfinite(v)) return std::string("nan");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    csv += num(r.lambda) + "," + num(r.mean_target_acc) + "," + num(r.std_target_acc) + "," +
           num(r.mean_selection_score) + "," + std::to_string(r.runs) + "," + std::to_string(r.failed) + "," +
           (&r == &best ? "1" : "0") + "\n";
  }
  write_text(a.out, csv);
  return kExitOk;
}

// ---------------------------------------------------------------- adist

struct AdistArgs {
  std::string a, b;
  int seeds = 10;
  std::uint64_t seed = 0;
};

int run_adist(const AdistArgs& a) {
  const auto fa = read_csv(a.a);
  const auto fb = read_csv(a.b);
  if (fa.dimension() != fb.dimension()) throw InputError("feature files differ in dimension");
  if (a.seeds < 1) throw UsageError("--seeds must be positive");
  std::vector<double> values;
  for (int i = 0; i < a.seeds; ++i) {
    values.push_back(a_distance(fa.features, fb.features, a.seed + static_cast<std::uint64_t>(i)).a_distance);
  }
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  json report;
  report["schema_version"] = kSchemaVersion;
  report["mean"] = mean;
  report["std"] = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
  report["values"] = values;
  report["seeds"] = a.seeds;
  report["first_seed"] = a.seed;
  std::cout << dump(report);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-kernel MMD statistics and deep adaptation training"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen", "Generate a source/target CSV pair");
  c_gen->add_option("--kind", gen.kind)->check(CLI::IsMember({"moons", "gaussians"}));
  c_gen->add_option("--n", gen.n, "Samples per domain");
  c_gen->add_option("--seed", gen.seed);
  c_gen->add_option("--rotation", gen.rotation, "Target rotation in degrees (moons)");
  c_gen->add_option("--noise", gen.noise, "Gaussian noise (moons)");
  c_gen->add_option("--shift", gen.shift, "Target mean shift, comma separated (gaussians)");
  c_gen->add_option("--means", gen.means, "Class means 'x,y;x,y' (gaussians)");
  c_gen->add_option("--sigma", gen.sigma, "Shared standard deviation (gaussians)");
  c_gen->add_option("--out", gen.out, "Source and target output paths")->required()->expected(2);

  MmdTestArgs mt;
  auto* c_mmd = app.add_subcommand("mmd-test", "Permutation two-sample test on MK-MMD");
  c_mmd->add_option("--source", mt.source)->required();
  c_mmd->add_option("--target", mt.target)->required();
  c_mmd->add_option("--kernels", mt.kernels)->check(CLI::IsMember({"median", "grid"}));
  c_mmd->add_flag("--select-beta", mt.select_beta, "Choose kernel weights by the test-power QP");
  c_mmd->add_option("--permutations", mt.permutations);
  c_mmd->add_option("--alpha", mt.alpha);
  c_mmd->add_option("--seed", mt.seed);

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train a classifier with layerwise MK-MMD adaptation");
  c_train->add_option("--variant", tr.variant, "source-only | dan | dan-sk | dan-layer=K");
  c_train->add_option("--lambda", tr.lambda);
  c_train->add_option("--layers", tr.layers, "Adapted layer indices, comma separated");
  c_train->add_option("--hidden", tr.hidden, "Hidden widths, comma separated");
  c_train->add_option("--epochs", tr.epochs);
  c_train->add_option("--batch-size", tr.batch_size);
  c_train->add_option("--lr", tr.lr);
  c_train->add_option("--beta-period", tr.beta_period, "Batches between kernel-weight updates");
  c_train->add_option("--seed", tr.seed);
  c_train->add_option("--source", tr.source)->required();
  c_train->add_option("--target", tr.target)->required();
  c_train->add_option("--target-labeled", tr.target_labeled);
  c_train->add_option("--out", tr.out, "Output directory")->required();

  SweepArgs sw;
  auto* c_sweep = app.add_subcommand("sweep-lambda", "Train across the lambda grid and seeds");
  c_sweep->add_option("--variant", sw.variant);
  c_sweep->add_option("--layers", sw.layers);
  c_sweep->add_option("--hidden", sw.hidden);
  c_sweep->add_option("--lambdas", sw.lambdas, "Override the default grid");
  c_sweep->add_option("--seeds", sw.seeds, "Number of seeds");
  c_sweep->add_option("--seed", sw.seed, "First seed");
  c_sweep->add_option("--epochs", sw.epochs);
  c_sweep->add_option("--source", sw.source)->required();
  c_sweep->add_option("--target", sw.target)->required();
  c_sweep->add_option("--out", sw.out, "Output CSV")->required();

  AdistArgs ad;
  auto* c_adist = app.add_subcommand("adist", "Proxy A-distance between two feature files");
  c_adist->add_option("--features-a", ad.a)->required();
  c_adist->add_option("--features-b", ad.b)->required();
  c_adist->add_option("--seeds", ad.seeds);
  c_adist->add_option("--seed", ad.seed, "First seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (c_gen->parsed()) return run_gen(gen);
    if (c_mmd->parsed()) return run_mmd_test(mt);
    if (c_train->parsed()) return run_train(tr);
    if (c_sweep->parsed()) return run_sweep(sw);
    if (c_adist->parsed()) return run_adist(ad);
  } catch (const UsageError& e) {
    std::cerr << "mkmmd: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "mkmmd: " << e.what() << "\n";
    return kExitIo;
  } catch (const IoError& e) {
    std::cerr << "mkmmd: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericError& e) {
    std::cerr << "mkmmd: numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const SolverError& e) {
    std::cerr << "mkmmd: numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    std::cerr << "mkmmd: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
