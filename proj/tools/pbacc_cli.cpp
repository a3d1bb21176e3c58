#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>

#include <CLI11.hpp>
#include <json.hpp>

#include "pbacc/codec.hpp"
#include "pbacc/harness.hpp"
#include "pbacc/interpolation.hpp"
#include "pbacc/privacy.hpp"
#include "pbacc/seeding.hpp"

using namespace pbacc;

namespace {

int cmd_run(const std::string& file, std::optional<std::uint64_t> seed, std::optional<std::string> out_dir,
            std::optional<std::string> strategy) {
  std::ifstream in(file);
  if (!in) throw SpecError("cannot open spec file '" + file + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SpecError("'" + file + "' is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw SpecError("spec must be a JSON object");
  if (seed) j["seed"] = *seed;
  if (out_dir) j["output_dir"] = *out_dir;
  if (strategy) j["strategy"] = *strategy;
  const ExperimentSpec spec = parse_spec(j);
  const auto result = run_experiment(spec);
  std::cout << "wrote " << result.points.size() << " sweep point(s) to " << spec.output_dir.string() << "\n";
  return 0;
}

struct LeakageArgs {
  std::size_t N = 50, K = 1, T = 30, c = 0;
  double sigma = 10.0, s = 1.0, b = kDefaultNoiseShift;
  std::optional<double> epsilon;
  std::string strategy = "greedy";
  std::string order = "sorted";
  std::size_t samples = 1000;
  std::uint64_t seed = 0;
};

int cmd_leakage(const LeakageArgs& a) {
  if (a.c == 0) throw std::invalid_argument("--c must be >= 1");
  const CodingPlan plan = make_plan(a.K, a.T, a.N, a.b, weight_order_from_string(a.order));
  PrivacyConfig cfg{a.K, a.T, a.sigma, a.s, a.c, a.epsilon.value_or(1.0)};
  validate(cfg, plan);
  SearchOptions opt{search_strategy_from_string(a.strategy), a.samples, a.seed};
  const LeakageReport r = worst_case_leakage(plan, cfg, opt);
  auto j = to_json(r);
  j["config"] = {{"N", a.N}, {"K", a.K}, {"T", a.T}, {"sigma_n", a.sigma}, {"s", a.s}, {"c", a.c}, {"noise_shift", a.b}, {"weight_order", a.order}};
  if (a.epsilon) {
    j["config"]["epsilon"] = *a.epsilon;
    const bool ok = !r.unbounded() && r.i_L <= *a.epsilon;
    j["meets_epsilon"] = ok;
    if (!ok) j["max_s"] = max_admissible_s(plan, cfg, opt);
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}

struct RoundtripArgs {
  std::string function = "identity";
  std::size_t K = 1, T = 0, N = 8, length = 64;
  std::optional<std::size_t> subset;
  double sigma = 0.0, b = kDefaultNoiseShift;
  std::string order = "sorted";
  std::uint64_t seed = 0;
};

int cmd_roundtrip(const RoundtripArgs& a) {
  const CodingPlan plan = make_plan(a.K, a.T, a.N, a.b, weight_order_from_string(a.order));
  const std::size_t n = a.subset.value_or(a.N);
  if (n == 0 || n > a.N) throw std::invalid_argument("--subset must lie in [1, N]");
  std::mt19937_64 rng(derive_seed(a.seed, {kSeedDataset}));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> xs(a.length);
  for (auto& v : xs) v = u(rng);
  std::vector<std::size_t> idx(a.N);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 pick(derive_seed(a.seed, {kSeedNetwork}));
  std::shuffle(idx.begin(), idx.end(), pick);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  const double err = roundtrip_error(Tensor::vector(xs), pointwise_function(a.function), plan,
                                     NoiseSpec{a.sigma, a.T, derive_seed(a.seed, {kSeedNoise})}, idx);
  nlohmann::json j{{"function", a.function}, {"K", a.K},         {"T", a.T},     {"N", a.N},
                   {"sigma_n", a.sigma},     {"subset", n},      {"length", a.length}, {"weight_order", a.order},
                   {"noise_shift", a.b},      {"seed", a.seed},         {"relative_error", err}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_nodes(const std::string& kind, std::size_t count, double shift) {
  const auto family = make_nodes(node_kind_from_string(kind), count, shift);
  for (std::size_t i = 0; i < family.values.size(); ++i) {
    std::printf("%zu %s\n", i, format_double(family.values[i]).c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Private Berrut approximate coded computing: encoding, leakage bounds and protocol simulation"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir, strategy;

  std::string spec_file;
  auto* run = app.add_subcommand("run", "Run an experiment described by a JSON spec file");
  run->add_option("spec-file", spec_file, "Experiment spec (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override the root seed");
  run->add_option("--output-dir", out_dir, "Override the output directory");
  run->add_option("--strategy", strategy, "Colluder search: exhaustive, greedy or random");

  LeakageArgs la;
  auto* leak = app.add_subcommand("leakage", "Worst-case leakage bound for one plan");
  leak->add_option("--N", la.N, "Workers")->capture_default_str();
  leak->add_option("--K", la.K, "Data points per group")->capture_default_str();
  leak->add_option("--T", la.T, "Noise blocks")->capture_default_str();
  leak->add_option("--sigma", la.sigma, "Noise standard deviation sigma_n")->capture_default_str();
  leak->add_option("--c", la.c, "Colluding nodes")->required();
  leak->add_option("--s", la.s, "Input bound")->capture_default_str();
  leak->add_option("--b", la.b, "Noise node shift")->capture_default_str();
  leak->add_option("--weight-order", la.order, "Encoder weight order: sorted or concatenated")->capture_default_str();
  leak->add_option("--epsilon", la.epsilon, "Target bits per element; reports max s when violated");
  leak->add_option("--strategy", la.strategy, "exhaustive, greedy or random")->capture_default_str();
  leak->add_option("--samples", la.samples, "Draws for the random strategy")->capture_default_str();
  leak->add_option("--seed", la.seed, "Seed for the random strategy")->capture_default_str();

  RoundtripArgs ra;
  auto* rt = app.add_subcommand("roundtrip", "Encode, apply f on a subset of shares, decode, report error");
  rt->add_option("--function", ra.function, "identity, square, relu, tanh, affine or sigmoid")->capture_default_str();
  rt->add_option("--K", ra.K)->capture_default_str();
  rt->add_option("--T", ra.T)->capture_default_str();
  rt->add_option("--N", ra.N)->capture_default_str();
  rt->add_option("--sigma", ra.sigma)->capture_default_str();
  rt->add_option("--b", ra.b, "Noise node shift")->capture_default_str();
  rt->add_option("--subset", ra.subset, "Number of surviving workers (default N)");
  rt->add_option("--length", ra.length, "Input vector length")->capture_default_str();
  rt->add_option("--weight-order", ra.order, "Encoder weight order: sorted or concatenated")->capture_default_str();
  rt->add_option("--seed", ra.seed)->capture_default_str();

  std::string kind = "chebyshev1";
  std::size_t count = 8;
  double shift = 0.0;
  auto* nodes = app.add_subcommand("nodes", "Print a node family");
  nodes->add_option("--kind", kind, "chebyshev1, chebyshev2 or shifted-chebyshev1")->capture_default_str();
  nodes->add_option("--count", count)->capture_default_str();
  nodes->add_option("--shift", shift)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(spec_file, seed, out_dir, strategy);
    if (*leak) return cmd_leakage(la);
    if (*rt) return cmd_roundtrip(ra);
    if (*nodes) return cmd_nodes(kind, count, shift);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
