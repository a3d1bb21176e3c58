#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "pbacc/harness.hpp"

using namespace pbacc;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json small_spec() {
  return json::parse(R"({
    "scheme": "dldd-secure-aggregation",
    "seed": 3,
    "plan": {"K": 1, "N": 12},
    "training": {"rounds": 3, "lr": 0.1},
    "data": {"rows": 120, "eval_rows": 60},
    "sweep": {"sigma_n": [1, 2, 4, 8, 16], "T": [6], "c": [3]}
  })");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string f; std::getline(in, f, ',');) out.push_back(f);
  return out;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("pbacc-test-" + name);
  fs::remove_all(p);
  return p;
}

struct Cli {
  int status;
  std::string out;
};

Cli cli(const std::string& args) {
  const std::string cmd = std::string(PBACC_CLI_PATH) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) out += buf.data();
  const int raw = pclose(pipe);
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, out};
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("defaults fill a minimal spec") {
  const auto spec = parse_spec(json::parse(R"({"scheme": "uncoded-dldd", "sweep": {"sigma_n": [1], "T": [0], "c": [1]}})"));
  CHECK(spec.scheme.scheme == Scheme::UncodedDldd);
  CHECK(spec.scheme.privacy.s == 1.0);
  CHECK(spec.scheme.agg == AggregationRule::FedAvg);
  CHECK(spec.scheme.plan.weight_order == WeightOrder::Sorted);
  CHECK(spec.data.kind == "two-clusters");
  CHECK(spec.model.hidden == std::vector<std::size_t>{8});
  const auto cfg = resolved_config(spec);
  CHECK(cfg.at("plan").at("weight_order") == "sorted");
  CHECK(parse_spec(cfg).scheme.plan.N == spec.scheme.plan.N);
}

TEST_CASE("malformed specs are rejected with SpecError") {
  auto bad = [](auto mutate) {
    json j = small_spec();
    mutate(j);
    return j;
  };
  const std::vector<json> cases{
      bad([](json& j) { j["colour"] = "blue"; }),
      bad([](json& j) { j["plan"]["M"] = 3; }),
      bad([](json& j) { j["sweep"]["sigma_n"] = json::array(); }),
      bad([](json& j) { j["sweep"]["c"] = {0}; }),
      bad([](json& j) { j["sweep"]["c"] = {13}; }),
      bad([](json& j) { j["sweep"]["sigma_n"] = {-1.0}; }),
      bad([](json& j) { j.erase("sweep"); }),
      bad([](json& j) { j["scheme"] = "gossip"; }),
      bad([](json& j) { j["training"]["loss"] = "cox"; }),
      bad([](json& j) { j["data"]["rows"] = 5; }),
      bad([](json& j) { j["plan"]["K"] = "two"; }),
      bad([](json& j) {
        j["scheme"] = "dldd-secure-training";
        j["plan"]["K"] = 2;
      }),
  };
  for (const auto& j : cases) {
    CAPTURE(j.dump());
    CHECK_THROWS_AS(validate(parse_spec(j)), SpecError);
  }
  CHECK_NOTHROW(validate(parse_spec(small_spec())));
  CHECK_THROWS_AS(load_spec("/nonexistent/spec.json"), SpecError);
}

TEST_CASE("leakage falls strictly along a noise sweep") {
  const auto spec = parse_spec(small_spec());
  const auto r = simulate(spec);
  REQUIRE(r.points.size() == 5);
  for (std::size_t i = 0; i < r.points.size(); ++i) {
    REQUIRE(r.points[i].leakage.has_value());
    CHECK(r.points[i].rounds.size() == 3);
    if (i) CHECK(r.points[i].leakage->i_L < r.points[i - 1].leakage->i_L);
  }
}

TEST_CASE("sweep is the product of sigma, T and c") {
  json j = small_spec();
  j["sweep"] = {{"sigma_n", {1, 2}}, {"T", {4, 6}}, {"c", {2, 3, 4}}};
  const auto r = simulate(parse_spec(j));
  CHECK(r.points.size() == 12);
  // c only changes the bound, so the training traces are shared.
  CHECK(r.points[0].rounds.back().metric == r.points[1].rounds.back().metric);
  for (std::size_t i = 1; i < 3; ++i) CHECK(r.points[i].leakage->i_L >= r.points[i - 1].leakage->i_L);
}

TEST_CASE("output files are byte-identical across reruns") {
  auto a = parse_spec(small_spec()), b = a;
  a.output_dir = scratch("rerun-a");
  b.output_dir = scratch("rerun-b");
  run_experiment(a);
  run_experiment(b);
  for (auto f : {"rounds.csv", "summary.csv"}) CHECK(slurp(a.output_dir / f) == slurp(b.output_dir / f));
  auto ja = json::parse(slurp(a.output_dir / "summary.json")), jb = json::parse(slurp(b.output_dir / "summary.json"));
  ja["config"].erase("output_dir");
  jb["config"].erase("output_dir");
  CHECK(ja == jb);

  json jc = small_spec();
  jc["seed"] = 4;
  auto c = parse_spec(jc);
  c.output_dir = scratch("rerun-c");
  run_experiment(c);
  CHECK(slurp(c.output_dir / "rounds.csv") != slurp(a.output_dir / "rounds.csv"));
}

TEST_CASE("csv schemas are stable") {
  auto spec = parse_spec(small_spec());
  spec.output_dir = scratch("schema");
  run_experiment(spec);
  const std::string config =
      "scheme,seed,K,N,noise_shift,weight_order,T,sigma_n,c,s,epsilon,strategy,lr,batch_size,epochs_per_round,rounds,"
      "loss,aggregation,activation,hidden,straggler,straggler_count,straggler_keep_n,straggler_seed,data_kind,"
      "data_rows,eval_rows,features,separation";
  const auto rounds = lines(slurp(spec.output_dir / "rounds.csv"));
  CHECK(rounds.front() == config +
                              ",round,messages,elements,encode_ops,encode_elements,decode_ops,decode_elements,"
                              "train_ops,train_elements,aggregate_ops,aggregate_elements,metric,accuracy,"
                              "reference_gap,i_L,I_L");
  CHECK(rounds.size() == 1 + 5 * 3);
  const auto summary = lines(slurp(spec.output_dir / "summary.csv"));
  CHECK(summary.front() == config +
                               ",final_metric,final_accuracy,max_reference_gap,total_messages,total_elements,i_L,"
                               "I_L,worst_subset,subsets_evaluated,max_s,meets_epsilon");
  CHECK(summary.size() == 1 + 5);
  const auto cols = split(summary.front()).size();
  for (const auto& l : summary) CHECK(split(l).size() == cols);
  for (const auto& l : rounds) CHECK(split(l).size() == split(rounds.front()).size());

  const auto js = json::parse(slurp(spec.output_dir / "summary.json"));
  CHECK(js.at("points").size() == 5);
  CHECK(js.at("config").at("scheme") == "dldd-secure-aggregation");
}

TEST_CASE("uncoded schemes leave the leakage columns empty") {
  json j = small_spec();
  j["scheme"] = "uncoded-dldd";
  j["sweep"] = {{"sigma_n", {1}}, {"T", {0}}, {"c", {1}}};
  auto spec = parse_spec(j);
  const auto r = simulate(spec);
  CHECK_FALSE(r.points[0].leakage.has_value());
  std::ostringstream out;
  write_summary_csv(out, spec, r);
  const auto row = split(lines(out.str()).at(1) + ",");
  const auto header = split(lines(out.str()).at(0));
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "i_L" || header[i] == "worst_subset") CHECK(row[i].empty());
  }
}

TEST_CASE("number formatting round-trips") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(100.65833903617145) == "100.65833903617145");
  CHECK(format_double(1.0 / 0.0) == "inf");
  CHECK(format_double(std::nan("")) == "nan");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("command line") {
  CHECK(cli("").status != 0);
  CHECK(cli("leakage --N 20 --K 1 --T 10 --c 0").status == 2);
  CHECK(cli("leakage --N 20 --K 1 --T 10 --c 3 --strategy sideways").status == 2);

  const auto leak = cli("leakage --N 20 --K 1 --T 10 --sigma 10 --c 3 --epsilon 0.5");
  REQUIRE(leak.status == 0);
  const auto lj = json::parse(leak.out);
  CHECK(lj.at("meets_epsilon") == false);
  CHECK(lj.at("max_s").get<double>() > 0.0);
  CHECK(lj.at("worst_subset").size() == 3);

  const auto unbounded = json::parse(cli("leakage --N 20 --K 1 --T 2 --c 3").out);
  CHECK(unbounded.at("i_L").is_null());

  const auto id = json::parse(cli("roundtrip --function identity --K 2 --N 16").out);
  CHECK(id.at("relative_error").get<double>() <= 1e-12);
  const auto sq32 = json::parse(cli("roundtrip --function square --K 2 --N 32 --seed 1").out);
  const auto sq64 = json::parse(cli("roundtrip --function square --K 2 --N 64 --seed 1").out);
  CHECK(sq64.at("relative_error").get<double>() < sq32.at("relative_error").get<double>());
  CHECK(cli("roundtrip --function cube").status == 2);
  CHECK(cli("roundtrip --N 8 --subset 9").status == 2);

  const auto nodes = lines(cli("nodes --kind chebyshev1 --count 3").out);
  REQUIRE(nodes.size() == 3);
  CHECK(nodes[1].rfind("1 ", 0) == 0);
  CHECK(std::abs(std::stod(nodes[1].substr(2))) <= 1e-15);

  const auto dir = scratch("cli");
  const auto spec_file = dir.string() + ".json";
  std::ofstream(spec_file) << small_spec().dump();
  const auto run = cli("run " + spec_file + " --output-dir " + dir.string() + " --seed 9 --strategy random");
  CHECK(run.status == 0);
  CHECK(fs::exists(dir / "rounds.csv"));
  const auto js = json::parse(slurp(dir / "summary.json"));
  CHECK(js.at("config").at("seed") == 9);
  CHECK(js.at("config").at("strategy") == "random");
  CHECK(cli("run /nonexistent.json").status != 0);
  std::ofstream(spec_file) << "{not json";
  CHECK(cli("run " + spec_file).status == 2);
}

}  // TEST_SUITE
