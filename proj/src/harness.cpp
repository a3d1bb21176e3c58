#include "pbacc/harness.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <utility>

#include "pbacc/seeding.hpp"

namespace pbacc {

using nlohmann::json;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

void reject_unknown(const json& j, std::string_view where, std::initializer_list<std::string_view> keys) {
  if (!j.is_object()) throw SpecError(std::string(where) + ": expected an object");
  for (const auto& [k, _] : j.items()) {
    bool known = false;
    for (auto allowed : keys) known = known || k == allowed;
    if (!known) throw SpecError(std::string(where) + ": unknown key '" + k + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw SpecError(std::string("bad value for '") + key + "': " + e.what());
  }
}

// Enum-valued keys go through the string parsers, which throw invalid_argument.
template <class F>
auto read_enum(const json& j, const char* key, F parse, decltype(parse("")) fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return parse(j.at(key).get<std::string>());
  } catch (const std::exception& e) {
    throw SpecError(std::string("bad value for '") + key + "': " + e.what());
  }
}

StragglerModel::Kind straggler_from_string(std::string_view s) {
  for (auto k : {StragglerModel::Kind::None, StragglerModel::Kind::DropSlowest, StragglerModel::Kind::RandomDelay}) {
    if (s == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown straggler model '" + std::string(s) + "'");
}

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ';';
    out += std::to_string(v[i]);
  }
  return out;
}

std::size_t output_width(const ExperimentSpec& spec) {
  switch (spec.scheme.loss) {
    case LossKind::SoftmaxCrossEntropy: return 2;
    case LossKind::MSE: return spec.data.features;  // autoencoder
    case LossKind::CoxPartialLikelihood: return 1;
  }
  return 1;
}

Batch make_data(const ExperimentSpec& spec, std::size_t rows, std::uint64_t stream) {
  const auto seed = derive_seed(spec.seed, {stream});
  if (spec.data.kind == "survival") return make_survival_data(rows, spec.data.features, seed);
  Batch b = make_two_clusters(rows, spec.data.features, spec.data.separation, seed);
  if (spec.scheme.loss == LossKind::MSE) b.targets = b.inputs;
  return b;
}

CodingPlan plan_for(const ExperimentSpec& spec, std::size_t T) {
  return make_plan(spec.scheme.plan.K, T, spec.network.N, spec.scheme.plan.noise_shift, spec.scheme.plan.weight_order);
}

PrivacyConfig privacy_for(const ExperimentSpec& spec, const SweepPoint& p) {
  PrivacyConfig pc = spec.scheme.privacy;
  pc.K = spec.scheme.plan.K;
  pc.T = p.T;
  pc.sigma_n = p.sigma_n;
  pc.c = p.c;
  return pc;
}

}  // namespace

ExperimentSpec parse_spec(const json& j) {
  reject_unknown(j, "spec", {"scheme", "seed", "output_dir", "strategy", "plan", "privacy", "training", "network",
                             "data", "model", "sweep"});
  ExperimentSpec spec;
  spec.scheme.scheme = read_enum(j, "scheme", scheme_from_string, spec.scheme.scheme);
  read(j, "seed", spec.seed);
  std::string out = spec.output_dir.string();
  read(j, "output_dir", out);
  spec.output_dir = out;
  spec.search.strategy = read_enum(j, "strategy", search_strategy_from_string, spec.search.strategy);

  std::size_t K = 1;
  double b = kDefaultNoiseShift;
  if (j.contains("plan")) {
    const auto& p = j["plan"];
    reject_unknown(p, "plan", {"K", "N", "noise_shift", "weight_order"});
    read(p, "K", K);
    read(p, "N", spec.network.N);
    read(p, "noise_shift", b);
    spec.scheme.plan.weight_order = read_enum(p, "weight_order", weight_order_from_string, spec.scheme.plan.weight_order);
  }
  spec.scheme.plan.K = K;
  spec.scheme.plan.N = spec.network.N;
  spec.scheme.plan.noise_shift = b;

  auto& pc = spec.scheme.privacy;
  if (j.contains("privacy")) {
    const auto& p = j["privacy"];
    reject_unknown(p, "privacy", {"s", "epsilon", "samples"});
    read(p, "s", pc.s);
    read(p, "epsilon", pc.epsilon);
    read(p, "samples", spec.search.samples);
  }

  auto& sc = spec.scheme;
  if (j.contains("training")) {
    const auto& t = j["training"];
    reject_unknown(t, "training", {"lr", "batch_size", "epochs_per_round", "rounds", "loss", "aggregation"});
    read(t, "lr", sc.lr);
    read(t, "batch_size", sc.batch_size);
    read(t, "epochs_per_round", sc.epochs_per_round);
    read(t, "rounds", sc.rounds);
    sc.loss = read_enum(t, "loss", loss_from_string, sc.loss);
    sc.agg = read_enum(t, "aggregation", aggregation_from_string, sc.agg);
  }

  if (j.contains("network")) {
    const auto& n = j["network"];
    reject_unknown(n, "network", {"straggler", "count", "keep_n", "seed"});
    auto& st = spec.network.straggler;
    st.kind = read_enum(n, "straggler", straggler_from_string, st.kind);
    read(n, "count", st.count);
    read(n, "keep_n", st.keep_n);
    read(n, "seed", st.seed);
  }

  if (j.contains("data")) {
    const auto& d = j["data"];
    reject_unknown(d, "data", {"kind", "rows", "eval_rows", "features", "separation"});
    read(d, "kind", spec.data.kind);
    read(d, "rows", spec.data.rows);
    read(d, "eval_rows", spec.data.eval_rows);
    read(d, "features", spec.data.features);
    read(d, "separation", spec.data.separation);
  }

  if (j.contains("model")) {
    const auto& m = j["model"];
    reject_unknown(m, "model", {"hidden", "activation"});
    read(m, "hidden", spec.model.hidden);
    spec.model.activation = read_enum(m, "activation", activation_from_string, spec.model.activation);
  }

  if (!j.contains("sweep")) throw SpecError("spec: missing 'sweep'");
  const auto& s = j["sweep"];
  reject_unknown(s, "sweep", {"sigma_n", "T", "c"});
  read(s, "sigma_n", spec.sweep_sigma);
  read(s, "T", spec.sweep_T);
  read(s, "c", spec.sweep_c);

  spec.network.seed = derive_seed(spec.seed, {kSeedNetwork});
  spec.scheme.seed = spec.seed;
  spec.search.seed = derive_seed(spec.seed, {kSeedEval});
  validate(spec);
  return spec;
}

ExperimentSpec load_spec(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw SpecError("cannot open spec file '" + file.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SpecError("'" + file.string() + "' is not valid JSON: " + e.what());
  }
  return parse_spec(j);
}

void validate(const ExperimentSpec& spec) {
  if (spec.sweep_sigma.empty() || spec.sweep_T.empty() || spec.sweep_c.empty()) {
    throw SpecError("sweep lists sigma_n, T and c must all be nonempty");
  }
  for (double s : spec.sweep_sigma) {
    if (!(s > 0.0) || !std::isfinite(s)) throw SpecError("sweep sigma_n values must be positive");
  }
  for (auto c : spec.sweep_c) {
    if (c == 0 || c > spec.network.N) throw SpecError("sweep c values must lie in [1, N]");
  }
  if (spec.scheme.plan.K == 0) throw SpecError("plan K must be >= 1");
  if (!(spec.scheme.privacy.s > 0.0)) throw SpecError("privacy s must be > 0");
  if (!(spec.scheme.privacy.epsilon > 0.0)) throw SpecError("privacy epsilon must be > 0");
  if (spec.data.kind != "two-clusters" && spec.data.kind != "survival") {
    throw SpecError("data kind must be two-clusters or survival");
  }
  if ((spec.data.kind == "survival") != (spec.scheme.loss == LossKind::CoxPartialLikelihood)) {
    throw SpecError("the cox loss goes with survival data and only with it");
  }
  if (spec.data.features == 0 || spec.data.eval_rows == 0) throw SpecError("data sizes must be >= 1");
  if (spec.data.rows < spec.network.N || spec.data.rows < spec.scheme.plan.K) {
    throw SpecError("data rows must be at least N and K");
  }
  for (auto w : spec.model.hidden) {
    if (w == 0) throw SpecError("hidden widths must be >= 1");
  }
  try {
    for (auto T : spec.sweep_T) {
      SchemeConfig sc = spec.scheme;
      sc.plan = plan_for(spec, T);
      validate(sc, spec.network);
    }
  } catch (const SpecError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw SpecError(e.what());
  }
}

json resolved_config(const ExperimentSpec& spec) {
  const auto& sc = spec.scheme;
  const auto& st = spec.network.straggler;
  return json{
      {"scheme", std::string(to_string(sc.scheme))},
      {"seed", spec.seed},
      {"output_dir", spec.output_dir.string()},
      {"strategy", std::string(to_string(spec.search.strategy))},
      {"plan",
       {{"K", sc.plan.K},
        {"N", spec.network.N},
        {"noise_shift", sc.plan.noise_shift},
        {"weight_order", std::string(to_string(sc.plan.weight_order))}}},
      {"privacy", {{"s", sc.privacy.s}, {"epsilon", sc.privacy.epsilon}, {"samples", spec.search.samples}}},
      {"training",
       {{"lr", sc.lr},
        {"batch_size", sc.batch_size},
        {"epochs_per_round", sc.epochs_per_round},
        {"rounds", sc.rounds},
        {"loss", std::string(to_string(sc.loss))},
        {"aggregation", std::string(to_string(sc.agg))}}},
      {"network",
       {{"straggler", std::string(to_string(st.kind))}, {"count", st.count}, {"keep_n", st.keep_n}, {"seed", st.seed}}},
      {"data",
       {{"kind", spec.data.kind},
        {"rows", spec.data.rows},
        {"eval_rows", spec.data.eval_rows},
        {"features", spec.data.features},
        {"separation", spec.data.separation}}},
      {"model", {{"hidden", spec.model.hidden}, {"activation", std::string(to_string(spec.model.activation))}}},
      {"sweep", {{"sigma_n", spec.sweep_sigma}, {"T", spec.sweep_T}, {"c", spec.sweep_c}}},
  };
}

ExperimentResult simulate(const ExperimentSpec& spec) {
  validate(spec);
  const Batch train = make_data(spec, spec.data.rows, kSeedDataset);
  const Batch eval = make_data(spec, spec.data.eval_rows, kSeedEval);
  std::vector<std::size_t> widths{spec.data.features};
  widths.insert(widths.end(), spec.model.hidden.begin(), spec.model.hidden.end());
  widths.push_back(output_width(spec));
  const ModelParams init = make_mlp(widths, spec.model.activation, derive_seed(spec.seed, {kSeedModel}));
  const bool secure = is_secure(spec.scheme.scheme);

  std::map<std::pair<double, std::size_t>, std::vector<RoundTrace>> cache;
  ExperimentResult result;
  for (double sigma : spec.sweep_sigma) {
    for (auto T : spec.sweep_T) {
      const CodingPlan plan = plan_for(spec, T);
      auto key = std::make_pair(sigma, T);
      if (!cache.contains(key)) {
        SchemeConfig sc = spec.scheme;
        sc.plan = plan;
        sc.privacy.T = T;
        sc.privacy.K = plan.K;
        sc.privacy.sigma_n = sigma;
        cache[key] = run_scheme(sc, spec.network, train, eval, init);
      }
      for (auto c : spec.sweep_c) {
        SweepResult sr;
        sr.point = {sigma, T, c};
        sr.rounds = cache[key];
        if (secure) {
          const auto pc = privacy_for(spec, sr.point);
          sr.leakage = worst_case_leakage(plan, pc, spec.search);
          sr.max_s = max_admissible_s(plan, pc, spec.search);
        }
        result.points.push_back(std::move(sr));
      }
    }
  }
  return result;
}

namespace {

// Columns shared by both tables: the fully resolved configuration of a point.
const char* kConfigHeader =
    "scheme,seed,K,N,noise_shift,weight_order,T,sigma_n,c,s,epsilon,strategy,lr,batch_size,epochs_per_round,rounds,loss,"
    "aggregation,activation,hidden,straggler,straggler_count,straggler_keep_n,straggler_seed,data_kind,data_rows,"
    "eval_rows,features,separation";

std::string config_columns(const ExperimentSpec& spec, const SweepPoint& p) {
  const auto& sc = spec.scheme;
  const auto& st = spec.network.straggler;
  std::ostringstream o;
  o << to_string(sc.scheme) << ',' << spec.seed << ',' << sc.plan.K << ',' << spec.network.N << ','
    << format_double(sc.plan.noise_shift) << ',' << to_string(sc.plan.weight_order) << ',' << p.T << ',' << format_double(p.sigma_n) << ',' << p.c << ','
    << format_double(sc.privacy.s) << ',' << format_double(sc.privacy.epsilon) << ','
    << to_string(spec.search.strategy) << ',' << format_double(sc.lr) << ',' << sc.batch_size << ','
    << sc.epochs_per_round << ',' << sc.rounds << ',' << to_string(sc.loss) << ',' << to_string(sc.agg) << ','
    << to_string(spec.model.activation) << ',' << join(spec.model.hidden) << ',' << to_string(st.kind) << ','
    << st.count << ',' << st.keep_n << ',' << st.seed << ',' << spec.data.kind << ',' << spec.data.rows << ','
    << spec.data.eval_rows << ',' << spec.data.features << ',' << format_double(spec.data.separation);
  return o.str();
}

std::string leakage_columns(const SweepResult& r) {
  if (!r.leakage) return ",";
  return format_double(r.leakage->i_L) + ',' + format_double(r.leakage->I_L);
}

}  // namespace

void write_rounds_csv(std::ostream& out, const ExperimentSpec& spec, const ExperimentResult& r) {
  out << kConfigHeader
      << ",round,messages,elements,encode_ops,encode_elements,decode_ops,decode_elements,train_ops,train_elements,"
         "aggregate_ops,aggregate_elements,metric,accuracy,reference_gap,i_L,I_L\n";
  for (const auto& p : r.points) {
    const std::string cfg = config_columns(spec, p.point);
    for (const auto& t : p.rounds) {
      out << cfg << ',' << t.round << ',' << t.message_count() << ',' << t.element_volume() << ','
          << t.encode_ops.count << ',' << t.encode_ops.elements << ',' << t.decode_ops.count << ','
          << t.decode_ops.elements << ',' << t.train_ops.count << ',' << t.train_ops.elements << ','
          << t.aggregate_ops.count << ',' << t.aggregate_ops.elements << ',' << format_double(t.metric) << ','
          << format_double(t.accuracy) << ',' << format_double(t.reference_gap) << ',' << leakage_columns(p)
          << '\n';
    }
  }
}

void write_summary_csv(std::ostream& out, const ExperimentSpec& spec, const ExperimentResult& r) {
  out << kConfigHeader
      << ",final_metric,final_accuracy,max_reference_gap,total_messages,total_elements,i_L,I_L,worst_subset,"
         "subsets_evaluated,max_s,meets_epsilon\n";
  for (const auto& p : r.points) {
    std::size_t msgs = 0, elems = 0;
    double gap = 0.0;
    for (const auto& t : p.rounds) {
      msgs += t.message_count();
      elems += t.element_volume();
      gap = std::max(gap, t.reference_gap);
    }
    const auto& last = p.rounds.back();
    out << config_columns(spec, p.point) << ',' << format_double(last.metric) << ','
        << format_double(last.accuracy) << ',' << format_double(gap) << ',' << msgs << ',' << elems << ','
        << leakage_columns(p) << ',';
    if (p.leakage) {
      out << join(p.leakage->worst_subset) << ',' << p.leakage->subsets_evaluated << ',' << format_double(p.max_s)
          << ',' << (p.leakage->i_L <= spec.scheme.privacy.epsilon ? "true" : "false");
    } else {
      out << ",,,";
    }
    out << '\n';
  }
}

json summary_json(const ExperimentSpec& spec, const ExperimentResult& r) {
  json points = json::array();
  for (const auto& p : r.points) {
    json rounds = json::array();
    for (const auto& t : p.rounds) {
      rounds.push_back({{"round", t.round},
                        {"messages", t.message_count()},
                        {"elements", t.element_volume()},
                        {"metric", t.metric},
                        {"accuracy", t.accuracy},
                        {"reference_gap", t.reference_gap}});
    }
    json item{{"sigma_n", p.point.sigma_n}, {"T", p.point.T}, {"c", p.point.c}, {"rounds", rounds}};
    if (p.leakage) {
      item["leakage"] = to_json(*p.leakage);
      item["max_s"] = p.max_s;
    } else {
      item["leakage"] = nullptr;
    }
    points.push_back(std::move(item));
  }
  return json{{"config", resolved_config(spec)}, {"points", points}};
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  ExperimentResult r = simulate(spec);
  std::filesystem::create_directories(spec.output_dir);
  auto open = [&](const char* name) {
    std::ofstream f(spec.output_dir / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (spec.output_dir / name).string());
    return f;
  };
  {
    auto f = open("rounds.csv");
    write_rounds_csv(f, spec, r);
  }
  {
    auto f = open("summary.csv");
    write_summary_csv(f, spec, r);
  }
  {
    auto f = open("summary.json");
    f << summary_json(spec, r).dump(2) << '\n';
  }
  return r;
}

}  // namespace pbacc
