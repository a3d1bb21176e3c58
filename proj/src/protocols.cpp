#include "pbacc/protocols.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "pbacc/seeding.hpp"

namespace pbacc {

std::string_view to_string(StragglerModel::Kind k) {
  switch (k) {
    case StragglerModel::Kind::None: return "none";
    case StragglerModel::Kind::DropSlowest: return "drop-slowest";
    case StragglerModel::Kind::RandomDelay: return "random-delay";
  }
  return "unknown";
}

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::DatasetShare: return "dataset-share";
    case Phase::ModelBroadcast: return "model-broadcast";
    case Phase::InferenceResult: return "inference-result";
    case Phase::ShareExchange: return "share-exchange";
    case Phase::AggregateUpload: return "aggregate-upload";
    case Phase::EncodedModel: return "encoded-model";
    case Phase::TrainedShare: return "trained-share";
    case Phase::ModelUpload: return "model-upload";
  }
  return "unknown";
}

std::string_view to_string(Scheme s) {
  switch (s) {
    case Scheme::DlcdSecureTraining: return "dlcd-secure-training";
    case Scheme::DlddSecureAggregation: return "dldd-secure-aggregation";
    case Scheme::DlddSecureTraining: return "dldd-secure-training";
    case Scheme::UncodedDlcd: return "uncoded-dlcd";
    case Scheme::UncodedDldd: return "uncoded-dldd";
  }
  return "unknown";
}

Scheme scheme_from_string(std::string_view name) {
  for (auto s : {Scheme::DlcdSecureTraining, Scheme::DlddSecureAggregation, Scheme::DlddSecureTraining,
                 Scheme::UncodedDlcd, Scheme::UncodedDldd}) {
    if (name == to_string(s)) return s;
  }
  throw std::invalid_argument("unknown scheme '" + std::string(name) + "'");
}

bool is_secure(Scheme s) {
  return s == Scheme::DlcdSecureTraining || s == Scheme::DlddSecureAggregation ||
         s == Scheme::DlddSecureTraining;
}

bool is_decentralized(Scheme s) {
  return s == Scheme::DlddSecureAggregation || s == Scheme::DlddSecureTraining || s == Scheme::UncodedDldd;
}

std::size_t RoundTrace::message_count(Phase p) const {
  return static_cast<std::size_t>(
      std::count_if(messages.begin(), messages.end(), [p](const Message& m) { return m.phase == p; }));
}

std::size_t RoundTrace::element_volume() const {
  std::size_t v = 0;
  for (const auto& m : messages) v += m.elements;
  return v;
}

std::size_t RoundTrace::element_volume(Phase p) const {
  std::size_t v = 0;
  for (const auto& m : messages) {
    if (m.phase == p) v += m.elements;
  }
  return v;
}

void validate(const NetworkConfig& net) {
  if (net.N < 2) throw std::invalid_argument("network needs N >= 2");
  const auto& s = net.straggler;
  if (s.kind == StragglerModel::Kind::DropSlowest && s.count >= net.N) {
    throw std::invalid_argument("DropSlowest count must be < N");
  }
  if (s.kind == StragglerModel::Kind::RandomDelay && (s.keep_n == 0 || s.keep_n > net.N)) {
    throw std::invalid_argument("RandomDelay keep_n must be in [1, N]");
  }
}

std::vector<std::size_t> select_fastest(const NetworkConfig& net, std::size_t round_index,
                                        std::size_t step) {
  validate(net);
  std::vector<std::size_t> all(net.N);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::size_t keep = net.N;
  std::uint64_t seed = net.seed;
  switch (net.straggler.kind) {
    case StragglerModel::Kind::None:
      return all;
    case StragglerModel::Kind::DropSlowest:
      keep = net.N - net.straggler.count;
      break;
    case StragglerModel::Kind::RandomDelay:
      keep = net.straggler.keep_n;
      seed = net.straggler.seed;
      break;
  }
  std::mt19937_64 rng(derive_seed(seed, {kSeedNetwork, round_index, step}));
  std::exponential_distribution<double> latency(1.0);
  std::vector<double> delay(net.N);
  for (auto& d : delay) d = latency(rng);
  std::stable_sort(all.begin(), all.end(), [&](std::size_t a, std::size_t b) { return delay[a] < delay[b]; });
  all.resize(keep);
  std::sort(all.begin(), all.end());
  return all;
}

void validate(const SchemeConfig& cfg, const NetworkConfig& net) {
  validate(net);
  if (cfg.rounds == 0) throw std::invalid_argument("rounds must be >= 1");
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("learning rate must be > 0");
  if (cfg.batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
  if (is_secure(cfg.scheme)) {
    if (cfg.plan.N != net.N) throw std::invalid_argument("coding plan N differs from network N");
    if (cfg.plan.T > 0 && !(cfg.privacy.sigma_n >= 0.0)) throw std::invalid_argument("sigma_n must be >= 0");
  }
  if (cfg.scheme == Scheme::DlddSecureTraining && cfg.plan.K != 1) {
    throw std::invalid_argument("DLDD secure training requires K = 1");
  }
}

std::vector<Batch> split_rows(const Batch& data, std::size_t parts) {
  const std::size_t n = batch_size(data);
  if (parts == 0 || parts > n) throw std::invalid_argument("cannot split " + std::to_string(n) +
                                                           " rows into " + std::to_string(parts) + " parts");
  std::vector<Batch> out;
  out.reserve(parts);
  std::size_t start = 0;
  for (std::size_t p = 0; p < parts; ++p) {
    const std::size_t len = n / parts + (p < n % parts ? 1 : 0);
    out.push_back(slice_rows(data, start, start + len));
    start += len;
  }
  return out;
}

namespace {

bool is_classifier(LossKind l) { return l == LossKind::SoftmaxCrossEntropy; }

void record_metrics(RoundTrace& trace, const ModelParams& model, const Batch& eval, LossKind loss) {
  trace.decoded_model = model.flatten();
  trace.metric = evaluate_loss(model, eval, loss);
  trace.accuracy = is_classifier(loss) ? accuracy(model, eval) : 0.0;
}

double relative_gap(const Tensor& x, const Tensor& ref) {
  double scale = 1e-12;
  for (double v : ref.data()) scale = std::max(scale, std::abs(v));
  return max_abs_diff(x, ref) / scale;
}

std::vector<double> size_weights(std::span<const Batch> per_node) {
  std::vector<double> w(per_node.size());
  double total = 0.0;
  for (std::size_t i = 0; i < per_node.size(); ++i) {
    w[i] = static_cast<double>(batch_size(per_node[i]));
    total += w[i];
  }
  for (auto& v : w) v /= total;
  return w;
}

Tensor aggregate_models(std::span<const Tensor> models, AggregationRule rule, std::span<const double> w) {
  return rule == AggregationRule::FedAvg ? aggregate(models, rule, w) : aggregate(models, rule);
}

std::vector<ShareResult> gather(const std::vector<std::size_t>& subset, const CodingPlan& plan,
                                const std::vector<Tensor>& payloads) {
  std::vector<ShareResult> out;
  out.reserve(subset.size());
  for (auto j : subset) out.push_back({plan.beta(j), payloads[j]});
  return out;
}

void check_nodes(std::span<const Batch> per_node, const NetworkConfig& net) {
  if (per_node.size() != net.N) throw std::invalid_argument("need one dataset per node");
  for (const auto& b : per_node) {
    if (batch_size(b) == 0) throw std::invalid_argument("per-node datasets must be nonempty");
  }
}

// Local plaintext training at every node, in parallel; results in node order.
std::vector<ModelParams> train_all(const std::vector<ModelParams>& starts, std::span<const Batch> per_node,
                                   const SchemeConfig& cfg) {
  std::vector<ModelParams> out(starts.size());
  const auto n = static_cast<std::ptrdiff_t>(starts.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    out[idx] = train_local(starts[idx], per_node[idx], cfg.loss, cfg.lr, cfg.batch_size, cfg.epochs_per_round);
  }
  return out;
}

}  // namespace

std::vector<RoundTrace> run_dlcd_secure_training(const SchemeConfig& cfg, const NetworkConfig& net,
                                                 const Batch& dataset, const Batch& eval,
                                                 const ModelParams& model_init) {
  validate(cfg, net);
  const auto& plan = cfg.plan;
  const std::size_t N = net.N;
  const std::size_t L = batch_size(dataset);
  if (L < plan.K) throw std::invalid_argument("dataset has fewer rows than K");
  const std::size_t K = plan.K;
  const std::size_t W = model_init.parameter_count();
  const std::size_t B = model_init.output_dim();

  const NoiseSpec noise{cfg.privacy.sigma_n, plan.T, derive_seed(cfg.seed, {kSeedNoise, kSeedDataset})};
  const Encoding enc = encode(dataset.inputs, plan, noise);
  const std::size_t groups = enc.shares.front().payload.extent(0);
  const std::size_t F = dataset.inputs.size() / L;

  // Per-worker encoded rows, one 1 x F tensor per group.
  std::vector<std::vector<Tensor>> worker_rows(N, std::vector<Tensor>(groups));
  for (std::size_t j = 0; j < N; ++j) {
    const auto& p = enc.shares[j].payload;
    for (std::size_t g = 0; g < groups; ++g) {
      std::vector<double> row(p.data().begin() + static_cast<std::ptrdiff_t>(g * F),
                              p.data().begin() + static_cast<std::ptrdiff_t>((g + 1) * F));
      worker_rows[j][g] = Tensor({1, F}, std::move(row));
    }
  }

  ModelParams model = model_init;
  std::vector<RoundTrace> traces;
  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    RoundTrace trace;
    trace.round = r;
    if (r == 0) {
      trace.encode_ops.add(dataset.inputs.size());
      for (std::size_t g = 0; g < groups; ++g) {
        for (std::size_t j = 0; j < N; ++j) {
          trace.messages.push_back({kMaster, static_cast<int>(j), F, Phase::DatasetShare});
        }
      }
    }
    std::size_t step = 0;
    for (std::size_t e = 0; e < cfg.epochs_per_round; ++e) {
      for (std::size_t g = 0; g < groups; ++g, ++step) {
        for (std::size_t j = 0; j < N; ++j) {
          trace.messages.push_back({kMaster, static_cast<int>(j), W, Phase::ModelBroadcast});
        }
        std::vector<Tensor> outputs(N);
        const auto n = static_cast<std::ptrdiff_t>(N);
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t j = 0; j < n; ++j) {
          const auto idx = static_cast<std::size_t>(j);
          outputs[idx] = forward(model, worker_rows[idx][g]);
        }
        for (std::size_t j = 0; j < N; ++j) {
          trace.train_ops.add(F);
          trace.messages.push_back({static_cast<int>(j), kMaster, B, Phase::InferenceResult});
        }
        const std::size_t begin = g * K;
        const std::size_t end = std::min(L, begin + K);
        const auto subset = select_fastest(net, r, step);
        const Tensor decoded = decode(gather(subset, plan, outputs), plan, end - begin);
        trace.decode_ops.add(decoded.size());

        const Batch rows = slice_rows(dataset, begin, end);
        trace.reference_gap = std::max(trace.reference_gap, relative_gap(decoded, forward(model, rows.inputs)));
        const auto ol = output_loss(decoded, rows.targets, cfg.loss);
        model = sgd_step(model, backward(model, rows.inputs, ol.grad), cfg.lr);
      }
    }
    record_metrics(trace, model, eval, cfg.loss);
    traces.push_back(std::move(trace));
  }
  return traces;
}

std::vector<RoundTrace> run_centralized_reference(const SchemeConfig& cfg, const Batch& dataset,
                                                  const Batch& eval, const ModelParams& model_init) {
  const std::size_t L = batch_size(dataset);
  const std::size_t K = cfg.plan.K;
  if (K == 0 || L < K) throw std::invalid_argument("dataset has fewer rows than K");
  ModelParams model = model_init;
  std::vector<RoundTrace> traces;
  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    RoundTrace trace;
    trace.round = r;
    for (std::size_t e = 0; e < cfg.epochs_per_round; ++e) {
      for (std::size_t begin = 0; begin < L; begin += K) {
        const Batch rows = slice_rows(dataset, begin, std::min(L, begin + K));
        model = sgd_step(model, loss_and_grad(model, rows, cfg.loss).grads, cfg.lr);
        trace.train_ops.add(rows.inputs.size());
      }
    }
    record_metrics(trace, model, eval, cfg.loss);
    traces.push_back(std::move(trace));
  }
  return traces;
}

std::vector<RoundTrace> run_dldd_secure_aggregation(const SchemeConfig& cfg, const NetworkConfig& net,
                                                    std::span<const Batch> per_node, const Batch& eval,
                                                    const ModelParams& model_init) {
  validate(cfg, net);
  check_nodes(per_node, net);
  const auto& plan = cfg.plan;
  const std::size_t N = net.N;
  const std::size_t W = model_init.parameter_count();
  const auto weights = size_weights(per_node);

  ModelParams model = model_init;
  std::vector<RoundTrace> traces;
  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    RoundTrace trace;
    trace.round = r;
    for (std::size_t j = 0; j < N; ++j) {
      trace.messages.push_back({kMaster, static_cast<int>(j), W, Phase::ModelBroadcast});
    }
    const auto local = train_all(std::vector<ModelParams>(N, model), per_node, cfg);

    std::vector<Tensor> flats(N);
    std::vector<Encoding> encodings(N);
    const auto n = static_cast<std::ptrdiff_t>(N);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const auto idx = static_cast<std::size_t>(i);
      flats[idx] = local[idx].flatten();
      const NoiseSpec noise{cfg.privacy.sigma_n, plan.T, derive_seed(cfg.seed, {kSeedNoise, r, idx})};
      // Worker-level parallelism already covers this loop.
      encodings[idx] = serial::encode(flats[idx], plan, noise);
    }
    const std::size_t share_len = encodings.front().shares.front().payload.size();
    for (std::size_t i = 0; i < N; ++i) {
      trace.train_ops.add(batch_size(per_node[i]));
      trace.encode_ops.add(W);
      for (std::size_t j = 0; j < N; ++j) {
        if (i != j) trace.messages.push_back({static_cast<int>(i), static_cast<int>(j), share_len, Phase::ShareExchange});
      }
    }

    // Node j aggregates u_0(beta_j) .. u_{N-1}(beta_j).
    std::vector<Tensor> aggregated(N);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t j = 0; j < n; ++j) {
      const auto jdx = static_cast<std::size_t>(j);
      std::vector<Tensor> held(N);
      for (std::size_t i = 0; i < N; ++i) held[i] = encodings[i].shares[jdx].payload;
      aggregated[jdx] = aggregate_models(held, cfg.agg, weights);
    }
    for (std::size_t j = 0; j < N; ++j) {
      trace.aggregate_ops.add(share_len * N);
      trace.messages.push_back({static_cast<int>(j), kMaster, share_len, Phase::AggregateUpload});
    }

    const auto subset = select_fastest(net, r);
    const Tensor decoded = decode(gather(subset, plan, aggregated), plan, W);
    trace.decode_ops.add(W);
    trace.reference_gap = relative_gap(decoded, aggregate_models(flats, cfg.agg, weights));
    model = model.unflatten(decoded);
    record_metrics(trace, model, eval, cfg.loss);
    traces.push_back(std::move(trace));
  }
  return traces;
}

std::vector<RoundTrace> run_dldd_secure_training(const SchemeConfig& cfg, const NetworkConfig& net,
                                                 std::span<const Batch> per_node, const Batch& eval,
                                                 const ModelParams& model_init) {
  validate(cfg, net);
  check_nodes(per_node, net);
  const auto& plan = cfg.plan;
  const std::size_t N = net.N;
  const std::size_t W = model_init.parameter_count();
  const auto weights = size_weights(per_node);

  ModelParams model = model_init;
  std::vector<RoundTrace> traces;
  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    RoundTrace trace;
    trace.round = r;
    const Tensor flat = model.flatten();
    const NoiseSpec noise{cfg.privacy.sigma_n, plan.T, derive_seed(cfg.seed, {kSeedNoise, r})};
    const Encoding enc = encode(flat, plan, noise);
    trace.encode_ops.add(W);

    std::vector<ModelParams> starts(N);
    for (std::size_t j = 0; j < N; ++j) {
      starts[j] = model.unflatten(enc.shares[j].payload);
      trace.messages.push_back({kMaster, static_cast<int>(j), W, Phase::EncodedModel});
    }
    const auto trained = train_all(starts, per_node, cfg);
    std::vector<Tensor> returned(N);
    for (std::size_t j = 0; j < N; ++j) {
      returned[j] = trained[j].flatten();
      trace.train_ops.add(batch_size(per_node[j]));
      trace.messages.push_back({static_cast<int>(j), kMaster, W, Phase::TrainedShare});
    }

    const auto subset = select_fastest(net, r);
    const Tensor decoded = decode(gather(subset, plan, returned), plan, W);
    trace.decode_ops.add(W);

    // Diagnostic only: what plain FedAvg from the same global model would give.
    const auto plain = train_all(std::vector<ModelParams>(N, model), per_node, cfg);
    std::vector<Tensor> plain_flat(N);
    for (std::size_t j = 0; j < N; ++j) plain_flat[j] = plain[j].flatten();
    trace.reference_gap = relative_gap(decoded, aggregate(plain_flat, AggregationRule::FedAvg, weights));

    model = model.unflatten(decoded);
    record_metrics(trace, model, eval, cfg.loss);
    traces.push_back(std::move(trace));
  }
  return traces;
}

std::vector<RoundTrace> run_uncoded_dlcd(const SchemeConfig& cfg, const NetworkConfig& net,
                                         const Batch& dataset, const Batch& eval,
                                         const ModelParams& model_init) {
  validate(cfg, net);
  const auto parts = split_rows(dataset, net.N);
  const std::size_t W = model_init.parameter_count();
  const auto weights = size_weights(parts);
  ModelParams model = model_init;
  std::vector<RoundTrace> traces;
  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    RoundTrace trace;
    trace.round = r;
    if (r == 0) {
      for (std::size_t j = 0; j < net.N; ++j) {
        trace.messages.push_back({kMaster, static_cast<int>(j), parts[j].inputs.size(), Phase::DatasetShare});
      }
    }
    for (std::size_t j = 0; j < net.N; ++j) {
      trace.messages.push_back({kMaster, static_cast<int>(j), W, Phase::ModelBroadcast});
    }
    const auto local = train_all(std::vector<ModelParams>(net.N, model), parts, cfg);
    std::vector<Tensor> flats(net.N);
    for (std::size_t j = 0; j < net.N; ++j) {
      flats[j] = local[j].flatten();
      trace.train_ops.add(batch_size(parts[j]));
      trace.messages.push_back({static_cast<int>(j), kMaster, W, Phase::ModelUpload});
    }
    const auto subset = select_fastest(net, r);
    std::vector<Tensor> arrived;
    std::vector<double> w;
    for (auto j : subset) {
      arrived.push_back(flats[j]);
      w.push_back(weights[j]);
    }
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (auto& v : w) v /= total;
    trace.aggregate_ops.add(W * arrived.size());
    model = model.unflatten(aggregate_models(arrived, cfg.agg, w));
    record_metrics(trace, model, eval, cfg.loss);
    traces.push_back(std::move(trace));
  }
  return traces;
}

std::vector<RoundTrace> run_uncoded_dldd(const SchemeConfig& cfg, const NetworkConfig& net,
                                         std::span<const Batch> per_node, const Batch& eval,
                                         const ModelParams& model_init) {
  validate(cfg, net);
  check_nodes(per_node, net);
  const std::size_t W = model_init.parameter_count();
  const auto weights = size_weights(per_node);
  ModelParams model = model_init;
  std::vector<RoundTrace> traces;
  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    RoundTrace trace;
    trace.round = r;
    for (std::size_t j = 0; j < net.N; ++j) {
      trace.messages.push_back({kMaster, static_cast<int>(j), W, Phase::ModelBroadcast});
    }
    const auto local = train_all(std::vector<ModelParams>(net.N, model), per_node, cfg);
    std::vector<Tensor> flats(net.N);
    for (std::size_t j = 0; j < net.N; ++j) {
      flats[j] = local[j].flatten();
      trace.train_ops.add(batch_size(per_node[j]));
      trace.messages.push_back({static_cast<int>(j), kMaster, W, Phase::ModelUpload});
    }
    const auto subset = select_fastest(net, r);
    std::vector<Tensor> arrived;
    std::vector<double> w;
    for (auto j : subset) {
      arrived.push_back(flats[j]);
      w.push_back(weights[j]);
    }
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (auto& v : w) v /= total;
    trace.aggregate_ops.add(W * arrived.size());
    model = model.unflatten(aggregate_models(arrived, cfg.agg, w));
    record_metrics(trace, model, eval, cfg.loss);
    traces.push_back(std::move(trace));
  }
  return traces;
}

std::vector<RoundTrace> run_scheme(const SchemeConfig& cfg, const NetworkConfig& net, const Batch& dataset,
                                   const Batch& eval, const ModelParams& model_init) {
  switch (cfg.scheme) {
    case Scheme::DlcdSecureTraining:
      return run_dlcd_secure_training(cfg, net, dataset, eval, model_init);
    case Scheme::UncodedDlcd:
      return run_uncoded_dlcd(cfg, net, dataset, eval, model_init);
    case Scheme::DlddSecureAggregation:
      return run_dldd_secure_aggregation(cfg, net, split_rows(dataset, net.N), eval, model_init);
    case Scheme::DlddSecureTraining:
      return run_dldd_secure_training(cfg, net, split_rows(dataset, net.N), eval, model_init);
    case Scheme::UncodedDldd:
      return run_uncoded_dldd(cfg, net, split_rows(dataset, net.N), eval, model_init);
  }
  throw std::logic_error("unhandled scheme");
}

CostModel expected_cost(Scheme scheme, std::size_t N, std::size_t K, std::size_t W, std::size_t L,
                        std::size_t F, std::size_t B, std::size_t epochs_per_round) {
  CostModel c;
  const std::size_t groups = (L + K - 1) / K;
  const std::size_t share_w = (W + K - 1) / K;
  switch (scheme) {
    case Scheme::UncodedDlcd:
      c.messages = 2 * N;
      c.elements = 2 * N * W;
      c.once_messages = N;
      c.once_elements = L * F;
      break;
    case Scheme::DlcdSecureTraining:
      c.messages = 2 * N * groups * epochs_per_round;
      c.elements = N * groups * epochs_per_round * (W + B);
      c.once_messages = N * groups;
      c.once_elements = N * groups * F;
      break;
    case Scheme::UncodedDldd:
    case Scheme::DlddSecureTraining:
      c.messages = 2 * N;
      c.elements = 2 * N * W;
      break;
    case Scheme::DlddSecureAggregation:
      c.messages = 2 * N + N * (N - 1);
      c.elements = N * W + (N * (N - 1) + N) * share_w;
      break;
  }
  return c;
}

}  // namespace pbacc
