#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "pbacc/codec.hpp"
#include "pbacc/interpolation.hpp"
#include "pbacc/learners.hpp"
#include "pbacc/privacy.hpp"
#include "pbacc/tensor.hpp"

namespace pbacc {

struct StragglerModel {
  enum class Kind { None, DropSlowest, RandomDelay };
  Kind kind = Kind::None;
  std::size_t count = 0;   // DropSlowest
  std::uint64_t seed = 0;  // RandomDelay
  std::size_t keep_n = 0;  // RandomDelay
};

std::string_view to_string(StragglerModel::Kind k);

struct NetworkConfig {
  std::size_t N = 0;
  StragglerModel straggler;
  std::uint64_t seed = 0;
};

void validate(const NetworkConfig& net);

/// Indices (ascending) of the workers whose results reach the decoder in
/// this round. Worker latencies are exponential draws from a generator seeded
/// by (seed, round, step); the fastest survive. `step` distinguishes several
/// decodes within one round.
std::vector<std::size_t> select_fastest(const NetworkConfig& net, std::size_t round_index,
                                        std::size_t step = 0);

/// Master is node id -1; workers are 0..N-1.
inline constexpr int kMaster = -1;

enum class Phase {
  DatasetShare,     // one-off encoded (or split) dataset, master -> worker
  ModelBroadcast,   // plaintext global model, master -> worker
  InferenceResult,  // model output on an encoded batch, worker -> master
  ShareExchange,    // encoded local model, worker -> worker
  AggregateUpload,  // aggregated shares, worker -> master
  EncodedModel,     // encoded global model, master -> worker
  TrainedShare,     // locally trained encoded model, worker -> master
  ModelUpload,      // plaintext local model, worker -> master
};

std::string_view to_string(Phase p);

struct Message {
  int from = kMaster;
  int to = kMaster;
  std::size_t elements = 0;
  Phase phase = Phase::ModelBroadcast;
};

struct OpCounter {
  std::size_t count = 0;
  std::size_t elements = 0;

  void add(std::size_t elems) {
    ++count;
    elements += elems;
  }
};

struct RoundTrace {
  std::size_t round = 0;
  std::vector<Message> messages;
  OpCounter encode_ops;
  OpCounter decode_ops;
  OpCounter train_ops;      // local training / inference calls at workers
  OpCounter aggregate_ops;  // agg() evaluations (plaintext or coded)
  Tensor decoded_model;     // flattened global model after the round
  double metric = 0.0;      // loss on the evaluation set
  double accuracy = 0.0;    // classification accuracy (0 for non-classification losses)
  /// Scheme-specific distance to the plaintext computation, as
  /// max|x - ref| / max|ref|: decoded vs plaintext agg (secure aggregation),
  /// decoded vs FedAvg of plaintext-trained models (DLDD secure training),
  /// worst decoded batch output vs plaintext output (DLCD). 0 for uncoded.
  double reference_gap = 0.0;

  [[nodiscard]] std::size_t message_count() const { return messages.size(); }
  [[nodiscard]] std::size_t message_count(Phase p) const;
  [[nodiscard]] std::size_t element_volume() const;
  [[nodiscard]] std::size_t element_volume(Phase p) const;
};

enum class Scheme { DlcdSecureTraining, DlddSecureAggregation, DlddSecureTraining, UncodedDlcd, UncodedDldd };

std::string_view to_string(Scheme s);
Scheme scheme_from_string(std::string_view name);
[[nodiscard]] bool is_secure(Scheme s);
[[nodiscard]] bool is_decentralized(Scheme s);

struct SchemeConfig {
  Scheme scheme = Scheme::UncodedDldd;
  CodingPlan plan;
  PrivacyConfig privacy;  // sigma_n drives the noise; T must equal plan.T
  double lr = 0.05;
  std::size_t batch_size = 10;  // local mini-batch (DLCD secure training steps on groups of K)
  std::size_t epochs_per_round = 1;
  std::size_t rounds = 10;
  LossKind loss = LossKind::SoftmaxCrossEntropy;
  AggregationRule agg = AggregationRule::FedAvg;
  std::uint64_t seed = 0;  // root of the per-round noise streams
};

void validate(const SchemeConfig& cfg, const NetworkConfig& net);

/// Master-owned dataset; workers see only encoded rows. Every epoch the
/// master walks the encoded batches (groups of K rows): it broadcasts the
/// model, workers run forward() on their share of the batch, and the master
/// decodes the K outputs, takes the loss gradient at the decoded outputs,
/// back-propagates it through its own plaintext copy of the model and steps.
/// The dataset is encoded once; its N x (L/K) share messages are part of round 0.
std::vector<RoundTrace> run_dlcd_secure_training(const SchemeConfig& cfg, const NetworkConfig& net,
                                                 const Batch& dataset, const Batch& eval,
                                                 const ModelParams& model_init);

/// Local plaintext training, then every node encodes its flattened model and
/// sends share j to node j; node j aggregates the N shares it holds with agg()
/// and uploads the result; the master decodes the global model.
std::vector<RoundTrace> run_dldd_secure_aggregation(const SchemeConfig& cfg, const NetworkConfig& net,
                                                    std::span<const Batch> per_node, const Batch& eval,
                                                    const ModelParams& model_init);

/// The master encodes the global model at a single data node (K = 1); node j
/// trains directly on u(beta_j) with its own data and returns the result; the
/// decode at alpha_0 is the new global model.
std::vector<RoundTrace> run_dldd_secure_training(const SchemeConfig& cfg, const NetworkConfig& net,
                                                 std::span<const Batch> per_node, const Batch& eval,
                                                 const ModelParams& model_init);

/// Dataset split into N contiguous parts once; each round broadcast, local
/// training on the part, upload, agg().
std::vector<RoundTrace> run_uncoded_dlcd(const SchemeConfig& cfg, const NetworkConfig& net,
                                         const Batch& dataset, const Batch& eval,
                                         const ModelParams& model_init);

/// Plain federated learning: broadcast, local training, upload, agg().
std::vector<RoundTrace> run_uncoded_dldd(const SchemeConfig& cfg, const NetworkConfig& net,
                                         std::span<const Batch> per_node, const Batch& eval,
                                         const ModelParams& model_init);

/// Plaintext single-owner training with the same schedule as DLCD secure
/// training (steps on consecutive groups of K rows). Used as the uncoded
/// reference trajectory for that scheme.
std::vector<RoundTrace> run_centralized_reference(const SchemeConfig& cfg, const Batch& dataset,
                                                  const Batch& eval, const ModelParams& model_init);

/// Dispatch on cfg.scheme. Centralized schemes use `dataset`; decentralized
/// ones split it into N contiguous parts.
std::vector<RoundTrace> run_scheme(const SchemeConfig& cfg, const NetworkConfig& net,
                                   const Batch& dataset, const Batch& eval,
                                   const ModelParams& model_init);

/// N contiguous near-equal row blocks.
std::vector<Batch> split_rows(const Batch& data, std::size_t parts);

/// Closed-form per-round message counts and element volumes.
struct CostModel {
  std::size_t messages = 0;
  std::size_t elements = 0;
  std::size_t once_messages = 0;  // one-off dataset sharing (DLCD schemes)
  std::size_t once_elements = 0;
};

/// W = model size, L = dataset rows, F = features per row, B = model output
/// width. Matches the per-round communication table of the schemes; the
/// element volume counts the plaintext model broadcast of secure aggregation
/// at its real size W.
CostModel expected_cost(Scheme scheme, std::size_t N, std::size_t K, std::size_t W, std::size_t L,
                        std::size_t F, std::size_t B, std::size_t epochs_per_round = 1);

}  // namespace pbacc
