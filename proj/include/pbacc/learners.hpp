#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "pbacc/tensor.hpp"

namespace pbacc {

enum class Activation { ReLU, Tanh, Identity };
enum class LossKind { MSE, SoftmaxCrossEntropy, CoxPartialLikelihood };
enum class AggregationRule { FedAvg, CoordMedian };

std::string_view to_string(Activation a);
std::string_view to_string(LossKind l);
std::string_view to_string(AggregationRule r);
Activation activation_from_string(std::string_view name);
LossKind loss_from_string(std::string_view name);
AggregationRule aggregation_from_string(std::string_view name);

struct Layer {
  Tensor weights;  // out x in
  Tensor bias;     // out
};

/// Multi-layer perceptron. `activation` is applied after every layer except
/// the last, whose output is left affine (logits / regression output).
struct ModelParams {
  std::vector<Layer> layers;
  Activation activation = Activation::Tanh;

  [[nodiscard]] std::size_t parameter_count() const;
  [[nodiscard]] std::size_t input_dim() const;
  [[nodiscard]] std::size_t output_dim() const;

  /// W_0, b_0, W_1, b_1, ... concatenated into one rank-1 tensor.
  [[nodiscard]] Tensor flatten() const;
  /// Inverse of flatten, using this model's layer shapes.
  [[nodiscard]] ModelParams unflatten(const Tensor& flat) const;
};

/// Layer widths {in, h1, ..., out}; weights ~ N(0, 1/fan_in), zero bias.
ModelParams make_mlp(std::span<const std::size_t> widths, Activation activation,
                     std::uint64_t seed);

/// Same layer shapes, all zero.
ModelParams zeros_like(const ModelParams& p);

struct Batch {
  Tensor inputs;   // batch x features
  Tensor targets;  // MSE: batch x out; softmax: batch (class ids); Cox: batch x 2 (time, event)
};

[[nodiscard]] std::size_t batch_size(const Batch& b);
Batch slice_rows(const Batch& b, std::size_t begin, std::size_t end);

Tensor forward(const ModelParams& params, const Tensor& inputs);

struct OutputLoss {
  double loss = 0.0;
  Tensor grad;  // d loss / d outputs, same shape as outputs
};

/// Loss of given model outputs and its gradient with respect to them.
OutputLoss output_loss(const Tensor& outputs, const Tensor& targets, LossKind loss);

/// Reverse pass: gradient of the loss w.r.t. the parameters given
/// d loss / d outputs at `inputs`.
ModelParams backward(const ModelParams& params, const Tensor& inputs, const Tensor& output_grad);

struct LossAndGrad {
  double loss = 0.0;
  ModelParams grads;
};

LossAndGrad loss_and_grad(const ModelParams& params, const Batch& batch, LossKind loss);

double evaluate_loss(const ModelParams& params, const Batch& batch, LossKind loss);

/// Fraction of rows whose arg-max output equals the class id target.
double accuracy(const ModelParams& params, const Batch& batch);

ModelParams sgd_step(const ModelParams& params, const ModelParams& grads, double lr);

/// `epochs` passes of mini-batch SGD in row order.
ModelParams train_local(ModelParams params, const Batch& data, LossKind loss, double lr,
                        std::size_t batch_size, std::size_t epochs);

/// FedAvg: weighted mean (uniform when weights is empty). CoordMedian:
/// coordinate-wise median (mean of the two middle values for even counts).
Tensor aggregate(std::span<const Tensor> models, AggregationRule rule,
                 std::span<const double> weights = {});

/// Two Gaussian clusters at +/- separation/2 along a fixed unit direction
/// (a function of `features` only), labels 0/1 (balanced, shuffled).
Batch make_two_clusters(std::size_t n, std::size_t features, double separation,
                        std::uint64_t seed);

/// Linear-hazard survival data: time ~ Exp(exp(x.beta)), roughly 30% censored.
/// beta depends on `features` only.
Batch make_survival_data(std::size_t n, std::size_t features, std::uint64_t seed);

}  // namespace pbacc
