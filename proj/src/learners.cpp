#include "pbacc/learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace pbacc {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::ReLU: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Identity: return "identity";
  }
  return "unknown";
}

std::string_view to_string(LossKind l) {
  switch (l) {
    case LossKind::MSE: return "mse";
    case LossKind::SoftmaxCrossEntropy: return "softmax-ce";
    case LossKind::CoxPartialLikelihood: return "cox";
  }
  return "unknown";
}

std::string_view to_string(AggregationRule r) {
  switch (r) {
    case AggregationRule::FedAvg: return "fedavg";
    case AggregationRule::CoordMedian: return "median";
  }
  return "unknown";
}

Activation activation_from_string(std::string_view name) {
  if (name == "relu") return Activation::ReLU;
  if (name == "tanh") return Activation::Tanh;
  if (name == "identity") return Activation::Identity;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

LossKind loss_from_string(std::string_view name) {
  if (name == "mse") return LossKind::MSE;
  if (name == "softmax-ce" || name == "cross-entropy") return LossKind::SoftmaxCrossEntropy;
  if (name == "cox") return LossKind::CoxPartialLikelihood;
  throw std::invalid_argument("unknown loss '" + std::string(name) + "'");
}

AggregationRule aggregation_from_string(std::string_view name) {
  if (name == "fedavg") return AggregationRule::FedAvg;
  if (name == "median" || name == "fedmedian") return AggregationRule::CoordMedian;
  throw std::invalid_argument("unknown aggregation rule '" + std::string(name) + "'");
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weights.size() + l.bias.size();
  return n;
}

std::size_t ModelParams::input_dim() const { return layers.front().weights.extent(1); }
std::size_t ModelParams::output_dim() const { return layers.back().weights.extent(0); }

Tensor ModelParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const auto& l : layers) {
    flat.insert(flat.end(), l.weights.data().begin(), l.weights.data().end());
    flat.insert(flat.end(), l.bias.data().begin(), l.bias.data().end());
  }
  return Tensor::vector(std::move(flat));
}

ModelParams ModelParams::unflatten(const Tensor& flat) const {
  if (flat.size() != parameter_count()) {
    throw std::invalid_argument("flat parameter length " + std::to_string(flat.size()) +
                                " != model size " + std::to_string(parameter_count()));
  }
  ModelParams out = *this;
  std::size_t pos = 0;
  for (auto& l : out.layers) {
    for (auto& v : l.weights.values()) v = flat[pos++];
    for (auto& v : l.bias.values()) v = flat[pos++];
  }
  return out;
}

ModelParams make_mlp(std::span<const std::size_t> widths, Activation activation,
                     std::uint64_t seed) {
  if (widths.size() < 2) throw std::invalid_argument("an MLP needs at least input and output widths");
  std::mt19937_64 rng(seed);
  ModelParams p;
  p.activation = activation;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const auto in = widths[i];
    const auto out = widths[i + 1];
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
    Layer l{Tensor({out, in}), Tensor({out})};
    for (auto& v : l.weights.values()) v = normal(rng);
    p.layers.push_back(std::move(l));
  }
  return p;
}

ModelParams zeros_like(const ModelParams& p) {
  ModelParams z = p;
  for (auto& l : z.layers) {
    std::fill(l.weights.values().begin(), l.weights.values().end(), 0.0);
    std::fill(l.bias.values().begin(), l.bias.values().end(), 0.0);
  }
  return z;
}

std::size_t batch_size(const Batch& b) { return b.inputs.extent(0); }

Batch slice_rows(const Batch& b, std::size_t begin, std::size_t end) {
  auto rows = [&](const Tensor& t) {
    const std::size_t width = t.size() / t.extent(0);
    auto shape = t.shape();
    shape[0] = end - begin;
    std::vector<double> data(t.data().begin() + static_cast<std::ptrdiff_t>(begin * width),
                             t.data().begin() + static_cast<std::ptrdiff_t>(end * width));
    return Tensor(std::move(shape), std::move(data));
  };
  if (begin >= end || end > batch_size(b)) throw std::invalid_argument("bad row range");
  return Batch{rows(b.inputs), rows(b.targets)};
}

namespace {

double activate(Activation a, double v) {
  switch (a) {
    case Activation::ReLU: return v > 0.0 ? v : 0.0;
    case Activation::Tanh: return std::tanh(v);
    case Activation::Identity: return v;
  }
  return v;
}

// Derivative expressed through the pre-activation value.
double activate_grad(Activation a, double pre) {
  switch (a) {
    case Activation::ReLU: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh: {
      const double t = std::tanh(pre);
      return 1.0 - t * t;
    }
    case Activation::Identity: return 1.0;
  }
  return 1.0;
}

// out (n x o) = in (n x i) * W^T (i x o) + b
Tensor affine(const Layer& l, const Tensor& in) {
  const std::size_t n = in.extent(0);
  const std::size_t i_dim = l.weights.extent(1);
  const std::size_t o_dim = l.weights.extent(0);
  if (in.rank() != 2 || in.extent(1) != i_dim) {
    throw std::invalid_argument("layer expects " + std::to_string(i_dim) + " input features");
  }
  Tensor out({n, o_dim});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t o = 0; o < o_dim; ++o) {
      double acc = l.bias[o];
      for (std::size_t i = 0; i < i_dim; ++i) acc += in.at(r, i) * l.weights.at(o, i);
      out.at(r, o) = acc;
    }
  }
  return out;
}

struct Tape {
  std::vector<Tensor> inputs;  // input to each layer
  std::vector<Tensor> pre;     // pre-activation output of each layer
};

Tensor run_forward(const ModelParams& params, const Tensor& inputs, Tape* tape) {
  if (params.layers.empty()) throw std::invalid_argument("model has no layers");
  Tensor x = inputs;
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    Tensor z = affine(params.layers[li], x);
    if (tape) {
      tape->inputs.push_back(x);
      tape->pre.push_back(z);
    }
    if (li + 1 < params.layers.size()) {
      for (auto& v : z.values()) v = activate(params.activation, v);
    }
    x = std::move(z);
  }
  return x;
}

std::size_t class_of(const Tensor& targets, std::size_t row) {
  const std::size_t width = targets.size() / targets.extent(0);
  if (width != 1) throw std::invalid_argument("softmax targets must hold one class id per row");
  const double v = targets[row];
  if (v < 0.0 || v != std::floor(v)) throw std::invalid_argument("class ids must be non-negative integers");
  return static_cast<std::size_t>(v);
}

}  // namespace

Tensor forward(const ModelParams& params, const Tensor& inputs) {
  return run_forward(params, inputs, nullptr);
}

OutputLoss output_loss(const Tensor& outputs, const Tensor& targets, LossKind loss) {
  if (outputs.rank() != 2) throw std::invalid_argument("outputs must be batch x dim");
  const std::size_t n = outputs.extent(0);
  const std::size_t m = outputs.extent(1);
  if (targets.extent(0) != n) throw std::invalid_argument("targets and outputs disagree on batch size");
  OutputLoss res{0.0, Tensor(outputs.shape())};
  switch (loss) {
    case LossKind::MSE: {
      if (targets.size() != outputs.size()) throw std::invalid_argument("MSE targets must match outputs");
      const double scale = 1.0 / static_cast<double>(n * m);
      for (std::size_t i = 0; i < outputs.size(); ++i) {
        const double d = outputs[i] - targets[i];
        res.loss += d * d * scale;
        res.grad[i] = 2.0 * d * scale;
      }
      break;
    }
    case LossKind::SoftmaxCrossEntropy: {
      const double scale = 1.0 / static_cast<double>(n);
      for (std::size_t r = 0; r < n; ++r) {
        const std::size_t y = class_of(targets, r);
        if (y >= m) throw std::invalid_argument("class id exceeds output width");
        double mx = outputs.at(r, 0);
        for (std::size_t c = 1; c < m; ++c) mx = std::max(mx, outputs.at(r, c));
        double z = 0.0;
        for (std::size_t c = 0; c < m; ++c) z += std::exp(outputs.at(r, c) - mx);
        const double log_z = mx + std::log(z);
        res.loss += (log_z - outputs.at(r, y)) * scale;
        for (std::size_t c = 0; c < m; ++c) {
          const double p = std::exp(outputs.at(r, c) - log_z);
          res.grad.at(r, c) = (p - (c == y ? 1.0 : 0.0)) * scale;
        }
      }
      break;
    }
    case LossKind::CoxPartialLikelihood: {
      if (m != 1) throw std::invalid_argument("Cox loss needs a single risk-score output");
      if (targets.rank() != 2 || targets.extent(1) != 2) {
        throw std::invalid_argument("Cox loss needs (time, event) targets");
      }
      std::size_t events = 0;
      double mx = outputs[0];
      for (std::size_t r = 0; r < n; ++r) {
        if (targets.at(r, 1) != 0.0) ++events;
        mx = std::max(mx, outputs[r]);
      }
      if (events == 0) break;
      const double scale = 1.0 / static_cast<double>(events);
      std::vector<double> e(n);
      for (std::size_t r = 0; r < n; ++r) e[r] = std::exp(outputs[r] - mx);
      // Breslow risk sets: everyone still at risk at an event time.
      for (std::size_t i = 0; i < n; ++i) {
        if (targets.at(i, 1) == 0.0) continue;
        const double ti = targets.at(i, 0);
        double risk = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          if (targets.at(j, 0) >= ti) risk += e[j];
        }
        res.loss -= (outputs[i] - mx - std::log(risk)) * scale;
        res.grad[i] -= scale;
        for (std::size_t j = 0; j < n; ++j) {
          if (targets.at(j, 0) >= ti) res.grad[j] += scale * e[j] / risk;
        }
      }
      break;
    }
  }
  return res;
}

ModelParams backward(const ModelParams& params, const Tensor& inputs, const Tensor& output_grad) {
  Tape tape;
  const Tensor out = run_forward(params, inputs, &tape);
  if (!out.same_shape(output_grad)) throw std::invalid_argument("output gradient shape mismatch");
  ModelParams grads = zeros_like(params);
  Tensor delta = output_grad;  // d loss / d pre-activation of the current layer
  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const auto& layer = params.layers[li];
    const Tensor& x = tape.inputs[li];
    const std::size_t n = x.extent(0);
    const std::size_t i_dim = layer.weights.extent(1);
    const std::size_t o_dim = layer.weights.extent(0);
    auto& g = grads.layers[li];
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t o = 0; o < o_dim; ++o) {
        const double d = delta.at(r, o);
        g.bias[o] += d;
        for (std::size_t i = 0; i < i_dim; ++i) g.weights.at(o, i) += d * x.at(r, i);
      }
    }
    if (li == 0) break;
    Tensor prev({n, i_dim});
    const Tensor& pre = tape.pre[li - 1];
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t i = 0; i < i_dim; ++i) {
        double acc = 0.0;
        for (std::size_t o = 0; o < o_dim; ++o) acc += delta.at(r, o) * layer.weights.at(o, i);
        prev.at(r, i) = acc * activate_grad(params.activation, pre.at(r, i));
      }
    }
    delta = std::move(prev);
  }
  return grads;
}

LossAndGrad loss_and_grad(const ModelParams& params, const Batch& batch, LossKind loss) {
  const Tensor out = forward(params, batch.inputs);
  auto ol = output_loss(out, batch.targets, loss);
  return {ol.loss, backward(params, batch.inputs, ol.grad)};
}

double evaluate_loss(const ModelParams& params, const Batch& batch, LossKind loss) {
  return output_loss(forward(params, batch.inputs), batch.targets, loss).loss;
}

double accuracy(const ModelParams& params, const Batch& batch) {
  const Tensor out = forward(params, batch.inputs);
  const std::size_t n = out.extent(0);
  const std::size_t m = out.extent(1);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < m; ++c) {
      if (out.at(r, c) > out.at(r, best)) best = c;
    }
    if (best == class_of(batch.targets, r)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

ModelParams sgd_step(const ModelParams& params, const ModelParams& grads, double lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be > 0");
  if (grads.parameter_count() != params.parameter_count()) {
    throw std::invalid_argument("gradient shape does not match parameters");
  }
  ModelParams out = params;
  for (std::size_t li = 0; li < out.layers.size(); ++li) {
    auto& l = out.layers[li];
    const auto& g = grads.layers[li];
    for (std::size_t i = 0; i < l.weights.size(); ++i) l.weights[i] -= lr * g.weights[i];
    for (std::size_t i = 0; i < l.bias.size(); ++i) l.bias[i] -= lr * g.bias[i];
  }
  return out;
}

ModelParams train_local(ModelParams params, const Batch& data, LossKind loss, double lr,
                        std::size_t bs, std::size_t epochs) {
  if (bs == 0) throw std::invalid_argument("batch size must be >= 1");
  const std::size_t n = batch_size(data);
  for (std::size_t e = 0; e < epochs; ++e) {
    for (std::size_t start = 0; start < n; start += bs) {
      const auto mini = slice_rows(data, start, std::min(n, start + bs));
      params = sgd_step(params, loss_and_grad(params, mini, loss).grads, lr);
    }
  }
  return params;
}

Tensor aggregate(std::span<const Tensor> models, AggregationRule rule,
                 std::span<const double> weights) {
  if (models.empty()) throw std::invalid_argument("aggregate needs at least one model");
  for (const auto& m : models) {
    if (m.size() != models.front().size()) throw std::invalid_argument("models differ in length");
  }
  Tensor out(models.front().shape(), models.front().coding_axis());
  const std::size_t len = out.size();
  if (rule == AggregationRule::FedAvg) {
    if (!weights.empty()) {
      if (weights.size() != models.size()) throw std::invalid_argument("one weight per model required");
      const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
      if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("aggregation weights must sum to 1");
    }
    const double uniform = 1.0 / static_cast<double>(models.size());
    for (std::size_t m = 0; m < models.size(); ++m) {
      const double w = weights.empty() ? uniform : weights[m];
      const auto src = models[m].data();
      for (std::size_t i = 0; i < len; ++i) out[i] += w * src[i];
    }
    return out;
  }
  std::vector<double> column(models.size());
  const std::size_t mid = models.size() / 2;
  for (std::size_t i = 0; i < len; ++i) {
    for (std::size_t m = 0; m < models.size(); ++m) column[m] = models[m][i];
    std::nth_element(column.begin(), column.begin() + static_cast<std::ptrdiff_t>(mid), column.end());
    double med = column[mid];
    if (models.size() % 2 == 0) {
      const double lower = *std::max_element(column.begin(), column.begin() + static_cast<std::ptrdiff_t>(mid));
      med = 0.5 * (med + lower);
    }
    out[i] = med;
  }
  return out;
}

namespace {
// The cluster direction and hazard coefficients depend only on the feature
// count, so train and eval sets drawn with different seeds share a distribution.
constexpr std::uint64_t kDistributionSeed = 0x5eed;
}  // namespace

Batch make_two_clusters(std::size_t n, std::size_t features, double separation,
                        std::uint64_t seed) {
  if (n == 0 || features == 0) throw std::invalid_argument("empty dataset requested");
  std::mt19937_64 shape(kDistributionSeed);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> dir(features);
  double norm = 0.0;
  for (auto& d : dir) {
    d = normal(shape);
    norm += d * d;
  }
  norm = std::sqrt(norm);
  for (auto& d : dir) d /= norm;

  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i % 2;
  std::shuffle(labels.begin(), labels.end(), rng);

  Tensor x({n, features});
  Tensor y({n});
  for (std::size_t i = 0; i < n; ++i) {
    const double sign = labels[i] == 1 ? 0.5 : -0.5;
    for (std::size_t f = 0; f < features; ++f) {
      x.at(i, f) = sign * separation * dir[f] + normal(rng);
    }
    y[i] = static_cast<double>(labels[i]);
  }
  return {std::move(x), std::move(y)};
}

Batch make_survival_data(std::size_t n, std::size_t features, std::uint64_t seed) {
  if (n == 0 || features == 0) throw std::invalid_argument("empty dataset requested");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::mt19937_64 shape(kDistributionSeed);
  std::vector<double> beta(features);
  for (auto& b : beta) b = normal(shape);
  Tensor x({n, features});
  Tensor y({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    double eta = 0.0;
    for (std::size_t f = 0; f < features; ++f) {
      x.at(i, f) = normal(rng);
      eta += 0.5 * beta[f] * x.at(i, f);
    }
    const double event_time = -std::log(1.0 - unif(rng)) / std::exp(eta);
    const bool censored = unif(rng) < 0.3;
    y.at(i, 0) = censored ? event_time * unif(rng) : event_time;
    y.at(i, 1) = censored ? 0.0 : 1.0;
  }
  return {std::move(x), std::move(y)};
}

}  // namespace pbacc
