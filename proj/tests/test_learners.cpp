#include <doctest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "oracle.hpp"
#include "pbacc/learners.hpp"

using namespace pbacc;

namespace {

ModelParams two_layer_relu() {
  ModelParams p;
  p.activation = Activation::ReLU;
  p.layers.push_back({Tensor::matrix(3, 2, {0.5, -1.0, 2.0, 0.25, -0.75, 1.5}), Tensor::vector({0.1, -0.2, 0.3})});
  p.layers.push_back({Tensor::matrix(2, 3, {1.0, -0.5, 0.25, -2.0, 0.75, 1.25}), Tensor::vector({0.05, -0.1})});
  return p;
}

}  // namespace

TEST_SUITE("learners") {

TEST_CASE("forward trivial cases") {
  const std::vector<std::size_t> w{3, 4, 2};
  const auto z = zeros_like(make_mlp(w, Activation::Tanh, 1));
  const auto x = Tensor::matrix(2, 3, {1, 2, 3, -4, 5, -6});
  const auto out = forward(z, x);
  CHECK(out.shape() == std::vector<std::size_t>{2, 2});
  for (double v : out.data()) CHECK(v == 0.0);

  ModelParams id;
  id.activation = Activation::Identity;
  id.layers.push_back({Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}), Tensor::vector({0, 0, 0})});
  CHECK(forward(id, x) == x);

  CHECK_THROWS_AS(forward(id, Tensor::matrix(1, 2, {1, 2})), std::invalid_argument);
}

TEST_CASE("two-layer relu forward matches a hand evaluation") {
  const auto p = two_layer_relu();
  const auto x = Tensor::matrix(2, 2, {1.0, 2.0, -0.5, 0.3});
  // Extended-precision evaluation of relu(W1 x + b1), then W2 h + b2.
  const auto out = forward(p, x);
  for (std::size_t r = 0; r < 2; ++r) {
    std::vector<oracle::big> h(3);
    for (std::size_t i = 0; i < 3; ++i) {
      oracle::big acc = p.layers[0].bias[i];
      for (std::size_t k = 0; k < 2; ++k) acc += oracle::big(p.layers[0].weights.at(i, k)) * x.at(r, k);
      h[i] = acc > 0 ? acc : oracle::big(0);
    }
    for (std::size_t o = 0; o < 2; ++o) {
      oracle::big acc = p.layers[1].bias[o];
      for (std::size_t i = 0; i < 3; ++i) acc += oracle::big(p.layers[1].weights.at(o, i)) * h[i];
      CHECK(out.at(r, o) == doctest::Approx(static_cast<double>(acc)).epsilon(1e-15));
    }
  }
  // First row by hand: h = relu(-1.4, 2.3, 2.55) = (0, 2.3, 2.55).
  CHECK(out.at(0, 0) == doctest::Approx(0.05 - 0.5 * 2.3 + 0.25 * 2.55));
  CHECK(out.at(0, 1) == doctest::Approx(-0.1 + 0.75 * 2.3 + 1.25 * 2.55));
}

TEST_CASE("loss closed forms") {
  const auto outputs = Tensor::matrix(2, 3, {0.5, -1.0, 2.0, 0.0, 0.25, 1.0});
  const auto mse = output_loss(outputs, outputs, LossKind::MSE);
  CHECK(mse.loss == 0.0);
  for (double g : mse.grad.data()) CHECK(g == 0.0);

  const auto uniform = Tensor::matrix(3, 4, std::vector<double>(12, 0.7));
  const auto ce = output_loss(uniform, Tensor::vector({0, 3, 1}), LossKind::SoftmaxCrossEntropy);
  CHECK(ce.loss == doctest::Approx(std::log(4.0)).epsilon(1e-15));

  const std::vector<std::size_t> w{2, 3, 1};
  const auto net = make_mlp(w, Activation::Tanh, 4);
  Batch b{Tensor::matrix(2, 2, {1, 2, 3, 4}), Tensor::matrix(2, 1, {1.0, 2.0})};
  const auto lg = loss_and_grad(net, b, LossKind::MSE);
  CHECK(lg.grads.parameter_count() == net.parameter_count());
  CHECK_THROWS_AS(loss_and_grad(net, Batch{b.inputs, Tensor::matrix(2, 1, {1.0, 2.0})}, LossKind::CoxPartialLikelihood),
                  std::invalid_argument);
  CHECK_THROWS_AS(output_loss(uniform, Tensor::vector({0, 4, 1}), LossKind::SoftmaxCrossEntropy),
                  std::invalid_argument);
  CHECK_THROWS_AS(output_loss(uniform, Tensor::vector({0, 1.5, 1}), LossKind::SoftmaxCrossEntropy),
                  std::invalid_argument);
}

TEST_CASE("analytic gradients agree with central differences") {
  double worst = 0.0;
  for (std::uint64_t i = 0; i < 60; ++i) {
    const auto inst = gradcheck::random_instance(1000 + i);
    const double e = gradcheck::relative_error(inst.params, inst.batch, inst.loss);
    worst = std::max(worst, e);
    CHECK(e <= 1e-5);
  }
  MESSAGE("worst relative gradient error " << worst);
}

TEST_CASE("gradient check on a two-layer relu net away from kinks") {
  const auto p = two_layer_relu();
  Batch b{Tensor::matrix(2, 2, {1.0, 2.0, -0.5, 0.3}), Tensor::matrix(2, 2, {0.3, -0.2, 1.0, 0.5})};
  CHECK(gradcheck::relative_error(p, b, LossKind::MSE) <= 1e-5);
}

TEST_CASE("sgd step") {
  const std::vector<std::size_t> w{3, 2};
  const auto p = make_mlp(w, Activation::Identity, 2);
  const auto zero = zeros_like(p);
  CHECK(sgd_step(p, zero, 0.5).flatten() == p.flatten());

  const auto g = make_mlp(w, Activation::Identity, 3);
  const auto neg = sgd_step(zero, g, 1.0).flatten();
  const auto gf = g.flatten();
  for (std::size_t i = 0; i < gf.size(); ++i) CHECK(neg[i] == -gf[i]);

  const auto h = make_mlp(w, Activation::Identity, 4);
  const auto twice = sgd_step(sgd_step(p, g, 0.1), h, 0.1).flatten();
  const auto once = sgd_step(p, g.unflatten(g.flatten() + h.flatten()), 0.1).flatten();
  CHECK(max_abs_diff(twice, once) <= 1e-15);

  CHECK_THROWS_AS(sgd_step(p, g, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(sgd_step(p, g, -1.0), std::invalid_argument);
}

TEST_CASE("flatten and unflatten are exact inverses") {
  const std::vector<std::size_t> w{5, 7, 3, 2};
  const auto p = make_mlp(w, Activation::Tanh, 6);
  CHECK(p.parameter_count() == 5 * 7 + 7 + 7 * 3 + 3 + 3 * 2 + 2);
  CHECK(p.input_dim() == 5);
  CHECK(p.output_dim() == 2);
  const auto flat = p.flatten();
  CHECK(flat.size() == p.parameter_count());
  const auto q = p.unflatten(flat);
  CHECK(q.flatten() == flat);
  CHECK_THROWS_AS(static_cast<void>(p.unflatten(Tensor::vector({1.0}))), std::invalid_argument);
}

TEST_CASE("aggregation rules") {
  const auto v = Tensor::vector({1.0, -2.0, 3.5});
  for (auto rule : {AggregationRule::FedAvg, AggregationRule::CoordMedian}) {
    const std::vector<Tensor> one{v};
    CHECK(aggregate(one, rule) == v);
  }
  const std::vector<Tensor> pair{v, -1.0 * v};
  const auto avg = aggregate(pair, AggregationRule::FedAvg);
  for (double x : avg.data()) CHECK(x == 0.0);

  const std::vector<Tensor> three{Tensor::vector({1, 9, 5}), Tensor::vector({3, 2, 7}), Tensor::vector({2, 4, 6})};
  CHECK(aggregate(three, AggregationRule::CoordMedian) == Tensor::vector({2, 4, 6}));
  const std::vector<Tensor> four{Tensor::vector({1}), Tensor::vector({4}), Tensor::vector({2}), Tensor::vector({10})};
  CHECK(aggregate(four, AggregationRule::CoordMedian)[0] == 3.0);

  const std::vector<double> wts{0.25, 0.75};
  CHECK(aggregate(pair, AggregationRule::FedAvg, wts)[0] == doctest::Approx(-0.5));
  const std::vector<double> bad{0.5, 0.6};
  CHECK_THROWS_AS(aggregate(pair, AggregationRule::FedAvg, bad), std::invalid_argument);
  CHECK_THROWS_AS(aggregate(std::vector<Tensor>{}, AggregationRule::FedAvg), std::invalid_argument);
  const std::vector<Tensor> ragged{v, Tensor::vector({1.0})};
  CHECK_THROWS_AS(aggregate(ragged, AggregationRule::CoordMedian), std::invalid_argument);
}

TEST_CASE("FedAvg is linear") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd;
  std::vector<Tensor> M, Mp, mix;
  for (int i = 0; i < 5; ++i) {
    std::vector<double> a(6), b(6);
    for (auto& x : a) x = nd(rng);
    for (auto& x : b) x = nd(rng);
    M.push_back(Tensor::vector(a));
    Mp.push_back(Tensor::vector(b));
    mix.push_back(2.5 * M.back() + (-0.75) * Mp.back());
  }
  const std::vector<double> w{0.1, 0.2, 0.3, 0.15, 0.25};
  const auto lhs = aggregate(mix, AggregationRule::FedAvg, w);
  const auto rhs = 2.5 * aggregate(M, AggregationRule::FedAvg, w) + (-0.75) * aggregate(Mp, AggregationRule::FedAvg, w);
  CHECK(max_abs_diff(lhs, rhs) <= 1e-14);
}

TEST_CASE("names round-trip") {
  for (auto a : {Activation::ReLU, Activation::Tanh, Activation::Identity}) CHECK(activation_from_string(to_string(a)) == a);
  for (auto l : {LossKind::MSE, LossKind::SoftmaxCrossEntropy, LossKind::CoxPartialLikelihood}) {
    CHECK(loss_from_string(to_string(l)) == l);
  }
  for (auto r : {AggregationRule::FedAvg, AggregationRule::CoordMedian}) CHECK(aggregation_from_string(to_string(r)) == r);
  CHECK_THROWS(activation_from_string("gelu"));
  CHECK_THROWS(loss_from_string("hinge"));
  CHECK_THROWS(aggregation_from_string("trimmed-mean"));
}

TEST_CASE("synthetic data") {
  const auto a = make_two_clusters(100, 3, 4.0, 5), b = make_two_clusters(100, 3, 4.0, 5);
  CHECK(a.inputs == b.inputs);
  CHECK(a.targets == b.targets);
  double ones = 0.0;
  for (double v : a.targets.data()) ones += v;
  CHECK(ones == 50.0);

  const auto s = make_survival_data(200, 4, 9);
  CHECK(s.targets.shape() == std::vector<std::size_t>{200, 2});
  double events = 0.0;
  for (std::size_t r = 0; r < 200; ++r) {
    CHECK(s.targets.at(r, 0) > 0.0);
    events += s.targets.at(r, 1);
  }
  CHECK(events > 100.0);
  CHECK(events < 180.0);
  CHECK_THROWS(make_two_clusters(0, 3, 1.0, 1));
}

TEST_CASE("local training lowers the loss") {
  const auto data = make_two_clusters(200, 4, 3.0, 12);
  const std::vector<std::size_t> w{4, 6, 2};
  const auto p = make_mlp(w, Activation::Tanh, 13);
  const auto trained = train_local(p, data, LossKind::SoftmaxCrossEntropy, 0.1, 10, 5);
  CHECK(evaluate_loss(trained, data, LossKind::SoftmaxCrossEntropy) <
        evaluate_loss(p, data, LossKind::SoftmaxCrossEntropy));
  CHECK(accuracy(trained, data) > 0.85);

  const auto surv = make_survival_data(150, 3, 14);
  const std::vector<std::size_t> wc{3, 1};
  const auto cox = make_mlp(wc, Activation::Identity, 15);
  const auto fitted = train_local(cox, surv, LossKind::CoxPartialLikelihood, 0.05, 150, 50);
  CHECK(evaluate_loss(fitted, surv, LossKind::CoxPartialLikelihood) <
        evaluate_loss(cox, surv, LossKind::CoxPartialLikelihood));
  CHECK_THROWS_AS(train_local(p, data, LossKind::SoftmaxCrossEntropy, 0.1, 0, 1), std::invalid_argument);
}

TEST_CASE("row slicing") {
  const auto d = make_two_clusters(10, 2, 1.0, 3);
  const auto s = slice_rows(d, 2, 5);
  CHECK(batch_size(s) == 3);
  CHECK(s.inputs.at(0, 1) == d.inputs.at(2, 1));
  CHECK_THROWS(slice_rows(d, 5, 5));
  CHECK_THROWS(slice_rows(d, 4, 11));
}

}  // TEST_SUITE
