#include "pbacc/interpolation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

namespace pbacc {

std::string_view to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::ChebyshevFirst: return "chebyshev1";
    case NodeKind::ChebyshevSecond: return "chebyshev2";
    case NodeKind::ShiftedChebyshevFirst: return "shifted-chebyshev1";
  }
  return "unknown";
}

NodeKind node_kind_from_string(std::string_view name) {
  if (name == "chebyshev1" || name == "first") return NodeKind::ChebyshevFirst;
  if (name == "chebyshev2" || name == "second") return NodeKind::ChebyshevSecond;
  if (name == "shifted-chebyshev1" || name == "shifted") {
    return NodeKind::ShiftedChebyshevFirst;
  }
  throw std::invalid_argument("unknown node family '" + std::string(name) + "'");
}

NodeFamily make_nodes(NodeKind kind, std::size_t count, double shift) {
  if (count == 0) throw std::invalid_argument("node count must be >= 1");
  if (kind == NodeKind::ChebyshevSecond && count < 2) {
    throw std::invalid_argument("ChebyshevSecond needs at least 2 nodes");
  }
  constexpr double pi = std::numbers::pi;
  NodeFamily fam{kind, count, kind == NodeKind::ShiftedChebyshevFirst ? shift : 0.0, {}};
  fam.values.resize(count);
  const auto n = static_cast<double>(count);
  for (std::size_t j = 0; j < count; ++j) {
    const auto jd = static_cast<double>(j);
    switch (kind) {
      case NodeKind::ChebyshevFirst:
        fam.values[j] = std::cos((2.0 * jd + 1.0) * pi / (2.0 * n));
        break;
      case NodeKind::ChebyshevSecond:
        fam.values[j] = std::cos(jd * pi / (n - 1.0));
        break;
      case NodeKind::ShiftedChebyshevFirst:
        fam.values[j] = shift + std::cos((2.0 * jd + 1.0) * pi / (2.0 * n));
        break;
    }
  }
  // cos(j pi/(N-1)) does not land exactly on the endpoint for j = N-1.
  if (kind == NodeKind::ChebyshevSecond) {
    fam.values.front() = 1.0;
    fam.values.back() = -1.0;
  }
  return fam;
}

std::vector<double> CodingPlan::alphas() const {
  std::vector<double> a = data_nodes.values;
  a.insert(a.end(), noise_nodes.values.begin(), noise_nodes.values.end());
  return a;
}

std::string_view to_string(WeightOrder order) {
  return order == WeightOrder::Sorted ? "sorted" : "concatenated";
}

WeightOrder weight_order_from_string(std::string_view name) {
  if (name == "sorted") return WeightOrder::Sorted;
  if (name == "concatenated") return WeightOrder::Concatenated;
  throw std::invalid_argument("unknown weight order '" + std::string(name) + "'");
}

std::vector<double> CodingPlan::alpha_signs() const {
  const auto a = alphas();
  std::vector<double> signs(a.size());
  if (weight_order == WeightOrder::Concatenated) {
    for (std::size_t i = 0; i < a.size(); ++i) signs[i] = i % 2 == 0 ? 1.0 : -1.0;
    return signs;
  }
  std::vector<std::size_t> rank(a.size());
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  std::stable_sort(rank.begin(), rank.end(), [&](std::size_t x, std::size_t y) { return a[x] > a[y]; });
  for (std::size_t r = 0; r < rank.size(); ++r) signs[rank[r]] = r % 2 == 0 ? 1.0 : -1.0;
  return signs;
}

CodingPlan make_plan(std::size_t K, std::size_t T, std::size_t N, double noise_shift, WeightOrder order) {
  if (K == 0) throw std::invalid_argument("K must be >= 1");
  if (N < 2) throw std::invalid_argument("N must be >= 2");
  CodingPlan plan;
  plan.K = K;
  plan.T = T;
  plan.N = N;
  plan.noise_shift = noise_shift;
  plan.weight_order = order;
  plan.data_nodes = make_nodes(NodeKind::ChebyshevFirst, K);
  if (T > 0) {
    plan.noise_nodes = make_nodes(NodeKind::ShiftedChebyshevFirst, T, noise_shift);
  } else {
    plan.noise_nodes = NodeFamily{NodeKind::ShiftedChebyshevFirst, 0, noise_shift, {}};
  }
  plan.encoder_nodes = make_nodes(NodeKind::ChebyshevSecond, N);

  const auto alphas = plan.alphas();
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    for (std::size_t j = i + 1; j < alphas.size(); ++j) {
      if (coincides(alphas[i], alphas[j])) {
        throw std::invalid_argument(
            "data and noise nodes collide; choose a different noise shift");
      }
    }
  }
  for (std::size_t j = 0; j < N; ++j) {
    auto& beta = plan.encoder_nodes.values[j];
    if (find_coincident_node(beta, alphas)) {
      beta += kCollisionPerturbation;
      plan.perturbed_encoders.push_back(j);
    }
  }
  return plan;
}

NodeCoincidence::NodeCoincidence(std::size_t index)
    : std::domain_error("evaluation point coincides with node " + std::to_string(index)),
      index_(index) {}

bool coincides(double z, double node) {
  return std::abs(z - node) < 1e-12 * std::max(1.0, std::abs(node));
}

std::optional<std::size_t> find_coincident_node(double z, std::span<const double> nodes) {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (coincides(z, nodes[i])) return i;
  }
  return std::nullopt;
}

namespace {

void fill_basis(double z, std::span<const double> nodes, std::vector<double>& q,
                std::span<const double> signs = {}) {
  double denom = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const double sign = signs.empty() ? (i % 2 == 0 ? 1.0 : -1.0) : signs[i];
    const double w = sign / (z - nodes[i]);
    q[i] = w;
    denom += w;
  }
  for (auto& v : q) v /= denom;
}

}  // namespace

std::vector<double> berrut_basis(double z, std::span<const double> nodes) {
  if (nodes.empty()) throw std::invalid_argument("berrut_basis needs at least one node");
  if (auto hit = find_coincident_node(z, nodes)) throw NodeCoincidence(*hit);
  std::vector<double> q(nodes.size());
  fill_basis(z, nodes, q);
  return q;
}

std::vector<double> berrut_basis_or_limit(double z, std::span<const double> nodes) {
  if (nodes.empty()) throw std::invalid_argument("berrut_basis needs at least one node");
  std::vector<double> q(nodes.size(), 0.0);
  if (auto hit = find_coincident_node(z, nodes)) {
    q[*hit] = 1.0;
    return q;
  }
  fill_basis(z, nodes, q);
  return q;
}

std::vector<double> berrut_basis_or_limit(double z, std::span<const double> nodes,
                                          std::span<const double> signs) {
  if (nodes.empty()) throw std::invalid_argument("berrut_basis needs at least one node");
  if (signs.size() != nodes.size()) throw std::invalid_argument("need one weight sign per node");
  std::vector<double> q(nodes.size(), 0.0);
  if (auto hit = find_coincident_node(z, nodes)) {
    q[*hit] = 1.0;
    return q;
  }
  fill_basis(z, nodes, q, signs);
  return q;
}

Tensor berrut_eval(double z, std::span<const double> nodes,
                   std::span<const Tensor> payloads) {
  if (nodes.size() != payloads.size() || nodes.empty()) {
    throw std::invalid_argument("berrut_eval needs one payload per node");
  }
  for (const auto& p : payloads) {
    if (p.shape() != payloads.front().shape()) {
      throw std::invalid_argument("berrut_eval payloads must share one shape");
    }
  }
  if (auto hit = find_coincident_node(z, nodes)) return payloads[*hit];
  const auto q = berrut_basis(z, nodes);
  Tensor out(payloads.front().shape(), payloads.front().coding_axis());
  auto dst = out.data();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto src = payloads[i].data();
    for (std::size_t e = 0; e < dst.size(); ++e) dst[e] += q[i] * src[e];
  }
  return out;
}

double berrut_eval(double z, std::span<const double> nodes, std::span<const double> values) {
  if (nodes.size() != values.size() || nodes.empty()) {
    throw std::invalid_argument("berrut_eval needs one value per node");
  }
  if (auto hit = find_coincident_node(z, nodes)) return values[*hit];
  const auto q = berrut_basis(z, nodes);
  double acc = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) acc += q[i] * values[i];
  return acc;
}

}  // namespace pbacc
