#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "pbacc/tensor.hpp"

namespace pbacc {

enum class NodeKind { ChebyshevFirst, ChebyshevSecond, ShiftedChebyshevFirst };

std::string_view to_string(NodeKind kind);
NodeKind node_kind_from_string(std::string_view name);

/// One family of interpolation nodes.
///
///   ChebyshevFirst(K):            cos((2j+1)pi / 2K),      j = 0..K-1
///   ChebyshevSecond(N):           cos(j pi / (N-1)),       j = 0..N-1
///   ShiftedChebyshevFirst(T, b):  b + cos((2j+1)pi / 2T),  j = 0..T-1
///
/// All three are listed in descending order.
struct NodeFamily {
  NodeKind kind = NodeKind::ChebyshevFirst;
  std::size_t count = 0;
  double shift = 0.0;
  std::vector<double> values;
};

/// Throws std::invalid_argument for count == 0, or count < 2 for ChebyshevSecond.
NodeFamily make_nodes(NodeKind kind, std::size_t count, double shift = 0.0);

/// Default placement of the noise nodes, outside the data interval [-1, 1].
inline constexpr double kDefaultNoiseShift = 2.0;

/// Offset applied to an encoder node that lands on an interpolation node.
inline constexpr double kCollisionPerturbation = 1e-9;

/// How the encoder assigns its alternating weights to the K + T alpha nodes.
/// Concatenated: (-1)^i over data nodes followed by noise nodes. Sorted: by
/// rank in descending node order, which keeps u(z) free of real poles. The
/// two agree (up to an overall sign, which cancels) whenever K + T is even.
enum class WeightOrder { Concatenated, Sorted };

std::string_view to_string(WeightOrder order);
WeightOrder weight_order_from_string(std::string_view name);

/// All interpolation points of a PBACC code: K data nodes, T noise nodes and
/// N encoder (worker) nodes.
struct CodingPlan {
  std::size_t K = 0;
  std::size_t T = 0;
  std::size_t N = 0;
  double noise_shift = kDefaultNoiseShift;
  NodeFamily data_nodes;     // ChebyshevFirst(K)
  NodeFamily noise_nodes;    // ShiftedChebyshevFirst(T, b); empty when T == 0
  NodeFamily encoder_nodes;  // ChebyshevSecond(N), after perturbation
  /// Encoder indices that were moved by kCollisionPerturbation.
  std::vector<std::size_t> perturbed_encoders;
  WeightOrder weight_order = WeightOrder::Sorted;

  /// Data nodes followed by noise nodes: alpha_0 .. alpha_{K+T-1}.
  [[nodiscard]] std::vector<double> alphas() const;
  /// Encoder weight sign (+1 / -1) for each entry of alphas().
  [[nodiscard]] std::vector<double> alpha_signs() const;
  [[nodiscard]] double beta(std::size_t j) const { return encoder_nodes.values.at(j); }
};

/// Builds a plan; T may be 0 (plain BACC).
CodingPlan make_plan(std::size_t K, std::size_t T, std::size_t N,
                     double noise_shift = kDefaultNoiseShift,
                     WeightOrder order = WeightOrder::Sorted);

/// Raised by berrut_basis when z sits on a node.
class NodeCoincidence : public std::domain_error {
 public:
  explicit NodeCoincidence(std::size_t index);
  [[nodiscard]] std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

/// |z - node| < 1e-12 * max(1, |node|)
[[nodiscard]] bool coincides(double z, double node);

/// First node that z coincides with, if any.
[[nodiscard]] std::optional<std::size_t> find_coincident_node(double z,
                                                              std::span<const double> nodes);

/// Berrut basis q_i(z) = ((-1)^i / (z - x_i)) / sum_j ((-1)^j / (z - x_j)).
/// Throws NodeCoincidence if z is on a node.
std::vector<double> berrut_basis(double z, std::span<const double> nodes);

/// Same as berrut_basis, but returns the unit vector e_i when z is on node i.
std::vector<double> berrut_basis_or_limit(double z, std::span<const double> nodes);

/// Barycentric basis with explicit weight signs in place of (-1)^i.
std::vector<double> berrut_basis_or_limit(double z, std::span<const double> nodes,
                                          std::span<const double> signs);

/// Sum_i q_i(z) * payloads[i]; exactly payloads[i] when z is on node i.
Tensor berrut_eval(double z, std::span<const double> nodes,
                   std::span<const Tensor> payloads);

/// Scalar-payload convenience overload.
double berrut_eval(double z, std::span<const double> nodes,
                   std::span<const double> values);

}  // namespace pbacc
