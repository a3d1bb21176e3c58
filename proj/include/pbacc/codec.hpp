#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "pbacc/interpolation.hpp"
#include "pbacc/tensor.hpp"

namespace pbacc {

/// Gaussian padding: T blocks with i.i.d. N(0, sigma_n^2 / T) entries.
struct NoiseSpec {
  double sigma_n = 0.0;
  std::size_t T = 0;
  std::uint64_t seed = 0;
};

/// Evaluation u_X(beta_j) handed to worker j.
struct EncodedShare {
  std::size_t node_index = 0;
  double beta = 0.0;
  Tensor payload;
};

/// A worker result as seen by the decoder.
struct ShareResult {
  double beta = 0.0;
  Tensor payload;
};

struct Encoding {
  std::vector<EncodedShare> shares;
  /// noise_blocks[t] holds R_t for every group, laid out like a share payload.
  std::vector<Tensor> noise_blocks;
  std::size_t original_extent = 0;
  std::size_t padding = 0;
};

struct EncodeOptions {
  /// Zero-pad a trailing short group instead of rejecting the input.
  bool pad = true;
};

/// Encodes x along its coding axis into plan.N shares.
///
/// The coding axis is cut into G = ceil(extent / K) contiguous groups of K
/// slices. For each group the rational function
///
///   u(z) = sum_{i<K} q_i(z) X_{gK+i} + sum_{t<T} q_{K+t}(z) R_t
///
/// is built over the K+T alpha nodes and evaluated at every beta_j, so share j
/// has coding-axis extent G. Noise is drawn once before any evaluation; shares
/// are evaluated in parallel and are bit-identical to serial::encode.
Encoding encode(const Tensor& x, const CodingPlan& plan, const NoiseSpec& noise,
                EncodeOptions options = {});

/// u(z) for every group of x with the given noise blocks (share layout), e.g.
/// at a data node, where it returns the group's slice exactly.
Tensor evaluate_encoder(const Tensor& x, std::span<const Tensor> noise_blocks, const CodingPlan& plan,
                        double z, EncodeOptions options = {});

/// Berrut reconstruction from any nonempty subset of worker results.
///
/// Results are sorted by beta descending and given weights (-1)^i in that
/// order; the interpolant is evaluated at the K data nodes and the group
/// outputs are interleaved back along the coding axis. If original_extent is
/// set the output is truncated to it (undoing encode's padding).
Tensor decode(std::span<const ShareResult> results, const CodingPlan& plan,
              std::optional<std::size_t> original_extent = std::nullopt);

/// Single-threaded reference kernels; the parallel versions above must agree
/// with these bit for bit.
namespace serial {
Encoding encode(const Tensor& x, const CodingPlan& plan, const NoiseSpec& noise,
                EncodeOptions options = {});
Tensor decode(std::span<const ShareResult> results, const CodingPlan& plan,
              std::optional<std::size_t> original_extent = std::nullopt);
}  // namespace serial

/// Draws the T noise blocks exactly as encode does.
std::vector<Tensor> draw_noise(const std::vector<std::size_t>& block_shape,
                               std::size_t coding_axis, const NoiseSpec& noise);

std::vector<ShareResult> to_results(std::span<const EncodedShare> shares);

using PointwiseFn = std::function<double(double)>;

/// Names accepted by pointwise_function: identity, square, relu, tanh, affine
/// (2v+1), sigmoid.
PointwiseFn pointwise_function(std::string_view name);

Tensor apply_pointwise(const Tensor& t, const PointwiseFn& f);

/// encode -> f on every share in `subset` -> decode, compared with f(x).
/// Returns max|decoded - f(x)| / max(max|f(x)|, 1e-12).
double roundtrip_error(const Tensor& x, const PointwiseFn& f, const CodingPlan& plan,
                       const NoiseSpec& noise, std::span<const std::size_t> subset);

}  // namespace pbacc
