#include "pbacc/codec.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace pbacc {

namespace {

struct EncodeLayout {
  std::size_t extent = 0;  // original coding-axis extent
  std::size_t groups = 0;
  std::size_t outer = 0;
  std::size_t inner = 0;
  std::vector<std::size_t> share_shape;
};

EncodeLayout plan_layout(const Tensor& x, const CodingPlan& plan, const NoiseSpec& noise,
                         const EncodeOptions& options) {
  if (x.size() == 0) throw std::invalid_argument("cannot encode an empty tensor");
  if (noise.T != plan.T) {
    throw std::invalid_argument("noise spec has T=" + std::to_string(noise.T) +
                                " but plan has T=" + std::to_string(plan.T));
  }
  if (noise.sigma_n < 0.0) throw std::invalid_argument("sigma_n must be >= 0");
  EncodeLayout l;
  l.extent = x.coding_extent();
  if (l.extent % plan.K != 0 && !options.pad) {
    throw std::invalid_argument("coding-axis extent " + std::to_string(l.extent) +
                                " is not a multiple of K=" + std::to_string(plan.K) +
                                " and padding is disabled");
  }
  l.groups = (l.extent + plan.K - 1) / plan.K;
  l.outer = x.outer_size();
  l.inner = x.inner_size();
  l.share_shape = x.shape_with_coding_extent(l.groups);
  return l;
}

// u(beta) for every group, written into `out` (share layout).
void encode_share(const Tensor& x, std::span<const Tensor> noise_blocks,
                  const EncodeLayout& l, std::size_t K, std::span<const double> q,
                  std::span<double> out) {
  const auto src = x.data();
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t g = 0; g < l.groups; ++g) {
      double* dst = out.data() + (o * l.groups + g) * l.inner;
      for (std::size_t i = 0; i < l.inner; ++i) dst[i] = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        const std::size_t slice = g * K + k;
        if (slice >= l.extent) break;  // zero padding
        const double w = q[k];
        const double* s = src.data() + (o * l.extent + slice) * l.inner;
        for (std::size_t i = 0; i < l.inner; ++i) dst[i] += w * s[i];
      }
      for (std::size_t t = 0; t < noise_blocks.size(); ++t) {
        const double w = q[K + t];
        const double* r = noise_blocks[t].data().data() + (o * l.groups + g) * l.inner;
        for (std::size_t i = 0; i < l.inner; ++i) dst[i] += w * r[i];
      }
    }
  }
}

Encoding encode_impl(const Tensor& x, const CodingPlan& plan, const NoiseSpec& noise,
                     const EncodeOptions& options, bool parallel) {
  const auto l = plan_layout(x, plan, noise, options);
  Encoding enc;
  enc.original_extent = l.extent;
  enc.padding = l.groups * plan.K - l.extent;
  enc.noise_blocks = draw_noise(l.share_shape, x.coding_axis(), noise);

  const auto alphas = plan.alphas();
  const auto signs = plan.alpha_signs();
  enc.shares.resize(plan.N);
  for (std::size_t j = 0; j < plan.N; ++j) {
    enc.shares[j].node_index = j;
    enc.shares[j].beta = plan.beta(j);
    enc.shares[j].payload = Tensor(l.share_shape, x.coding_axis());
  }

  const auto n = static_cast<std::ptrdiff_t>(plan.N);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t j = 0; j < n; ++j) {
    auto& share = enc.shares[static_cast<std::size_t>(j)];
    const auto q = berrut_basis_or_limit(share.beta, alphas, signs);
    encode_share(x, enc.noise_blocks, l, plan.K, q, share.payload.data());
  }
  return enc;
}

}  // namespace

Tensor evaluate_encoder(const Tensor& x, std::span<const Tensor> noise_blocks, const CodingPlan& plan,
                        double z, EncodeOptions options) {
  const auto l = plan_layout(x, plan, NoiseSpec{0.0, plan.T, 0}, options);
  if (noise_blocks.size() != plan.T) throw std::invalid_argument("need exactly T noise blocks");
  for (const auto& r : noise_blocks) {
    if (r.shape() != l.share_shape) throw std::invalid_argument("noise block shape mismatch");
  }
  Tensor out(l.share_shape, x.coding_axis());
  const auto q = berrut_basis_or_limit(z, plan.alphas(), plan.alpha_signs());
  encode_share(x, noise_blocks, l, plan.K, q, out.data());
  return out;
}

namespace {

Tensor decode_impl(std::span<const ShareResult> results, const CodingPlan& plan,
                   std::optional<std::size_t> original_extent, bool parallel) {
  if (results.empty()) throw std::invalid_argument("decode needs at least one result");
  const auto& first = results.front().payload;
  for (const auto& r : results) {
    if (!r.payload.same_shape(first)) {
      throw std::invalid_argument("decode results must share one shape");
    }
  }
  std::vector<std::size_t> order(results.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return results[a].beta > results[b].beta; });
  std::vector<double> betas(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) betas[i] = results[order[i]].beta;
  for (std::size_t i = 1; i < betas.size(); ++i) {
    if (betas[i] == betas[i - 1] || coincides(betas[i], betas[i - 1])) {
      throw std::invalid_argument("decode results contain duplicate beta values");
    }
  }

  const std::size_t K = plan.K;
  const std::size_t groups = first.coding_extent();
  const std::size_t outer = first.outer_size();
  const std::size_t inner = first.inner_size();
  const std::size_t full_extent = groups * K;
  const std::size_t extent = original_extent.value_or(full_extent);
  if (extent > full_extent || extent + K <= full_extent) {
    throw std::invalid_argument("original extent " + std::to_string(extent) +
                                " inconsistent with " + std::to_string(groups) +
                                " groups of K=" + std::to_string(K));
  }

  std::vector<std::vector<double>> basis(K);
  for (std::size_t k = 0; k < K; ++k) {
    basis[k] = berrut_basis_or_limit(plan.data_nodes.values[k], betas);
  }

  Tensor out(first.shape_with_coding_extent(extent), first.coding_axis());
  auto dst_all = out.data();
  const auto tasks = static_cast<std::ptrdiff_t>(outer * groups);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t task = 0; task < tasks; ++task) {
    const std::size_t o = static_cast<std::size_t>(task) / groups;
    const std::size_t g = static_cast<std::size_t>(task) % groups;
    for (std::size_t k = 0; k < K; ++k) {
      const std::size_t slice = g * K + k;
      if (slice >= extent) break;
      double* dst = dst_all.data() + (o * extent + slice) * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] = 0.0;
      for (std::size_t r = 0; r < order.size(); ++r) {
        const double w = basis[k][r];
        const double* s = results[order[r]].payload.data().data() + (o * groups + g) * inner;
        for (std::size_t i = 0; i < inner; ++i) dst[i] += w * s[i];
      }
    }
  }
  return out;
}

}  // namespace

std::vector<Tensor> draw_noise(const std::vector<std::size_t>& block_shape,
                               std::size_t coding_axis, const NoiseSpec& noise) {
  std::vector<Tensor> blocks;
  if (noise.T == 0) return blocks;
  std::mt19937_64 rng(noise.seed);
  std::normal_distribution<double> normal(0.0, noise.sigma_n / std::sqrt(static_cast<double>(noise.T)));
  blocks.reserve(noise.T);
  for (std::size_t t = 0; t < noise.T; ++t) {
    Tensor r(block_shape, coding_axis);
    if (noise.sigma_n > 0.0) {
      for (auto& v : r.values()) v = normal(rng);
    }
    blocks.push_back(std::move(r));
  }
  return blocks;
}

Encoding encode(const Tensor& x, const CodingPlan& plan, const NoiseSpec& noise,
                EncodeOptions options) {
  return encode_impl(x, plan, noise, options, true);
}

Tensor decode(std::span<const ShareResult> results, const CodingPlan& plan,
              std::optional<std::size_t> original_extent) {
  return decode_impl(results, plan, original_extent, true);
}

namespace serial {

Encoding encode(const Tensor& x, const CodingPlan& plan, const NoiseSpec& noise,
                EncodeOptions options) {
  return encode_impl(x, plan, noise, options, false);
}

Tensor decode(std::span<const ShareResult> results, const CodingPlan& plan,
              std::optional<std::size_t> original_extent) {
  return decode_impl(results, plan, original_extent, false);
}

}  // namespace serial

std::vector<ShareResult> to_results(std::span<const EncodedShare> shares) {
  std::vector<ShareResult> out;
  out.reserve(shares.size());
  for (const auto& s : shares) out.push_back({s.beta, s.payload});
  return out;
}

PointwiseFn pointwise_function(std::string_view name) {
  if (name == "identity") return [](double v) { return v; };
  if (name == "square") return [](double v) { return v * v; };
  if (name == "relu") return [](double v) { return v > 0.0 ? v : 0.0; };
  if (name == "tanh") return [](double v) { return std::tanh(v); };
  if (name == "affine") return [](double v) { return 2.0 * v + 1.0; };
  if (name == "sigmoid") return [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  throw std::invalid_argument("unknown function '" + std::string(name) + "'");
}

Tensor apply_pointwise(const Tensor& t, const PointwiseFn& f) {
  Tensor out = t;
  for (auto& v : out.values()) v = f(v);
  return out;
}

double roundtrip_error(const Tensor& x, const PointwiseFn& f, const CodingPlan& plan,
                       const NoiseSpec& noise, std::span<const std::size_t> subset) {
  if (subset.empty()) throw std::invalid_argument("roundtrip subset must be nonempty");
  const auto enc = encode(x, plan, noise);
  std::vector<ShareResult> results;
  results.reserve(subset.size());
  for (auto j : subset) {
    if (j >= plan.N) throw std::invalid_argument("subset index out of range");
    const auto& share = enc.shares[j];
    results.push_back({share.beta, apply_pointwise(share.payload, f)});
  }
  const auto decoded = decode(results, plan, enc.original_extent);
  const auto expected = apply_pointwise(x, f);
  double scale = 1e-12;
  for (double v : expected.data()) scale = std::max(scale, std::abs(v));
  return max_abs_diff(decoded, expected) / scale;
}

}  // namespace pbacc
