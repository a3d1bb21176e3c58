#pragma once

// Extended-precision reference evaluations used as test oracles.

#include <boost/math/constants/constants.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include <cstddef>
#include <vector>

namespace oracle {

using big = boost::multiprecision::cpp_bin_float_50;

inline big pi() { return boost::math::constants::pi<big>(); }

inline std::vector<big> chebyshev1(std::size_t K, big shift = 0) {
  std::vector<big> v(K);
  for (std::size_t j = 0; j < K; ++j) v[j] = shift + cos(big(2 * j + 1) * pi() / big(2 * K));
  return v;
}

inline std::vector<big> chebyshev2(std::size_t N) {
  std::vector<big> v(N);
  for (std::size_t j = 0; j < N; ++j) v[j] = cos(big(j) * pi() / big(N - 1));
  return v;
}

// q_i(z) with sign pattern `signs` (default (-1)^i).
inline std::vector<big> basis(big z, const std::vector<big>& nodes, std::vector<int> signs = {}) {
  if (signs.empty()) {
    for (std::size_t i = 0; i < nodes.size(); ++i) signs.push_back(i % 2 == 0 ? 1 : -1);
  }
  std::vector<big> q(nodes.size());
  big denom = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    q[i] = big(signs[i]) / (z - nodes[i]);
    denom += q[i];
  }
  for (auto& v : q) v /= denom;
  return q;
}

inline std::vector<big> to_big(const std::vector<double>& v) { return {v.begin(), v.end()}; }

}  // namespace oracle
