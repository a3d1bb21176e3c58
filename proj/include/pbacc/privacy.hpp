#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pbacc/interpolation.hpp"

namespace pbacc {

/// Parameters of the leakage bound. s bounds the input amplitude (|X_i| <= s)
/// and c is the number of colluding workers.
struct PrivacyConfig {
  std::size_t K = 1;
  std::size_t T = 1;
  double sigma_n = 1.0;
  double s = 1.0;
  std::size_t c = 1;
  double epsilon = 1.0;
};

void validate(const PrivacyConfig& cfg, const CodingPlan& plan);

enum class SearchStrategy { Exhaustive, Greedy, RandomSampled };

std::string_view to_string(SearchStrategy s);
SearchStrategy search_strategy_from_string(std::string_view name);

struct SearchOptions {
  SearchStrategy strategy = SearchStrategy::Greedy;
  std::size_t samples = 1000;  // RandomSampled draws
  std::uint64_t seed = 0;      // RandomSampled
};

/// Exhaustive search refuses more than this many subsets.
inline constexpr std::size_t kExhaustiveBudget = 1'000'000;

struct LeakageReport {
  double i_L = 0.0;  // bits per data element, I_L / K
  double I_L = 0.0;  // bits
  std::vector<std::size_t> worst_subset;
  SearchStrategy strategy = SearchStrategy::Greedy;
  std::size_t subsets_evaluated = 0;

  [[nodiscard]] bool unbounded() const;
};

nlohmann::json to_json(const LeakageReport& r);

/// Small dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

struct Sigmas {
  Matrix data;   // c x K: q_0 .. q_{K-1} at each colluder's beta
  Matrix noise;  // c x T: q_K .. q_{K+T-1}
};

/// Berrut basis rows at the colluders' encoder nodes, split into the data and
/// noise columns.
Sigmas build_sigmas(std::span<const std::size_t> subset, const CodingPlan& plan);

/// Mutual-information bound for one colluding set, in bits:
///
///   log2 det( I_c + (s^2 T / sigma_n^2) (S~ S~^T)^{-1} (S S^T) )
///
/// i.e. the AWGN-MIMO capacity with channel S (c x K), transmit power s^2 per
/// input and noise covariance (sigma_n^2 / T) S~ S~^T. Computed in binary128
/// from a QR factorization of S~^T (whose R is the Cholesky factor of the
/// noise Gram); returns +inf when that Gram is singular, including c > T.
double leakage_for_subset(std::span<const std::size_t> subset, const CodingPlan& plan,
                          const PrivacyConfig& cfg);

/// Worst case over colluding sets of size cfg.c.
///
/// Exhaustive walks all C(N, c) sets (throws std::invalid_argument above
/// kExhaustiveBudget). Greedy grows the set one node at a time, always adding
/// the node with the largest leakage increment. RandomSampled evaluates
/// `samples` uniformly drawn sets. Ties go to the lexicographically smallest
/// set. Candidate evaluation is parallel; serial:: gives the reference.
LeakageReport worst_case_leakage(const CodingPlan& plan, const PrivacyConfig& cfg,
                                 const SearchOptions& options = {});

namespace serial {
LeakageReport worst_case_leakage(const CodingPlan& plan, const PrivacyConfig& cfg,
                                 const SearchOptions& options = {});
}  // namespace serial

/// Largest input bound s for which the searched worst case satisfies
/// i_L <= cfg.epsilon (cfg.s is ignored). Returns 0 if no positive s does.
/// Relative precision of the returned value is about 1e-6.
double max_admissible_s(const CodingPlan& plan, const PrivacyConfig& cfg,
                        const SearchOptions& options = {});

std::size_t binomial(std::size_t n, std::size_t k);

}  // namespace pbacc
