#include "pbacc/privacy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

extern "C" {
#include <quadmath.h>
}

namespace pbacc {

namespace {

using quad = __float128;

constexpr double kInf = std::numeric_limits<double>::infinity();

// Rows of the Berrut basis over the K+T alpha nodes, one row per encoder
// node, evaluated in binary128. The noise block is badly conditioned for
// clustered colluders (cond ~ 1e16 and worse), so double rounding of these
// entries alone would already swamp the smallest singular values.
class QuadBasis {
 public:
  QuadBasis(const CodingPlan& plan)
      : K_(plan.K), T_(plan.T), N_(plan.N), width_(plan.K + plan.T), q_(plan.N * width_) {
    const auto alphas = plan.alphas();
    const auto signs = plan.alpha_signs();
    for (std::size_t j = 0; j < N_; ++j) {
      const double beta = plan.beta(j);
      quad* row = &q_[j * width_];
      if (auto hit = find_coincident_node(beta, alphas)) {
        for (std::size_t i = 0; i < width_; ++i) row[i] = 0;
        row[*hit] = 1;
        continue;
      }
      quad denom = 0;
      for (std::size_t i = 0; i < width_; ++i) {
        const quad w = quad(signs[i]) / (quad(beta) - quad(alphas[i]));
        row[i] = w;
        denom += w;
      }
      for (std::size_t i = 0; i < width_; ++i) row[i] /= denom;
    }
  }

  [[nodiscard]] std::size_t K() const { return K_; }
  [[nodiscard]] std::size_t T() const { return T_; }
  [[nodiscard]] std::size_t N() const { return N_; }
  [[nodiscard]] quad data(std::size_t node, std::size_t k) const { return q_[node * width_ + k]; }
  [[nodiscard]] quad noise(std::size_t node, std::size_t t) const {
    return q_[node * width_ + K_ + t];
  }

 private:
  std::size_t K_, T_, N_, width_;
  std::vector<quad> q_;
};

// 2^-112
const quad kQuadEpsilon = quad(1) / (quad(double(1ULL << 56)) * quad(double(1ULL << 56)));

quad singular_tolerance(std::size_t T, quad scale) {
  return quad(static_cast<double>(T)) * kQuadEpsilon * 8 * scale;
}

// log(det(A)) for SPD A (n x n, row-major) by Cholesky; A is overwritten.
// Returns +inf if a pivot is not positive.
double spd_log_det(std::vector<quad>& a, std::size_t n) {
  double log_det = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    quad d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
    if (!(d > 0)) return kInf;
    const quad l = sqrtq(d);
    a[j * n + j] = l;
    log_det += 2.0 * std::log(static_cast<double>(l));
    for (std::size_t i = j + 1; i < n; ++i) {
      quad v = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) v -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = v / l;
    }
  }
  return log_det;
}

// Full evaluation for one colluding set; gamma = s^2 T / sigma_n^2.
double subset_leakage_bits(const QuadBasis& basis, std::span<const std::size_t> subset,
                           quad gamma) {
  const std::size_t c = subset.size();
  const std::size_t T = basis.T();
  const std::size_t K = basis.K();
  if (c == 0) return 0.0;
  if (c > T) return kInf;

  // A = S~^T (T x c), column-major so each column is contiguous.
  std::vector<quad> a(T * c);
  quad scale = 0;
  for (std::size_t h = 0; h < c; ++h) {
    quad norm2 = 0;
    for (std::size_t t = 0; t < T; ++t) {
      a[h * T + t] = basis.noise(subset[h], t);
      norm2 += a[h * T + t] * a[h * T + t];
    }
    scale = std::max(scale, sqrtq(norm2));
  }
  const quad tol = singular_tolerance(T, scale);

  // Householder QR; R is kept in the upper triangle of a.
  std::vector<quad> r(c * c, 0);
  for (std::size_t h = 0; h < c; ++h) {
    quad* col = &a[h * T];
    quad norm2 = 0;
    for (std::size_t t = h; t < T; ++t) norm2 += col[t] * col[t];
    const quad norm = sqrtq(norm2);
    if (norm <= tol) return kInf;
    const quad alpha = col[h] > 0 ? -norm : norm;
    // v = x - alpha e_h, stored in col[h..T)
    col[h] -= alpha;
    const quad vnorm2 = norm2 - 2 * alpha * (col[h] + alpha) + alpha * alpha;
    for (std::size_t g = h + 1; g < c; ++g) {
      quad* other = &a[g * T];
      quad dot = 0;
      for (std::size_t t = h; t < T; ++t) dot += col[t] * other[t];
      const quad f = 2 * dot / vnorm2;
      for (std::size_t t = h; t < T; ++t) other[t] -= f * col[t];
    }
    r[h * c + h] = alpha;
    for (std::size_t g = h + 1; g < c; ++g) r[h * c + g] = a[g * T + h];
  }

  // R^T M = S (c x K)
  std::vector<quad> m(c * K);
  for (std::size_t h = 0; h < c; ++h) {
    for (std::size_t k = 0; k < K; ++k) {
      quad v = basis.data(subset[h], k);
      for (std::size_t g = 0; g < h; ++g) v -= r[g * c + h] * m[g * K + k];
      m[h * K + k] = v / r[h * c + h];
    }
  }

  // det(I_c + gamma M M^T) = det(I_K + gamma M^T M); factor the smaller one.
  const bool small_k = K <= c;
  const std::size_t n = small_k ? K : c;
  std::vector<quad> gram(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      quad acc = 0;
      if (small_k) {
        for (std::size_t h = 0; h < c; ++h) acc += m[h * K + i] * m[h * K + j];
      } else {
        for (std::size_t k = 0; k < K; ++k) acc += m[i * K + k] * m[j * K + k];
      }
      gram[i * n + j] = gamma * acc + (i == j ? 1 : 0);
      gram[j * n + i] = gram[i * n + j];
    }
  }
  const double log_det = spd_log_det(gram, n);
  return std::max(0.0, log_det / std::log(2.0));
}

// Greedy state: Householder QR of the chosen noise columns grown one column
// at a time, the matching rows of M, and the Cholesky factor of
// I_K + gamma M^T M. A candidate's increment is log2(1 + gamma |L^{-1} m|^2).
class GreedyState {
 public:
  GreedyState(const QuadBasis& basis, quad gamma) : basis_(basis), gamma_(gamma) {
    const std::size_t K = basis.K();
    chol_.assign(K * K, 0);
    for (std::size_t k = 0; k < K; ++k) chol_[k * K + k] = 1;
    for (std::size_t j = 0; j < basis.N(); ++j) {
      quad norm2 = 0;
      for (std::size_t t = 0; t < basis.T(); ++t) norm2 += basis.noise(j, t) * basis.noise(j, t);
      scale_ = std::max(scale_, sqrtq(norm2));
    }
  }

  struct Candidate {
    double increment = 0.0;  // bits
    std::vector<quad> reduced;  // reflected noise column
    std::vector<quad> m_row;
  };

  [[nodiscard]] Candidate evaluate(std::size_t node) const {
    const std::size_t T = basis_.T();
    const std::size_t K = basis_.K();
    const std::size_t c = chosen_.size();
    Candidate cand;
    cand.reduced.resize(T);
    for (std::size_t t = 0; t < T; ++t) cand.reduced[t] = basis_.noise(node, t);
    for (std::size_t h = 0; h < c; ++h) {
      const auto& v = reflectors_[h];
      quad dot = 0;
      for (std::size_t t = h; t < T; ++t) dot += v[t] * cand.reduced[t];
      const quad f = 2 * dot / reflector_norm2_[h];
      for (std::size_t t = h; t < T; ++t) cand.reduced[t] -= f * v[t];
    }
    quad rho2 = 0;
    for (std::size_t t = c; t < T; ++t) rho2 += cand.reduced[t] * cand.reduced[t];
    const quad rho = sqrtq(rho2);
    if (c >= T || rho <= singular_tolerance(T, scale_)) {
      cand.increment = kInf;
      return cand;
    }
    // Same sign convention as the reflector built in commit(): R_cc = alpha.
    const quad diag = cand.reduced[c] > 0 ? -rho : rho;
    cand.m_row.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
      quad v = basis_.data(node, k);
      for (std::size_t h = 0; h < c; ++h) v -= cand.reduced[h] * m_[h * K + k];
      cand.m_row[k] = v / diag;
    }
    // y = L^{-1} m
    std::vector<quad> y(K);
    quad norm2 = 0;
    for (std::size_t i = 0; i < K; ++i) {
      quad v = cand.m_row[i];
      for (std::size_t k = 0; k < i; ++k) v -= chol_[i * K + k] * y[k];
      y[i] = v / chol_[i * K + i];
      norm2 += y[i] * y[i];
    }
    cand.increment = std::log1p(static_cast<double>(gamma_ * norm2)) / std::log(2.0);
    return cand;
  }

  void commit(std::size_t node, Candidate cand) {
    const std::size_t T = basis_.T();
    const std::size_t K = basis_.K();
    const std::size_t c = chosen_.size();
    chosen_.push_back(node);
    if (cand.increment == kInf) {
      saturated_ = true;
      return;
    }
    std::vector<quad> v(T, 0);
    quad norm2 = 0;
    for (std::size_t t = c; t < T; ++t) {
      v[t] = cand.reduced[t];
      norm2 += v[t] * v[t];
    }
    const quad norm = sqrtq(norm2);
    const quad alpha = v[c] > 0 ? -norm : norm;
    v[c] -= alpha;
    quad vnorm2 = 0;
    for (std::size_t t = c; t < T; ++t) vnorm2 += v[t] * v[t];
    reflectors_.push_back(std::move(v));
    reflector_norm2_.push_back(vnorm2);
    m_.insert(m_.end(), cand.m_row.begin(), cand.m_row.end());

    // Refactor I_K + gamma M^T M.
    std::vector<quad> g(K * K, 0);
    const std::size_t rows = chosen_.size();
    for (std::size_t i = 0; i < K; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        quad acc = 0;
        for (std::size_t h = 0; h < rows; ++h) acc += m_[h * K + i] * m_[h * K + j];
        g[i * K + j] = gamma_ * acc + (i == j ? 1 : 0);
      }
    }
    for (std::size_t j = 0; j < K; ++j) {
      quad d = g[j * K + j];
      for (std::size_t k = 0; k < j; ++k) d -= g[j * K + k] * g[j * K + k];
      g[j * K + j] = sqrtq(d);
      for (std::size_t i = j + 1; i < K; ++i) {
        quad val = g[i * K + j];
        for (std::size_t k = 0; k < j; ++k) val -= g[i * K + k] * g[j * K + k];
        g[i * K + j] = val / g[j * K + j];
      }
      for (std::size_t i = 0; i < j; ++i) g[i * K + j] = 0;
    }
    chol_ = std::move(g);
  }

  [[nodiscard]] const std::vector<std::size_t>& chosen() const { return chosen_; }
  [[nodiscard]] bool saturated() const { return saturated_; }

 private:
  const QuadBasis& basis_;
  quad gamma_;
  quad scale_ = 0;
  std::vector<std::size_t> chosen_;
  std::vector<std::vector<quad>> reflectors_;
  std::vector<quad> reflector_norm2_;
  std::vector<quad> m_;     // rows of M, c x K
  std::vector<quad> chol_;  // K x K lower
  bool saturated_ = false;
};

quad gamma_of(const PrivacyConfig& cfg) {
  const quad s = cfg.s;
  const quad sigma = cfg.sigma_n;
  return s * s * quad(static_cast<double>(cfg.T)) / (sigma * sigma);
}

// Strictly larger wins; on equal values the lexicographically smaller subset.
bool better(double value, const std::vector<std::size_t>& subset, double best_value,
            const std::vector<std::size_t>& best_subset) {
  if (best_subset.empty()) return true;
  if (value > best_value) return true;
  if (value < best_value) return false;
  return subset < best_subset;
}

LeakageReport finish(const QuadBasis& basis, const PrivacyConfig& cfg, SearchStrategy strategy,
                     std::vector<std::size_t> subset, double I_L, std::size_t evaluated) {
  LeakageReport rep;
  std::sort(subset.begin(), subset.end());
  rep.worst_subset = std::move(subset);
  rep.I_L = I_L;
  rep.i_L = I_L / static_cast<double>(basis.K());
  rep.strategy = strategy;
  rep.subsets_evaluated = evaluated;
  (void)cfg;
  return rep;
}

LeakageReport greedy_search(const QuadBasis& basis, const PrivacyConfig& cfg, bool parallel) {
  const quad gamma = gamma_of(cfg);
  GreedyState state(basis, gamma);
  std::size_t evaluated = 0;
  std::vector<char> used(basis.N(), 0);
  while (state.chosen().size() < cfg.c) {
    if (state.saturated()) {
      // Every superset of a singular set is singular; fill with lowest indices.
      for (std::size_t j = 0; j < basis.N() && state.chosen().size() < cfg.c; ++j) {
        if (!used[j]) {
          used[j] = 1;
          state.commit(j, GreedyState::Candidate{kInf, {}, {}});
        }
      }
      break;
    }
    std::vector<std::size_t> candidates;
    for (std::size_t j = 0; j < basis.N(); ++j) {
      if (!used[j]) candidates.push_back(j);
    }
    std::vector<GreedyState::Candidate> evals(candidates.size());
    const auto n = static_cast<std::ptrdiff_t>(candidates.size());
#pragma omp parallel for schedule(dynamic) if (parallel)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      evals[static_cast<std::size_t>(i)] = state.evaluate(candidates[static_cast<std::size_t>(i)]);
    }
    evaluated += candidates.size();
    std::size_t best = 0;
    for (std::size_t i = 1; i < evals.size(); ++i) {
      if (evals[i].increment > evals[best].increment) best = i;
    }
    used[candidates[best]] = 1;
    state.commit(candidates[best], std::move(evals[best]));
  }
  const auto& chosen = state.chosen();
  const double I_L = state.saturated() ? kInf : subset_leakage_bits(basis, chosen, gamma);
  return finish(basis, cfg, SearchStrategy::Greedy, chosen, I_L, evaluated);
}

// Advances a sorted combination of [0, n) in lexicographic order.
bool next_combination(std::vector<std::size_t>& comb, std::size_t n) {
  const std::size_t k = comb.size();
  for (std::size_t i = k; i-- > 0;) {
    if (comb[i] < n - k + i) {
      ++comb[i];
      for (std::size_t j = i + 1; j < k; ++j) comb[j] = comb[j - 1] + 1;
      return true;
    }
  }
  return false;
}

LeakageReport batched_search(const QuadBasis& basis, const PrivacyConfig& cfg,
                             SearchStrategy strategy,
                             const std::function<bool(std::vector<std::size_t>&)>& next,
                             bool parallel) {
  constexpr std::size_t kBatch = 4096;
  const quad gamma = gamma_of(cfg);
  std::vector<std::size_t> best_subset;
  double best_value = -1.0;
  std::size_t evaluated = 0;
  std::vector<std::vector<std::size_t>> batch;
  std::vector<double> values;
  bool more = true;
  while (more) {
    batch.clear();
    std::vector<std::size_t> subset;
    while (batch.size() < kBatch && (more = next(subset))) batch.push_back(subset);
    values.assign(batch.size(), 0.0);
    const auto n = static_cast<std::ptrdiff_t>(batch.size());
#pragma omp parallel for schedule(static) if (parallel)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const auto idx = static_cast<std::size_t>(i);
      values[idx] = subset_leakage_bits(basis, batch[idx], gamma);
    }
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (better(values[i], batch[i], best_value, best_subset)) {
        best_value = values[i];
        best_subset = batch[i];
      }
    }
    evaluated += batch.size();
  }
  return finish(basis, cfg, strategy, best_subset, best_value, evaluated);
}

LeakageReport search(const CodingPlan& plan, const PrivacyConfig& cfg,
                     const SearchOptions& options, bool parallel) {
  validate(cfg, plan);
  const QuadBasis basis(plan);
  switch (options.strategy) {
    case SearchStrategy::Greedy:
      return greedy_search(basis, cfg, parallel);
    case SearchStrategy::Exhaustive: {
      const auto total = binomial(plan.N, cfg.c);
      if (total > kExhaustiveBudget) {
        throw std::invalid_argument("exhaustive search over C(" + std::to_string(plan.N) + ", " +
                                    std::to_string(cfg.c) + ") subsets exceeds the budget of " +
                                    std::to_string(kExhaustiveBudget) + "; use greedy");
      }
      std::vector<std::size_t> comb(cfg.c);
      std::iota(comb.begin(), comb.end(), std::size_t{0});
      bool first = true;
      auto next = [&](std::vector<std::size_t>& out) {
        if (first) {
          first = false;
        } else if (!next_combination(comb, plan.N)) {
          return false;
        }
        out = comb;
        return true;
      };
      return batched_search(basis, cfg, SearchStrategy::Exhaustive, next, parallel);
    }
    case SearchStrategy::RandomSampled: {
      if (options.samples == 0) throw std::invalid_argument("random search needs samples >= 1");
      std::mt19937_64 rng(options.seed);
      std::vector<std::size_t> pool(plan.N);
      std::size_t drawn = 0;
      auto next = [&](std::vector<std::size_t>& out) {
        if (drawn == options.samples) return false;
        ++drawn;
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        for (std::size_t i = 0; i < cfg.c; ++i) {
          std::uniform_int_distribution<std::size_t> pick(i, plan.N - 1);
          std::swap(pool[i], pool[pick(rng)]);
        }
        out.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(cfg.c));
        std::sort(out.begin(), out.end());
        return true;
      };
      return batched_search(basis, cfg, SearchStrategy::RandomSampled, next, parallel);
    }
  }
  throw std::logic_error("unhandled search strategy");
}

}  // namespace

void validate(const PrivacyConfig& cfg, const CodingPlan& plan) {
  if (cfg.K != plan.K || cfg.T != plan.T) {
    throw std::invalid_argument("privacy config (K, T) does not match the coding plan");
  }
  if (cfg.T == 0) throw std::invalid_argument("leakage bound requires T >= 1");
  if (!(cfg.sigma_n > 0.0)) throw std::invalid_argument("sigma_n must be > 0");
  if (!(cfg.s > 0.0)) throw std::invalid_argument("s must be > 0");
  if (cfg.c == 0) throw std::invalid_argument("colluder count c must be >= 1");
  if (cfg.c > plan.N) throw std::invalid_argument("colluder count c exceeds N");
  if (!(cfg.epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
}

std::string_view to_string(SearchStrategy s) {
  switch (s) {
    case SearchStrategy::Exhaustive: return "exhaustive";
    case SearchStrategy::Greedy: return "greedy";
    case SearchStrategy::RandomSampled: return "random";
  }
  return "unknown";
}

SearchStrategy search_strategy_from_string(std::string_view name) {
  if (name == "exhaustive") return SearchStrategy::Exhaustive;
  if (name == "greedy") return SearchStrategy::Greedy;
  if (name == "random" || name == "random-sampled") return SearchStrategy::RandomSampled;
  throw std::invalid_argument("unknown search strategy '" + std::string(name) + "'");
}

bool LeakageReport::unbounded() const { return std::isinf(I_L); }

nlohmann::json to_json(const LeakageReport& r) {
  nlohmann::json j;
  // JSON has no infinity; unbounded leakage is null plus a flag.
  j["i_L"] = r.unbounded() ? nlohmann::json(nullptr) : nlohmann::json(r.i_L);
  j["I_L"] = r.unbounded() ? nlohmann::json(nullptr) : nlohmann::json(r.I_L);
  j["unbounded"] = r.unbounded();
  j["worst_subset"] = r.worst_subset;
  j["strategy"] = std::string(to_string(r.strategy));
  j["subsets_evaluated"] = r.subsets_evaluated;
  return j;
}

Sigmas build_sigmas(std::span<const std::size_t> subset, const CodingPlan& plan) {
  const auto alphas = plan.alphas();
  Sigmas out{Matrix(subset.size(), plan.K), Matrix(subset.size(), plan.T)};
  for (std::size_t h = 0; h < subset.size(); ++h) {
    if (subset[h] >= plan.N) throw std::invalid_argument("subset index out of range");
    for (std::size_t g = 0; g < h; ++g) {
      if (subset[g] == subset[h]) throw std::invalid_argument("subset indices must be distinct");
    }
    const auto q = berrut_basis_or_limit(plan.beta(subset[h]), alphas);
    for (std::size_t k = 0; k < plan.K; ++k) out.data(h, k) = q[k];
    for (std::size_t t = 0; t < plan.T; ++t) out.noise(h, t) = q[plan.K + t];
  }
  return out;
}

double leakage_for_subset(std::span<const std::size_t> subset, const CodingPlan& plan,
                          const PrivacyConfig& cfg) {
  if (cfg.K != plan.K || cfg.T != plan.T) {
    throw std::invalid_argument("privacy config (K, T) does not match the coding plan");
  }
  if (!(cfg.sigma_n > 0.0) || !(cfg.s > 0.0)) {
    throw std::invalid_argument("sigma_n and s must be > 0");
  }
  for (std::size_t h = 0; h < subset.size(); ++h) {
    if (subset[h] >= plan.N) throw std::invalid_argument("subset index out of range");
    for (std::size_t g = 0; g < h; ++g) {
      if (subset[g] == subset[h]) throw std::invalid_argument("subset indices must be distinct");
    }
  }
  if (plan.T == 0) return kInf;
  const QuadBasis basis(plan);
  return subset_leakage_bits(basis, subset, gamma_of(cfg));
}

LeakageReport worst_case_leakage(const CodingPlan& plan, const PrivacyConfig& cfg,
                                 const SearchOptions& options) {
  return search(plan, cfg, options, true);
}

namespace serial {
LeakageReport worst_case_leakage(const CodingPlan& plan, const PrivacyConfig& cfg,
                                 const SearchOptions& options) {
  return search(plan, cfg, options, false);
}
}  // namespace serial

double max_admissible_s(const CodingPlan& plan, const PrivacyConfig& cfg,
                        const SearchOptions& options) {
  auto admissible = [&](double s) {
    PrivacyConfig probe = cfg;
    probe.s = s;
    return worst_case_leakage(plan, probe, options).i_L <= cfg.epsilon;
  };
  constexpr double kMin = 1e-150;
  constexpr double kMax = 1e150;
  double lo, hi;
  if (admissible(1.0)) {
    lo = 1.0;
    hi = 16.0;
    while (admissible(hi)) {
      lo = hi;
      hi *= 16.0;
      if (hi > kMax) return kMax;
    }
  } else {
    hi = 1.0;
    lo = 1.0 / 16.0;
    while (!admissible(lo)) {
      hi = lo;
      lo /= 16.0;
      if (lo < kMin) return 0.0;
    }
  }
  // admissible(lo) && !admissible(hi); bisect geometrically.
  while (hi / lo > 1.0 + 1e-7) {
    const double mid = std::sqrt(lo * hi);
    if (admissible(mid)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

std::size_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::size_t r = 1;
  for (std::size_t i = 1; i <= k; ++i) {
    const std::size_t num = n - k + i;
    // r * num / i is exact at every step; saturate on overflow.
    if (r > std::numeric_limits<std::size_t>::max() / num) {
      return std::numeric_limits<std::size_t>::max();
    }
    r = r * num / i;
  }
  return r;
}

}  // namespace pbacc
