#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pbacc/learners.hpp"
#include "pbacc/privacy.hpp"
#include "pbacc/protocols.hpp"

namespace pbacc {

struct DataSpec {
  std::string kind = "two-clusters";  // two-clusters | survival
  std::size_t rows = 400;
  std::size_t eval_rows = 200;
  std::size_t features = 4;
  double separation = 3.0;  // two-clusters only
};

struct ModelSpec {
  std::vector<std::size_t> hidden{8};
  Activation activation = Activation::Tanh;
};

/// One resolved experiment. The sweep is the product sigma_n x T x c; every
/// point reruns the scheme (cached per (sigma_n, T), since c only enters the
/// leakage bound) and evaluates the leakage report.
struct ExperimentSpec {
  SchemeConfig scheme;
  NetworkConfig network{50, {}, 0};  // plan.N defaults to 50 workers
  DataSpec data;
  ModelSpec model;
  std::vector<double> sweep_sigma;
  std::vector<std::size_t> sweep_T;
  std::vector<std::size_t> sweep_c;
  SearchOptions search;
  std::filesystem::path output_dir = "pbacc-out";
  std::uint64_t seed = 0;
};

/// Thrown for malformed or inconsistent experiment specs.
class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Parse a JSON experiment spec. Missing keys take the defaults above;
/// unknown keys are rejected.
ExperimentSpec parse_spec(const nlohmann::json& j);
ExperimentSpec load_spec(const std::filesystem::path& file);

void validate(const ExperimentSpec& spec);

/// The spec with every default filled in, as written to summary.json.
nlohmann::json resolved_config(const ExperimentSpec& spec);

struct SweepPoint {
  double sigma_n = 0.0;
  std::size_t T = 0;
  std::size_t c = 0;
};

struct SweepResult {
  SweepPoint point;
  std::vector<RoundTrace> rounds;
  std::optional<LeakageReport> leakage;  // secure schemes only
  double max_s = 0.0;                    // largest s meeting epsilon (secure schemes)
};

struct ExperimentResult {
  std::vector<SweepResult> points;
};

/// Runs every sweep point; does not touch the filesystem.
ExperimentResult simulate(const ExperimentSpec& spec);

/// simulate() then write rounds.csv, summary.csv and summary.json into
/// spec.output_dir (created if missing).
ExperimentResult run_experiment(const ExperimentSpec& spec);

void write_rounds_csv(std::ostream& out, const ExperimentSpec& spec, const ExperimentResult& r);
void write_summary_csv(std::ostream& out, const ExperimentSpec& spec, const ExperimentResult& r);
nlohmann::json summary_json(const ExperimentSpec& spec, const ExperimentResult& r);

/// Shortest round-trip decimal form; "inf" / "nan" for non-finite values.
std::string format_double(double v);

}  // namespace pbacc
