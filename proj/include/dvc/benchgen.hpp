#pragma once

#include "dvc/numkernel.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace dvc {

enum class SplitMode { Random, Chronological };

struct WindowedDataset {
    std::string scenario;
    std::uint64_t seed = 0;
    std::vector<std::string> var_names;
    std::vector<Eigen::MatrixXd> windows;  ///< raw observations, one matrix per window
    SplitMode split = SplitMode::Random;
    double train_frac = 0.8;
};

struct GroundTruth {
    std::vector<std::string> labels;  ///< per-window regime label
    nlohmann::json schedule = nlohmann::json::object();
    nlohmann::json oracle = nlohmann::json::object();
};

struct Scenario {
    WindowedDataset data;
    GroundTruth truth;
};

inline constexpr std::uint64_t kBenchmarkSeed = 2026;

/// Seed for window t: base + 1000 t.
inline std::uint64_t child_seed(std::uint64_t base, int t) { return base + 1000ULL * static_cast<std::uint64_t>(t); }

const std::vector<std::string>& scenario_names();
/// Throws ConfigError listing the valid names.
void check_scenario_name(std::string_view name);

Scenario gen_tail_df(std::uint64_t seed = kBenchmarkSeed);
Scenario gen_tail_switch(std::uint64_t seed = kBenchmarkSeed);
Scenario gen_hub_switch(std::uint64_t seed = kBenchmarkSeed);
Scenario gen_agent_episodes(std::uint64_t seed = kBenchmarkSeed);
Scenario gen_xor(std::uint64_t seed = kBenchmarkSeed);
Scenario gen_mult_triplet(std::uint64_t seed = kBenchmarkSeed);
Scenario gen_showcase(std::uint64_t seed = kBenchmarkSeed);

/// Dispatch by name.
Scenario generate_scenario(std::string_view name, std::uint64_t seed = kBenchmarkSeed);

/// Agent schedule: (label, length) segments summing to 48.
std::vector<std::pair<std::string, int>> agent_schedule();

/// Per-coordinate normal scores of within-column ranks, r/(n+1).
Eigen::MatrixXd rank_gaussianize(const Eigen::MatrixXd& x);

// ---------------------------------------------------------------------------
// Population information oracles
// ---------------------------------------------------------------------------

/// -1/2 ln(1 - rho^2).
double gaussian_pair_mi(double rho);

struct MonteCarloValue {
    double value = 0.0;
    double std_error = 0.0;
};

/// Pair information of a bivariate Clayton copula, E[log c].
MonteCarloValue clayton_pair_mi(double theta, std::size_t n, std::uint64_t seed);

/// Z = XY + sigma eps: total correlation, pair part I(X;Z) + I(Y;Z), and the
/// higher-order remainder, with f_Z by Gauss-Hermite quadrature.
struct TripletInformation {
    MonteCarloValue total, pair, higher;
};
TripletInformation triplet_information(double sigma, std::size_t n, std::uint64_t seed);

/// Total correlation of a d-dimensional equicorrelated Student-t copula.
MonteCarloValue student_t_total_correlation(int d, double rho, double nu, std::size_t n, std::uint64_t seed);

/// Oracle curves for showcase, tail_df and mult_triplet; ConfigError otherwise.
nlohmann::json oracle_information(std::string_view scenario, std::size_t n = 1000000, std::uint64_t seed = kBenchmarkSeed);

}  // namespace dvc
