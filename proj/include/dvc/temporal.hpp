#pragma once

#include "dvc/optimize.hpp"
#include "dvc/vine.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dvc {

/// Training pseudo-observations, one matrix per window (rows = observations).
using WindowSeq = std::vector<Eigen::MatrixXd>;

// ---------------------------------------------------------------------------
// Time basis
// ---------------------------------------------------------------------------

struct TimeBasis {
    Eigen::MatrixXd design;  ///< T x q; column 0 is the intercept
    int q() const { return static_cast<int>(design.cols()); }
    int T() const { return static_cast<int>(design.rows()); }
};

inline const std::vector<double> kDefaultCenters = {0.0, 0.5, 1.0};

/// Intercept plus exp(-((t~ - c) / bandwidth)^2) per center on t~ = t / (T - 1).
/// Throws DomainError for T < 2 or T < q (rank deficiency).
TimeBasis build_basis(int T, const std::vector<double>& centers = kDefaultCenters, double bandwidth = 0.75);

/// Sum of squared second differences.
double second_difference_penalty(std::span<const double> x);

// ---------------------------------------------------------------------------
// Switching dynamic program
// ---------------------------------------------------------------------------

/// |theta_a - theta_b| after clipping to the fitted range; Student-t uses the
/// mean of the correlation and clipped-df differences. DomainError if the
/// families differ.
double state_distance(const EdgeState& a, const EdgeState& b);

struct SwitchPath {
    std::vector<int> choice;  ///< candidate index per window
    double cost = 0.0;
    int switches = 0;
};

/// Exact minimizer of sum_t local[t][k_t] + lambda_sw * 1{family change}
/// + lambda_drift * 1{same family} * d(s_{t-1}, s_t). Ties (relative 1e-12)
/// prefer the no-switch predecessor, then the earlier candidate; the final
/// state uses the same rule on its incoming transition.
SwitchPath solve_switch_dp(const std::vector<std::vector<double>>& local,
                           const std::vector<std::vector<EdgeState>>& states, double lambda_sw, double lambda_drift);

/// Objective of a given path, accumulated in the same order as the DP.
double switch_path_cost(const std::vector<std::vector<double>>& local, const std::vector<std::vector<EdgeState>>& states,
                        const std::vector<int>& choice, double lambda_sw, double lambda_drift);

/// Per-window candidate states and (nll + k) / N_t local costs for one edge.
/// Failed candidate fits are dropped; a window where all fail gets a single
/// zero-cost Independence state.
struct CandidateTable {
    std::vector<std::vector<EdgeState>> states;
    std::vector<std::vector<double>> cost;
    std::vector<std::string> log;
};
CandidateTable candidate_table(const std::vector<PairSample>& windows, std::span<const Family> candidates,
                               std::span<const double> nu_grid);

// ---------------------------------------------------------------------------
// Estimators
// ---------------------------------------------------------------------------

struct SwitchConfig {
    double lambda_sw = 0.08;
    double lambda_drift = 0.0;
    std::vector<double> nu_grid = kDefaultNuGrid;
    int jobs = 1;
};

/// DVC-switch over a fixed structure.
FittedVine fit_dvc_switch(const WindowSeq& train, const CVineStructure& structure, std::span<const Family> candidates,
                          const SwitchConfig& cfg = {});

enum class DfMode { Grid, Trajectory };

struct SmoothConfig {
    double lambda_smooth = 5.0;
    double lambda_ridge = 1e-3;
    std::vector<double> centers = kDefaultCenters;
    double bandwidth = 0.75;
    int max_iter = 80;
    DfMode df_mode = DfMode::Grid;
    std::vector<double> nu_grid = kDefaultNuGrid;
    double fd_step = 1e-5;
    int jobs = 1;
};

/// Result of one penalized trajectory fit for one edge and family.
struct TrajectoryFit {
    Family family = Family::Independence;
    Eigen::MatrixXd beta;            ///< q x p
    double fixed_nu = 0.0;           ///< grid df (Student-t grid mode)
    std::vector<EdgeState> path;     ///< per window
    std::vector<double> tau;         ///< implied Kendall tau path
    double nll = 0.0;                ///< summed training NLL (no penalties)
    double objective = 0.0;          ///< penalized objective at beta
    int k = 0;                       ///< parameter count in the sequence score
    double score = 0.0;              ///< nll + k/2 log(sum N_t)
    bool fell_back = false;          ///< optimizer failed; constant fit kept
    std::vector<double> history;     ///< accepted objective values
};

/// Penalized trajectory fit of one family on one edge's window samples.
TrajectoryFit fit_trajectory(Family f, const std::vector<PairSample>& windows, const TimeBasis& basis,
                             const SmoothConfig& cfg);

/// DVC-smooth over a fixed structure; family per edge by the sequence score.
FittedVine fit_dvc_smooth(const WindowSeq& train, const CVineStructure& structure, std::span<const Family> candidates,
                          const SmoothConfig& cfg = {});

struct WindowedModel {
    std::vector<std::optional<FittedVine>> windows;
    std::vector<int> roots;  ///< -1 for failed windows
    std::vector<std::string> log;
    long edge_fits = 0;
};

/// Independent static vine per window; root by the |tau| row sum, remaining
/// order greedy on the window's |tau|.
WindowedModel fit_windowed(const WindowSeq& train, std::span<const Family> candidates,
                           const StaticFitOptions& opts = {});

struct RegWindowedConfig {
    double lambda_root = 0.0;
    double lambda_sw = 0.0;
    double lambda_drift = 0.0;
    std::vector<double> nu_grid = kDefaultNuGrid;
    int jobs = 1;
};

/// Root path by DP over per-window roots (local cost = minus the |tau| row
/// sum, switch cost lambda_root), then per-edge-position switching DP.
WindowedModel fit_reg_windowed(const WindowSeq& train, std::span<const Family> candidates,
                               const RegWindowedConfig& cfg = {});

/// Root path alone (exposed for tests).
std::vector<int> select_root_path(const WindowSeq& train, double lambda_root);

struct LatentConfig {
    int k = 1;
    double weight = 1.0;
    int max_iter = 500;
    double tol = 1e-12;
};

struct LatentState {
    Eigen::MatrixXd z;  ///< T x k
    Eigen::MatrixXd w;  ///< edges x k
    Eigen::VectorXd b;  ///< per edge
    double phi = 0.0;
    double objective = 0.0;
    Eigen::MatrixXd reconstruction() const;  ///< T x edges
};

/// Low-rank fit of target paths Y (T x edges).
LatentState fit_latent_paths(const Eigen::MatrixXd& targets, const LatentConfig& cfg);

/// DVC-latent: low-rank reconstruction of a DVC-smooth model's latent paths.
FittedVine fit_dvc_latent(const FittedVine& smooth, const LatentConfig& cfg);

/// Best constant-parameter fit of one family on the pooled windows.
WindowFit fit_constant(Family f, const std::vector<PairSample>& windows, std::span<const double> nu_grid);

}  // namespace dvc
