#pragma once

#include "dvc/numkernel.hpp"
#include "dvc/temporal.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace dvc {

/// Column-wise normal scores Phi^{-1}(u).
Eigen::MatrixXd normal_scores(const Eigen::MatrixXd& u);

/// Correlation of normal scores, projected to a valid correlation matrix.
CorrelationMatrix fit_gaussian_copula(const Eigen::MatrixXd& u);

/// log c_R(u) = -1/2 ln det R - 1/2 x'(R^{-1} - I)x with x the normal scores.
double gaussian_copula_logdensity(const CorrelationMatrix& R, std::span<const double> u);

/// Per-row log-densities for a whole sample.
Eigen::VectorXd gaussian_copula_logdensities(const CorrelationMatrix& R, const Eigen::MatrixXd& u);

struct GaussianCopulaModel {
    std::vector<CorrelationMatrix> windows;
};
GaussianCopulaModel fit_gaussian_copula_windows(const WindowSeq& train);

// ---------------------------------------------------------------------------
// Fisher-z Gaussian state-space model
// ---------------------------------------------------------------------------

inline const std::vector<double> kSsmQGrid = {0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1};
inline constexpr double kSsmPriorVariance = 1e6;

struct KalmanPath {
    std::vector<double> mean;
    std::vector<double> var;
};

/// Filtered moments of a scalar random walk z_t = z_{t-1} + w_t, w_t ~ N(0, q),
/// observed as y_t = z_t + e_t, e_t ~ N(0, r_t), with a N(prior_mean, prior_var)
/// prior on the first state.
KalmanPath kalman_random_walk(std::span<const double> y, std::span<const double> r, double q,
                              double prior_mean = 0.0, double prior_var = kSsmPriorVariance);

struct FisherZSSM {
    double q = 0.0;                          ///< selected process variance
    std::vector<double> q_scores;            ///< held-out mean NLL per grid value
    std::vector<double> obs_var;             ///< (N_t - 3)^{-1}
    Eigen::MatrixXd z;                       ///< T x pairs, filtered Fisher-z means
    std::vector<CorrelationMatrix> windows;  ///< filtered correlations per window
};

/// Filters every pair's Fisher-z correlation across windows and selects q by
/// mean held-out Gaussian-copula NLL on `heldout`. ConfigError if some
/// N_t <= 3; DomainError for T < 2.
FisherZSSM fit_gaussian_ssm(const WindowSeq& train, const WindowSeq& heldout,
                            const std::vector<double>& q_grid = kSsmQGrid);

}  // namespace dvc
