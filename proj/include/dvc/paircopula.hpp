#pragma once

#include "dvc/numkernel.hpp"

#include <Eigen/Dense>

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dvc {

enum class Family { Independence, Gaussian, StudentT, Clayton, Frank, Gumbel, Joe };

inline constexpr std::array<Family, 7> kAllFamilies = {Family::Independence, Family::Gaussian, Family::StudentT,
                                                       Family::Clayton,      Family::Frank,    Family::Gumbel,
                                                       Family::Joe};

std::string_view family_name(Family f);
/// Accepts the names produced by family_name (case-insensitive). Throws ConfigError.
Family family_from_name(std::string_view name);
/// Number of free parameters counted by AIC (StudentT counts its df).
int param_count(Family f);

/// Inputs to every density/h evaluation are clamped to [kUClamp, 1 - kUClamp].
inline constexpr double kUClamp = 1e-10;
inline double clamp_unit(double u) { return u < kUClamp ? kUClamp : (u > 1.0 - kUClamp ? 1.0 - kUClamp : u); }

inline constexpr double kNuMin = 2.1;
inline constexpr double kNuMax = 60.0;
inline constexpr double kFrankMax = 35.0;
inline constexpr double kClaytonOffset = 1e-4;
inline constexpr double kRhoMax = 0.9999;

/// One pair-copula: family tag plus parameters. `theta` is the correlation for
/// the elliptical families; `nu` is only meaningful for StudentT.
struct EdgeState {
    Family family = Family::Independence;
    double theta = 0.0;
    double nu = 0.0;

    static EdgeState independence() { return {}; }
    static EdgeState gaussian(double rho) { return {Family::Gaussian, rho, 0.0}; }
    static EdgeState student_t(double rho, double nu) { return {Family::StudentT, rho, nu}; }
    static EdgeState clayton(double theta) { return {Family::Clayton, theta, 0.0}; }
    static EdgeState frank(double theta) { return {Family::Frank, theta, 0.0}; }
    static EdgeState gumbel(double theta) { return {Family::Gumbel, theta, 0.0}; }
    static EdgeState joe(double theta) { return {Family::Joe, theta, 0.0}; }

    bool is_valid() const;
    /// Throws InvalidStateError if parameters are outside the family domain.
    void validate() const;

    friend bool operator==(const EdgeState&, const EdgeState&) = default;
};

std::string describe(const EdgeState& s);

// ---------------------------------------------------------------------------
// Pointwise evaluation
// ---------------------------------------------------------------------------

/// log c(u, v).
double log_density(const EdgeState& s, double u, double v);
/// h(v | u) = dC(u, v)/du: conditional CDF of V given U = u.
double h_function(const EdgeState& s, double v, double given_u);
/// Inverse of h in its first argument: returns v with h(v | u) = p.
double h_inverse(const EdgeState& s, double p, double given_u);
/// Copula CDF C(u, v); closed forms where they exist.
double copula_cdf(const EdgeState& s, double u, double v);

// ---------------------------------------------------------------------------
// Kendall tau and latent links
// ---------------------------------------------------------------------------

double theta_to_tau(const EdgeState& s);
/// Family parameter with the given Kendall tau. `nu` is carried for StudentT.
/// Throws DomainError when tau is unattainable for the family.
EdgeState tau_to_theta(Family f, double tau, double nu = 8.0);

/// Latent link g_F for the primary parameter: tanh for correlations,
/// softplus + 1e-4 for Clayton, 1 + softplus for Gumbel/Joe, identity with a
/// +-35 clamp for Frank.
double link_primary(Family f, double eta);
double link_primary_inverse(Family f, double theta);
/// Degrees-of-freedom link onto [2.1, 60].
double link_nu(double eta);
double link_nu_inverse(double nu);
/// Bounds on the latent scale used by the one-dimensional searches.
std::pair<double, double> latent_bounds(Family f);

// ---------------------------------------------------------------------------
// Bulk evaluation over a fixed sample
// ---------------------------------------------------------------------------

/// A bivariate sample with per-point transforms precomputed once. Fits and
/// trajectory optimizations evaluate many parameter values against the same
/// data; this keeps the quantile work out of the inner loop. Not thread-safe
/// (the Student-t score cache is mutable).
class PairSample {
public:
    PairSample() = default;
    PairSample(std::span<const double> u, std::span<const double> v);

    std::size_t size() const { return u_.size(); }
    std::span<const double> u() const { return u_; }
    std::span<const double> v() const { return v_; }

    /// Summed log-density at `s`.
    double sum_log_density(const EdgeState& s) const;
    /// Per-point log-densities.
    void log_densities(const EdgeState& s, std::span<double> out) const;
    /// Per-point h(v_i | u_i), clamped to [kUClamp, 1 - kUClamp].
    void h_values(const EdgeState& s, std::span<double> out) const;

private:
    struct TScores {
        double nu;
        std::vector<double> x, y;
    };
    const TScores& t_scores(double nu) const;

    std::vector<double> u_, v_, lu_, lv_, l1u_, l1v_, x_, y_;
    mutable std::vector<TScores> t_cache_;
};

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

inline const std::vector<double> kDefaultNuGrid = {4.0, 8.0, 16.0};
inline constexpr std::size_t kMinFitRows = 8;

struct WindowFit {
    EdgeState state;
    double nll = 0.0;  ///< summed negative log-density at `state`
    double aic = 0.0;  ///< 2 nll + 2 k
};

/// Maximum-likelihood fit of one family on a sample. Brent search on the
/// latent scale (tolerance 1e-6, at most 200 iterations); StudentT is fit for
/// every df in `nu_grid` and the best kept. Throws DegenerateDataError for
/// fewer than 8 rows or a constant margin.
WindowFit fit_window(Family f, const PairSample& sample, std::span<const double> nu_grid = kDefaultNuGrid);
WindowFit fit_window(Family f, std::span<const double> u, std::span<const double> v,
                     std::span<const double> nu_grid = kDefaultNuGrid);

struct FamilySelection {
    WindowFit best;
    std::vector<std::optional<WindowFit>> per_candidate;  ///< aligned with the candidate list
};

/// AIC selection over `candidates`; ties go to the earlier candidate. Failed
/// fits are skipped; if every fit fails, Independence is returned.
FamilySelection select_family_aic(std::span<const Family> candidates, const PairSample& sample,
                                  std::span<const double> nu_grid = kDefaultNuGrid);

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// n x 2 matrix of draws by the conditional method: u ~ U(0,1), v = h^{-1}(w | u).
Eigen::MatrixX2d sample(const EdgeState& s, std::size_t n, SeededRng& rng);

}  // namespace dvc
