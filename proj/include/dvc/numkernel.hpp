#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace dvc {

// ---------------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------------

/// Standard normal CDF. Saturates to [1e-300, 1].
double normal_cdf(double x);

/// Standard normal density.
double normal_pdf(double x);

/// Inverse of the standard normal CDF (Wichura AS241, relative error ~1e-16).
/// Throws DomainError unless 0 < p < 1.
double normal_quantile(double p);

/// Regularized incomplete beta I_x(a, b). `xc` must equal 1 - x; passing it
/// separately keeps precision when x is close to 1.
double incomplete_beta(double a, double b, double x, double xc);

/// Student-t CDF with `nu` degrees of freedom. Throws DomainError for nu <= 0.
double student_t_cdf(double x, double nu);

/// Student-t density.
double student_t_pdf(double x, double nu);

/// Inverse Student-t CDF, polished by Newton steps on student_t_cdf.
double student_t_quantile(double p, double nu);

/// atanh(r). Throws DomainError for |r| >= 1.
double fisher_z(double r);
double fisher_z_inverse(double z);

/// First Debye function D1(x) = (1/x) * integral_0^x t/(e^t - 1) dt, x > 0.
double debye1(double x);

/// log(1 + exp(x)) without overflow.
double softplus(double x);
/// Inverse of softplus for y > 0.
double softplus_inverse(double y);

// ---------------------------------------------------------------------------
// Rank statistics
// ---------------------------------------------------------------------------

/// Kendall tau-b in O(n log n) (Knight's algorithm). Returns 0 when either
/// input is constant.
double kendall_tau(std::span<const double> x, std::span<const double> y);

/// Pairwise Kendall tau-b matrix over the columns of `data`.
Eigen::MatrixXd kendall_matrix(const Eigen::MatrixXd& data);

/// Pearson correlation of two equally sized samples.
double pearson(std::span<const double> x, std::span<const double> y);

// ---------------------------------------------------------------------------
// Correlation matrices
// ---------------------------------------------------------------------------

/// Symmetric, unit-diagonal matrix whose smallest eigenvalue is >= kMinEigenvalue.
/// Only `nearest_pd_correlation` produces one, so holders can rely on the invariant.
class CorrelationMatrix {
public:
    static constexpr double kMinEigenvalue = 1e-10;

    CorrelationMatrix() = default;

    int dim() const { return static_cast<int>(m_.rows()); }
    const Eigen::MatrixXd& matrix() const { return m_; }
    double operator()(int i, int j) const { return m_(i, j); }

private:
    friend CorrelationMatrix nearest_pd_correlation(const Eigen::MatrixXd& m);
    explicit CorrelationMatrix(Eigen::MatrixXd m) : m_(std::move(m)) {}
    Eigen::MatrixXd m_;
};

/// Projects a symmetric matrix onto a valid correlation matrix: eigenvalue
/// clipping followed by diagonal renormalization. A matrix that already
/// satisfies the invariants is returned unchanged.
CorrelationMatrix nearest_pd_correlation(const Eigen::MatrixXd& m);

// ---------------------------------------------------------------------------
// Seeded RNG
// ---------------------------------------------------------------------------

/// xoshiro256** seeded through splitmix64. All distributions are implemented
/// here (not via <random> distributions) so draw sequences do not depend on the
/// standard library vendor.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed);

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64();
    /// Uniform on the open interval (0, 1).
    double uniform();
    /// Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n);
    double normal();
    /// Gamma(shape, scale = 1), Marsaglia-Tsang.
    double gamma(double shape);
    double chi_squared(double dof) { return 2.0 * gamma(0.5 * dof); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::uint64_t s_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace dvc
