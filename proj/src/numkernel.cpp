#include "dvc/numkernel.hpp"

#include "dvc/errors.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/bernoulli.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace dvc {

namespace {

constexpr double kPi = std::numbers::pi;

double poly(const double* c, int n, double x) {
    double r = c[n - 1];
    for (int i = n - 2; i >= 0; --i) r = r * x + c[i];
    return r;
}

// Continued fraction for the incomplete beta (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIter = 20000;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) return h;
    }
    throw NumericalError("incomplete beta continued fraction did not converge");
}

// Hill (1970) approximation to the Student-t quantile; used as a starting
// point for Newton refinement.
double student_t_quantile_hill(double p, double nu) {
    const bool upper = p > 0.5;
    const double two_sided = 2.0 * std::min(p, 1.0 - p);
    double q;
    if (std::fabs(nu - 2.0) < 1e-12) {
        q = std::sqrt(2.0 / (two_sided * (2.0 - two_sided)) - 2.0);
    } else if (nu < 1.0 + 1e-12) {
        const double ang = two_sided * kPi / 2.0;
        q = std::cos(ang) / std::sin(ang);
    } else {
        const double a = 1.0 / (nu - 0.5);
        const double b = 48.0 / (a * a);
        double c = ((20700.0 * a / b - 98.0) * a - 16.0) * a + 96.36;
        const double d = ((94.5 / (b + c) - 3.0) / b + 1.0) * std::sqrt(a * kPi / 2.0) * nu;
        double y = std::pow(d * two_sided, 2.0 / nu);
        if (y > 0.05 + a) {
            const double x = normal_quantile(0.5 * two_sided);
            y = x * x;
            if (nu < 5.0) c += 0.3 * (nu - 4.5) * (x + 0.6);
            c = (((0.05 * d * x - 5.0) * x - 7.0) * x - 2.0) * x + b + c;
            y = (((((0.4 * y + 6.3) * y + 36.0) * y + 94.5) / c - y - 3.0) / b + 1.0) * x;
            y = std::expm1(a * y * y);
        } else {
            y = ((1.0 / (((nu + 6.0) / (nu * y) - 0.089 * d - 0.822) * (nu + 2.0) * 3.0) +
                  0.5 / (nu + 4.0)) *
                     y -
                 1.0) *
                    (nu + 1.0) / (nu + 2.0) +
                1.0 / y;
        }
        q = std::sqrt(nu * y);
    }
    return upper ? q : -q;
}

std::int64_t merge_count_inversions(std::vector<double>& v, std::vector<double>& buf, std::size_t lo,
                                    std::size_t hi) {
    if (hi - lo < 2) return 0;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::int64_t swaps = merge_count_inversions(v, buf, lo, mid) + merge_count_inversions(v, buf, mid, hi);
    std::size_t i = lo, j = mid, k = lo;
    while (i < mid && j < hi) {
        if (v[j] < v[i]) {
            swaps += static_cast<std::int64_t>(mid - i);
            buf[k++] = v[j++];
        } else {
            buf[k++] = v[i++];
        }
    }
    while (i < mid) buf[k++] = v[i++];
    while (j < hi) buf[k++] = v[j++];
    std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
              v.begin() + static_cast<std::ptrdiff_t>(lo));
    return swaps;
}

std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

double min_eigenvalue(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

}  // namespace

double normal_cdf(double x) {
    const double v = 0.5 * std::erfc(-x / std::numbers::sqrt2);
    return std::clamp(v, 1e-300, 1.0);
}

double normal_pdf(double x) {
    static const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * kPi);
    return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_quantile: p must lie in (0,1)");
    static constexpr double a[8] = {3.3871328727963666080e0, 1.3314166789178437745e+2, 1.9715909503065514427e+3,
                                    1.3731693765509461125e+4, 4.5921953931549871457e+4, 6.7265770927008700853e+4,
                                    3.3430575583588128105e+4, 2.5090809287301226727e+3};
    static constexpr double b[8] = {1.0, 4.2313330701600911252e+1, 6.8718700749205790830e+2,
                                    5.3941960214247511077e+3, 2.1213794301586595867e+4, 3.9307895800092710610e+4,
                                    2.8729085735721942674e+4, 5.2264952788528545610e+3};
    static constexpr double c[8] = {1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
                                    3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
                                    2.27238449892691845833e-2, 7.74545014278341407640e-4};
    static constexpr double d[8] = {1.0, 2.05319162663775882187e0, 1.67638483018380384940e0,
                                    6.89767334985100004550e-1, 1.48103976427480074590e-1, 1.51986665636164571966e-2,
                                    5.47593808499534494600e-4, 1.05075007164441684324e-9};
    static constexpr double e[8] = {6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
                                    2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
                                    2.71155556874348757815e-5, 2.01033439929228813265e-7};
    static constexpr double f[8] = {1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1,
                                    1.48753612908506148525e-2, 7.86869131145613259100e-4, 1.84631831751005468180e-5,
                                    1.42151175831644588870e-7, 2.04426310338993978564e-15};
    const double q = p - 0.5;
    if (std::fabs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q * poly(a, 8, r) / poly(b, 8, r);
    }
    double r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double x;
    if (r <= 5.0) {
        r -= 1.6;
        x = poly(c, 8, r) / poly(d, 8, r);
    } else {
        r -= 5.0;
        x = poly(e, 8, r) / poly(f, 8, r);
    }
    return q < 0.0 ? -x : x;
}

double incomplete_beta(double a, double b, double x, double xc) {
    if (x <= 0.0) return 0.0;
    if (xc <= 0.0) return 1.0;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log(xc);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, xc) / b;
}

double student_t_cdf(double x, double nu) {
    if (!(nu > 0.0)) throw DomainError("student_t_cdf: degrees of freedom must be positive");
    if (x == 0.0) return 0.5;
    const double x2 = x * x;
    const double tail = 0.5 * incomplete_beta(0.5 * nu, 0.5, nu / (nu + x2), x2 / (nu + x2));
    return x > 0.0 ? 1.0 - tail : tail;
}

double student_t_pdf(double x, double nu) {
    const double log_norm = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(nu * kPi);
    return std::exp(log_norm - 0.5 * (nu + 1.0) * std::log1p(x * x / nu));
}

double student_t_quantile(double p, double nu) {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("student_t_quantile: p must lie in (0,1)");
    if (!(nu > 0.0)) throw DomainError("student_t_quantile: degrees of freedom must be positive");
    if (p == 0.5) return 0.0;
    if (nu > 1e7) return normal_quantile(p);
    double x = student_t_quantile_hill(p, nu);
    const bool lower = p < 0.5;
    // Newton on the smaller tail for relative accuracy.
    const double target = lower ? p : 1.0 - p;
    double xa = -std::fabs(x);
    for (int it = 0; it < 8; ++it) {
        const double f = student_t_cdf(xa, nu) - target;
        const double step = f / student_t_pdf(xa, nu);
        double next = xa - step;
        if (next > 0.0) next = 0.5 * xa;
        if (std::fabs(next - xa) <= 1e-14 * std::max(1.0, std::fabs(xa))) {
            xa = next;
            break;
        }
        xa = next;
    }
    return lower ? xa : -xa;
}

double fisher_z(double r) {
    if (!(std::fabs(r) < 1.0)) throw DomainError("fisher_z: |r| must be < 1");
    return std::atanh(r);
}

double fisher_z_inverse(double z) { return std::tanh(z); }

double debye1(double x) {
    if (!(x > 0.0)) throw DomainError("debye1: x must be positive");
    // Bernoulli series (radius 2 pi); the adaptive rule stalls on the nearly
    // linear integrand at small x.
    if (x < 2.0) {
        double sum = 1.0 - x / 4.0, xp = 1.0, fact = 1.0;
        for (int k = 1; k <= 24; ++k) {
            xp *= x * x;
            fact *= (2.0 * k - 1.0) * (2.0 * k);
            const double term = boost::math::bernoulli_b2n<double>(k) * xp / ((2.0 * k + 1.0) * fact);
            sum += term;
            if (std::fabs(term) < 1e-18 * sum) break;
        }
        return sum;
    }
    auto integrand = [](double t) { return t == 0.0 ? 1.0 : t / std::expm1(t); };
    const double integral =
        boost::math::quadrature::gauss_kronrod<double, 21>::integrate(integrand, 0.0, x, 20, 1e-13);
    return integral / x;
}

double softplus(double x) {
    if (x > 35.0) return x;
    if (x < -35.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

double softplus_inverse(double y) {
    if (!(y > 0.0)) throw DomainError("softplus_inverse: y must be positive");
    if (y > 35.0) return y;
    return std::log(std::expm1(y));
}

double kendall_tau(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    if (y.size() != n) throw DomainError("kendall_tau: size mismatch");
    if (n < 2) return 0.0;
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
    });
    std::int64_t x_ties = 0, joint_ties = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i + 1;
        while (j < n && x[idx[j]] == x[idx[i]]) ++j;
        const auto len = static_cast<std::int64_t>(j - i);
        x_ties += len * (len - 1) / 2;
        for (std::size_t k = i; k < j;) {
            std::size_t l = k + 1;
            while (l < j && y[idx[l]] == y[idx[k]]) ++l;
            const auto jl = static_cast<std::int64_t>(l - k);
            joint_ties += jl * (jl - 1) / 2;
            k = l;
        }
        i = j;
    }
    std::vector<double> ys(n), buf(n);
    for (std::size_t i = 0; i < n; ++i) ys[i] = y[idx[i]];
    const std::int64_t discordant = merge_count_inversions(ys, buf, 0, n);
    std::int64_t y_ties = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i + 1;
        while (j < n && ys[j] == ys[i]) ++j;
        const auto len = static_cast<std::int64_t>(j - i);
        y_ties += len * (len - 1) / 2;
        i = j;
    }
    const auto total = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
    if (total == x_ties || total == y_ties) return 0.0;
    const double con_minus_dis =
        static_cast<double>(total - x_ties - y_ties + joint_ties - 2 * discordant);
    return con_minus_dis / std::sqrt(static_cast<double>(total - x_ties)) /
           std::sqrt(static_cast<double>(total - y_ties));
}

Eigen::MatrixXd kendall_matrix(const Eigen::MatrixXd& data) {
    const auto d = data.cols();
    Eigen::MatrixXd tau = Eigen::MatrixXd::Identity(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = i + 1; j < d; ++j) {
            const double t = kendall_tau(std::span<const double>(data.col(i).data(), data.rows()),
                                         std::span<const double>(data.col(j).data(), data.rows()));
            tau(i, j) = tau(j, i) = t;
        }
    }
    return tau;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    if (y.size() != n || n < 2) throw DomainError("pearson: need two equally sized samples");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

CorrelationMatrix nearest_pd_correlation(const Eigen::MatrixXd& m) {
    if (m.rows() != m.cols() || m.rows() == 0) throw DomainError("nearest_pd_correlation: need a square matrix");
    const auto d = m.rows();
    Eigen::MatrixXd a = 0.5 * (m + m.transpose());
    // Renormalize the diagonal to 1.
    bool unit = true;
    for (Eigen::Index i = 0; i < d; ++i) unit = unit && a(i, i) == 1.0;
    if (!unit) {
        Eigen::VectorXd s(d);
        for (Eigen::Index i = 0; i < d; ++i) s(i) = a(i, i) > 0.0 ? 1.0 / std::sqrt(a(i, i)) : 1.0;
        a = s.asDiagonal() * a * s.asDiagonal();
        a.diagonal().setOnes();
    }
    if (min_eigenvalue(a) >= CorrelationMatrix::kMinEigenvalue) return CorrelationMatrix(std::move(a));

    double floor = CorrelationMatrix::kMinEigenvalue;
    for (int attempt = 0; attempt < 60; ++attempt) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
        Eigen::VectorXd lam = es.eigenvalues().cwiseMax(floor);
        Eigen::MatrixXd r = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
        Eigen::VectorXd s = r.diagonal().cwiseSqrt().cwiseInverse();
        r = s.asDiagonal() * r * s.asDiagonal();
        r = 0.5 * (r + r.transpose());
        r.diagonal().setOnes();
        if (min_eigenvalue(r) >= CorrelationMatrix::kMinEigenvalue) return CorrelationMatrix(std::move(r));
        floor *= 2.0;
    }
    throw NumericalError("nearest_pd_correlation: projection failed");
}

SeededRng::SeededRng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t x = seed;
    for (auto& s : s_) s = splitmix64(x);
}

std::uint64_t SeededRng::next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double SeededRng::uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t SeededRng::uniform_int(std::uint64_t n) {
    if (n == 0) throw DomainError("uniform_int: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do {
        r = next_u64();
    } while (r >= limit);
    return r % n;
}

double SeededRng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
}

double SeededRng::gamma(double shape) {
    if (!(shape > 0.0)) throw DomainError("gamma: shape must be positive");
    if (shape < 1.0) {
        const double g = gamma(shape + 1.0);
        return g * std::pow(uniform(), 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

}  // namespace dvc
