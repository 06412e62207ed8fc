#include "dvc/paircopula.hpp"

#include "dvc/errors.hpp"
#include "dvc/optimize.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <mutex>
#include <numbers>
#include <sstream>

namespace dvc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Frank parameters this close to zero are evaluated as the independence copula.
constexpr double kFrankZero = 1e-10;

double log_sum_exp(double a, double b) {
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double student_t_log_const(double nu) {
    return std::lgamma(0.5 * (nu + 2.0)) + std::lgamma(0.5 * nu) - 2.0 * std::lgamma(0.5 * (nu + 1.0));
}

// ---- per-family pointwise kernels (inputs already clamped) ----

double gaussian_logc(double rho, double x, double y) {
    const double r2 = rho * rho;
    return -0.5 * std::log1p(-r2) - (r2 * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * (1.0 - r2));
}

double student_logc(double rho, double nu, double log_const, double x, double y) {
    const double r2 = rho * rho;
    const double q = (x * x + y * y - 2.0 * rho * x * y) / (nu * (1.0 - r2));
    return log_const - 0.5 * std::log1p(-r2) - 0.5 * (nu + 2.0) * std::log1p(q) +
           0.5 * (nu + 1.0) * (std::log1p(x * x / nu) + std::log1p(y * y / nu));
}

double clayton_logc(double theta, double lu, double lv) {
    const double s = std::expm1(-theta * lu) + std::expm1(-theta * lv);
    return std::log1p(theta) - (1.0 + theta) * (lu + lv) - (2.0 + 1.0 / theta) * std::log1p(s);
}

double gumbel_logc(double theta, double lu, double lv) {
    const double ltu = std::log(-lu);
    const double ltv = std::log(-lv);
    const double la = log_sum_exp(theta * ltu, theta * ltv);
    const double a1 = std::exp(la / theta);
    return -a1 + (theta - 1.0) * (ltu + ltv) - lu - lv + (1.0 / theta - 2.0) * la + std::log(a1 + theta - 1.0);
}

double frank_logc(double theta, double u, double v) {
    if (std::fabs(theta) < kFrankZero) return 0.0;
    const double em = std::expm1(-theta);
    const double eu = std::expm1(-theta * u);
    const double ev = std::expm1(-theta * v);
    const double den = -em - eu * ev;
    return std::log(theta * -em) - theta * (u + v) - 2.0 * std::log(std::fabs(den));
}

double joe_logc(double theta, double l1u, double l1v) {
    const double a = std::exp(theta * l1u);
    const double b = std::exp(theta * l1v);
    const double s = a + b - a * b;
    return (1.0 / theta - 2.0) * std::log(s) + (theta - 1.0) * (l1u + l1v) + std::log(theta - 1.0 + s);
}

// ---- Joe Kendall tau: quadrature, cached on a grid in log(theta - 1) ----

double joe_tau_quadrature(double theta) {
    if (theta <= 1.0) return 0.0;
    // phi/phi' after s = 1 - t, written as [log(1 - s^th) / s^th] (1 - s^th) s / th so
    // that the s -> 0 end has the finite limit -s/th.
    auto integrand = [theta](double s) {
        if (s <= 0.0 || s >= 1.0) return 0.0;
        const double st = std::exp(theta * std::log(s));
        const double ratio = st > 1e-300 ? std::log1p(-st) / st : -1.0;
        return ratio * (1.0 - st) * s / theta;
    };
    // tanh-sinh copes with the x log x behaviour at s = 1.
    static thread_local boost::math::quadrature::tanh_sinh<double> quad(12);
    const double integral = quad.integrate(integrand, 0.0, 1.0, 1e-12);
    return 1.0 + 4.0 * integral;
}

// Monotone cubic (Fritsch-Carlson) interpolant.
class MonotoneCubic {
public:
    MonotoneCubic() = default;
    MonotoneCubic(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
        const std::size_t n = x_.size();
        std::vector<double> delta(n - 1);
        for (std::size_t i = 0; i + 1 < n; ++i) delta[i] = (y_[i + 1] - y_[i]) / (x_[i + 1] - x_[i]);
        m_.assign(n, 0.0);
        m_[0] = delta[0];
        m_[n - 1] = delta[n - 2];
        for (std::size_t i = 1; i + 1 < n; ++i)
            m_[i] = delta[i - 1] * delta[i] <= 0.0 ? 0.0 : 0.5 * (delta[i - 1] + delta[i]);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            if (delta[i] == 0.0) {
                m_[i] = m_[i + 1] = 0.0;
                continue;
            }
            const double a = m_[i] / delta[i];
            const double b = m_[i + 1] / delta[i];
            const double r = a * a + b * b;
            if (r > 9.0) {
                const double t = 3.0 / std::sqrt(r);
                m_[i] = t * a * delta[i];
                m_[i + 1] = t * b * delta[i];
            }
        }
    }
    double front() const { return x_.front(); }
    double back() const { return x_.back(); }
    double operator()(double x) const {
        auto it = std::upper_bound(x_.begin(), x_.end(), x);
        std::size_t i = it == x_.begin() ? 0 : static_cast<std::size_t>(it - x_.begin()) - 1;
        if (i + 1 >= x_.size()) i = x_.size() - 2;
        const double h = x_[i + 1] - x_[i];
        const double t = (x - x_[i]) / h;
        const double t2 = t * t, t3 = t2 * t;
        return (2 * t3 - 3 * t2 + 1) * y_[i] + (t3 - 2 * t2 + t) * h * m_[i] + (-2 * t3 + 3 * t2) * y_[i + 1] +
               (t3 - t2) * h * m_[i + 1];
    }

private:
    std::vector<double> x_, y_, m_;
};

const MonotoneCubic& joe_tau_table() {
    static const MonotoneCubic table = [] {
        constexpr int kPoints = 700;
        constexpr double kLo = -9.0, kHi = 5.0;  // log(theta - 1)
        std::vector<double> xs(kPoints), ys(kPoints);
        for (int i = 0; i < kPoints; ++i) {
            xs[i] = kLo + (kHi - kLo) * i / (kPoints - 1);
            ys[i] = joe_tau_quadrature(1.0 + std::exp(xs[i]));
        }
        return MonotoneCubic(std::move(xs), std::move(ys));
    }();
    return table;
}

double joe_tau(double theta) {
    if (theta <= 1.0) return 0.0;
    const double x = std::log(theta - 1.0);
    const auto& table = joe_tau_table();
    if (x < table.front() || x > table.back()) return joe_tau_quadrature(theta);
    return table(x);
}

double frank_tau(double theta) {
    if (theta == 0.0) return 0.0;
    const double a = std::fabs(theta);
    double tau;
    if (a < 1e-4)
        tau = a / 9.0 - a * a * a / 900.0;
    else
        tau = 1.0 - 4.0 / a * (1.0 - debye1(a));
    return theta > 0.0 ? tau : -tau;
}

// Solves increasing g(x) = target on [lo, hi] by bisection to machine precision.
template <typename G>
double invert_increasing(G g, double target, double lo, double hi) {
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (g(mid) < target)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

// Generic inverse of h in v by safeguarded Newton (derivative = density).
double h_inverse_numeric(const EdgeState& s, double p, double u) {
    double lo = kUClamp, hi = 1.0 - kUClamp;
    if (h_function(s, lo, u) >= p) return lo;
    if (h_function(s, hi, u) <= p) return hi;
    double v = p;
    for (int it = 0; it < 200; ++it) {
        const double f = h_function(s, v, u) - p;
        if (std::fabs(f) < 1e-15) return v;
        if (f < 0.0)
            lo = v;
        else
            hi = v;
        const double dens = std::exp(log_density(s, u, v));
        double next = v - f / dens;
        if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
        if (hi - lo < 1e-16) return next;
        v = next;
    }
    return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// Family metadata
// ---------------------------------------------------------------------------

std::string_view family_name(Family f) {
    switch (f) {
        case Family::Independence: return "independence";
        case Family::Gaussian: return "gaussian";
        case Family::StudentT: return "student_t";
        case Family::Clayton: return "clayton";
        case Family::Frank: return "frank";
        case Family::Gumbel: return "gumbel";
        case Family::Joe: return "joe";
    }
    return "unknown";
}

Family family_from_name(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "t" || lower == "studentt" || lower == "student-t") lower = "student_t";
    if (lower == "indep") lower = "independence";
    for (Family f : kAllFamilies)
        if (family_name(f) == lower) return f;
    throw ConfigError("unknown copula family '" + std::string(name) + "'");
}

int param_count(Family f) {
    switch (f) {
        case Family::Independence: return 0;
        case Family::StudentT: return 2;
        default: return 1;
    }
}

bool EdgeState::is_valid() const {
    if (!std::isfinite(theta)) return false;
    switch (family) {
        case Family::Independence: return true;
        case Family::Gaussian: return std::fabs(theta) < 1.0;
        case Family::StudentT: return std::fabs(theta) < 1.0 && nu >= kNuMin - 1e-12 && nu <= kNuMax + 1e-12;
        case Family::Clayton: return theta > 0.0;
        case Family::Frank: return theta != 0.0;
        case Family::Gumbel:
        case Family::Joe: return theta >= 1.0;
    }
    return false;
}

void EdgeState::validate() const {
    if (!is_valid()) throw InvalidStateError("invalid copula state: " + describe(*this));
}

std::string describe(const EdgeState& s) {
    std::ostringstream os;
    os << family_name(s.family);
    if (s.family != Family::Independence) os << "(theta=" << s.theta;
    if (s.family == Family::StudentT) os << ", nu=" << s.nu;
    if (s.family != Family::Independence) os << ")";
    return os.str();
}

// ---------------------------------------------------------------------------
// Pointwise
// ---------------------------------------------------------------------------

double log_density(const EdgeState& s, double u, double v) {
    s.validate();
    u = clamp_unit(u);
    v = clamp_unit(v);
    switch (s.family) {
        case Family::Independence: return 0.0;
        case Family::Gaussian: return gaussian_logc(s.theta, normal_quantile(u), normal_quantile(v));
        case Family::StudentT:
            return student_logc(s.theta, s.nu, student_t_log_const(s.nu), student_t_quantile(u, s.nu),
                                student_t_quantile(v, s.nu));
        case Family::Clayton: return clayton_logc(s.theta, std::log(u), std::log(v));
        case Family::Frank: return frank_logc(s.theta, u, v);
        case Family::Gumbel: return gumbel_logc(s.theta, std::log(u), std::log(v));
        case Family::Joe: return joe_logc(s.theta, std::log1p(-u), std::log1p(-v));
    }
    return 0.0;
}

double h_function(const EdgeState& s, double v, double given_u) {
    s.validate();
    const double u = clamp_unit(given_u);
    v = clamp_unit(v);
    double h = v;
    switch (s.family) {
        case Family::Independence: h = v; break;
        case Family::Gaussian: {
            const double x = normal_quantile(u), y = normal_quantile(v);
            h = normal_cdf((y - s.theta * x) / std::sqrt(1.0 - s.theta * s.theta));
            break;
        }
        case Family::StudentT: {
            const double x = student_t_quantile(u, s.nu), y = student_t_quantile(v, s.nu);
            const double scale = std::sqrt((s.nu + x * x) * (1.0 - s.theta * s.theta) / (s.nu + 1.0));
            h = student_t_cdf((y - s.theta * x) / scale, s.nu + 1.0);
            break;
        }
        case Family::Clayton: {
            const double lu = std::log(u), lv = std::log(v);
            const double sum = std::expm1(-s.theta * lu) + std::expm1(-s.theta * lv);
            h = std::exp(-(s.theta + 1.0) * lu - (1.0 + 1.0 / s.theta) * std::log1p(sum));
            break;
        }
        case Family::Frank: {
            if (std::fabs(s.theta) < kFrankZero) {
                h = v;
                break;
            }
            const double em = std::expm1(-s.theta);
            const double eu = std::expm1(-s.theta * u);
            const double ev = std::expm1(-s.theta * v);
            h = (1.0 + eu) * ev / (em + eu * ev);
            break;
        }
        case Family::Gumbel: {
            const double lu = std::log(u), lv = std::log(v);
            const double ltu = std::log(-lu), ltv = std::log(-lv);
            const double la = log_sum_exp(s.theta * ltu, s.theta * ltv);
            h = std::exp(-std::exp(la / s.theta) - lu + (s.theta - 1.0) * ltu + (1.0 / s.theta - 1.0) * la);
            break;
        }
        case Family::Joe: {
            const double l1u = std::log1p(-u), l1v = std::log1p(-v);
            const double a = std::exp(s.theta * l1u), b = std::exp(s.theta * l1v);
            const double sum = a + b - a * b;
            h = std::exp((1.0 / s.theta - 1.0) * std::log(sum) + (s.theta - 1.0) * l1u) * (-std::expm1(s.theta * l1v));
            break;
        }
    }
    return clamp_unit(h);
}

double h_inverse(const EdgeState& s, double p, double given_u) {
    s.validate();
    const double u = clamp_unit(given_u);
    p = clamp_unit(p);
    switch (s.family) {
        case Family::Independence: return p;
        case Family::Gaussian: {
            const double x = normal_quantile(u);
            return clamp_unit(normal_cdf(normal_quantile(p) * std::sqrt(1.0 - s.theta * s.theta) + s.theta * x));
        }
        case Family::StudentT: {
            const double x = student_t_quantile(u, s.nu);
            const double scale = std::sqrt((s.nu + x * x) * (1.0 - s.theta * s.theta) / (s.nu + 1.0));
            const double y = student_t_quantile(p, s.nu + 1.0) * scale + s.theta * x;
            return clamp_unit(student_t_cdf(y, s.nu));
        }
        case Family::Clayton: {
            const double th = s.theta;
            const double lu = std::log(u);
            // A - 1 = (p u^{th+1})^{-th/(1+th)} - u^{-th}
            const double a_minus_1 = std::expm1(-th / (1.0 + th) * (std::log(p) + (th + 1.0) * lu)) - std::expm1(-th * lu);
            return clamp_unit(std::exp(-std::log1p(a_minus_1) / th));
        }
        case Family::Frank: {
            if (std::fabs(s.theta) < kFrankZero) return p;
            const double em = std::expm1(-s.theta);
            const double eu = std::expm1(-s.theta * u);
            const double b = p * em / ((1.0 + eu) - p * eu);
            return clamp_unit(-std::log1p(b) / s.theta);
        }
        case Family::Gumbel:
        case Family::Joe: return h_inverse_numeric(s, p, u);
    }
    return p;
}

double copula_cdf(const EdgeState& s, double u, double v) {
    s.validate();
    u = clamp_unit(u);
    v = clamp_unit(v);
    switch (s.family) {
        case Family::Independence: return u * v;
        case Family::Clayton: {
            const double sum = std::expm1(-s.theta * std::log(u)) + std::expm1(-s.theta * std::log(v));
            return std::exp(-std::log1p(sum) / s.theta);
        }
        case Family::Frank: {
            if (std::fabs(s.theta) < kFrankZero) return u * v;
            const double em = std::expm1(-s.theta);
            return -std::log1p(std::expm1(-s.theta * u) * std::expm1(-s.theta * v) / em) / s.theta;
        }
        case Family::Gumbel: {
            const double la = log_sum_exp(s.theta * std::log(-std::log(u)), s.theta * std::log(-std::log(v)));
            return std::exp(-std::exp(la / s.theta));
        }
        case Family::Joe: {
            const double a = std::exp(s.theta * std::log1p(-u)), b = std::exp(s.theta * std::log1p(-v));
            return 1.0 - std::pow(a + b - a * b, 1.0 / s.theta);
        }
        case Family::Gaussian:
        case Family::StudentT: {
            // C(u, v) = integral_0^u h(v | s) ds.
            auto integrand = [&](double x) { return h_function(s, v, x); };
            return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, 0.0, u, 15, 1e-12);
        }
    }
    return u * v;
}

// ---------------------------------------------------------------------------
// Kendall tau and links
// ---------------------------------------------------------------------------

double theta_to_tau(const EdgeState& s) {
    s.validate();
    switch (s.family) {
        case Family::Independence: return 0.0;
        case Family::Gaussian:
        case Family::StudentT: return 2.0 / std::numbers::pi * std::asin(s.theta);
        case Family::Clayton: return s.theta / (s.theta + 2.0);
        case Family::Frank: return frank_tau(s.theta);
        case Family::Gumbel: return 1.0 - 1.0 / s.theta;
        case Family::Joe: return joe_tau(s.theta);
    }
    return 0.0;
}

EdgeState tau_to_theta(Family f, double tau, double nu) {
    if (!(std::fabs(tau) < 1.0)) throw DomainError("tau_to_theta: |tau| must be < 1");
    switch (f) {
        case Family::Independence:
            if (tau != 0.0) throw DomainError("tau_to_theta: independence only attains tau = 0");
            return EdgeState::independence();
        case Family::Gaussian: return EdgeState::gaussian(std::sin(std::numbers::pi * tau / 2.0));
        case Family::StudentT: return EdgeState::student_t(std::sin(std::numbers::pi * tau / 2.0), nu);
        case Family::Clayton:
            if (!(tau > 0.0)) throw DomainError("tau_to_theta: Clayton needs tau > 0");
            return EdgeState::clayton(2.0 * tau / (1.0 - tau));
        case Family::Gumbel:
            if (tau < 0.0) throw DomainError("tau_to_theta: Gumbel needs tau >= 0");
            return EdgeState::gumbel(1.0 / (1.0 - tau));
        case Family::Frank: {
            if (tau == 0.0) throw DomainError("tau_to_theta: Frank needs tau != 0");
            double hi = 1.0;
            while (frank_tau(hi) < std::fabs(tau)) hi *= 2.0;
            const double theta = invert_increasing(frank_tau, std::fabs(tau), 0.0, hi);
            return EdgeState::frank(tau > 0.0 ? theta : -theta);
        }
        case Family::Joe: {
            if (tau < 0.0) throw DomainError("tau_to_theta: Joe needs tau >= 0");
            if (tau == 0.0) return EdgeState::joe(1.0);
            double hi = 2.0;
            while (joe_tau(hi) < tau) hi *= 2.0;
            return EdgeState::joe(invert_increasing(joe_tau, tau, 1.0, hi));
        }
    }
    return EdgeState::independence();
}

double link_primary(Family f, double eta) {
    switch (f) {
        case Family::Independence: return 0.0;
        case Family::Gaussian:
        case Family::StudentT: return std::clamp(std::tanh(eta), -kRhoMax, kRhoMax);
        case Family::Clayton: return softplus(eta) + kClaytonOffset;
        case Family::Gumbel:
        case Family::Joe: return 1.0 + softplus(eta);
        case Family::Frank: {
            const double t = std::clamp(eta, -kFrankMax, kFrankMax);
            return t == 0.0 ? kFrankZero : t;
        }
    }
    return 0.0;
}

double link_primary_inverse(Family f, double theta) {
    switch (f) {
        case Family::Independence: return 0.0;
        case Family::Gaussian:
        case Family::StudentT: return std::atanh(std::clamp(theta, -kRhoMax, kRhoMax));
        case Family::Clayton: return softplus_inverse(std::max(theta - kClaytonOffset, 1e-300));
        case Family::Gumbel:
        case Family::Joe: return softplus_inverse(std::max(theta - 1.0, 1e-300));
        case Family::Frank: return std::clamp(theta, -kFrankMax, kFrankMax);
    }
    return 0.0;
}

double link_nu(double eta) {
    const double sig = 1.0 / (1.0 + std::exp(-eta));
    return kNuMin + (kNuMax - kNuMin) * sig;
}

double link_nu_inverse(double nu) {
    const double p = std::clamp((nu - kNuMin) / (kNuMax - kNuMin), 1e-12, 1.0 - 1e-12);
    return std::log(p / (1.0 - p));
}

std::pair<double, double> latent_bounds(Family f) {
    switch (f) {
        case Family::Gaussian:
        case Family::StudentT: {
            const double b = std::atanh(kRhoMax);
            return {-b, b};
        }
        case Family::Clayton:
        case Family::Gumbel:
        case Family::Joe: return {-12.0, 30.0};
        case Family::Frank: return {-kFrankMax, kFrankMax};
        case Family::Independence: return {0.0, 0.0};
    }
    return {0.0, 0.0};
}

// ---------------------------------------------------------------------------
// PairSample
// ---------------------------------------------------------------------------

PairSample::PairSample(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw DomainError("PairSample: size mismatch");
    const std::size_t n = u.size();
    u_.resize(n);
    v_.resize(n);
    lu_.resize(n);
    lv_.resize(n);
    l1u_.resize(n);
    l1v_.resize(n);
    x_.resize(n);
    y_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double a = clamp_unit(u[i]), b = clamp_unit(v[i]);
        u_[i] = a;
        v_[i] = b;
        lu_[i] = std::log(a);
        lv_[i] = std::log(b);
        l1u_[i] = std::log1p(-a);
        l1v_[i] = std::log1p(-b);
        x_[i] = normal_quantile(a);
        y_[i] = normal_quantile(b);
    }
}

const PairSample::TScores& PairSample::t_scores(double nu) const {
    for (const auto& c : t_cache_)
        if (c.nu == nu) return c;
    constexpr std::size_t kMaxCached = 6;
    if (t_cache_.size() >= kMaxCached) t_cache_.erase(t_cache_.begin());
    TScores ts{nu, std::vector<double>(u_.size()), std::vector<double>(u_.size())};
    for (std::size_t i = 0; i < u_.size(); ++i) {
        ts.x[i] = student_t_quantile(u_[i], nu);
        ts.y[i] = student_t_quantile(v_[i], nu);
    }
    t_cache_.push_back(std::move(ts));
    return t_cache_.back();
}

void PairSample::log_densities(const EdgeState& s, std::span<double> out) const {
    s.validate();
    const std::size_t n = u_.size();
    if (out.size() != n) throw DomainError("log_densities: output size mismatch");
    switch (s.family) {
        case Family::Independence:
            std::fill(out.begin(), out.end(), 0.0);
            return;
        case Family::Gaussian:
            for (std::size_t i = 0; i < n; ++i) out[i] = gaussian_logc(s.theta, x_[i], y_[i]);
            return;
        case Family::StudentT: {
            const auto& ts = t_scores(s.nu);
            const double lc = student_t_log_const(s.nu);
            for (std::size_t i = 0; i < n; ++i) out[i] = student_logc(s.theta, s.nu, lc, ts.x[i], ts.y[i]);
            return;
        }
        case Family::Clayton:
            for (std::size_t i = 0; i < n; ++i) out[i] = clayton_logc(s.theta, lu_[i], lv_[i]);
            return;
        case Family::Frank:
            for (std::size_t i = 0; i < n; ++i) out[i] = frank_logc(s.theta, u_[i], v_[i]);
            return;
        case Family::Gumbel:
            for (std::size_t i = 0; i < n; ++i) out[i] = gumbel_logc(s.theta, lu_[i], lv_[i]);
            return;
        case Family::Joe:
            for (std::size_t i = 0; i < n; ++i) out[i] = joe_logc(s.theta, l1u_[i], l1v_[i]);
            return;
    }
}

void PairSample::h_values(const EdgeState& s, std::span<double> out) const {
    s.validate();
    const std::size_t n = u_.size();
    if (out.size() != n) throw DomainError("h_values: output size mismatch");
    switch (s.family) {
        case Family::Gaussian: {
            const double sd = std::sqrt(1.0 - s.theta * s.theta);
            for (std::size_t i = 0; i < n; ++i) out[i] = clamp_unit(normal_cdf((y_[i] - s.theta * x_[i]) / sd));
            return;
        }
        case Family::StudentT: {
            const auto& ts = t_scores(s.nu);
            const double r = (1.0 - s.theta * s.theta) / (s.nu + 1.0);
            for (std::size_t i = 0; i < n; ++i) {
                const double scale = std::sqrt((s.nu + ts.x[i] * ts.x[i]) * r);
                out[i] = clamp_unit(student_t_cdf((ts.y[i] - s.theta * ts.x[i]) / scale, s.nu + 1.0));
            }
            return;
        }
        default:
            for (std::size_t i = 0; i < n; ++i) out[i] = h_function(s, v_[i], u_[i]);
            return;
    }
}

double PairSample::sum_log_density(const EdgeState& s) const {
    s.validate();
    const std::size_t n = u_.size();
    double acc = 0.0;
    switch (s.family) {
        case Family::Independence: return 0.0;
        case Family::Gaussian:
            for (std::size_t i = 0; i < n; ++i) acc += gaussian_logc(s.theta, x_[i], y_[i]);
            return acc;
        case Family::StudentT: {
            const auto& ts = t_scores(s.nu);
            const double lc = student_t_log_const(s.nu);
            for (std::size_t i = 0; i < n; ++i) acc += student_logc(s.theta, s.nu, lc, ts.x[i], ts.y[i]);
            return acc;
        }
        case Family::Clayton:
            for (std::size_t i = 0; i < n; ++i) acc += clayton_logc(s.theta, lu_[i], lv_[i]);
            return acc;
        case Family::Frank:
            for (std::size_t i = 0; i < n; ++i) acc += frank_logc(s.theta, u_[i], v_[i]);
            return acc;
        case Family::Gumbel:
            for (std::size_t i = 0; i < n; ++i) acc += gumbel_logc(s.theta, lu_[i], lv_[i]);
            return acc;
        case Family::Joe:
            for (std::size_t i = 0; i < n; ++i) acc += joe_logc(s.theta, l1u_[i], l1v_[i]);
            return acc;
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

namespace {

void check_fit_data(const PairSample& sample) {
    if (sample.size() < kMinFitRows)
        throw DegenerateDataError("pair fit needs at least " + std::to_string(kMinFitRows) + " rows");
    auto constant = [](std::span<const double> x) {
        return std::all_of(x.begin(), x.end(), [&](double a) { return a == x.front(); });
    };
    if (constant(sample.u()) || constant(sample.v())) throw DegenerateDataError("pair fit: zero rank variance");
}

}  // namespace

WindowFit fit_window(Family f, const PairSample& sample, std::span<const double> nu_grid) {
    check_fit_data(sample);
    WindowFit out;
    if (f == Family::Independence) return out;

    const auto [lo, hi] = latent_bounds(f);
    auto fit_one = [&](double nu) {
        auto objective = [&](double eta) {
            EdgeState s{f, link_primary(f, eta), nu};
            const double ll = sample.sum_log_density(s);
            return std::isfinite(ll) ? -ll : kInf;
        };
        const auto m = brent_minimize(objective, lo, hi, 1e-6, 200);
        return std::pair{EdgeState{f, link_primary(f, m.x), nu}, m.fx};
    };

    if (f == Family::StudentT) {
        if (nu_grid.empty()) throw ConfigError("Student-t fit needs a non-empty df grid");
        double best = kInf;
        for (double nu : nu_grid) {
            const double nu_c = std::clamp(nu, kNuMin, kNuMax);
            auto [state, nll] = fit_one(nu_c);
            if (nll < best) {
                best = nll;
                out.state = state;
            }
        }
        out.nll = best;
    } else {
        auto [state, nll] = fit_one(0.0);
        out.state = state;
        out.nll = nll;
    }
    if (!std::isfinite(out.nll)) throw NumericalError("pair fit produced a non-finite likelihood");
    out.aic = 2.0 * out.nll + 2.0 * param_count(f);
    return out;
}

WindowFit fit_window(Family f, std::span<const double> u, std::span<const double> v,
                     std::span<const double> nu_grid) {
    return fit_window(f, PairSample(u, v), nu_grid);
}

FamilySelection select_family_aic(std::span<const Family> candidates, const PairSample& sample,
                                  std::span<const double> nu_grid) {
    if (candidates.empty()) throw ConfigError("select_family_aic: empty candidate list");
    FamilySelection sel;
    sel.per_candidate.resize(candidates.size());
    bool any = false;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        try {
            WindowFit fit = fit_window(candidates[i], sample, nu_grid);
            if (!any || fit.aic < sel.best.aic) {
                sel.best = fit;
                any = true;
            }
            sel.per_candidate[i] = fit;
        } catch (const DegenerateDataError&) {
            throw;
        } catch (const Error&) {
            // Family-specific failure; other candidates still compete.
        }
    }
    if (!any) sel.best = WindowFit{};
    return sel;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

Eigen::MatrixX2d sample(const EdgeState& s, std::size_t n, SeededRng& rng) {
    s.validate();
    if (n == 0) throw DomainError("sample: n must be >= 1");
    Eigen::MatrixX2d out(static_cast<Eigen::Index>(n), 2);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = rng.uniform();
        const double w = rng.uniform();
        out(static_cast<Eigen::Index>(i), 0) = u;
        out(static_cast<Eigen::Index>(i), 1) = h_inverse(s, w, u);
    }
    return out;
}

}  // namespace dvc
