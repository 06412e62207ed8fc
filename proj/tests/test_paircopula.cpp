#include "dvc/errors.hpp"
#include "dvc/paircopula.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace dvc;

namespace {

// Three moderate settings per family, indexed by Kendall tau.
std::vector<EdgeState> settings(Family f) {
    std::vector<EdgeState> out;
    for (double tau : {0.15, 0.35, 0.55}) {
        if (f == Family::Independence) return {EdgeState::independence()};
        if (f == Family::StudentT) {
            out.push_back(tau_to_theta(f, tau, 4.0));
            continue;
        }
        out.push_back(tau_to_theta(f, tau));
    }
    if (f == Family::Gaussian) out.push_back(EdgeState::gaussian(-0.5));
    if (f == Family::StudentT) out.push_back(EdgeState::student_t(-0.4, 16.0));
    if (f == Family::Frank) out.push_back(EdgeState::frank(-6.0));
    return out;
}

std::vector<double> column(const Eigen::MatrixX2d& m, int c) {
    std::vector<double> v(m.rows());
    for (Eigen::Index i = 0; i < m.rows(); ++i) v[i] = m(i, c);
    return v;
}

}  // namespace

TEST_CASE("family metadata") {
    CHECK(param_count(Family::Independence) == 0);
    CHECK(param_count(Family::StudentT) == 2);
    for (Family f : {Family::Gaussian, Family::Clayton, Family::Frank, Family::Gumbel, Family::Joe})
        CHECK(param_count(f) == 1);
    for (Family f : kAllFamilies) CHECK(family_from_name(family_name(f)) == f);
    CHECK_THROWS_AS(family_from_name("rotated_clayton"), ConfigError);
}

TEST_CASE("state validation") {
    CHECK_THROWS_AS(log_density(EdgeState::gaussian(1.0), 0.3, 0.4), InvalidStateError);
    CHECK_THROWS_AS(log_density(EdgeState::clayton(0.0), 0.3, 0.4), InvalidStateError);
    CHECK_THROWS_AS(log_density(EdgeState::gumbel(0.9), 0.3, 0.4), InvalidStateError);
    CHECK_THROWS_AS(log_density(EdgeState::joe(0.5), 0.3, 0.4), InvalidStateError);
    CHECK_THROWS_AS(log_density(EdgeState::frank(0.0), 0.3, 0.4), InvalidStateError);
    CHECK_THROWS_AS(h_function(EdgeState::student_t(0.2, 1.0), 0.3, 0.4), InvalidStateError);
}

TEST_CASE("log density reference values") {
    CHECK(log_density(EdgeState::independence(), 0.2, 0.9) == 0.0);
    // -0.5 ln(1 - 0.25) at zero normal scores
    CHECK(std::fabs(log_density(EdgeState::gaussian(0.5), 0.5, 0.5) - (-0.5 * std::log(0.75))) < 1e-14);
    CHECK(std::fabs(log_density(EdgeState::gaussian(0.5), 0.5, 0.5) - 0.143841) < 1e-6);
    CHECK(std::fabs(log_density(EdgeState::clayton(1e-8), 0.3, 0.7)) < 1e-6);
    CHECK(std::fabs(log_density(EdgeState::gumbel(1.0), 0.3, 0.7)) < 1e-12);
    CHECK(std::fabs(log_density(EdgeState::joe(1.0), 0.3, 0.7)) < 1e-12);
    CHECK(std::fabs(log_density(EdgeState::frank(1e-12), 0.3, 0.7)) < 1e-9);
    // Student-t with huge df approaches the Gaussian copula.
    CHECK(std::fabs(log_density(EdgeState::student_t(0.5, 60.0), 0.2, 0.7) -
                    log_density(EdgeState::gaussian(0.5), 0.2, 0.7)) < 0.05);
}

TEST_CASE("log density finite across the clamped square") {
    for (Family f : kAllFamilies)
        for (const auto& s : settings(f))
            for (double u : {0.0, 1e-12, 1e-10, 0.5, 1 - 1e-10, 1.0})
                for (double v : {0.0, 1e-10, 0.3, 1 - 1e-10, 1.0}) CHECK(std::isfinite(log_density(s, u, v)));
}

TEST_CASE("density integrates to one") {
    // Rank-1 lattice (Kronecker sequence) with 10^6 points.
    const double a1 = 0.7548776662466927, a2 = 0.5698402909980532;
    for (Family f : kAllFamilies) {
        for (const auto& s : settings(f)) {
            PairSample ps;
            std::vector<double> u(1000000), v(1000000);
            for (std::size_t i = 0; i < u.size(); ++i) {
                u[i] = std::fmod(0.5 + a1 * (i + 1), 1.0);
                v[i] = std::fmod(0.5 + a2 * (i + 1), 1.0);
            }
            ps = PairSample(u, v);
            std::vector<double> ld(u.size());
            ps.log_densities(s, ld);
            double acc = 0;
            for (double x : ld) acc += std::exp(x);
            const double mean = acc / static_cast<double>(u.size());
            INFO(describe(s));
            CHECK(mean > 0.99);
            CHECK(mean < 1.01);
        }
    }
}

TEST_CASE("bulk and pointwise densities agree") {
    SeededRng rng(3);
    std::vector<double> u(200), v(200);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = rng.uniform(), v[i] = rng.uniform();
    PairSample ps(u, v);
    for (Family f : kAllFamilies)
        for (const auto& s : settings(f)) {
            double sum = 0;
            for (std::size_t i = 0; i < u.size(); ++i) sum += log_density(s, u[i], v[i]);
            CHECK(std::fabs(ps.sum_log_density(s) - sum) < 1e-9);
        }
}

TEST_CASE("gaussian h-function reference") {
    for (double rho : {-0.7, 0.0, 0.3, 0.95}) CHECK(std::fabs(h_function(EdgeState::gaussian(rho), 0.5, 0.5) - 0.5) < 1e-15);
    const double expect = normal_cdf(normal_quantile(0.9) / 0.6);
    CHECK(std::fabs(h_function(EdgeState::gaussian(0.8), 0.9, 0.5) - expect) < 1e-14);
    // Phi(Phi^{-1}(0.9) / 0.6) = Phi(2.1359193) = 0.9836570029 (scipy oracle).
    CHECK(std::fabs(h_function(EdgeState::gaussian(0.8), 0.9, 0.5) - 0.9836570029286732) < 1e-12);
    for (double x : {0.01, 0.3, 0.77}) CHECK(h_function(EdgeState::independence(), x, 0.4) == x);
}

TEST_CASE("h-function equals the integrated density") {
    boost::math::quadrature::tanh_sinh<double> quad;
    // h(v|u) = integral_0^v c(u, t) dt, evaluated by adaptive quadrature.
    for (Family f : kAllFamilies) {
        for (const auto& s : settings(f)) {
            for (int i = 1; i <= 9; ++i) {
                for (int j = 1; j <= 9; ++j) {
                    const double u = i / 10.0, v = j / 10.0;
                    auto dens = [&](double t) { return std::exp(log_density(s, u, t)); };
                    const double ref = quad.integrate(dens, 0.0, v, 1e-12);
                    INFO(describe(s) << " u=" << u << " v=" << v);
                    CHECK(std::fabs(h_function(s, v, u) - ref) < 1e-5);
                }
            }
        }
    }
}

TEST_CASE("h-function equals the finite-difference copula derivative") {
    const double delta = 1e-5;
    for (Family f : kAllFamilies) {
        for (const auto& s : settings(f)) {
            for (int i = 1; i <= 9; ++i) {
                for (int j = 1; j <= 9; ++j) {
                    const double u = i / 10.0, v = j / 10.0;
                    const double fd = (copula_cdf(s, u + delta, v) - copula_cdf(s, u - delta, v)) / (2 * delta);
                    INFO(describe(s) << " u=" << u << " v=" << v);
                    CHECK(std::fabs(h_function(s, v, u) - fd) < 1e-4);
                }
            }
        }
    }
}

TEST_CASE("h-function is a conditional CDF in v") {
    const double eps = 1e-6;
    for (Family f : kAllFamilies) {
        for (const auto& s : settings(f)) {
            for (int i = 1; i <= 9; ++i) {
                const double u = i / 10.0;
                INFO(describe(s) << " u=" << u);
                CHECK(h_function(s, eps, u) < 1e-3);
                CHECK(h_function(s, 1 - eps, u) > 1 - 1e-3);
                double prev = 0.0;
                for (int j = 1; j < 200; ++j) {
                    const double h = h_function(s, j / 200.0, u);
                    CHECK(h >= prev);
                    CHECK(h > 0.0);
                    CHECK(h < 1.0);
                    prev = h;
                }
            }
        }
    }
}

TEST_CASE("inverse h round trip") {
    for (Family f : kAllFamilies) {
        for (const auto& s : settings(f)) {
            for (int i = 1; i <= 19; ++i) {
                for (int j = 1; j <= 19; ++j) {
                    const double u = i / 20.0, p = j / 20.0;
                    const double v = h_inverse(s, p, u);
                    INFO(describe(s) << " u=" << u << " p=" << p);
                    CHECK(std::fabs(h_function(s, v, u) - p) < 1e-8);
                }
            }
        }
    }
}

TEST_CASE("kendall tau links") {
    CHECK(tau_to_theta(Family::Gaussian, 0.0).theta == 0.0);
    CHECK(std::fabs(tau_to_theta(Family::Clayton, 0.4).theta - 4.0 / 3.0) < 1e-12);
    CHECK(std::fabs(tau_to_theta(Family::Gumbel, 0.4).theta - 5.0 / 3.0) < 1e-12);
    CHECK(std::fabs(theta_to_tau(EdgeState::gaussian(0.5)) - 1.0 / 3.0) < 1e-14);
    CHECK_THROWS_AS(tau_to_theta(Family::Clayton, -0.2), DomainError);
    CHECK_THROWS_AS(tau_to_theta(Family::Gumbel, -0.1), DomainError);
    CHECK_THROWS_AS(tau_to_theta(Family::Joe, -0.1), DomainError);
    CHECK_THROWS_AS(tau_to_theta(Family::Gaussian, 1.0), DomainError);

    // Frank: direct Debye-based formula checked against numeric integration of 4 C dC - 1.
    for (double theta : {-8.0, -1.0, 0.5, 3.0, 12.0}) {
        const auto s = EdgeState::frank(theta);
        // tau = 1 - 4 int int h(u|v) h(v|u) du dv
        double acc = 0;
        const int m = 400;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) {
                const double u = (i + 0.5) / m, v = (j + 0.5) / m;
                acc += h_function(s, u, v) * h_function(s, v, u);
            }
        CHECK(std::fabs(theta_to_tau(s) - (1.0 - 4.0 * acc / (m * m))) < 2e-4);
    }
    // Joe: interpolated quadrature table against the series representation.
    for (double theta : {1.0001, 1.05, 1.5, 2.0, 3.7, 8.0, 20.0, 31.0}) {
        INFO("theta=" << theta);
        CHECK(std::fabs(theta_to_tau(EdgeState::joe(theta)) - oracle::joe_tau_series(theta)) < 1e-8);
    }
}

TEST_CASE("tau round trip per family") {
    for (Family f : {Family::Gaussian, Family::StudentT, Family::Frank}) {
        for (double tau = -0.95; tau < 0.96; tau += 0.05) {
            if (std::fabs(tau) < 1e-9) continue;
            INFO(family_name(f) << " tau=" << tau);
            CHECK(std::fabs(theta_to_tau(tau_to_theta(f, tau)) - tau) < 1e-8);
        }
    }
    for (Family f : {Family::Clayton, Family::Gumbel, Family::Joe}) {
        for (double tau = 0.01; tau < 0.96; tau += 0.02) {
            INFO(family_name(f) << " tau=" << tau);
            CHECK(std::fabs(theta_to_tau(tau_to_theta(f, tau)) - tau) < 1e-8);
        }
    }
}

TEST_CASE("latent links stay in the family domain") {
    for (Family f : kAllFamilies) {
        for (double eta = -60; eta <= 60; eta += 0.5) {
            EdgeState s{f, link_primary(f, eta), link_nu(eta)};
            CHECK(s.is_valid());
        }
        if (f == Family::Independence) continue;
        const auto [lo, hi] = latent_bounds(f);
        for (double eta = lo; eta <= hi; eta += 0.25)
            CHECK(std::fabs(link_primary_inverse(f, link_primary(f, eta)) - eta) < 1e-6);
    }
    for (double eta = -10; eta <= 10; eta += 0.5) CHECK(std::fabs(link_nu_inverse(link_nu(eta)) - eta) < 1e-8);
    CHECK(link_nu(-1e3) >= kNuMin);
    CHECK(link_nu(1e3) <= kNuMax);
}

TEST_CASE("sampling marginals and concordance") {
    for (Family f : kAllFamilies) {
        for (const auto& s : settings(f)) {
            SeededRng rng(101);
            const auto m = sample(s, 100000, rng);
            const auto u = column(m, 0), v = column(m, 1);
            INFO(describe(s));
            CHECK(oracle::ks_uniform(u) < 0.02);
            CHECK(oracle::ks_uniform(v) < 0.02);
            CHECK(std::fabs(kendall_tau(u, v) - theta_to_tau(s)) < 0.01);
        }
    }
    SeededRng rng(7);
    CHECK_THROWS_AS(sample(EdgeState::gaussian(0.3), 0, rng), DomainError);
}

TEST_CASE("sampling reference examples") {
    SeededRng rng(2026);
    {
        const auto m = sample(EdgeState::independence(), 100000, rng);
        CHECK(std::fabs(kendall_tau(column(m, 0), column(m, 1))) < 0.01);
    }
    {
        // Mutual information of a bivariate Gaussian with correlation 0.8 is 0.511 nats.
        const auto m = sample(EdgeState::gaussian(0.8), 100000, rng);
        std::vector<double> x(m.rows()), y(m.rows());
        for (Eigen::Index i = 0; i < m.rows(); ++i) x[i] = normal_quantile(m(i, 0)), y[i] = normal_quantile(m(i, 1));
        const double r = pearson(x, y);
        CHECK(std::fabs(-0.5 * std::log(1 - r * r) - 0.511) < 0.01);
    }
    {
        const auto m = sample(EdgeState::clayton(3.5), 100000, rng);
        CHECK(std::fabs(kendall_tau(column(m, 0), column(m, 1)) - 3.5 / 5.5) < 0.01);
        CHECK(std::fabs(3.5 / 5.5 - 0.636) < 1e-3);
    }
    {
        SeededRng r2(99);
        for (double tau : {0.4}) {
            for (Family f : {Family::Clayton, Family::Gumbel}) {
                const auto m = sample(tau_to_theta(f, tau), 100000, r2);
                CHECK(std::fabs(kendall_tau(column(m, 0), column(m, 1)) - tau) < 0.01);
            }
        }
    }
}

TEST_CASE("window fits") {
    SeededRng rng(17);
    std::vector<double> u(50), v(50);
    for (int i = 0; i < 50; ++i) u[i] = rng.uniform(), v[i] = rng.uniform();
    const auto ind = fit_window(Family::Independence, u, v);
    CHECK(ind.nll == 0.0);
    CHECK(ind.aic == 0.0);

    const auto m = sample(EdgeState::gaussian(0.6), 5000, rng);
    const auto g = fit_window(Family::Gaussian, column(m, 0), column(m, 1));
    CHECK(std::fabs(g.state.theta - 0.6) < 0.03);
    CHECK(std::fabs(g.aic - (2 * g.nll + 2)) < 1e-9);
    // The fit is a likelihood optimum: nearby parameters are no better.
    PairSample ps(column(m, 0), column(m, 1));
    for (double d : {-1e-3, 1e-3})
        CHECK(-ps.sum_log_density(EdgeState::gaussian(g.state.theta + d)) >= g.nll - 1e-6);

    const auto t = fit_window(Family::StudentT, ps);
    CHECK(std::fabs(t.aic - (2 * t.nll + 4)) < 1e-9);
    CHECK((t.state.nu == 4.0 || t.state.nu == 8.0 || t.state.nu == 16.0));

    std::vector<double> few(7, 0.5), few2{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
    CHECK_THROWS_AS(fit_window(Family::Gaussian, few2, few2), DegenerateDataError);
    std::vector<double> flat(20, 0.5), ramp(20);
    for (int i = 0; i < 20; ++i) ramp[i] = (i + 1) / 21.0;
    CHECK_THROWS_AS(fit_window(Family::Gaussian, flat, ramp), DegenerateDataError);
}

TEST_CASE("window fit recovers each family parameter") {
    for (Family f : {Family::Clayton, Family::Frank, Family::Gumbel, Family::Joe}) {
        SeededRng rng(23);
        const auto truth = tau_to_theta(f, 0.4);
        const auto m = sample(truth, 4000, rng);
        const auto fit = fit_window(f, column(m, 0), column(m, 1));
        INFO(describe(truth) << " fitted " << describe(fit.state));
        CHECK(std::fabs(theta_to_tau(fit.state) - 0.4) < 0.03);
    }
}

TEST_CASE("AIC family selection") {
    std::vector<Family> all(kAllFamilies.begin(), kAllFamilies.end());
    // One extra parameter against independence: the likelihood-ratio statistic is
    // asymptotically chi-square(1), so AIC keeps independence with probability
    // P(chi2_1 <= 2) = 0.8427. 99.9% binomial band over 300 repeats: [231, 272].
    const std::vector<Family> ig{Family::Independence, Family::Gaussian};
    int ig_hits = 0, all_hits = 0, clayton_hits = 0;
    for (int rep = 0; rep < 300; ++rep) {
        SeededRng rng(1000 + rep);
        const auto a = sample(EdgeState::independence(), 500, rng);
        PairSample ps(column(a, 0), column(a, 1));
        if (select_family_aic(ig, ps).best.state.family == Family::Independence) ++ig_hits;
        if (rep < 50 && select_family_aic(all, ps).best.state.family == Family::Independence) ++all_hits;
    }
    CHECK(ig_hits >= 231);
    CHECK(ig_hits <= 272);
    // Six dependent alternatives give AIC more chances; independence still wins a clear majority.
    CHECK(all_hits >= 30);
    for (int rep = 0; rep < 50; ++rep) {
        SeededRng rng(5000 + rep);
        const auto c = sample(EdgeState::clayton(3.0), 2000, rng);
        if (select_family_aic(all, PairSample(column(c, 0), column(c, 1))).best.state.family == Family::Clayton)
            ++clayton_hits;
    }
    CHECK(clayton_hits >= 48);

    SeededRng rng(4);
    const auto m = sample(EdgeState::clayton(2.0), 300, rng);
    const std::vector<Family> only{Family::Gaussian};
    const auto sel = select_family_aic(only, PairSample(column(m, 0), column(m, 1)));
    CHECK(sel.best.state.family == Family::Gaussian);
    CHECK(sel.per_candidate.size() == 1);
    CHECK_THROWS_AS(select_family_aic(std::span<const Family>{}, PairSample(column(m, 0), column(m, 1))), ConfigError);
}

TEST_CASE("AIC ties go to the earlier candidate") {
    // Gumbel and Joe both reduce to independence at theta = 1; on anti-concordant
    // data both optimize onto that boundary and tie exactly.
    SeededRng rng(8);
    const auto m = sample(EdgeState::gaussian(-0.5), 500, rng);
    PairSample ps(column(m, 0), column(m, 1));
    const std::vector<Family> gj{Family::Gumbel, Family::Joe}, jg{Family::Joe, Family::Gumbel};
    const auto a = select_family_aic(gj, ps), b = select_family_aic(jg, ps);
    if (a.per_candidate[0]->aic == a.per_candidate[1]->aic) {
        CHECK(a.best.state.family == Family::Gumbel);
        CHECK(b.best.state.family == Family::Joe);
    }
}
