#include "dvc/benchgen.hpp"
#include "dvc/errors.hpp"
#include "dvc/paircopula.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace dvc;

namespace {

double pearson_cols(const Eigen::MatrixXd& m, int a, int b) {
    return pearson(std::span<const double>(m.col(a).data(), m.rows()), std::span<const double>(m.col(b).data(), m.rows()));
}

double kendall_cols(const Eigen::MatrixXd& m, int a, int b) {
    return kendall_tau(std::span<const double>(m.col(a).data(), m.rows()), std::span<const double>(m.col(b).data(), m.rows()));
}

// Fraction of rows where both columns fall in the lower (or upper) 5% of their own column.
double co_exceedance(const Eigen::MatrixXd& m, int a, int b, bool lower) {
    auto cut = [&](int c) {
        std::vector<double> v(m.col(c).data(), m.col(c).data() + m.rows());
        std::sort(v.begin(), v.end());
        return v[static_cast<std::size_t>(lower ? 0.05 * v.size() : 0.95 * v.size())];
    };
    const double ca = cut(a), cb = cut(b);
    int k = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        k += lower ? (m(r, a) < ca && m(r, b) < cb) : (m(r, a) > ca && m(r, b) > cb);
    return static_cast<double>(k) / static_cast<double>(m.rows());
}

double mean_co_exceedance(const Eigen::MatrixXd& m, bool lower, int root = -1) {
    double s = 0;
    int n = 0;
    for (int a = 0; a < m.cols(); ++a)
        for (int b = a + 1; b < m.cols(); ++b)
            if (root < 0 || a == root) s += co_exceedance(m, a, b, lower), ++n;
    return s / n;
}

// Kolmogorov-Smirnov critical value at alpha = 0.001.
double ks_critical(std::size_t n) { return 1.9495 / std::sqrt(static_cast<double>(n)); }

double ks_normal(const std::vector<double>& x) {
    std::vector<double> u;
    for (double v : x) u.push_back(normal_cdf(v));
    return oracle::ks_uniform(u);
}

}  // namespace

TEST_CASE("scenario names and dispatch") {
    CHECK(scenario_names().size() == 7);
    CHECK_THROWS_AS(generate_scenario("nope"), ConfigError);
    try {
        check_scenario_name("bogus");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("tail_df") != std::string::npos);
    }
    CHECK(child_seed(2026, 3) == 5026);
}

TEST_CASE("generators are deterministic; seeds change data, not schedules") {
    for (const auto& name : scenario_names()) {
        CAPTURE(name);
        const Scenario a = generate_scenario(name, 7), b = generate_scenario(name, 7), c = generate_scenario(name, 8);
        REQUIRE(a.data.windows.size() == b.data.windows.size());
        for (std::size_t t = 0; t < a.data.windows.size(); ++t) CHECK(a.data.windows[t] == b.data.windows[t]);
        CHECK(a.data.windows[0] != c.data.windows[0]);
        CHECK(a.truth.labels == c.truth.labels);
        CHECK(a.truth.schedule == c.truth.schedule);
        CHECK(a.truth.labels.size() == a.data.windows.size());
    }
}

TEST_CASE("tail-DF: dimensions, correlation, tail co-exceedance") {
    const Scenario s = gen_tail_df();
    REQUIRE(s.data.windows.size() == 24);
    CHECK(s.data.windows[0].rows() == 250);
    CHECK(s.data.windows[0].cols() == 5);
    for (int half = 0; half < 2; ++half) {
        double r = 0;
        for (int t = 12 * half; t < 12 * half + 12; ++t)
            for (int a = 0; a < 5; ++a)
                for (int b = a + 1; b < 5; ++b) r += pearson_cols(s.data.windows[t], a, b) / 120;
        CHECK(std::abs(r - 0.6) < 0.08);
    }
    int wins = 0;
    for (int t = 0; t < 12; ++t)
        for (bool lower : {true, false})
            wins += mean_co_exceedance(s.data.windows[t], lower) > mean_co_exceedance(s.data.windows[t + 12], lower);
    MESSAGE("tail-DF co-exceedance wins " << wins << "/24");
    CHECK(wins >= 20);
}

TEST_CASE("tail switch: parameters, tau level, tail orientation") {
    const Scenario s = gen_tail_switch();
    CHECK(s.truth.schedule["clayton_theta"].get<double>() == doctest::Approx(1.3333).epsilon(1e-4));
    CHECK(s.truth.schedule["gumbel_theta"].get<double>() == doctest::Approx(1.6667).epsilon(1e-4));
    // Per-window mean over the four tree-1 edges. Its sampling sd at N=250 is
    // ~0.024, so +-0.06 is only ~2.5 sd; the per-window band is Bonferroni over
    // 24 windows (z = 4.1) with the sd measured on independent replicate seeds.
    auto window_mean = [](const Eigen::MatrixXd& w) {
        double m = 0;
        for (int j = 1; j < 5; ++j) m += kendall_cols(w, 0, j) / 4;
        return m;
    };
    double ss = 0;
    for (std::uint64_t r = 0; r < 40; ++r) {
        const double m = window_mean(gen_tail_switch(9000 + r).data.windows[0]);
        ss += (m - 0.4) * (m - 0.4) / 40;
    }
    const double band = 4.1 * std::sqrt(ss);
    MESSAGE("per-window tau band " << band);
    for (int t = 0; t < 24; ++t) CHECK(std::abs(window_mean(s.data.windows[t]) - 0.4) < band);
    double lo[2] = {0, 0}, up[2] = {0, 0}, tau[2] = {0, 0};
    for (int t = 0; t < 24; ++t) {
        lo[t / 12] += mean_co_exceedance(s.data.windows[t], true, 0) / 12;
        up[t / 12] += mean_co_exceedance(s.data.windows[t], false, 0) / 12;
        for (int j = 1; j < 5; ++j) tau[t / 12] += kendall_cols(s.data.windows[t], 0, j) / 48;
    }
    CHECK(std::abs(tau[0] - 0.4) < 0.06);
    CHECK(std::abs(tau[1] - 0.4) < 0.06);
    CHECK(lo[1] < lo[0]);
    CHECK(up[1] > up[0]);
}

TEST_CASE("hub switch and agent schedule") {
    const Scenario h = gen_hub_switch();
    CHECK(h.data.windows.size() == 24);
    CHECK(h.data.windows[0].cols() == 8);
    CHECK(h.truth.labels[11] == "hub0");
    CHECK(h.truth.labels[12] == "hub1");

    int total = 0;
    std::vector<int> lens;
    for (const auto& [l, n] : agent_schedule()) total += n, lens.push_back(n);
    CHECK(total == 48);
    CHECK(lens == std::vector<int>{4, 5, 3, 6, 4, 4, 4, 5, 6, 4, 3});
    const Scenario a = gen_agent_episodes();
    CHECK(a.data.windows.size() == 48);
    CHECK(a.data.windows[0].rows() == 300);
    CHECK(a.data.windows[0].cols() == 6);
    CHECK(a.truth.labels[4] == "pairwise");
    CHECK(a.truth.labels[12] == "higher");
    // higher-order windows: the Clayton leaf pair given the hub shows lower-tail concordance
    double tau12 = 0;
    for (int t = 12; t < 18; ++t) tau12 += kendall_cols(a.data.windows[t], 1, 2) / 6;
    CHECK(tau12 > 0.2);
}

TEST_CASE("XOR stress: near-zero pairwise correlation, deterministic triplet") {
    const Scenario s = gen_xor();
    REQUIRE(s.data.windows.size() == 8);
    double worst = 0;
    for (const auto& w : s.data.windows) {
        CHECK(w.rows() == 3000);
        for (int a = 0; a < 3; ++a)
            for (int b = a + 1; b < 3; ++b) worst = std::max(worst, std::abs(pearson_cols(w, a, b)));
    }
    MESSAGE("XOR max |pairwise r| " << worst);
    CHECK(worst < 0.05);
    const auto& w = s.data.windows[6];
    int close = 0;
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
        const double d = std::abs(std::fmod(normal_cdf(w(i, 0)) + normal_cdf(w(i, 1)), 1.0) - normal_cdf(w(i, 2)));
        close += std::min(d, 1.0 - d) < 0.01;
    }
    CHECK(close > 0.99 * w.rows());
}

TEST_CASE("showcase: dimensions, phases, chronological split, independence phase") {
    const Scenario s = gen_showcase();
    CHECK(s.data.windows.size() == 60);
    CHECK(s.data.windows[0].cols() == 10);
    CHECK(s.data.windows[0].rows() == 300);
    CHECK(s.data.split == SplitMode::Chronological);
    CHECK(s.data.train_frac == 0.85);
    CHECK(s.truth.labels[14] == "independence");
    CHECK(s.truth.labels[15] == "gaussian_star");
    CHECK(s.truth.labels[30] == "star_triplets");
    CHECK(s.truth.labels[45] == "clayton");
    // independence phase pooled over its 15 windows (one window alone has sd ~ 0.058)
    Eigen::MatrixXd pooled(15 * 300, 10);
    for (int t = 0; t < 15; ++t) pooled.middleRows(300 * t, 300) = s.data.windows[t];
    for (int a = 0; a < 10; ++a)
        for (int b = a + 1; b < 10; ++b) CHECK(std::abs(pearson_cols(pooled, a, b)) < 0.05);
    // star phase correlation level
    double r = 0;
    for (int t = 15; t < 30; ++t) r += pearson_cols(s.data.windows[t], 0, 1) / 15;
    CHECK(r == doctest::Approx(0.55).epsilon(0.1));
}

TEST_CASE("marginal calibration of Gaussianized coordinates") {
    for (const char* name : {"showcase", "xor_stress", "mult_triplet"}) {
        CAPTURE(name);
        const Scenario s = generate_scenario(name);
        for (Eigen::Index c = 0; c < s.data.windows[0].cols(); ++c) {
            std::vector<double> x;
            for (const auto& w : s.data.windows) x.insert(x.end(), w.col(c).data(), w.col(c).data() + w.rows());
            CHECK(ks_normal(x) < ks_critical(x.size()));
        }
    }
}

TEST_CASE("rank Gaussianization") {
    Eigen::MatrixXd x(4, 1);
    x << 3.1, 0.2, 5.0, 1.1;
    const Eigen::MatrixXd g = rank_gaussianize(x);
    CHECK(g(0, 0) == doctest::Approx(normal_quantile(0.6)));
    CHECK(g(1, 0) == doctest::Approx(normal_quantile(0.2)));
}

TEST_CASE("information oracles") {
    CHECK(gaussian_pair_mi(0.55) == doctest::Approx(0.18013).epsilon(1e-4));
    CHECK(gaussian_pair_mi(0.0) == 0.0);
    CHECK(gaussian_pair_mi(0.6) == doctest::Approx(0.223).epsilon(1e-3));
    CHECK_THROWS_AS(oracle_information("hub_switch"), ConfigError);

    const MonteCarloValue cl = clayton_pair_mi(3.5, 1000000, 1);
    CHECK(cl.std_error < 0.005);
    // Clayton MI is larger than Gaussian MI at the same Kendall tau
    CHECK(cl.value > gaussian_pair_mi(std::sin(M_PI / 2 * theta_to_tau(EdgeState::clayton(3.5)))));

    const TripletInformation tri = triplet_information(0.25, 1000000, 2);
    MESSAGE("triplet sigma=0.25: total " << tri.total.value << " pair " << tri.pair.value << " higher " << tri.higher.value);
    CHECK(tri.total.std_error < 0.005);
    CHECK(tri.pair.std_error < 0.005);
    CHECK(tri.higher.std_error < 0.005);
    CHECK(tri.total.value == doctest::Approx(tri.pair.value + tri.higher.value));
    CHECK(tri.higher.value > 0.0);

    // t copula total correlation exceeds the Gaussian one and approaches it as df grows
    // bivariate t mutual information by adaptive 2-d quadrature of the density
    // (computed independently, frozen): 0.2655533 at nu=3, 0.2231560 at nu=200
    const MonteCarloValue t3 = student_t_total_correlation(2, 0.6, 3.0, 1000000, 3);
    const MonteCarloValue t200 = student_t_total_correlation(2, 0.6, 200.0, 1000000, 4);
    CHECK(std::abs(t3.value - 0.2655533) < 4 * t3.std_error);
    CHECK(std::abs(t200.value - 0.2231560) < 4 * t200.std_error);
}
