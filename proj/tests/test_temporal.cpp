#include "dvc/errors.hpp"
#include "dvc/temporal.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace dvc;

namespace {

// Gaussian copula rows from a correlation matrix.
Eigen::MatrixXd gaussian_rows(const Eigen::MatrixXd& R, int n, SeededRng& rng) {
    const Eigen::MatrixXd L = R.llt().matrixL();
    Eigen::MatrixXd out(n, R.rows());
    Eigen::VectorXd z(R.rows());
    for (int i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = rng.normal();
        const Eigen::VectorXd x = L * z;
        for (Eigen::Index j = 0; j < z.size(); ++j) out(i, j) = normal_cdf(x(j));
    }
    return out;
}

Eigen::MatrixXd star(int d, int hub, double rho) {
    Eigen::MatrixXd R = Eigen::MatrixXd::Constant(d, d, rho * rho);
    for (int j = 0; j < d; ++j) R(hub, j) = R(j, hub) = rho;
    R.diagonal().setOnes();
    return R;
}

Eigen::MatrixXd pair_rows(const EdgeState& s, int n, SeededRng& rng) { return sample(s, n, rng); }

std::vector<PairSample> pair_windows(const WindowSeq& w) {
    std::vector<PairSample> out;
    for (const auto& m : w) out.emplace_back(std::span<const double>(m.col(0).data(), m.rows()),
                                             std::span<const double>(m.col(1).data(), m.rows()));
    return out;
}

const std::vector<Family> kAll(kAllFamilies.begin(), kAllFamilies.end());

}  // namespace

TEST_CASE("basis: intercept only, kernel peak, conditioning, rank errors") {
    const TimeBasis b1 = build_basis(2, {});
    CHECK(b1.q() == 1);
    CHECK(b1.design(0, 0) == 1.0);
    CHECK(b1.design(1, 0) == 1.0);

    const TimeBasis b = build_basis(24);
    CHECK(b.q() == 4);
    CHECK(b.design.col(0).isOnes());
    CHECK(b.design(0, 1) == doctest::Approx(1.0));   // t~ = 0 at center 0
    CHECK(b.design(23, 3) == doctest::Approx(1.0));  // t~ = 1 at center 1
    CHECK(b.design(1, 2) == doctest::Approx(std::exp(-std::pow((1.0 / 23 - 0.5) / 0.75, 2))));
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(b.design);
    CHECK(svd.singularValues().minCoeff() > 1e-3);

    CHECK_THROWS_AS(build_basis(3), DomainError);
    CHECK_THROWS_AS(build_basis(1, {}), DomainError);
}

TEST_CASE("basis coefficients are identifiable from noiseless targets") {
    const TimeBasis b = build_basis(24);
    Eigen::VectorXd beta(4);
    beta << 0.3, -1.2, 0.7, 2.1;
    const Eigen::VectorXd eta = b.design * beta;
    const Eigen::VectorXd rec = b.design.colPivHouseholderQr().solve(eta);
    CHECK((rec - beta).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("second-difference penalty") {
    const std::vector<double> lin{0.1, 0.2, 0.3};
    CHECK(second_difference_penalty(lin) == doctest::Approx(0.0).epsilon(1e-15));
    const std::vector<double> bump{0.0, 1.0, 0.0};
    CHECK(second_difference_penalty(bump) == doctest::Approx(4.0));
}

TEST_CASE("state distance") {
    CHECK(state_distance(EdgeState::clayton(2.0), EdgeState::clayton(2.0)) == 0.0);
    CHECK(state_distance(EdgeState::gaussian(0.2), EdgeState::gaussian(0.5)) == doctest::Approx(0.3));
    CHECK(state_distance(EdgeState::student_t(0.5, 4), EdgeState::student_t(0.5, 8)) == doctest::Approx(2.0));
    CHECK(state_distance(EdgeState::student_t(0.5, 1.0), EdgeState::student_t(0.5, 100.0)) ==
          doctest::Approx(0.5 * (kNuMax - kNuMin)));
    CHECK_THROWS_AS(state_distance(EdgeState::gaussian(0.2), EdgeState::frank(1.0)), DomainError);
}

TEST_CASE("switch DP: worked example breaks the tie toward no switch") {
    const std::vector<std::vector<EdgeState>> st = {{EdgeState::clayton(1.0), EdgeState::gumbel(1.5)},
                                                    {EdgeState::clayton(1.0), EdgeState::gumbel(1.5)}};
    const std::vector<std::vector<double>> c = {{1.0, 0.5}, {0.4, 0.6}};
    const SwitchPath p = solve_switch_dp(c, st, 0.2, 0.0);
    CHECK(p.choice == std::vector<int>{1, 1});
    CHECK(p.cost == doctest::Approx(1.1));
    CHECK(p.switches == 0);
    CHECK(switch_path_cost(c, st, {1, 0}, 0.2, 0.0) == doctest::Approx(1.1));
}

TEST_CASE("switch DP: huge switch penalty gives the best constant family") {
    SeededRng rng(11);
    const std::vector<EdgeState> fam = {EdgeState::gaussian(0.3), EdgeState::clayton(1.0), EdgeState::frank(2.0)};
    std::vector<std::vector<double>> c(8, std::vector<double>(3));
    std::vector<std::vector<EdgeState>> st(8, fam);
    for (auto& row : c)
        for (auto& x : row) x = rng.uniform();
    const SwitchPath p = solve_switch_dp(c, st, 1e6, 0.0);
    int best = 0;
    double best_sum = 1e300;
    for (int k = 0; k < 3; ++k) {
        double s = 0;
        for (auto& row : c) s += row[k];
        if (s < best_sum) best_sum = s, best = k;
    }
    for (int k : p.choice) CHECK(k == best);
    CHECK(p.cost == doctest::Approx(best_sum).epsilon(1e-12));
}

TEST_CASE("switch DP matches brute force on random tables") {
    SeededRng rng(2024);
    const std::vector<Family> fams = {Family::Gaussian, Family::Clayton, Family::Frank};
    for (int rep = 0; rep < 50; ++rep) {
        const int T = 1 + static_cast<int>(rng.uniform_int(6));
        std::vector<std::vector<double>> c(T);
        std::vector<std::vector<EdgeState>> st(T);
        for (int t = 0; t < T; ++t) {
            const int K = 1 + static_cast<int>(rng.uniform_int(3));
            for (int k = 0; k < K; ++k) {
                const Family f = fams[rng.uniform_int(3)];
                const double th = f == Family::Gaussian ? rng.uniform() * 1.8 - 0.9 : rng.uniform() * 5 + 0.1;
                st[t].push_back({f, th, 0.0});
                c[t].push_back(rng.uniform() * 2);
            }
        }
        const double lsw = rng.uniform() * 0.5, ldr = rep % 2 ? rng.uniform() * 0.3 : 0.0;
        // enumerate all paths
        std::vector<int> idx(T, 0);
        double brute = 1e300;
        while (true) {
            brute = std::min(brute, switch_path_cost(c, st, idx, lsw, ldr));
            int t = T - 1;
            while (t >= 0 && ++idx[t] == static_cast<int>(c[t].size())) idx[t--] = 0;
            if (t < 0) break;
        }
        const SwitchPath p = solve_switch_dp(c, st, lsw, ldr);
        CHECK(switch_path_cost(c, st, p.choice, lsw, ldr) == brute);
        CHECK(std::abs(p.cost - switch_path_cost(c, st, p.choice, lsw, ldr)) < 1e-9);
    }
}

TEST_CASE("switch DP rejects malformed input") {
    CHECK_THROWS_AS(solve_switch_dp({}, {}, 0.1, 0.0), DomainError);
    CHECK_THROWS_AS(solve_switch_dp({{1.0}}, {{EdgeState::gaussian(0.1)}}, -1.0, 0.0), ConfigError);
}

TEST_CASE("candidate table: failing window becomes free independence") {
    SeededRng rng(3);
    WindowSeq w = {pair_rows(EdgeState::gaussian(0.5), 100, rng), Eigen::MatrixXd::Constant(20, 2, 0.5)};
    const auto tab = candidate_table(pair_windows(w), kAll, kDefaultNuGrid);
    CHECK(tab.states[0].size() == kAll.size());
    REQUIRE(tab.states[1].size() == 1);
    CHECK(tab.states[1][0].family == Family::Independence);
    CHECK(tab.cost[1][0] == 0.0);
    CHECK_FALSE(tab.log.empty());
}

TEST_CASE("DVC-switch recovers a Clayton to Gumbel change") {
    SeededRng rng(77);
    WindowSeq w;
    for (int t = 0; t < 10; ++t)
        w.push_back(pair_rows(t < 5 ? tau_to_theta(Family::Clayton, 0.5) : tau_to_theta(Family::Gumbel, 0.5), 400, rng));
    const FittedVine m = fit_dvc_switch(w, CVineStructure({0, 1}), kAll);
    CHECK(m.estimator == "DVC-switch");
    CHECK(m.windows() == 10);
    int change = -1;
    for (int t = 1; t < 10; ++t)
        if (m.state(0, t).family != m.state(0, t - 1).family && change < 0) change = t;
    CHECK(m.state(0, 0).family == Family::Clayton);
    CHECK(m.state(0, 9).family == Family::Gumbel);
    CHECK(std::abs(change - 5) <= 1);
    CHECK(m.meta["edges"][0]["switches"].get<int>() == 1);
}

TEST_CASE("DVC-switch is deterministic across job counts") {
    SeededRng rng(5);
    WindowSeq w;
    for (int t = 0; t < 4; ++t) w.push_back(gaussian_rows(star(5, 0, 0.6), 150, rng));
    const CVineStructure st({0, 1, 2, 3, 4});
    SwitchConfig a, b;
    b.jobs = 4;
    const FittedVine m1 = fit_dvc_switch(w, st, kAll, a), m4 = fit_dvc_switch(w, st, kAll, b);
    CHECK(m1.states == m4.states);
}

TEST_CASE("DVC-smooth: stationary Gaussian data gives a flat tau path") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        SeededRng rng(seed);
        WindowSeq w;
        for (int t = 0; t < 8; ++t) w.push_back(pair_rows(EdgeState::gaussian(0.6), 500, rng));
        const FittedVine m = fit_dvc_smooth(w, CVineStructure({0, 1}), kAll);
        const auto tau = m.meta["edges"][0]["tau"].get<std::vector<double>>();
        double mean = 0;
        for (double x : tau) mean += x / tau.size();
        double dev = 0;
        for (double x : tau) dev = std::max(dev, std::abs(x - mean));
        CHECK(dev < 0.05);
        CHECK(mean == doctest::Approx(2 / M_PI * std::asin(0.6)).epsilon(0.1));
        // accepted optimizer steps never increase the objective
        const auto hist = m.meta["edges"][0]["history"].get<std::vector<double>>();
        for (std::size_t i = 1; i < hist.size(); ++i) CHECK(hist[i] <= hist[i - 1]);
    }
}

TEST_CASE("DVC-smooth: zero penalties with an intercept reproduce the constant fit") {
    SeededRng rng(9);
    WindowSeq w;
    for (int t = 0; t < 4; ++t) w.push_back(pair_rows(EdgeState::clayton(1.5 + 0.5 * t), 300, rng));
    const auto win = pair_windows(w);
    SmoothConfig cfg;
    cfg.lambda_smooth = cfg.lambda_ridge = 0.0;
    cfg.centers = {};
    const TimeBasis basis = build_basis(4, {});
    for (Family f : {Family::Gaussian, Family::Clayton, Family::Frank, Family::Gumbel, Family::Joe, Family::StudentT}) {
        const TrajectoryFit tf = fit_trajectory(f, win, basis, cfg);
        const WindowFit c = fit_constant(f, win, cfg.nu_grid);
        CAPTURE(family_name(f));
        CHECK(tf.nll <= c.nll + 1e-4);
        CHECK(tf.nll >= c.nll - 1e-4);
    }
}

TEST_CASE("DVC-smooth: tau error shrinks at the parametric rate") {
    // Fixed family, eta path inside the basis span, no penalties.
    const int T = 6;
    const TimeBasis basis = build_basis(T);
    Eigen::VectorXd beta(4);
    beta << 0.4, 0.3, -0.2, 0.35;
    const Eigen::VectorXd eta = basis.design * beta;
    SmoothConfig cfg;
    cfg.lambda_smooth = cfg.lambda_ridge = 0.0;
    cfg.max_iter = 200;
    std::vector<double> err;
    for (int n : {250, 1000, 4000}) {
        double e = 0;
        int count = 0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            SeededRng rng(1000 + seed);
            WindowSeq w;
            for (int t = 0; t < T; ++t) w.push_back(pair_rows(EdgeState::gaussian(std::tanh(eta(t))), n, rng));
            const TrajectoryFit tf = fit_trajectory(Family::Gaussian, pair_windows(w), basis, cfg);
            for (int t = 0; t < T; ++t, ++count)
                e += std::abs(tf.tau[t] - theta_to_tau(EdgeState::gaussian(std::tanh(eta(t)))));
        }
        err.push_back(e / count);
    }
    MESSAGE("tau errors " << err[0] << " " << err[1] << " " << err[2]);
    CHECK(err[0] / err[1] >= 1.6);
    CHECK(err[0] / err[1] <= 2.6);
    CHECK(err[1] / err[2] >= 1.6);
    CHECK(err[1] / err[2] <= 2.6);
}

TEST_CASE("windowed: single window equals the static fit; edge-fit count") {
    SeededRng rng(21);
    const Eigen::MatrixXd u = gaussian_rows(star(4, 2, 0.6), 300, rng);
    const WindowedModel wm = fit_windowed({u}, kAll);
    REQUIRE(wm.windows[0].has_value());
    const auto order = select_order_pooled(u);
    const FittedVine s = fit_static(u, CVineStructure(order), kAll);
    CHECK(wm.windows[0]->structure.order == s.structure.order);
    CHECK(wm.windows[0]->states == s.states);
    CHECK(wm.roots[0] == select_root_windowed(u));

    WindowSeq w;
    for (int t = 0; t < 24; ++t) w.push_back(gaussian_rows(star(8, 0, 0.5), 40, rng));
    StaticFitOptions opts;
    opts.jobs = 4;
    const WindowedModel big = fit_windowed(w, kAll, opts);
    CHECK(big.edge_fits == 672);
}

TEST_CASE("windowed: failing windows are skipped and logged") {
    SeededRng rng(2);
    WindowSeq w = {gaussian_rows(star(3, 0, 0.5), 100, rng), gaussian_rows(star(3, 0, 0.5), 5, rng)};
    const WindowedModel wm = fit_windowed(w, kAll);
    CHECK(wm.windows[0].has_value());
    CHECK_FALSE(wm.windows[1].has_value());
    CHECK(wm.roots[1] == -1);
    CHECK(wm.log.size() == 1);
    CHECK(wm.edge_fits == 3);
}

TEST_CASE("windowed: per-window fit spread shrinks with window size") {
    auto spread = [](int n) {
        SeededRng rng(static_cast<std::uint64_t>(n));
        WindowSeq w;
        for (int t = 0; t < 12; ++t) w.push_back(gaussian_rows(star(3, 0, 0.6), n, rng));
        const WindowedModel wm = fit_windowed(w, std::vector<Family>{Family::Gaussian});
        std::vector<double> nll;
        for (int t = 0; t < 12; ++t) nll.push_back(-mean_log_density(*wm.windows[t], w[t]));
        double m = 0, v = 0;
        for (double x : nll) m += x / nll.size();
        for (double x : nll) v += (x - m) * (x - m) / (nll.size() - 1);
        return v;
    };
    CHECK(spread(1000) < spread(100));
}

TEST_CASE("reg-windowed: zero penalties equal windowed") {
    SeededRng rng(31);
    WindowSeq w;
    for (int t = 0; t < 6; ++t) w.push_back(gaussian_rows(star(4, t < 3 ? 0 : 2, 0.6), 150, rng));
    const WindowedModel a = fit_windowed(w, kAll), b = fit_reg_windowed(w, kAll);
    for (int t = 0; t < 6; ++t) {
        REQUIRE(a.windows[t].has_value());
        REQUIRE(b.windows[t].has_value());
        CHECK(a.windows[t]->structure.order == b.windows[t]->structure.order);
        CHECK(a.windows[t]->states == b.windows[t]->states);
    }
    CHECK(a.roots == b.roots);
}

TEST_CASE("reg-windowed: root path on a hub switch") {
    SeededRng rng(41);
    WindowSeq w;
    for (int t = 0; t < 24; ++t) w.push_back(gaussian_rows(star(6, t < 12 ? 0 : 1, 0.7), 200, rng));
    const auto path = select_root_path(w, 0.25);
    for (int t = 0; t < 24; ++t) CHECK(path[t] == (t < 12 ? 0 : 1));

    // infinite root penalty: one root, the best by summed score
    const auto flat = select_root_path(w, 1e9);
    Eigen::VectorXd total = Eigen::VectorXd::Zero(6);
    for (const auto& m : w) total += kendall_matrix(m).cwiseAbs().rowwise().sum();
    Eigen::Index best;
    total.maxCoeff(&best);
    for (int r : flat) CHECK(r == best);

    RegWindowedConfig cfg;
    cfg.lambda_root = 0.25;
    const WindowedModel m = fit_reg_windowed(w, kAll, cfg);
    for (int t = 0; t < 24; ++t) CHECK(m.roots[t] == (t < 12 ? 0 : 1));
}

TEST_CASE("latent paths: exact recovery at full rank, rank-1 recovery") {
    SeededRng rng(8);
    Eigen::MatrixXd Y(10, 3);
    for (int t = 0; t < 10; ++t)
        for (int e = 0; e < 3; ++e) Y(t, e) = rng.normal();
    LatentConfig cfg;
    cfg.k = 3;
    cfg.weight = 0.0;
    const LatentState s = fit_latent_paths(Y, cfg);
    CHECK((s.reconstruction() - Y).cwiseAbs().maxCoeff() < 1e-8);

    // edges share one smooth path plus small noise
    Eigen::MatrixXd Z(12, 4);
    for (int t = 0; t < 12; ++t)
        for (int e = 0; e < 4; ++e) Z(t, e) = (0.5 + 0.3 * e) * std::sin(0.5 * t) + 0.1 * e + 0.02 * rng.normal();
    LatentConfig one;
    one.k = 1;
    one.weight = 1.0;
    const LatentState r = fit_latent_paths(Z, one);
    const Eigen::MatrixXd R = r.reconstruction();
    for (int e = 0; e < 4; ++e) {
        const Eigen::VectorXd a = Z.col(e).array() - Z.col(e).mean(), b = R.col(e).array() - R.col(e).mean();
        CHECK(a.dot(b) / (a.norm() * b.norm()) > 0.95);
    }
    CHECK(std::abs(std::sqrt(r.z.squaredNorm() / 12) - 1.0) < 1e-9);  // unit-RMS gauge
    CHECK(std::isfinite(r.phi));
}

TEST_CASE("DVC-latent reconstructs a smooth fit and validates k") {
    SeededRng rng(12);
    WindowSeq w;
    for (int t = 0; t < 6; ++t) w.push_back(gaussian_rows(star(3, 0, 0.3 + 0.08 * t), 200, rng));
    const FittedVine sm = fit_dvc_smooth(w, CVineStructure({0, 1, 2}), std::vector<Family>{Family::Gaussian});
    LatentConfig cfg;
    cfg.k = 3;
    cfg.weight = 0.0;
    const FittedVine lat = fit_dvc_latent(sm, cfg);
    CHECK(lat.estimator == "DVC-latent");
    for (int e = 0; e < 3; ++e)
        for (int t = 0; t < 6; ++t) CHECK(lat.state(e, t).theta == doctest::Approx(sm.state(e, t).theta).epsilon(1e-8));
    cfg.k = 4;
    CHECK_THROWS_AS(fit_dvc_latent(sm, cfg), ConfigError);
    cfg.k = 0;
    CHECK_THROWS_AS(fit_dvc_latent(sm, cfg), ConfigError);
}
