#include "dvc/benchgen.hpp"

#include "dvc/errors.hpp"
#include "dvc/paircopula.hpp"
#include "dvc/vine.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dvc {

namespace {

constexpr double kLnSqrt2Pi = 0.91893853320467274178;

std::vector<std::string> names(int d, const char* prefix = "X") {
    std::vector<std::string> out;
    for (int i = 0; i < d; ++i) out.push_back(prefix + std::to_string(i));
    return out;
}

Eigen::MatrixXd equicorr(int d, double rho) {
    Eigen::MatrixXd R = Eigen::MatrixXd::Constant(d, d, rho);
    R.diagonal().setOnes();
    return R;
}

// Star correlation: hub-leaf rho, leaf-leaf rho^2 (leaves independent given the hub).
Eigen::MatrixXd star(int d, int hub, double rho) {
    Eigen::MatrixXd R = Eigen::MatrixXd::Constant(d, d, rho * rho);
    for (int j = 0; j < d; ++j) R(hub, j) = R(j, hub) = rho;
    R.diagonal().setOnes();
    return R;
}

Eigen::MatrixXd gaussian_rows(const Eigen::MatrixXd& R, int n, SeededRng& rng) {
    const Eigen::MatrixXd L = R.llt().matrixL();
    Eigen::MatrixXd z(n, R.rows());
    for (int i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < R.rows(); ++j) z(i, j) = rng.normal();
    return z * L.transpose();
}

Scenario make(std::string name, std::uint64_t seed, int d) {
    Scenario s;
    s.data.scenario = std::move(name);
    s.data.seed = seed;
    s.data.var_names = names(d);
    return s;
}

double log_normal_pdf(double x, double var) { return -kLnSqrt2Pi - 0.5 * std::log(var) - 0.5 * x * x / var; }

// log f_Z(z) for Z = XY + sigma eps: Z | X=x ~ N(0, x^2 + sigma^2).
double log_fz_triplet(double z, double sigma) {
    auto f = [&](double x) {
        const double v = x * x + sigma * sigma;
        return std::exp(log_normal_pdf(x, 1.0) + log_normal_pdf(z, v));
    };
    using boost::math::quadrature::gauss_kronrod;
    // integrand is even in x; the peak near 0 has width ~ sigma
    const double core = gauss_kronrod<double, 31>::integrate(f, 0.0, 4.0 * sigma, 12, 1e-13);
    const double tail = gauss_kronrod<double, 31>::integrate(f, 4.0 * sigma, 40.0, 12, 1e-13);
    return std::log(2.0 * (core + tail));
}

MonteCarloValue mc(const std::vector<double>& x) {
    const double n = static_cast<double>(x.size());
    const double m = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double v = 0.0;
    for (double a : x) v += (a - m) * (a - m);
    return {m, std::sqrt(v / (n - 1) / n)};
}

}  // namespace

const std::vector<std::string>& scenario_names() {
    static const std::vector<std::string> n = {"tail_df",  "tail_switch",  "hub_switch", "agent_episodes",
                                               "xor_stress", "mult_triplet", "showcase"};
    return n;
}

void check_scenario_name(std::string_view name) {
    const auto& n = scenario_names();
    if (std::find(n.begin(), n.end(), name) != n.end()) return;
    std::string msg = "unknown scenario '" + std::string(name) + "'; valid names:";
    for (const auto& s : n) msg += " " + s;
    throw ConfigError(msg);
}

Eigen::MatrixXd rank_gaussianize(const Eigen::MatrixXd& x) {
    const Eigen::Index n = x.rows();
    Eigen::MatrixXd out(n, x.cols());
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return x(a, c) < x(b, c); });
        for (Eigen::Index r = 0; r < n; ++r)
            out(idx[static_cast<std::size_t>(r)], c) = normal_quantile(static_cast<double>(r + 1) / static_cast<double>(n + 1));
    }
    return out;
}

Scenario gen_tail_df(std::uint64_t seed) {
    const int d = 5, T = 24, N = 250;
    Scenario s = make("tail_df", seed, d);
    const Eigen::MatrixXd R = equicorr(d, 0.6);
    for (int t = 0; t < T; ++t) {
        SeededRng rng(child_seed(seed, t));
        const double nu = t < 12 ? 3.0 : 30.0;
        Eigen::MatrixXd x = gaussian_rows(R, N, rng);
        for (int i = 0; i < N; ++i) x.row(i) /= std::sqrt(rng.chi_squared(nu) / nu);
        s.data.windows.push_back(std::move(x));
        s.truth.labels.push_back(t < 12 ? "nu3" : "nu30");
    }
    s.truth.schedule = {{"rho", 0.6}, {"nu", {3.0, 30.0}}, {"change_window", 12}};
    return s;
}

Scenario gen_tail_switch(std::uint64_t seed) {
    const int d = 5, T = 24, N = 250;
    const double tau = 0.4;
    Scenario s = make("tail_switch", seed, d);
    FittedVine v;
    v.structure = CVineStructure({0, 1, 2, 3, 4});
    v.truncation_level = d - 1;
    for (int t = 0; t < T; ++t) {
        SeededRng rng(child_seed(seed, t));
        const EdgeState e = t < 12 ? EdgeState::clayton(2 * tau / (1 - tau)) : EdgeState::gumbel(1 / (1 - tau));
        v.states.assign(static_cast<std::size_t>(edge_count(d)), {EdgeState::independence()});
        for (int j = 1; j < d; ++j) v.states[static_cast<std::size_t>(v.structure.edge_index(0, j))] = {e};
        s.data.windows.push_back(sample_vine(v, N, rng));
        s.truth.labels.push_back(t < 12 ? "clayton" : "gumbel");
    }
    s.truth.schedule = {{"tau", tau},
                        {"clayton_theta", 2 * tau / (1 - tau)},
                        {"gumbel_theta", 1 / (1 - tau)},
                        {"change_window", 12}};
    return s;
}

Scenario gen_hub_switch(std::uint64_t seed) {
    const int d = 8, T = 24, N = 250;
    Scenario s = make("hub_switch", seed, d);
    for (int t = 0; t < T; ++t) {
        SeededRng rng(child_seed(seed, t));
        const int hub = t < 12 ? 0 : 1;
        s.data.windows.push_back(gaussian_rows(star(d, hub, 0.7), N, rng));
        s.truth.labels.push_back("hub" + std::to_string(hub));
    }
    s.truth.schedule = {{"rho", 0.7}, {"hubs", {0, 1}}, {"change_window", 12}};
    return s;
}

std::vector<std::pair<std::string, int>> agent_schedule() {
    return {{"independence", 4}, {"pairwise", 5}, {"independence", 3}, {"higher", 6},
            {"independence", 4}, {"mixed", 4},    {"independence", 4}, {"pairwise", 5},
            {"higher", 6},       {"mixed", 4},    {"independence", 3}};
}

Scenario gen_agent_episodes(std::uint64_t seed) {
    const int d = 6, N = 300;
    Scenario s = make("agent_episodes", seed, d);
    nlohmann::json segs = nlohmann::json::array();
    for (const auto& [label, len] : agent_schedule()) {
        segs.push_back({{"label", label}, {"length", len}});
        for (int k = 0; k < len; ++k) s.truth.labels.push_back(label);
    }
    const EdgeState tree1 = EdgeState::student_t(0.5, 3.0);
    const EdgeState tree2 = tau_to_theta(Family::Clayton, 0.4);
    const EdgeState link05 = EdgeState::gaussian(0.7);
    const int T = static_cast<int>(s.truth.labels.size());
    for (int t = 0; t < T; ++t) {
        SeededRng rng(child_seed(seed, t));
        const std::string& lab = s.truth.labels[static_cast<std::size_t>(t)];
        Eigen::MatrixXd u(N, d);
        for (int i = 0; i < N; ++i) {
            for (int j = 0; j < d; ++j) u(i, j) = rng.uniform();
            if (lab == "pairwise") {
                for (int j = 1; j < d; ++j) u(i, j) = h_inverse(link05, u(i, j), u(i, 0));
            } else if (lab == "higher" || lab == "mixed") {
                // triples (0,1,2) and (0,3,4): t tree-1 edges to 0, Clayton between
                // the two leaves given 0
                for (int a : {1, 3}) {
                    const double pa = u(i, a);
                    const double pb = h_inverse(tree2, u(i, a + 1), pa);
                    u(i, a) = h_inverse(tree1, pa, u(i, 0));
                    u(i, a + 1) = h_inverse(tree1, pb, u(i, 0));
                }
                if (lab == "mixed") u(i, 5) = h_inverse(link05, u(i, 5), u(i, 0));
            }
        }
        s.data.windows.push_back(std::move(u));
    }
    s.truth.schedule = {{"segments", segs},
                        {"pairwise_rho", 0.7},
                        {"triples", {{0, 1, 2}, {0, 3, 4}}},
                        {"tree1", {{"family", "student_t"}, {"rho", 0.5}, {"nu", 3.0}}},
                        {"tree2", {{"family", "clayton"}, {"tau", 0.4}}},
                        {"mixed_extra_edge", {0, 5}}};
    return s;
}

Scenario gen_xor(std::uint64_t seed) {
    const int d = 3, T = 8, N = 3000;
    Scenario s = make("xor_stress", seed, d);
    for (int t = 0; t < T; ++t) {
        SeededRng rng(child_seed(seed, t));
        const bool xr = t >= T / 2;
        Eigen::MatrixXd x(N, d);
        for (int i = 0; i < N; ++i) {
            const double u = rng.uniform(), v = rng.uniform();
            double w = rng.uniform();
            if (xr) w = std::fmod(u + v, 1.0);
            x(i, 0) = normal_quantile(u);
            x(i, 1) = normal_quantile(v);
            x(i, 2) = normal_quantile(std::clamp(w, 1e-16, 1.0 - 1e-16));
            if (xr)
                for (int j = 0; j < d; ++j) x(i, j) += 1e-3 * rng.normal();
        }
        s.data.windows.push_back(std::move(x));
        s.truth.labels.push_back(xr ? "xor" : "independent");
    }
    s.truth.schedule = {{"change_window", T / 2}};
    return s;
}

Scenario gen_mult_triplet(std::uint64_t seed) {
    const int N = 6000;
    Scenario s = make("mult_triplet", seed, 3);
    SeededRng rng(child_seed(seed, 0));
    Eigen::MatrixXd x(N, 3);
    for (int i = 0; i < N; ++i) {
        x(i, 0) = rng.normal();
        x(i, 1) = rng.normal();
        x(i, 2) = x(i, 0) * x(i, 1) + 0.25 * rng.normal();
    }
    s.data.windows.push_back(rank_gaussianize(x));
    s.truth.labels.push_back("triplet");
    s.truth.schedule = {{"sigma", 0.25}};
    return s;
}

Scenario gen_showcase(std::uint64_t seed) {
    const int d = 10, T = 60, N = 300;
    Scenario s = make("showcase", seed, d);
    s.data.split = SplitMode::Chronological;
    s.data.train_frac = 0.85;
    const EdgeState clayton = EdgeState::clayton(3.5);
    const Eigen::MatrixXd Rstar = star(4, 0, 0.55);
    for (int t = 0; t < T; ++t) {
        SeededRng rng(child_seed(seed, t));
        const int phase = t / 15;
        Eigen::MatrixXd x(N, d);
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < d; ++j) x(i, j) = rng.normal();
        if (phase == 1 || phase == 2) {
            const Eigen::MatrixXd L = Rstar.llt().matrixL();
            x.leftCols(4) = x.leftCols(4) * L.transpose();
        }
        if (phase == 2) {
            for (int b : {4, 7}) {
                Eigen::MatrixXd blk(N, 3);
                for (int i = 0; i < N; ++i) {
                    blk(i, 0) = x(i, b);
                    blk(i, 1) = x(i, b + 1);
                    blk(i, 2) = blk(i, 0) * blk(i, 1) + 0.10 * rng.normal();
                }
                x.middleCols(b, 3) = rank_gaussianize(blk);
            }
        }
        if (phase == 3) {
            // Clayton star rooted at X0: leaves independent given the root
            for (int i = 0; i < N; ++i) {
                const double u0 = rng.uniform();
                x(i, 0) = normal_quantile(u0);
                for (int j = 1; j < 4; ++j) x(i, j) = normal_quantile(h_inverse(clayton, rng.uniform(), u0));
            }
        }
        s.data.windows.push_back(std::move(x));
        static const char* labels[] = {"independence", "gaussian_star", "star_triplets", "clayton"};
        s.truth.labels.push_back(labels[phase]);
    }
    s.truth.schedule = {{"phase_starts", {0, 15, 30, 45}},
                        {"star", {{"root", 0}, {"leaves", {1, 2, 3}}, {"rho", 0.55}}},
                        {"triplets", {{4, 5, 6}, {7, 8, 9}}},
                        {"triplet_sigma", 0.10},
                        {"clayton", {{"block", {0, 1, 2, 3}}, {"theta", 3.5}}}};
    return s;
}

Scenario generate_scenario(std::string_view name, std::uint64_t seed) {
    check_scenario_name(name);
    if (name == "tail_df") return gen_tail_df(seed);
    if (name == "tail_switch") return gen_tail_switch(seed);
    if (name == "hub_switch") return gen_hub_switch(seed);
    if (name == "agent_episodes") return gen_agent_episodes(seed);
    if (name == "xor_stress") return gen_xor(seed);
    if (name == "mult_triplet") return gen_mult_triplet(seed);
    return gen_showcase(seed);
}

// ---------------------------------------------------------------------------

double gaussian_pair_mi(double rho) {
    if (!(std::abs(rho) < 1.0)) throw DomainError("gaussian_pair_mi: |rho| must be < 1");
    return -0.5 * std::log1p(-rho * rho);
}

MonteCarloValue clayton_pair_mi(double theta, std::size_t n, std::uint64_t seed) {
    SeededRng rng(seed);
    const EdgeState s = EdgeState::clayton(theta);
    const Eigen::MatrixX2d u = sample(s, n, rng);
    std::vector<double> ld(n);
    for (std::size_t i = 0; i < n; ++i) ld[i] = log_density(s, u(static_cast<Eigen::Index>(i), 0), u(static_cast<Eigen::Index>(i), 1));
    return mc(ld);
}

TripletInformation triplet_information(double sigma, std::size_t n, std::uint64_t seed) {
    if (!(sigma > 0.0)) throw DomainError("triplet_information: sigma must be positive");
    SeededRng rng(seed);
    std::vector<double> tc(n), pair(n), hi(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = rng.normal(), y = rng.normal(), e = rng.normal();
        const double z = x * y + sigma * e;
        const double lfz = log_fz_triplet(z, sigma);
        const double full = log_normal_pdf(z - x * y, sigma * sigma) - lfz;
        const double zx = log_normal_pdf(z, x * x + sigma * sigma) - lfz;
        const double zy = log_normal_pdf(z, y * y + sigma * sigma) - lfz;
        tc[i] = full;
        pair[i] = zx + zy;
        hi[i] = full - zx - zy;
    }
    return {mc(tc), mc(pair), mc(hi)};
}

MonteCarloValue student_t_total_correlation(int d, double rho, double nu, std::size_t n, std::uint64_t seed) {
    SeededRng rng(seed);
    const Eigen::MatrixXd R = equicorr(d, rho);
    const Eigen::LLT<Eigen::MatrixXd> llt(R);
    const Eigen::MatrixXd L = llt.matrixL();
    const double logdet = 2.0 * L.diagonal().array().log().sum();
    const double c_d = std::lgamma(0.5 * (nu + d)) - std::lgamma(0.5 * nu) - 0.5 * d * std::log(nu * M_PI) - 0.5 * logdet;
    const double c_1 = std::lgamma(0.5 * (nu + 1)) - std::lgamma(0.5 * nu) - 0.5 * std::log(nu * M_PI);
    std::vector<double> out(n);
    Eigen::VectorXd z(d);
    for (std::size_t i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) z(j) = rng.normal();
        const double w = std::sqrt(rng.chi_squared(nu) / nu);
        const Eigen::VectorXd x = L * z / w;
        const double q = (z / w).squaredNorm();  // x' R^{-1} x
        double v = c_d - 0.5 * (nu + d) * std::log1p(q / nu);
        for (int j = 0; j < d; ++j) v -= c_1 - 0.5 * (nu + 1) * std::log1p(x(j) * x(j) / nu);
        out[i] = v;
    }
    return mc(out);
}

nlohmann::json oracle_information(std::string_view scenario, std::size_t n, std::uint64_t seed) {
    auto js = [](const MonteCarloValue& m) { return nlohmann::json{{"value", m.value}, {"std_error", m.std_error}}; };
    if (scenario == "showcase") {
        const double mi = gaussian_pair_mi(0.55);
        const Eigen::MatrixXd R = star(4, 0, 0.55);
        const double star_tc = -0.5 * std::log(R.determinant());
        const TripletInformation tri = triplet_information(0.10, n, seed);
        const MonteCarloValue cl = clayton_pair_mi(3.5, n, seed + 1);
        return {{"star_edge_mi", mi},
                {"star_total", star_tc},
                {"triplet_total", js(tri.total)},
                {"triplet_pair", js(tri.pair)},
                {"triplet_higher", js(tri.higher)},
                {"clayton_pair_mi", js(cl)},
                {"clayton_lower_tail", std::pow(2.0, -1.0 / 3.5)},
                {"phase_total", {0.0, star_tc, star_tc + 2 * tri.total.value, 3 * cl.value}},
                {"phase_higher", {0.0, 0.0, 2 * tri.higher.value, 0.0}}};
    }
    if (scenario == "tail_df") {
        const MonteCarloValue a = student_t_total_correlation(5, 0.6, 3.0, n, seed);
        const MonteCarloValue b = student_t_total_correlation(5, 0.6, 30.0, n, seed + 1);
        return {{"total_nu3", js(a)}, {"total_nu30", js(b)}, {"gaussian_total", -0.5 * std::log(equicorr(5, 0.6).determinant())}};
    }
    if (scenario == "mult_triplet") {
        const TripletInformation tri = triplet_information(0.25, n, seed);
        return {{"total", js(tri.total)}, {"pair", js(tri.pair)}, {"higher", js(tri.higher)}};
    }
    throw ConfigError("oracle_information: supported scenarios are showcase, tail_df, mult_triplet");
}

}  // namespace dvc
