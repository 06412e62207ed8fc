#include "dvc/temporal.hpp"

#include "dvc/errors.hpp"
#include "dvc/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dvc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTieRel = 1e-12;

bool near_tie(double a, double b) {
    const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
    return std::abs(a - b) <= kTieRel * scale;
}

std::span<const double> col_span(const Eigen::MatrixXd& m, Eigen::Index c) {
    return {m.col(c).data(), static_cast<std::size_t>(m.rows())};
}
std::span<double> col_span(Eigen::MatrixXd& m, Eigen::Index c) {
    return {m.col(c).data(), static_cast<std::size_t>(m.rows())};
}

Eigen::MatrixXd by_position(const CVineStructure& st, const Eigen::MatrixXd& u) {
    if (u.cols() != st.dim()) throw DomainError("temporal: column count does not match dimension");
    Eigen::MatrixXd v(u.rows(), u.cols());
    for (int j = 0; j < st.dim(); ++j) v.col(j) = u.col(st.order[j]);
    return v;
}

void check_windows(const WindowSeq& train, const char* what) {
    if (train.empty()) throw DomainError(std::string(what) + ": no windows");
    const auto d = train.front().cols();
    for (const auto& w : train) {
        if (w.cols() != d) throw DomainError(std::string(what) + ": windows differ in dimension");
        for (Eigen::Index c = 0; c < w.cols(); ++c)
            for (Eigen::Index r = 0; r < w.rows(); ++r)
                if (!(w(r, c) > 0.0 && w(r, c) < 1.0))
                    throw DomainError(std::string(what) + ": inputs must lie in (0, 1)");
    }
}

double clip_primary(const EdgeState& s) {
    const auto [lo, hi] = latent_bounds(s.family);
    const double a = link_primary(s.family, lo), b = link_primary(s.family, hi);
    return std::clamp(s.theta, std::min(a, b), std::max(a, b));
}

double transition(const EdgeState& a, const EdgeState& b, double lambda_sw, double lambda_drift) {
    if (a.family != b.family) return lambda_sw;
    if (lambda_drift == 0.0) return 0.0;
    return lambda_drift * state_distance(a, b);
}

std::string edge_tag(int l, int j) { return "edge (" + std::to_string(l) + "," + std::to_string(j) + ")"; }

// Runs `fit_edge(l, j, samples)` for every edge of each level, then propagates
// every window's leaf columns through the returned per-window states.
template <typename FitEdge>
void level_loop(std::vector<Eigen::MatrixXd>& v, int d, int jobs, FitEdge&& fit_edge) {
    const std::size_t T = v.size();
    for (int l = 0; l < d - 1; ++l) {
        const std::size_t m = static_cast<std::size_t>(d - 1 - l);
        parallel_for(m, jobs, [&](std::size_t k) {
            const int j = l + 1 + static_cast<int>(k);
            std::vector<PairSample> samples;
            samples.reserve(T);
            for (std::size_t t = 0; t < T; ++t) samples.emplace_back(col_span(std::as_const(v[t]), l), col_span(std::as_const(v[t]), j));
            const std::vector<EdgeState> path = fit_edge(l, j, samples);
            if (l + 1 < d - 1)
                for (std::size_t t = 0; t < T; ++t) samples[t].h_values(path[t], col_span(v[t], j));
        });
    }
}

}  // namespace

// ---------------------------------------------------------------------------

TimeBasis build_basis(int T, const std::vector<double>& centers, double bandwidth) {
    if (T < 2) throw DomainError("build_basis: need at least 2 windows");
    if (!(bandwidth > 0.0)) throw ConfigError("build_basis: bandwidth must be positive");
    const int q = 1 + static_cast<int>(centers.size());
    if (T < q) throw DomainError("build_basis: rank deficient (T < q)");
    TimeBasis b;
    b.design.resize(T, q);
    for (int t = 0; t < T; ++t) {
        const double tt = static_cast<double>(t) / (T - 1);
        b.design(t, 0) = 1.0;
        for (int c = 0; c < q - 1; ++c) {
            const double z = (tt - centers[c]) / bandwidth;
            b.design(t, c + 1) = std::exp(-z * z);
        }
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(b.design);
    if (svd.singularValues().minCoeff() <= 1e-8) throw DomainError("build_basis: design is numerically rank deficient");
    return b;
}

double second_difference_penalty(std::span<const double> x) {
    double p = 0.0;
    for (std::size_t i = 1; i + 1 < x.size(); ++i) {
        const double dd = x[i + 1] - 2.0 * x[i] + x[i - 1];
        p += dd * dd;
    }
    return p;
}

double state_distance(const EdgeState& a, const EdgeState& b) {
    if (a.family != b.family) throw DomainError("state_distance: family mismatch");
    if (a.family == Family::Independence) return 0.0;
    const double dp = std::abs(clip_primary(a) - clip_primary(b));
    if (a.family != Family::StudentT) return dp;
    const double dn = std::abs(std::clamp(a.nu, kNuMin, kNuMax) - std::clamp(b.nu, kNuMin, kNuMax));
    return 0.5 * (dp + dn);
}

SwitchPath solve_switch_dp(const std::vector<std::vector<double>>& local, const std::vector<std::vector<EdgeState>>& states,
                           double lambda_sw, double lambda_drift) {
    const std::size_t T = local.size();
    if (T == 0 || states.size() != T) throw DomainError("switch DP: empty or mismatched tables");
    if (lambda_sw < 0.0 || lambda_drift < 0.0) throw ConfigError("switch DP: penalties must be non-negative");
    for (std::size_t t = 0; t < T; ++t)
        if (local[t].empty() || local[t].size() != states[t].size())
            throw DomainError("switch DP: window without candidates");

    std::vector<std::vector<double>> cost(T);
    std::vector<std::vector<int>> back(T);
    std::vector<std::vector<char>> switched(T);
    cost[0] = local[0];
    back[0].assign(local[0].size(), -1);
    switched[0].assign(local[0].size(), 0);
    for (std::size_t t = 1; t < T; ++t) {
        const std::size_t K = local[t].size();
        cost[t].assign(K, kInf);
        back[t].assign(K, -1);
        switched[t].assign(K, 0);
        for (std::size_t k = 0; k < K; ++k) {
            double best = kInf;
            int arg = -1;
            bool arg_sw = true;
            for (std::size_t j = 0; j < local[t - 1].size(); ++j) {
                const double c = cost[t - 1][j] + transition(states[t - 1][j], states[t][k], lambda_sw, lambda_drift);
                const bool sw = states[t - 1][j].family != states[t][k].family;
                if (arg < 0 || (c < best && !near_tie(c, best)) || (near_tie(c, best) && arg_sw && !sw)) {
                    best = c;
                    arg = static_cast<int>(j);
                    arg_sw = sw;
                }
            }
            cost[t][k] = best + local[t][k];
            back[t][k] = arg;
            switched[t][k] = arg_sw ? 1 : 0;
        }
    }
    int last = -1;
    for (std::size_t k = 0; k < cost[T - 1].size(); ++k) {
        const double c = cost[T - 1][k];
        if (last < 0) {
            last = static_cast<int>(k);
            continue;
        }
        const double b = cost[T - 1][static_cast<std::size_t>(last)];
        if ((c < b && !near_tie(c, b)) || (near_tie(c, b) && switched[T - 1][last] && !switched[T - 1][k]))
            last = static_cast<int>(k);
    }
    SwitchPath out;
    out.choice.assign(T, 0);
    out.cost = cost[T - 1][static_cast<std::size_t>(last)];
    for (std::size_t t = T; t-- > 0;) {
        out.choice[t] = last;
        if (t > 0) last = back[t][static_cast<std::size_t>(last)];
    }
    for (std::size_t t = 1; t < T; ++t)
        if (states[t - 1][out.choice[t - 1]].family != states[t][out.choice[t]].family) ++out.switches;
    return out;
}

double switch_path_cost(const std::vector<std::vector<double>>& local, const std::vector<std::vector<EdgeState>>& states,
                        const std::vector<int>& choice, double lambda_sw, double lambda_drift) {
    if (choice.size() != local.size() || choice.empty()) throw DomainError("switch_path_cost: path length mismatch");
    double c = local[0].at(choice[0]);
    for (std::size_t t = 1; t < choice.size(); ++t)
        c = c + transition(states[t - 1].at(choice[t - 1]), states[t].at(choice[t]), lambda_sw, lambda_drift) +
            local[t].at(choice[t]);
    return c;
}

CandidateTable candidate_table(const std::vector<PairSample>& windows, std::span<const Family> candidates,
                               std::span<const double> nu_grid) {
    if (candidates.empty()) throw ConfigError("candidate list is empty");
    CandidateTable tab;
    tab.states.resize(windows.size());
    tab.cost.resize(windows.size());
    for (std::size_t t = 0; t < windows.size(); ++t) {
        const double n = static_cast<double>(windows[t].size());
        for (Family f : candidates) {
            try {
                const WindowFit fit = fit_window(f, windows[t], nu_grid);
                if (!std::isfinite(fit.nll)) continue;
                tab.states[t].push_back(fit.state);
                tab.cost[t].push_back((fit.nll + param_count(f)) / n);
            } catch (const Error& e) {
                tab.log.push_back("window " + std::to_string(t) + " " + std::string(family_name(f)) + ": " + e.what());
            }
        }
        if (tab.states[t].empty()) {
            tab.states[t].push_back(EdgeState::independence());
            tab.cost[t].push_back(0.0);
            tab.log.push_back("window " + std::to_string(t) + ": all candidates failed; using independence");
        }
    }
    return tab;
}

// ---------------------------------------------------------------------------
// DVC-switch

FittedVine fit_dvc_switch(const WindowSeq& train, const CVineStructure& structure, std::span<const Family> candidates,
                          const SwitchConfig& cfg) {
    structure.validate();
    check_windows(train, "fit_dvc_switch");
    if (candidates.empty()) throw ConfigError("fit_dvc_switch: empty candidate list");
    const int d = structure.dim();
    FittedVine model;
    model.structure = structure;
    model.truncation_level = d - 1;
    model.estimator = "DVC-switch";
    model.states.resize(static_cast<std::size_t>(structure.edge_count()));
    std::vector<nlohmann::json> edge_meta(model.states.size());
    std::vector<std::vector<std::string>> logs(model.states.size());

    std::vector<Eigen::MatrixXd> v;
    for (const auto& w : train) v.push_back(by_position(structure, w));
    level_loop(v, d, cfg.jobs, [&](int l, int j, const std::vector<PairSample>& samples) {
        const auto e = static_cast<std::size_t>(structure.edge_index(l, j));
        CandidateTable tab = candidate_table(samples, candidates, cfg.nu_grid);
        const SwitchPath p = solve_switch_dp(tab.cost, tab.states, cfg.lambda_sw, cfg.lambda_drift);
        std::vector<EdgeState> path(samples.size());
        for (std::size_t t = 0; t < samples.size(); ++t) path[t] = tab.states[t][p.choice[t]];
        for (auto& s : tab.log) logs[e].push_back(edge_tag(l, j) + " " + s);
        edge_meta[e] = {{"level", l}, {"position", j}, {"switches", p.switches}, {"cost", p.cost}};
        model.states[e] = path;
        return path;
    });
    for (auto& lg : logs) model.fit_log.insert(model.fit_log.end(), lg.begin(), lg.end());
    model.meta["edges"] = edge_meta;
    model.meta["lambda_sw"] = cfg.lambda_sw;
    model.meta["lambda_drift"] = cfg.lambda_drift;
    return model;
}

// ---------------------------------------------------------------------------
// DVC-smooth

WindowFit fit_constant(Family f, const std::vector<PairSample>& windows, std::span<const double> nu_grid) {
    std::vector<double> u, v;
    for (const auto& w : windows) {
        u.insert(u.end(), w.u().begin(), w.u().end());
        v.insert(v.end(), w.v().begin(), w.v().end());
    }
    return fit_window(f, PairSample(u, v), nu_grid);
}

namespace {

struct TrajEval {
    Family f;
    const std::vector<PairSample>& win;
    const TimeBasis& basis;
    const SmoothConfig& cfg;
    bool df_path;      // Student-t with a df trajectory
    double fixed_nu;   // otherwise

    EdgeState state(double eta, double eta_nu) const {
        return {f, link_primary(f, eta), f == Family::StudentT ? (df_path ? link_nu(eta_nu) : fixed_nu) : 0.0};
    }
    double ll(std::size_t t, double eta, double eta_nu) const {
        const double v = win[t].sum_log_density(state(eta, eta_nu));
        return std::isfinite(v) ? v : -kInf;
    }
    double tau(double eta) const { return theta_to_tau(state(eta, 0.0)); }

    // Penalized objective; gradient by central differences per window on the
    // latent scale, chained through the basis.
    double operator()(const Eigen::VectorXd& beta, Eigen::VectorXd& grad) const {
        const int T = basis.T(), q = basis.q();
        const Eigen::VectorXd eta = basis.design * beta.head(q);
        Eigen::VectorXd eta_nu = Eigen::VectorXd::Zero(T);
        if (df_path) eta_nu = basis.design * beta.segment(q, q);
        const double h = cfg.fd_step;
        double nll = 0.0;
        Eigen::VectorXd g_eta(T), g_nu = Eigen::VectorXd::Zero(T);
        std::vector<double> tau_t(T), dtau(T);
        for (int t = 0; t < T; ++t) {
            const double c = ll(t, eta(t), eta_nu(t));
            if (!std::isfinite(c)) {
                grad.setZero();
                return kInf;
            }
            nll -= c;
            g_eta(t) = -(ll(t, eta(t) + h, eta_nu(t)) - ll(t, eta(t) - h, eta_nu(t))) / (2 * h);
            if (df_path) g_nu(t) = -(ll(t, eta(t), eta_nu(t) + h) - ll(t, eta(t), eta_nu(t) - h)) / (2 * h);
            tau_t[t] = tau(eta(t));
            dtau[t] = (tau(eta(t) + h) - tau(eta(t) - h)) / (2 * h);
        }
        double pen = 0.0;
        std::vector<double> dpen(T, 0.0);
        for (int t = 1; t + 1 < T; ++t) {
            const double dd = tau_t[t + 1] - 2 * tau_t[t] + tau_t[t - 1];
            pen += dd * dd;
            dpen[t + 1] += 2 * dd;
            dpen[t] -= 4 * dd;
            dpen[t - 1] += 2 * dd;
        }
        for (int t = 0; t < T; ++t) g_eta(t) += cfg.lambda_smooth * dpen[t] * dtau[t];
        grad.resize(beta.size());
        grad.head(q) = basis.design.transpose() * g_eta;
        if (df_path) grad.segment(q, q) = basis.design.transpose() * g_nu;
        grad += 2.0 * cfg.lambda_ridge * beta;
        if (!grad.allFinite()) return kInf;
        return nll + cfg.lambda_smooth * pen + cfg.lambda_ridge * beta.squaredNorm();
    }
};

TrajectoryFit finish(const TrajEval& ev, const Eigen::VectorXd& beta, int k, double n_total) {
    const int T = ev.basis.T(), q = ev.basis.q();
    TrajectoryFit out;
    out.family = ev.f;
    out.fixed_nu = ev.df_path ? 0.0 : ev.fixed_nu;
    out.beta = Eigen::MatrixXd::Zero(q, ev.df_path ? 2 : 1);
    out.beta.col(0) = beta.head(q);
    if (ev.df_path) out.beta.col(1) = beta.segment(q, q);
    const Eigen::VectorXd eta = ev.basis.design * beta.head(q);
    Eigen::VectorXd eta_nu = Eigen::VectorXd::Zero(T);
    if (ev.df_path) eta_nu = ev.basis.design * beta.segment(q, q);
    for (int t = 0; t < T; ++t) {
        out.path.push_back(ev.state(eta(t), eta_nu(t)));
        out.tau.push_back(theta_to_tau(out.path.back()));
        out.nll -= ev.ll(t, eta(t), eta_nu(t));
    }
    Eigen::VectorXd g;
    out.objective = ev(beta, g);
    out.k = k;
    out.score = out.nll + 0.5 * k * std::log(n_total);
    return out;
}

}  // namespace

TrajectoryFit fit_trajectory(Family f, const std::vector<PairSample>& windows, const TimeBasis& basis,
                             const SmoothConfig& cfg) {
    const int T = basis.T(), q = basis.q();
    if (static_cast<int>(windows.size()) != T) throw DomainError("fit_trajectory: basis/window count mismatch");
    double n_total = 0.0;
    for (const auto& w : windows) n_total += static_cast<double>(w.size());
    if (f == Family::Independence) {
        TrajectoryFit out;
        out.beta = Eigen::MatrixXd::Zero(q, 1);
        out.path.assign(T, EdgeState::independence());
        out.tau.assign(T, 0.0);
        return out;
    }
    LbfgsOptions opt;
    opt.max_iter = cfg.max_iter;
    opt.box = 40.0;

    auto run = [&](const TrajEval& ev, Eigen::VectorXd x0, int k) {
        LbfgsResult r;
        bool ok = true;
        try {
            r = lbfgs_minimize(std::cref(ev), x0, opt);
            ok = std::isfinite(r.fx);
        } catch (const Error&) {
            ok = false;
        }
        TrajectoryFit fit = finish(ev, ok ? r.x : x0, k, n_total);
        if (ok) fit.history = r.history;
        fit.fell_back = !ok;
        return fit;
    };

    const bool df_path = f == Family::StudentT && cfg.df_mode == DfMode::Trajectory;
    if (f != Family::StudentT || df_path) {
        const WindowFit c = fit_constant(f, windows, cfg.nu_grid);
        TrajEval ev{f, windows, basis, cfg, df_path, 0.0};
        Eigen::VectorXd x0 = Eigen::VectorXd::Zero(df_path ? 2 * q : q);
        x0(0) = link_primary_inverse(f, c.state.theta);
        if (df_path) x0(q) = link_nu_inverse(c.state.nu);
        return run(ev, x0, df_path ? 2 * q : q);
    }
    // Student-t on the df grid: one trajectory per df, best penalized objective.
    TrajectoryFit best;
    bool any = false;
    for (double nu : cfg.nu_grid) {
        const double nu_c = std::clamp(nu, kNuMin, kNuMax);
        const std::vector<double> one{nu_c};
        const WindowFit c = fit_constant(f, windows, one);
        TrajEval ev{f, windows, basis, cfg, false, nu_c};
        Eigen::VectorXd x0 = Eigen::VectorXd::Zero(q);
        x0(0) = link_primary_inverse(f, c.state.theta);
        TrajectoryFit fit = run(ev, x0, q + 1);
        if (!any || fit.objective < best.objective) best = std::move(fit), any = true;
    }
    if (!any) throw ConfigError("Student-t trajectory needs a non-empty df grid");
    return best;
}

FittedVine fit_dvc_smooth(const WindowSeq& train, const CVineStructure& structure, std::span<const Family> candidates,
                          const SmoothConfig& cfg) {
    structure.validate();
    check_windows(train, "fit_dvc_smooth");
    if (candidates.empty()) throw ConfigError("fit_dvc_smooth: empty candidate list");
    if (cfg.lambda_smooth < 0.0 || cfg.lambda_ridge < 0.0) throw ConfigError("fit_dvc_smooth: negative penalty");
    const TimeBasis basis = build_basis(static_cast<int>(train.size()), cfg.centers, cfg.bandwidth);
    const int d = structure.dim();
    FittedVine model;
    model.structure = structure;
    model.truncation_level = d - 1;
    model.estimator = "DVC-smooth";
    model.states.resize(static_cast<std::size_t>(structure.edge_count()));
    std::vector<nlohmann::json> edge_meta(model.states.size());
    std::vector<std::vector<std::string>> logs(model.states.size());

    std::vector<Eigen::MatrixXd> v;
    for (const auto& w : train) v.push_back(by_position(structure, w));
    level_loop(v, d, cfg.jobs, [&](int l, int j, const std::vector<PairSample>& samples) {
        const auto e = static_cast<std::size_t>(structure.edge_index(l, j));
        std::optional<TrajectoryFit> best;
        for (Family f : candidates) {
            try {
                TrajectoryFit fit = fit_trajectory(f, samples, basis, cfg);
                if (fit.fell_back) logs[e].push_back(edge_tag(l, j) + " " + std::string(family_name(f)) +
                                                     ": optimizer failed; constant fit kept");
                if (!best || fit.score < best->score) best = std::move(fit);
            } catch (const Error& ex) {
                logs[e].push_back(edge_tag(l, j) + " " + std::string(family_name(f)) + ": " + ex.what());
            }
        }
        if (!best) {
            logs[e].push_back(edge_tag(l, j) + ": all candidates failed; using independence");
            best = fit_trajectory(Family::Independence, samples, basis, cfg);
        }
        nlohmann::json em = {{"level", l},
                             {"position", j},
                             {"family", family_name(best->family)},
                             {"score", best->score},
                             {"nll", best->nll},
                             {"tau", best->tau},
                             {"fell_back", best->fell_back},
                             {"history", best->history}};
        std::vector<std::vector<double>> beta(static_cast<std::size_t>(best->beta.cols()));
        for (Eigen::Index c = 0; c < best->beta.cols(); ++c)
            beta[c].assign(best->beta.col(c).data(), best->beta.col(c).data() + best->beta.rows());
        em["beta"] = beta;
        edge_meta[e] = em;
        model.states[e] = best->path;
        return best->path;
    });
    for (auto& lg : logs) model.fit_log.insert(model.fit_log.end(), lg.begin(), lg.end());
    model.meta["edges"] = edge_meta;
    model.meta["lambda_smooth"] = cfg.lambda_smooth;
    model.meta["lambda_ridge"] = cfg.lambda_ridge;
    model.meta["df_mode"] = cfg.df_mode == DfMode::Grid ? "grid" : "trajectory";
    return model;
}

// ---------------------------------------------------------------------------
// Windowed and regularized windowed

WindowedModel fit_windowed(const WindowSeq& train, std::span<const Family> candidates, const StaticFitOptions& opts) {
    if (train.empty()) throw DomainError("fit_windowed: no windows");
    if (candidates.empty()) throw ConfigError("fit_windowed: empty candidate list");
    const std::size_t T = train.size();
    WindowedModel out;
    out.windows.resize(T);
    out.roots.assign(T, -1);
    std::vector<std::string> logs(T);
    StaticFitOptions inner = opts;
    inner.jobs = 1;
    parallel_for(T, opts.jobs, [&](std::size_t t) {
        try {
            check_fit_matrix(train[t], "window");
            const auto order = greedy_order_from_tau(kendall_matrix(train[t]).cwiseAbs());
            FittedVine m = fit_static(train[t], CVineStructure(order), candidates, inner);
            m.estimator = "windowed";
            out.roots[t] = order.front();
            out.windows[t] = std::move(m);
        } catch (const Error& e) {
            logs[t] = "window " + std::to_string(t) + ": " + e.what() + "; skipped";
        }
    });
    for (std::size_t t = 0; t < T; ++t) {
        if (!logs[t].empty()) out.log.push_back(logs[t]);
        if (out.windows[t]) out.edge_fits += out.windows[t]->structure.edge_count();
    }
    return out;
}

std::vector<int> select_root_path(const WindowSeq& train, double lambda_root) {
    if (train.empty()) throw DomainError("select_root_path: no windows");
    if (lambda_root < 0.0) throw ConfigError("select_root_path: negative penalty");
    const std::size_t T = train.size();
    const auto d = static_cast<std::size_t>(train.front().cols());
    std::vector<std::vector<double>> local(T, std::vector<double>(d, 0.0));
    for (std::size_t t = 0; t < T; ++t) {
        try {
            check_fit_matrix(train[t], "window");
            const Eigen::VectorXd s = kendall_matrix(train[t]).cwiseAbs().rowwise().sum();
            for (std::size_t r = 0; r < d; ++r) local[t][r] = -s(static_cast<Eigen::Index>(r));
        } catch (const DegenerateDataError&) {
            // uninformative window: every root costs the same
        }
    }
    std::vector<std::vector<double>> cost(T, std::vector<double>(d));
    std::vector<std::vector<int>> back(T, std::vector<int>(d, -1));
    cost[0] = local[0];
    for (std::size_t t = 1; t < T; ++t)
        for (std::size_t r = 0; r < d; ++r) {
            // staying is preferred on ties, then the lowest index
            double best = cost[t - 1][r];
            int arg = static_cast<int>(r);
            for (std::size_t p = 0; p < d; ++p) {
                const double c = cost[t - 1][p] + lambda_root;
                if (p != r && c < best && !near_tie(c, best)) best = c, arg = static_cast<int>(p);
            }
            cost[t][r] = best + local[t][r];
            back[t][r] = arg;
        }
    int last = 0;
    for (std::size_t r = 1; r < d; ++r)
        if (cost[T - 1][r] < cost[T - 1][last] && !near_tie(cost[T - 1][r], cost[T - 1][last])) last = static_cast<int>(r);
    std::vector<int> path(T);
    for (std::size_t t = T; t-- > 0;) {
        path[t] = last;
        if (t > 0) last = back[t][static_cast<std::size_t>(last)];
    }
    return path;
}

namespace {

std::vector<int> greedy_with_root(const Eigen::MatrixXd& abs_tau, int root) {
    const int d = static_cast<int>(abs_tau.rows());
    std::vector<int> order{root};
    std::vector<bool> used(d, false);
    used[root] = true;
    for (int step = 1; step < d; ++step) {
        int best = -1;
        double best_sum = -1.0;
        for (int r = 0; r < d; ++r) {
            if (used[r]) continue;
            double sum = 0.0;
            for (int c = 0; c < d; ++c)
                if (c != r && !used[c]) sum += abs_tau(r, c);
            if (sum > best_sum) best_sum = sum, best = r;
        }
        used[best] = true;
        order.push_back(best);
    }
    return order;
}

}  // namespace

WindowedModel fit_reg_windowed(const WindowSeq& train, std::span<const Family> candidates, const RegWindowedConfig& cfg) {
    if (train.empty()) throw DomainError("fit_reg_windowed: no windows");
    if (candidates.empty()) throw ConfigError("fit_reg_windowed: empty candidate list");
    if (cfg.lambda_sw < 0.0 || cfg.lambda_drift < 0.0) throw ConfigError("fit_reg_windowed: negative penalty");
    const std::size_t T = train.size();
    const int d = static_cast<int>(train.front().cols());
    const std::vector<int> root_path = select_root_path(train, cfg.lambda_root);

    WindowedModel out;
    out.windows.resize(T);
    out.roots.assign(T, -1);
    std::vector<std::size_t> valid;
    std::vector<CVineStructure> st(T);
    for (std::size_t t = 0; t < T; ++t) {
        try {
            check_fit_matrix(train[t], "window");
            st[t] = CVineStructure(greedy_with_root(kendall_matrix(train[t]).cwiseAbs(), root_path[t]));
            valid.push_back(t);
            out.roots[t] = root_path[t];
        } catch (const Error& e) {
            out.log.push_back("window " + std::to_string(t) + ": " + e.what() + "; skipped");
        }
    }
    if (valid.empty()) return out;

    std::vector<Eigen::MatrixXd> v;
    for (std::size_t t : valid) v.push_back(by_position(st[t], train[t]));
    const auto E = static_cast<std::size_t>(edge_count(d));
    std::vector<std::vector<EdgeState>> paths(E);
    std::vector<std::vector<std::string>> logs(E);
    CVineStructure pos_st(st[valid.front()]);
    level_loop(v, d, cfg.jobs, [&](int l, int j, const std::vector<PairSample>& samples) {
        const auto e = static_cast<std::size_t>(pos_st.edge_index(l, j));
        CandidateTable tab = candidate_table(samples, candidates, cfg.nu_grid);
        const SwitchPath p = solve_switch_dp(tab.cost, tab.states, cfg.lambda_sw, cfg.lambda_drift);
        std::vector<EdgeState> path(samples.size());
        for (std::size_t i = 0; i < samples.size(); ++i) path[i] = tab.states[i][p.choice[i]];
        for (auto& s : tab.log) logs[e].push_back(edge_tag(l, j) + " " + s);
        paths[e] = path;
        return path;
    });
    for (auto& lg : logs) out.log.insert(out.log.end(), lg.begin(), lg.end());
    for (std::size_t i = 0; i < valid.size(); ++i) {
        FittedVine m;
        m.structure = st[valid[i]];
        m.truncation_level = d - 1;
        m.estimator = "reg-windowed";
        m.states.resize(E);
        for (std::size_t e = 0; e < E; ++e) m.states[e] = {paths[e][i]};
        out.windows[valid[i]] = std::move(m);
        out.edge_fits += static_cast<long>(E);
    }
    return out;
}

// ---------------------------------------------------------------------------
// DVC-latent

Eigen::MatrixXd LatentState::reconstruction() const {
    return (z * w.transpose()).rowwise() + b.transpose();
}

namespace {

double latent_objective(const Eigen::MatrixXd& Y, const LatentState& s, double weight) {
    double obj = (Y - s.reconstruction()).squaredNorm();
    for (Eigen::Index t = 1; t < s.z.rows(); ++t) obj += weight * (s.z.row(t) - s.phi * s.z.row(t - 1)).squaredNorm();
    return obj;
}

// Unit RMS per latent column; loadings absorb the scale.
void gauge(LatentState& s) {
    const double T = static_cast<double>(s.z.rows());
    for (Eigen::Index c = 0; c < s.z.cols(); ++c) {
        const double rms = s.z.col(c).norm() / std::sqrt(T);
        if (rms > 1e-300) {
            s.z.col(c) /= rms;
            s.w.col(c) *= rms;
        }
    }
}

}  // namespace

LatentState fit_latent_paths(const Eigen::MatrixXd& Y, const LatentConfig& cfg) {
    const Eigen::Index T = Y.rows(), E = Y.cols();
    if (cfg.k < 1) throw ConfigError("latent: k must be >= 1");
    if (cfg.weight < 0.0) throw ConfigError("latent: weight must be non-negative");
    if (T < 2 || E < 1) throw DomainError("latent: need at least 2 windows and 1 edge");
    const Eigen::Index k = std::min<Eigen::Index>(cfg.k, std::min(T, E));

    LatentState s;
    s.b = Y.colwise().mean().transpose();
    const Eigen::MatrixXd Yc = Y.rowwise() - s.b.transpose();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Yc, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double sq = std::sqrt(static_cast<double>(T));
    s.z = svd.matrixU().leftCols(k) * sq;
    s.w = svd.matrixV().leftCols(k) * svd.singularValues().head(k).asDiagonal() / sq;
    s.phi = 0.0;
    s.objective = latent_objective(Y, s, cfg.weight);

    for (int it = 0; it < cfg.max_iter; ++it) {
        const double prev = s.objective;
        // z-step: quadratic in the stacked latent path.
        const Eigen::Index n = T * k;
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
        Eigen::VectorXd rhs(n);
        const Eigen::MatrixXd WtW = s.w.transpose() * s.w;
        const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(k, k);
        for (Eigen::Index t = 0; t < T; ++t) {
            A.block(t * k, t * k, k, k) += WtW;
            rhs.segment(t * k, k) = s.w.transpose() * (Y.row(t).transpose() - s.b);
            if (t > 0 && cfg.weight > 0.0) {
                A.block(t * k, t * k, k, k) += cfg.weight * I;
                A.block((t - 1) * k, (t - 1) * k, k, k) += cfg.weight * s.phi * s.phi * I;
                A.block(t * k, (t - 1) * k, k, k) -= cfg.weight * s.phi * I;
                A.block((t - 1) * k, t * k, k, k) -= cfg.weight * s.phi * I;
            }
        }
        A.diagonal().array() += 1e-12;
        const Eigen::VectorXd zs = A.ldlt().solve(rhs);
        for (Eigen::Index t = 0; t < T; ++t) s.z.row(t) = zs.segment(t * k, k).transpose();
        gauge(s);
        // Loadings and offsets by least squares on [1, z].
        Eigen::MatrixXd X(T, k + 1);
        X.col(0).setOnes();
        X.rightCols(k) = s.z;
        Eigen::MatrixXd XtX = X.transpose() * X;
        XtX.diagonal().array() += 1e-12;
        const Eigen::MatrixXd coef = XtX.ldlt().solve(X.transpose() * Y);
        s.b = coef.row(0).transpose();
        s.w = coef.bottomRows(k).transpose();
        if (cfg.weight > 0.0) {
            const double den = s.z.topRows(T - 1).squaredNorm();
            if (den > 0.0) s.phi = std::clamp((s.z.bottomRows(T - 1).cwiseProduct(s.z.topRows(T - 1))).sum() / den, -1.0, 1.0);
        }
        s.objective = latent_objective(Y, s, cfg.weight);
        if (std::abs(prev - s.objective) <= cfg.tol * (1.0 + std::abs(s.objective))) break;
    }
    return s;
}

FittedVine fit_dvc_latent(const FittedVine& smooth, const LatentConfig& cfg) {
    const int E = smooth.structure.edge_count();
    if (cfg.k < 1 || cfg.k > E) throw ConfigError("fit_dvc_latent: k must lie in [1, edge count]");
    const int T = smooth.windows();
    FittedVine out = smooth;
    out.estimator = "DVC-latent";
    std::vector<int> targets;
    for (int e = 0; e < E; ++e)
        if (smooth.state(e, 0).family != Family::Independence) targets.push_back(e);
    out.meta = {{"k", cfg.k}, {"weight", cfg.weight}, {"targets", targets.size()}};
    if (targets.empty() || T < 2) return out;
    Eigen::MatrixXd Y(T, static_cast<Eigen::Index>(targets.size()));
    for (std::size_t i = 0; i < targets.size(); ++i)
        for (int t = 0; t < T; ++t) {
            const EdgeState& s = smooth.state(targets[i], t);
            Y(t, static_cast<Eigen::Index>(i)) = link_primary_inverse(s.family, s.theta);
        }
    const LatentState ls = fit_latent_paths(Y, cfg);
    const Eigen::MatrixXd R = ls.reconstruction();
    for (std::size_t i = 0; i < targets.size(); ++i) {
        auto& path = out.states[static_cast<std::size_t>(targets[i])];
        path.resize(static_cast<std::size_t>(T), path.front());
        for (int t = 0; t < T; ++t) {
            EdgeState s = smooth.state(targets[i], t);
            s.theta = link_primary(s.family, R(t, static_cast<Eigen::Index>(i)));
            path[static_cast<std::size_t>(t)] = s;
        }
    }
    out.meta["phi"] = ls.phi;
    out.meta["objective"] = ls.objective;
    out.meta["reconstruction_rmse"] = std::sqrt((Y - R).squaredNorm() / static_cast<double>(Y.size()));
    return out;
}

}  // namespace dvc
