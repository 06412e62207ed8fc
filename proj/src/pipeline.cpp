#include "dvc/pipeline.hpp"

#include "dvc/baselines.hpp"
#include "dvc/errors.hpp"
#include "dvc/io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace dvc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct EstimatorInfo {
    Estimator e;
    const char* key;
    const char* label;
};

constexpr EstimatorInfo kInfo[] = {
    {Estimator::DvcSmooth, "dvc_smooth", "DVC-smooth"},
    {Estimator::DvcSwitch, "dvc_switch", "DVC-switch"},
    {Estimator::Windowed, "windowed", "Windowed vine"},
    {Estimator::RegWindowed, "reg_windowed", "Reg. windowed"},
    {Estimator::DvcLatent, "dvc_latent", "DVC-latent"},
    {Estimator::GaussianCopula, "gaussian_copula", "Gaussian copula"},
    {Estimator::GaussianSsm, "gaussian_ssm", "Gaussian SSM"},
};

const EstimatorInfo& info(Estimator e) {
    for (const auto& i : kInfo)
        if (i.e == e) return i;
    throw ConfigError("unknown estimator");
}

std::string role_of(Estimator e, Estimator primary) {
    if (e == primary) return "primary";
    switch (e) {
        case Estimator::GaussianCopula:
        case Estimator::GaussianSsm: return "gaussian_baseline";
        case Estimator::Windowed:
        case Estimator::RegWindowed: return "windowed_control";
        default: return "dvc_variant";
    }
}

Eigen::MatrixXd stack(const WindowSeq& w) {
    Eigen::Index rows = 0;
    for (const auto& m : w) rows += m.rows();
    Eigen::MatrixXd out(rows, w.front().cols());
    Eigen::Index r = 0;
    for (const auto& m : w) out.middleRows(r, m.rows()) = m, r += m.rows();
    return out;
}

json windowed_json(const WindowedModel& m) {
    json w = json::array();
    for (const auto& v : m.windows) w.push_back(v ? to_json(*v) : json());
    return {{"estimator", "windowed"}, {"roots", m.roots}, {"edge_fits", m.edge_fits}, {"log", m.log}, {"windows", w}};
}

json corr_json(const std::vector<CorrelationMatrix>& ws) {
    json out = json::array();
    for (const auto& R : ws) {
        const auto& m = R.matrix();
        json rows = json::array();
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            std::vector<double> row(static_cast<std::size_t>(m.cols()));
            for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
            rows.push_back(row);
        }
        out.push_back(rows);
    }
    return out;
}

std::vector<double> gaussian_nll(const std::vector<CorrelationMatrix>& R, const WindowSeq& heldout) {
    std::vector<double> nll;
    for (std::size_t t = 0; t < heldout.size(); ++t) nll.push_back(-gaussian_copula_logdensities(R[t], heldout[t]).mean());
    return nll;
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
    for (const auto& [k, v] : j.items()) {
        if (std::none_of(keys.begin(), keys.end(), [&](const char* a) { return k == a; }))
            throw ConfigError("unknown config key '" + k + "' in " + where);
    }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::string estimator_key(Estimator e) { return info(e).key; }
std::string estimator_label(Estimator e) { return info(e).label; }

const std::vector<Estimator>& all_estimators() {
    static const std::vector<Estimator> all = [] {
        std::vector<Estimator> v;
        for (const auto& i : kInfo) v.push_back(i.e);
        return v;
    }();
    return all;
}

Estimator parse_estimator(const std::string& key) {
    std::string valid;
    for (const auto& i : kInfo) {
        if (key == i.key) return i.e;
        valid += valid.empty() ? i.key : std::string(", ") + i.key;
    }
    throw ConfigError("unknown estimator '" + key + "'; valid: " + valid);
}

RunConfig default_config(const std::string& scenario) {
    check_scenario_name(scenario);
    RunConfig c;
    c.scenario = scenario;
    using E = Estimator;
    if (scenario == "tail_df") {
        c.primary = E::DvcSmooth;
        c.smooth.df_mode = DfMode::Trajectory;
        c.estimators = {E::DvcSmooth, E::DvcSwitch, E::Windowed, E::RegWindowed, E::DvcLatent, E::GaussianCopula,
                        E::GaussianSsm};
        c.reg = {0.10, 0.08, 0.0, kDefaultNuGrid, 1};
    } else if (scenario == "tail_switch") {
        c.primary = E::DvcSwitch;
        c.sw.lambda_drift = 0.02;
        c.estimators = {E::DvcSwitch, E::DvcSmooth, E::Windowed, E::GaussianCopula, E::GaussianSsm};
    } else if (scenario == "hub_switch") {
        c.primary = E::Windowed;
        c.reg = {0.25, 0.0, 0.0, kDefaultNuGrid, 1};
        c.estimators = {E::Windowed, E::RegWindowed, E::DvcSwitch, E::GaussianCopula, E::GaussianSsm};
    } else if (scenario == "agent_episodes") {
        c.primary = E::DvcSwitch;
        c.sw.lambda_sw = 0.20;
        c.reg = {0.10, 0.20, 0.10, kDefaultNuGrid, 1};
        c.estimators = {E::DvcSwitch, E::Windowed, E::RegWindowed, E::GaussianCopula, E::GaussianSsm};
    } else if (scenario == "xor_stress") {
        c.primary = E::Windowed;
        c.estimators = {E::Windowed, E::DvcSwitch, E::GaussianCopula, E::GaussianSsm};
    } else if (scenario == "mult_triplet") {
        c.primary = E::Windowed;
        c.estimators = {E::Windowed, E::GaussianCopula};
    } else {  // showcase
        c.primary = E::DvcSwitch;
        c.estimators = {E::DvcSwitch, E::Windowed, E::GaussianCopula, E::GaussianSsm};
    }
    return c;
}

void set_estimators(RunConfig& cfg, const std::vector<Estimator>& list) {
    if (list.empty()) throw ConfigError("estimator list is empty");
    std::vector<Estimator> uniq;
    for (auto e : list)
        if (std::find(uniq.begin(), uniq.end(), e) == uniq.end()) uniq.push_back(e);
    cfg.estimators = uniq;
    if (std::find(uniq.begin(), uniq.end(), cfg.primary) == uniq.end()) cfg.primary = uniq.front();
}

void apply_config_json(RunConfig& cfg, const json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    try {
        reject_unknown(j,
                       {"scenario", "seed", "estimators", "primary", "jobs", "jitter", "dvc_smooth", "dvc_switch",
                        "reg_windowed", "dvc_latent"},
                       "config");
        if (j.contains("scenario")) {
            const auto s = j.at("scenario").get<std::string>();
            if (s != cfg.scenario) cfg = default_config(s);
        }
        read(j, "seed", cfg.seed);
        read(j, "jobs", cfg.jobs);
        read(j, "jitter", cfg.jitter);
        if (j.contains("primary")) cfg.primary = parse_estimator(j.at("primary").get<std::string>());
        if (j.contains("estimators")) {
            std::vector<Estimator> list;
            for (const auto& k : j.at("estimators")) list.push_back(parse_estimator(k.get<std::string>()));
            set_estimators(cfg, list);
        }
        if (j.contains("dvc_smooth")) {
            const auto& s = j.at("dvc_smooth");
            reject_unknown(s, {"lambda_smooth", "lambda_ridge", "centers", "bandwidth", "max_iter", "df_mode", "nu_grid"},
                           "dvc_smooth");
            read(s, "lambda_smooth", cfg.smooth.lambda_smooth);
            read(s, "lambda_ridge", cfg.smooth.lambda_ridge);
            read(s, "centers", cfg.smooth.centers);
            read(s, "bandwidth", cfg.smooth.bandwidth);
            read(s, "max_iter", cfg.smooth.max_iter);
            read(s, "nu_grid", cfg.smooth.nu_grid);
            if (s.contains("df_mode")) {
                const auto m = s.at("df_mode").get<std::string>();
                if (m == "grid") cfg.smooth.df_mode = DfMode::Grid;
                else if (m == "trajectory") cfg.smooth.df_mode = DfMode::Trajectory;
                else throw ConfigError("df_mode must be 'grid' or 'trajectory'");
            }
        }
        if (j.contains("dvc_switch")) {
            const auto& s = j.at("dvc_switch");
            reject_unknown(s, {"lambda_sw", "lambda_drift", "nu_grid"}, "dvc_switch");
            read(s, "lambda_sw", cfg.sw.lambda_sw);
            read(s, "lambda_drift", cfg.sw.lambda_drift);
            read(s, "nu_grid", cfg.sw.nu_grid);
        }
        if (j.contains("reg_windowed")) {
            const auto& s = j.at("reg_windowed");
            reject_unknown(s, {"lambda_root", "lambda_sw", "lambda_drift", "nu_grid"}, "reg_windowed");
            read(s, "lambda_root", cfg.reg.lambda_root);
            read(s, "lambda_sw", cfg.reg.lambda_sw);
            read(s, "lambda_drift", cfg.reg.lambda_drift);
            read(s, "nu_grid", cfg.reg.nu_grid);
        }
        if (j.contains("dvc_latent")) {
            const auto& s = j.at("dvc_latent");
            reject_unknown(s, {"k", "weight", "max_iter"}, "dvc_latent");
            read(s, "k", cfg.latent.k);
            read(s, "weight", cfg.latent.weight);
            read(s, "max_iter", cfg.latent.max_iter);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (cfg.jobs < 1) throw ConfigError("jobs must be >= 1");
    if (std::find(cfg.estimators.begin(), cfg.estimators.end(), cfg.primary) == cfg.estimators.end())
        throw ConfigError("primary estimator '" + estimator_key(cfg.primary) + "' is not in the estimator list");
}

json config_to_json(const RunConfig& c) {
    json est = json::array();
    for (auto e : c.estimators) est.push_back(estimator_key(e));
    return {{"scenario", c.scenario},
            {"seed", c.seed},
            {"estimators", est},
            {"primary", estimator_key(c.primary)},
            {"jobs", c.jobs},
            {"jitter", c.jitter},
            {"dvc_smooth",
             {{"lambda_smooth", c.smooth.lambda_smooth},
              {"lambda_ridge", c.smooth.lambda_ridge},
              {"centers", c.smooth.centers},
              {"bandwidth", c.smooth.bandwidth},
              {"max_iter", c.smooth.max_iter},
              {"df_mode", c.smooth.df_mode == DfMode::Grid ? "grid" : "trajectory"},
              {"nu_grid", c.smooth.nu_grid}}},
            {"dvc_switch", {{"lambda_sw", c.sw.lambda_sw}, {"lambda_drift", c.sw.lambda_drift}, {"nu_grid", c.sw.nu_grid}}},
            {"reg_windowed",
             {{"lambda_root", c.reg.lambda_root},
              {"lambda_sw", c.reg.lambda_sw},
              {"lambda_drift", c.reg.lambda_drift},
              {"nu_grid", c.reg.nu_grid}}},
            {"dvc_latent", {{"k", c.latent.k}, {"weight", c.latent.weight}, {"max_iter", c.latent.max_iter}}}};
}

const MethodResult* RunResult::find(Estimator e) const {
    for (const auto& m : methods)
        if (m.estimator == e) return &m;
    return nullptr;
}

double RunResult::gap(Estimator e) const {
    const auto* m = find(e);
    if (!m || !m->ok() || !primary().ok()) return std::numeric_limits<double>::quiet_NaN();
    return finite_mean(nll_gap(m->nll, primary().nll));
}

RunResult run_pipeline(const RunConfig& cfg_in, const std::vector<std::string>& labels, const PseudoObsSequence& pseudo) {
    RunConfig cfg = cfg_in;
    cfg.smooth.jobs = cfg.sw.jobs = cfg.reg.jobs = cfg.jobs;
    if (pseudo.windows() == 0) throw DegenerateDataError("no windows to fit");
    const auto& train = pseudo.train;
    const auto& heldout = pseudo.heldout;
    const std::span<const Family> fams(kAllFamilies);

    RunResult res;
    res.config = cfg;
    res.labels = labels;

    std::vector<Estimator> order{cfg.primary};
    for (auto e : cfg.estimators)
        if (e != cfg.primary) order.push_back(e);

    std::optional<CVineStructure> structure;
    auto joint_structure = [&]() -> const CVineStructure& {
        if (!structure) structure = CVineStructure(select_order_pooled(stack(train)));
        return *structure;
    };
    std::optional<FittedVine> smooth_model;
    auto smooth = [&]() -> const FittedVine& {
        if (!smooth_model) smooth_model = fit_dvc_smooth(train, joint_structure(), fams, cfg.smooth);
        return *smooth_model;
    };

    for (auto e : order) {
        MethodResult m;
        m.estimator = e;
        m.method = estimator_label(e);
        m.role = role_of(e, cfg.primary);
        const auto t0 = std::chrono::steady_clock::now();
        try {
            auto vine_result = [&](const FittedVine& v) {
                m.decomposition = decompose(v, heldout);
                m.model = to_json(v);
            };
            switch (e) {
                case Estimator::DvcSmooth: vine_result(smooth()); break;
                case Estimator::DvcSwitch: vine_result(fit_dvc_switch(train, joint_structure(), fams, cfg.sw)); break;
                case Estimator::DvcLatent: vine_result(fit_dvc_latent(smooth(), cfg.latent)); break;
                case Estimator::Windowed:
                case Estimator::RegWindowed: {
                    const WindowedModel w = e == Estimator::Windowed
                                                ? fit_windowed(train, fams, StaticFitOptions{cfg.sw.nu_grid, cfg.jobs})
                                                : fit_reg_windowed(train, fams, cfg.reg);
                    m.decomposition = decompose(w, heldout);
                    m.model = windowed_json(w);
                    m.model["estimator"] = estimator_key(e);
                    break;
                }
                case Estimator::GaussianCopula: {
                    const auto g = fit_gaussian_copula_windows(train);
                    m.nll = gaussian_nll(g.windows, heldout);
                    m.model = {{"estimator", "gaussian_copula"}, {"windows", corr_json(g.windows)}};
                    break;
                }
                case Estimator::GaussianSsm: {
                    const auto s = fit_gaussian_ssm(train, heldout);
                    m.nll = gaussian_nll(s.windows, heldout);
                    m.model = {{"estimator", "gaussian_ssm"},
                               {"q", s.q},
                               {"q_grid", kSsmQGrid},
                               {"q_scores", s.q_scores},
                               {"obs_var", s.obs_var},
                               {"windows", corr_json(s.windows)}};
                    break;
                }
            }
            if (m.decomposition) m.nll = heldout_nll(*m.decomposition);
        } catch (const Error& err) {
            m.status = std::string("failed: ") + err.what();
            m.nll.assign(pseudo.windows(), std::numeric_limits<double>::quiet_NaN());
            m.decomposition.reset();
        }
        m.fit_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        res.methods.push_back(std::move(m));
    }

    const MethodResult& prim = res.methods.front();
    if (prim.decomposition) {
        MethodResult tr;
        tr.estimator = prim.estimator;
        tr.method = prim.method + " 1-truncated";
        tr.role = "truncated_control";
        tr.nll = heldout_nll_truncated(*prim.decomposition);
        res.truncated = tr;
    }

    auto row = [&](const MethodResult& m) {
        ReportRow r{cfg.scenario, prim.method, m.method, m.role, finite_mean(m.nll), 0.0, 0.0, m.status};
        if (m.ok() && prim.ok()) {
            const auto g = nll_gap(m.nll, prim.nll);
            r.gap_vs_primary = finite_mean(g);
            r.positive_window_fraction = positive_fraction(g);
        } else {
            r.gap_vs_primary = r.positive_window_fraction = std::numeric_limits<double>::quiet_NaN();
        }
        res.rows.push_back(r);
    };
    for (const auto& m : res.methods) row(m);
    if (res.truncated) row(*res.truncated);

    if (cfg.scenario == "agent_episodes" && prim.decomposition && labels.size() == pseudo.windows()) {
        std::vector<int> indep;
        for (std::size_t t = 0; t < labels.size(); ++t)
            if (labels[t] == "independence") indep.push_back(static_cast<int>(t));
        const auto det = detect_episodes(prim.nll, indep);
        const auto ord = assign_order(*prim.decomposition, indep);
        for (std::size_t t = 0; t < labels.size(); ++t)
            res.order.push_back({static_cast<int>(t), labels[t], truth_order(labels[t]), det[t], ord[t]});
    }
    return res;
}

RunResult run_scenario(const RunConfig& cfg) {
    const Scenario s = generate_scenario(cfg.scenario, cfg.seed);
    return run_pipeline(cfg, s.truth.labels, make_pseudo_obs(s.data, cfg.jitter));
}

void write_run(const fs::path& dir, const RunResult& r) {
    fs::create_directories(dir);
    CsvTable rep{{"scenario", "primary_estimator", "method", "role", "mean_heldout_nll", "gap_vs_primary",
                  "positive_window_fraction", "status"},
                 {}};
    for (const auto& x : r.rows)
        rep.rows.push_back({x.scenario, x.primary_estimator, x.method, x.role, format_double(x.mean_heldout_nll),
                            format_double(x.gap_vs_primary), format_double(x.positive_window_fraction), x.status});
    write_csv(dir / "report.csv", rep);

    json models = json::object(), timing = json::object();
    for (const auto& m : r.methods) {
        const auto key = estimator_key(m.estimator);
        models[key] = m.ok() ? m.model : json{{"status", m.status}};
        timing[key] = m.fit_seconds;
        CsvTable nll{{"t", "heldout_nll"}, {}};
        for (std::size_t t = 0; t < m.nll.size(); ++t) nll.rows.push_back({std::to_string(t), format_double(m.nll[t])});
        write_csv(dir / ("nll_" + key + ".csv"), nll);
        if (!m.decomposition) continue;
        const auto& d = *m.decomposition;
        CsvTable dec{{"t", "S_total", "S_pair", "Delta_HO"}, {}};
        for (std::size_t t = 0; t < d.size(); ++t)
            dec.rows.push_back({std::to_string(t), format_double(d.s_total[t]), format_double(d.s_pair[t]),
                                format_double(d.delta_ho[t])});
        write_csv(dir / ("decomposition_" + key + ".csv"), dec);
    }
    write_json(dir / "models.json", models);
    write_json(dir / "timing.json", timing);
    write_json(dir / "config.json", config_to_json(r.config));

    if (!r.order.empty()) {
        CsvTable ord{{"t", "regime", "truth_order", "detected", "assigned_order"}, {}};
        for (const auto& o : r.order)
            ord.rows.push_back({std::to_string(o.t), o.truth, order_label_name(o.truth_order), o.detected ? "1" : "0",
                                order_label_name(o.assigned)});
        write_csv(dir / "order_assignment.csv", ord);
    }
}

long windowed_edge_fits(int d, int T) { return static_cast<long>(T) * edge_count(d); }
long joint_edge_fits(int d) { return edge_count(d); }

std::vector<RuntimeRow> runtime_table(const std::vector<int>& d_list, const std::vector<int>& T_list, int repeats,
                                      int n, std::uint64_t seed) {
    std::vector<RuntimeRow> out;
    const std::span<const Family> fams(kAllFamilies);
    for (int d : d_list) {
        if (d < 3) throw ConfigError("runtime: d must be >= 3");
        for (int T : T_list) {
            if (T < 2) throw ConfigError("runtime: T must be >= 2");
            // equicorrelated Gaussian windows, rho = 0.5
            WindowSeq train;
            for (int t = 0; t < T; ++t) {
                SeededRng rng(child_seed(seed, t));
                Eigen::MatrixXd x(n, d);
                for (int r = 0; r < n; ++r) {
                    const double common = rng.normal();
                    for (int c = 0; c < d; ++c) x(r, c) = std::sqrt(0.5) * common + std::sqrt(0.5) * rng.normal();
                }
                train.push_back(rank_pseudo_obs(x));
            }
            auto timed = [&](auto&& fit) {
                double total = 0.0;
                for (int k = 0; k < repeats; ++k) {
                    const auto t0 = std::chrono::steady_clock::now();
                    fit();
                    total += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                }
                return repeats > 0 ? total / repeats : 0.0;
            };
            const auto w = timed([&] { fit_windowed(train, fams, StaticFitOptions{kDefaultNuGrid, 1}); });
            const CVineStructure st(select_order_pooled(stack(train)));
            const auto sw = timed([&] { fit_dvc_switch(train, st, fams, SwitchConfig{}); });
            const auto sm = timed([&] { fit_dvc_smooth(train, st, fams, SmoothConfig{}); });
            const long wf = windowed_edge_fits(d, T), jf = joint_edge_fits(d);
            out.push_back({d, T, "windowed", wf, 1.0, w, w / T});
            out.push_back({d, T, "dvc_switch", jf, static_cast<double>(wf) / static_cast<double>(jf), sw, sw / T});
            out.push_back({d, T, "dvc_smooth", jf, static_cast<double>(wf) / static_cast<double>(jf), sm, sm / T});
        }
    }
    return out;
}

}  // namespace dvc
