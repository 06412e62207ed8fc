#include "dvc/errors.hpp"
#include "dvc/evaldiag.hpp"
#include "dvc/io.hpp"
#include "dvc/pipeline.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <iostream>
#include <sstream>

namespace {

using namespace dvc;

struct Common {
    std::string scenario;
    std::uint64_t seed = kBenchmarkSeed;
    std::string config;
    std::string out = "out";
    int jobs = 0;  // 0: keep config value
    std::string estimators;
};

void add_common(CLI::App* sub, Common& c, bool with_estimators) {
    sub->add_option("--scenario", c.scenario, "Benchmark scenario name");
    sub->add_option("--seed", c.seed, "Base seed")->capture_default_str();
    sub->add_option("--config", c.config, "JSON config file (flags override it)");
    sub->add_option("--out", c.out, "Output directory")->capture_default_str();
    sub->add_option("--jobs", c.jobs, "Worker threads");
    if (with_estimators) sub->add_option("--estimators", c.estimators, "Comma-separated estimator keys");
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) out.push_back(tok);
    return out;
}

std::vector<int> parse_ints(const std::string& s) {
    std::vector<int> out;
    for (const auto& t : split_commas(s)) {
        try {
            out.push_back(std::stoi(t));
        } catch (const std::exception&) {
            throw ConfigError("not an integer: '" + t + "'");
        }
    }
    return out;
}

// Flags override the file; the file overrides scenario defaults.
RunConfig resolve(const Common& c, CLI::App* sub) {
    nlohmann::json file = nlohmann::json::object();
    if (!c.config.empty()) file = read_json(c.config);
    std::string scenario = c.scenario;
    if (scenario.empty() && file.contains("scenario") && file["scenario"].is_string())
        scenario = file["scenario"].get<std::string>();
    if (scenario.empty()) throw ConfigError("--scenario is required (or set \"scenario\" in --config)");
    RunConfig cfg = default_config(scenario);
    file["scenario"] = scenario;
    apply_config_json(cfg, file);
    if (sub->count("--seed")) cfg.seed = c.seed;
    if (c.jobs > 0) cfg.jobs = c.jobs;
    if (!c.estimators.empty()) {
        std::vector<Estimator> list;
        for (const auto& k : split_commas(c.estimators)) list.push_back(parse_estimator(k));
        set_estimators(cfg, list);
    }
    return cfg;
}

void print_report(const RunResult& r) {
    std::cout << "scenario " << r.config.scenario << ", primary " << r.primary().method << "\n";
    for (const auto& row : r.rows) {
        std::cout << "  " << row.method << " [" << row.role << "] nll=" << row.mean_heldout_nll
                  << " gap=" << row.gap_vs_primary << " pos=" << row.positive_window_fraction;
        if (row.status != "ok") std::cout << " (" << row.status << ")";
        std::cout << "\n";
    }
}

int finish(const RunResult& r) {
    if (!r.primary().ok()) {
        std::cerr << "error: required estimator " << r.primary().method << " " << r.primary().status << "\n";
        return 4;
    }
    return 0;
}

int cmd_generate(const Common& c, bool no_oracle) {
    if (c.scenario.empty()) throw ConfigError("--scenario is required");
    check_scenario_name(c.scenario);
    const Scenario s = generate_scenario(c.scenario, c.seed);
    write_dataset(c.out, s, !no_oracle);
    std::cout << "wrote " << s.data.windows.size() << " windows to " << c.out << "\n";
    return 0;
}

int cmd_run(const RunConfig& cfg, const std::string& out) {
    const RunResult r = run_scenario(cfg);
    write_run(out, r);
    print_report(r);
    return finish(r);
}

int cmd_null(const RunConfig& cfg, const std::string& out) {
    const Scenario s = generate_scenario(cfg.scenario, cfg.seed);
    const auto pseudo = decorrelated_null(make_pseudo_obs(s.data, cfg.jitter), cfg.seed + 1);
    const RunResult r = run_pipeline(cfg, s.truth.labels, pseudo);
    write_run(out, r);
    nlohmann::json summary = {{"scenario", cfg.scenario}, {"primary", r.primary().method}};
    if (r.primary().decomposition) {
        const auto& d = r.primary().decomposition->delta_ho;
        int positive = 0, n = 0;
        for (double v : d)
            if (std::isfinite(v)) ++n, positive += v > 0.0;
        summary["mean_delta_ho"] = finite_mean(d);
        summary["positive_windows"] = positive;
        summary["windows"] = n;
        summary["chance_upper"] = binomial_upper(n, 0.5, 0.01);
    }
    write_json(std::filesystem::path(out) / "null_summary.json", summary);
    print_report(r);
    std::cout << summary.dump() << "\n";
    return finish(r);
}

int cmd_runtime(const std::string& ds, const std::string& ts, int repeats, int n, const std::string& out) {
    const auto rows = runtime_table(parse_ints(ds), parse_ints(ts), repeats, n);
    CsvTable t{{"d", "T", "variant", "edge_fits", "compression", "total_time_s", "time_per_window_s"}, {}};
    for (const auto& r : rows) {
        t.rows.push_back({std::to_string(r.d), std::to_string(r.T), r.variant, std::to_string(r.edge_fits),
                          format_double(r.compression), format_double(r.total_time_s),
                          format_double(r.time_per_window_s)});
        std::cout << r.d << "\t" << r.T << "\t" << r.variant << "\t" << r.edge_fits << "\t" << r.compression << "x\t"
                  << r.total_time_s << "s\n";
    }
    write_csv(std::filesystem::path(out) / "runtime.csv", t);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dynamic vine copula toolkit"};
    app.require_subcommand(1);

    Common gen, run, dec, nul;
    bool no_oracle = false;
    auto* g = app.add_subcommand("generate", "Write a benchmark dataset (CSV windows + manifest)");
    add_common(g, gen, false);
    g->add_flag("--no-oracle", no_oracle, "Skip population oracle curves in the manifest");

    auto* r = app.add_subcommand("run", "Fit, evaluate and write the report");
    add_common(r, run, true);
    auto* d = app.add_subcommand("decompose", "Fit the primary estimator and write its decomposition");
    add_common(d, dec, false);
    auto* n = app.add_subcommand("null", "Rerun on the decorrelated null");
    add_common(n, nul, true);

    std::string d_list = "3,5,8", t_list = "12,24", rt_out = "out";
    int repeats = 2, rows = 200;
    auto* rt = app.add_subcommand("runtime", "Edge-fit counts and timing table");
    rt->add_option("--d", d_list, "Comma-separated dimensions")->capture_default_str();
    rt->add_option("--T", t_list, "Comma-separated window counts")->capture_default_str();
    rt->add_option("--repeats", repeats, "Timing repeats (0: counts only)")->capture_default_str();
    rt->add_option("--rows", rows, "Rows per window")->capture_default_str();
    rt->add_option("--out", rt_out, "Output directory")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*g) return cmd_generate(gen, no_oracle);
        if (*r) return cmd_run(resolve(run, r), run.out);
        if (*d) {
            RunConfig cfg = resolve(dec, d);
            set_estimators(cfg, {cfg.primary});
            return cmd_run(cfg, dec.out);
        }
        if (*n) return cmd_null(resolve(nul, n), nul.out);
        if (*rt) return cmd_runtime(d_list, t_list, repeats, rows, rt_out);
    } catch (const dvc::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
