#pragma once

#include "dvc/benchgen.hpp"
#include "dvc/evaldiag.hpp"
#include "dvc/temporal.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dvc {

enum class Estimator { DvcSmooth, DvcSwitch, Windowed, RegWindowed, DvcLatent, GaussianCopula, GaussianSsm };

/// Config key, e.g. "dvc_switch".
std::string estimator_key(Estimator e);
/// Report label, e.g. "DVC-switch".
std::string estimator_label(Estimator e);
/// ConfigError listing valid keys.
Estimator parse_estimator(const std::string& key);
const std::vector<Estimator>& all_estimators();

struct RunConfig {
    std::string scenario;
    std::uint64_t seed = kBenchmarkSeed;
    std::vector<Estimator> estimators;
    Estimator primary = Estimator::Windowed;
    SmoothConfig smooth;
    SwitchConfig sw;
    RegWindowedConfig reg;
    LatentConfig latent;
    double jitter = 0.0;
    int jobs = 1;
};

/// Scenario defaults: primary estimator, estimator list and penalties.
RunConfig default_config(const std::string& scenario);

/// Overrides from a JSON document; unknown keys and names raise ConfigError.
/// A changed scenario resets to that scenario's defaults first.
void apply_config_json(RunConfig& cfg, const nlohmann::json& j);
/// Replaces the estimator list; the primary becomes the first entry unless it
/// is in the list.
void set_estimators(RunConfig& cfg, const std::vector<Estimator>& list);

nlohmann::json config_to_json(const RunConfig& cfg);

struct MethodResult {
    Estimator estimator = Estimator::Windowed;
    std::string method;
    std::string role;
    std::string status = "ok";
    std::vector<double> nll;                     ///< per window, per held-out observation
    std::optional<Decomposition> decomposition;  ///< vine estimators only
    nlohmann::json model;
    double fit_seconds = 0.0;
    bool ok() const { return status == "ok"; }
};

struct ReportRow {
    std::string scenario, primary_estimator, method, role;
    double mean_heldout_nll = 0.0;
    double gap_vs_primary = 0.0;
    double positive_window_fraction = 0.0;
    std::string status = "ok";
};

struct OrderRow {
    int t = 0;
    std::string truth;
    OrderLabel truth_order = OrderLabel::None;
    bool detected = false;
    OrderLabel assigned = OrderLabel::None;
};

struct RunResult {
    RunConfig config;
    std::vector<std::string> labels;
    std::vector<MethodResult> methods;  ///< primary first
    std::optional<MethodResult> truncated;
    std::vector<ReportRow> rows;
    std::vector<OrderRow> order;  ///< agent_episodes only

    const MethodResult& primary() const { return methods.front(); }
    const MethodResult* find(Estimator e) const;
    /// Mean gap (method NLL minus primary NLL) over windows.
    double gap(Estimator e) const;
};

/// Fits every configured estimator on `pseudo.train`, scores on
/// `pseudo.heldout`. Estimator failures become status rows.
RunResult run_pipeline(const RunConfig& cfg, const std::vector<std::string>& labels, const PseudoObsSequence& pseudo);

/// Generates the scenario, builds pseudo-observations and runs the pipeline.
RunResult run_scenario(const RunConfig& cfg);

/// Writes report.csv, decomposition_<key>.csv, order_assignment.csv (agent),
/// models.json, config.json and timing.json into `dir`.
void write_run(const std::filesystem::path& dir, const RunResult& r);

// ---------------------------------------------------------------------------
// Runtime scaling
// ---------------------------------------------------------------------------

struct RuntimeRow {
    int d = 0, T = 0;
    std::string variant;
    long edge_fits = 0;
    double compression = 1.0;
    double total_time_s = 0.0;
    double time_per_window_s = 0.0;
};

/// Edge-fit counts: windowed T d(d-1)/2, joint d(d-1)/2.
long windowed_edge_fits(int d, int T);
long joint_edge_fits(int d);

/// Times windowed, DVC-switch and DVC-smooth fits on equicorrelated Gaussian
/// windows (rows per window `n`), averaged over `repeats`, single-threaded.
/// With repeats = 0 only the analytic columns are filled.
std::vector<RuntimeRow> runtime_table(const std::vector<int>& d_list, const std::vector<int>& T_list, int repeats,
                                      int n = 200, std::uint64_t seed = kBenchmarkSeed);

}  // namespace dvc
