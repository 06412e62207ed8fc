#pragma once

#include "dvc/paircopula.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <span>
#include <string>
#include <vector>

namespace dvc {

/// d(d-1)/2. Throws DomainError for d < 2.
int edge_count(int d);

/// C-vine fully determined by its root order. Level l (0-based) is tree l+1;
/// its root is order[l] and its edges join order[l] with every order[j], j > l,
/// conditioned on order[0..l-1].
struct CVineStructure {
    struct Edge {
        int level;
        int root_var;
        int leaf_var;
        std::vector<int> conditioning;
    };

    std::vector<int> order;

    CVineStructure() = default;
    /// Throws DomainError unless `order` is a permutation of 0..d-1 with d >= 2.
    explicit CVineStructure(std::vector<int> root_order);

    int dim() const { return static_cast<int>(order.size()); }
    int levels() const { return dim() - 1; }
    int edge_count() const { return dvc::edge_count(dim()); }
    /// Flat index of edge (level, leaf position j > level).
    int edge_index(int level, int position) const;
    /// Edges in flat-index order.
    std::vector<Edge> edges() const;
    /// Checks the tree/edge-count/conditioning invariants; throws on violation.
    void validate() const;
};

/// A C-vine with per-edge state paths. A path of length 1 is static; longer
/// paths hold one state per window.
struct FittedVine {
    CVineStructure structure;
    std::vector<std::vector<EdgeState>> states;  ///< indexed by flat edge index
    int truncation_level = 1;                    ///< number of trees evaluated
    std::vector<std::string> fit_log;
    std::string estimator;
    nlohmann::json meta = nlohmann::json::object();  ///< estimator-specific details

    const EdgeState& state(int edge, int t) const {
        const auto& path = states[static_cast<std::size_t>(edge)];
        return path.size() == 1 ? path.front() : path[static_cast<std::size_t>(t)];
    }
    /// Longest state path (1 for a static vine).
    int windows() const;
    bool is_temporal() const { return windows() > 1; }
};

/// Per-row, per-level log-density contributions at window t (n x (d-1)).
/// Levels at or beyond the model's truncation level are zero. Inputs are
/// checked to lie in (0, 1); DomainError otherwise.
Eigen::MatrixXd level_log_densities(const FittedVine& model, const Eigen::MatrixXd& u, int t = 0);

/// log c(u) for one row.
double log_density(const FittedVine& model, std::span<const double> row, int t = 0);

/// Mean per-row log-density of `u` at window t.
double mean_log_density(const FittedVine& model, const Eigen::MatrixXd& u, int t = 0);

/// Matched truncation: same tree-1 states, higher trees dropped.
FittedVine truncate(const FittedVine& model, int level = 1);

/// Root maximizing the |Kendall tau| row sum; ties to the lowest index.
/// Throws DegenerateDataError for fewer than 8 rows or a constant column.
int select_root_windowed(const Eigen::MatrixXd& u);

/// Greedy order on pooled |Kendall tau|: first the row-sum maximizer, then
/// repeatedly the remaining variable with the largest row sum over the
/// remaining variables. Ties to the lowest index.
std::vector<int> select_order_pooled(const Eigen::MatrixXd& u);
std::vector<int> greedy_order_from_tau(const Eigen::MatrixXd& abs_tau);

/// h-propagation of one leaf column through an edge: leaf <- h(leaf | root).
void propagate(const EdgeState& s, std::span<const double> root, std::span<double> leaf);

struct StaticFitOptions {
    std::vector<double> nu_grid = kDefaultNuGrid;
    int jobs = 1;
};

/// Level-by-level AIC fit of a static C-vine. Edge failures fall back to
/// Independence and are logged.
FittedVine fit_static(const Eigen::MatrixXd& u, const CVineStructure& structure,
                      std::span<const Family> candidates, const StaticFitOptions& opts = {});

/// Draws n rows from the vine at window t by inverse h-functions.
Eigen::MatrixXd sample_vine(const FittedVine& model, std::size_t n, SeededRng& rng, int t = 0);

/// "dvc-vine/1" JSON document.
nlohmann::json to_json(const FittedVine& model);
FittedVine vine_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EdgeState& s);
EdgeState edge_state_from_json(const nlohmann::json& j);

/// Rejects data with < 8 rows or a constant column.
void check_fit_matrix(const Eigen::MatrixXd& u, const char* what);

}  // namespace dvc
