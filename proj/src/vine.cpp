#include "dvc/vine.hpp"

#include "dvc/errors.hpp"
#include "dvc/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dvc {

int edge_count(int d) {
    if (d < 2) throw DomainError("edge_count: dimension must be >= 2");
    return d * (d - 1) / 2;
}

CVineStructure::CVineStructure(std::vector<int> root_order) : order(std::move(root_order)) {
    const int d = dim();
    if (d < 2) throw DomainError("C-vine needs at least two variables");
    std::vector<int> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < d; ++i)
        if (sorted[i] != i) throw DomainError("root order must be a permutation of 0..d-1");
}

int CVineStructure::edge_index(int level, int position) const {
    const int d = dim();
    if (level < 0 || level >= d - 1 || position <= level || position >= d)
        throw DomainError("edge_index: out of range");
    // levels before `level` hold (d-1) + (d-2) + ... + (d-level) edges
    return level * (d - 1) - level * (level - 1) / 2 + (position - level - 1);
}

std::vector<CVineStructure::Edge> CVineStructure::edges() const {
    std::vector<Edge> out;
    const int d = dim();
    for (int l = 0; l < d - 1; ++l)
        for (int j = l + 1; j < d; ++j)
            out.push_back({l, order[l], order[j], std::vector<int>(order.begin(), order.begin() + l)});
    return out;
}

void CVineStructure::validate() const {
    const int d = dim();
    CVineStructure check(order);  // permutation check
    const auto es = edges();
    if (static_cast<int>(es.size()) != dvc::edge_count(d)) throw DomainError("structure: wrong edge count");
    std::vector<std::vector<int>> seen(d, std::vector<int>(d, 0));
    for (std::size_t k = 0; k < es.size(); ++k) {
        const auto& e = es[k];
        if (static_cast<int>(e.conditioning.size()) != e.level) throw DomainError("structure: conditioning size");
        if (edge_index(e.level, static_cast<int>(std::find(order.begin(), order.end(), e.leaf_var) - order.begin())) !=
            static_cast<int>(k))
            throw DomainError("structure: edge index mismatch");
        for (int c : e.conditioning)
            if (c == e.root_var || c == e.leaf_var) throw DomainError("structure: conditioning overlaps edge");
        const int a = std::min(e.root_var, e.leaf_var), b = std::max(e.root_var, e.leaf_var);
        if (a == b || ++seen[a][b] > 1) throw DomainError("structure: pair repeated");
    }
    for (int l = 0; l < d - 1; ++l) {
        const auto n = std::count_if(es.begin(), es.end(), [&](const Edge& e) { return e.level == l; });
        if (n != d - 1 - l) throw DomainError("structure: tree size");
    }
}

int FittedVine::windows() const {
    std::size_t w = 1;
    for (const auto& p : states) w = std::max(w, p.size());
    return static_cast<int>(w);
}

void propagate(const EdgeState& s, std::span<const double> root, std::span<double> leaf) {
    if (s.family == Family::Independence) return;
    PairSample ps(root, leaf);
    ps.h_values(s, leaf);
}

namespace {

void check_unit(const Eigen::MatrixXd& u) {
    for (Eigen::Index c = 0; c < u.cols(); ++c)
        for (Eigen::Index r = 0; r < u.rows(); ++r) {
            const double x = u(r, c);
            if (!(x > 0.0 && x < 1.0)) throw DomainError("vine evaluation: inputs must lie in (0, 1)");
        }
}

// Columns reordered to root-order positions.
Eigen::MatrixXd by_position(const CVineStructure& st, const Eigen::MatrixXd& u) {
    if (u.cols() != st.dim()) throw DomainError("vine: column count does not match dimension");
    Eigen::MatrixXd v(u.rows(), u.cols());
    for (int j = 0; j < st.dim(); ++j) v.col(j) = u.col(st.order[j]);
    return v;
}

std::span<double> col_span(Eigen::MatrixXd& m, Eigen::Index c) { return {m.col(c).data(), static_cast<std::size_t>(m.rows())}; }
std::span<const double> col_span(const Eigen::MatrixXd& m, Eigen::Index c) {
    return {m.col(c).data(), static_cast<std::size_t>(m.rows())};
}

}  // namespace

Eigen::MatrixXd level_log_densities(const FittedVine& model, const Eigen::MatrixXd& u, int t) {
    check_unit(u);
    const auto& st = model.structure;
    const int d = st.dim();
    const Eigen::Index n = u.rows();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, d - 1);
    Eigen::MatrixXd v = by_position(st, u);
    std::vector<double> ld(static_cast<std::size_t>(n));
    const int levels = std::min(model.truncation_level, d - 1);
    for (int l = 0; l < levels; ++l) {
        for (int j = l + 1; j < d; ++j) {
            const EdgeState& s = model.state(st.edge_index(l, j), t);
            if (s.family == Family::Independence) continue;
            PairSample ps(col_span(v, l), col_span(v, j));
            ps.log_densities(s, ld);
            for (Eigen::Index r = 0; r < n; ++r) out(r, l) += ld[static_cast<std::size_t>(r)];
            if (l + 1 < levels) ps.h_values(s, col_span(v, j));
        }
    }
    return out;
}

double log_density(const FittedVine& model, std::span<const double> row, int t) {
    Eigen::MatrixXd u(1, static_cast<Eigen::Index>(row.size()));
    for (std::size_t i = 0; i < row.size(); ++i) u(0, static_cast<Eigen::Index>(i)) = row[i];
    return level_log_densities(model, u, t).sum();
}

double mean_log_density(const FittedVine& model, const Eigen::MatrixXd& u, int t) {
    if (u.rows() == 0) throw DomainError("mean_log_density: empty sample");
    return level_log_densities(model, u, t).sum() / static_cast<double>(u.rows());
}

FittedVine truncate(const FittedVine& model, int level) {
    if (level < 1) throw DomainError("truncate: level must be >= 1");
    FittedVine out = model;
    out.truncation_level = std::min(level, model.structure.levels());
    return out;
}

void check_fit_matrix(const Eigen::MatrixXd& u, const char* what) {
    if (u.rows() < static_cast<Eigen::Index>(kMinFitRows))
        throw DegenerateDataError(std::string(what) + ": needs at least 8 rows");
    for (Eigen::Index c = 0; c < u.cols(); ++c)
        if ((u.col(c).array() == u(0, c)).all())
            throw DegenerateDataError(std::string(what) + ": constant column " + std::to_string(c));
}

int select_root_windowed(const Eigen::MatrixXd& u) {
    check_fit_matrix(u, "select_root_windowed");
    const Eigen::VectorXd sums = kendall_matrix(u).cwiseAbs().rowwise().sum();
    int best = 0;
    for (int r = 1; r < sums.size(); ++r)
        if (sums(r) > sums(best)) best = r;
    return best;
}

std::vector<int> greedy_order_from_tau(const Eigen::MatrixXd& abs_tau) {
    const int d = static_cast<int>(abs_tau.rows());
    std::vector<int> order;
    std::vector<bool> used(d, false);
    for (int step = 0; step < d; ++step) {
        int best = -1;
        double best_sum = -1.0;
        for (int r = 0; r < d; ++r) {
            if (used[r]) continue;
            double sum = 0.0;
            for (int c = 0; c < d; ++c)
                if (c != r && !used[c]) sum += abs_tau(r, c);
            // the first root uses the full row sum, as all variables are unused
            if (sum > best_sum) best_sum = sum, best = r;
        }
        used[best] = true;
        order.push_back(best);
    }
    return order;
}

std::vector<int> select_order_pooled(const Eigen::MatrixXd& u) {
    check_fit_matrix(u, "select_order_pooled");
    return greedy_order_from_tau(kendall_matrix(u).cwiseAbs());
}

FittedVine fit_static(const Eigen::MatrixXd& u, const CVineStructure& structure, std::span<const Family> candidates,
                      const StaticFitOptions& opts) {
    structure.validate();
    check_fit_matrix(u, "fit_static");
    check_unit(u);
    if (candidates.empty()) throw ConfigError("fit_static: empty candidate list");
    const int d = structure.dim();
    FittedVine model;
    model.structure = structure;
    model.truncation_level = d - 1;
    model.estimator = "static";
    model.states.assign(static_cast<std::size_t>(structure.edge_count()), {EdgeState::independence()});
    Eigen::MatrixXd v = by_position(structure, u);

    for (int l = 0; l < d - 1; ++l) {
        const std::size_t m = static_cast<std::size_t>(d - 1 - l);
        std::vector<std::string> logs(m);
        std::vector<EdgeState> fitted(m);
        parallel_for(m, opts.jobs, [&](std::size_t k) {
            const int j = l + 1 + static_cast<int>(k);
            PairSample ps(col_span(std::as_const(v), l), col_span(std::as_const(v), j));
            try {
                fitted[k] = select_family_aic(candidates, ps, opts.nu_grid).best.state;
            } catch (const Error& e) {
                fitted[k] = EdgeState::independence();
                logs[k] = "edge (" + std::to_string(l) + "," + std::to_string(j) + "): " + e.what() +
                          "; using independence";
            }
            ps.h_values(fitted[k], col_span(v, j));
        });
        for (std::size_t k = 0; k < m; ++k) {
            model.states[static_cast<std::size_t>(structure.edge_index(l, l + 1 + static_cast<int>(k)))] = {fitted[k]};
            if (!logs[k].empty()) model.fit_log.push_back(logs[k]);
        }
    }
    return model;
}

Eigen::MatrixXd sample_vine(const FittedVine& model, std::size_t n, SeededRng& rng, int t) {
    const auto& st = model.structure;
    const int d = st.dim();
    if (n == 0) throw DomainError("sample_vine: n must be >= 1");
    Eigen::MatrixXd out(static_cast<Eigen::Index>(n), d);
    std::vector<double> w(static_cast<std::size_t>(d));
    const int levels = std::min(model.truncation_level, d - 1);
    for (std::size_t i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) w[j] = rng.uniform();
        for (int j = 0; j < d; ++j) {
            double x = w[j];
            for (int l = std::min(j - 1, levels - 1); l >= 0; --l) x = h_inverse(model.state(st.edge_index(l, j), t), x, w[l]);
            out(static_cast<Eigen::Index>(i), st.order[j]) = x;
        }
    }
    return out;
}

nlohmann::json to_json(const EdgeState& s) {
    nlohmann::json j = {{"family", std::string(family_name(s.family))}};
    if (s.family != Family::Independence) j["theta"] = s.theta;
    if (s.family == Family::StudentT) j["nu"] = s.nu;
    return j;
}

EdgeState edge_state_from_json(const nlohmann::json& j) {
    EdgeState s;
    s.family = family_from_name(j.at("family").get<std::string>());
    if (s.family != Family::Independence) s.theta = j.at("theta").get<double>();
    if (s.family == Family::StudentT) s.nu = j.at("nu").get<double>();
    s.validate();
    return s;
}

nlohmann::json to_json(const FittedVine& model) {
    nlohmann::json j;
    j["schema"] = "dvc-vine/1";
    j["estimator"] = model.estimator;
    j["dim"] = model.structure.dim();
    j["root_order"] = model.structure.order;
    j["truncation_level"] = model.truncation_level;
    j["windows"] = model.windows();
    nlohmann::json edges = nlohmann::json::array();
    const auto es = model.structure.edges();
    for (std::size_t k = 0; k < es.size(); ++k) {
        nlohmann::json e = {{"tree", es[k].level + 1},
                            {"root", es[k].root_var},
                            {"leaf", es[k].leaf_var},
                            {"conditioning", es[k].conditioning}};
        nlohmann::json path = nlohmann::json::array();
        for (const auto& s : model.states[k]) path.push_back(to_json(s));
        e["states"] = std::move(path);
        edges.push_back(std::move(e));
    }
    j["edges"] = std::move(edges);
    j["fit_log"] = model.fit_log;
    j["meta"] = model.meta;
    return j;
}

FittedVine vine_from_json(const nlohmann::json& j) {
    if (j.value("schema", "") != "dvc-vine/1") throw ConfigError("vine JSON: unsupported schema");
    FittedVine m;
    m.structure = CVineStructure(j.at("root_order").get<std::vector<int>>());
    m.truncation_level = j.at("truncation_level").get<int>();
    m.estimator = j.value("estimator", "");
    m.fit_log = j.value("fit_log", std::vector<std::string>{});
    m.meta = j.value("meta", nlohmann::json::object());
    const auto& edges = j.at("edges");
    if (static_cast<int>(edges.size()) != m.structure.edge_count()) throw ConfigError("vine JSON: edge count mismatch");
    for (const auto& e : edges) {
        std::vector<EdgeState> path;
        for (const auto& s : e.at("states")) path.push_back(edge_state_from_json(s));
        if (path.empty()) throw ConfigError("vine JSON: empty state path");
        m.states.push_back(std::move(path));
    }
    return m;
}

}  // namespace dvc
