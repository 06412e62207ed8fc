#include "dvc/evaldiag.hpp"

#include "dvc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dvc {

namespace {

constexpr Eigen::Index kMinWindowRows = 10;
// Separate stream for splits and jitter so they never reuse generator draws.
constexpr std::uint64_t kSplitStream = 0x5bd1e995ULL;
constexpr std::uint64_t kJitterStream = 0x9e3779b9ULL;
constexpr std::uint64_t kNullStream = 0x2545f491ULL;

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x, const std::vector<Eigen::Index>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
    return out;
}

Decomposition from_levels(const std::vector<Eigen::MatrixXd>& levels) {
    Decomposition d;
    for (const auto& L : levels) {
        if (L.rows() == 0) {
            const double nan = std::numeric_limits<double>::quiet_NaN();
            d.s_pair.push_back(nan), d.delta_ho.push_back(nan), d.s_total.push_back(nan);
            continue;
        }
        const double n = static_cast<double>(L.rows());
        const double pair = L.col(0).sum() / n;
        const double higher = L.cols() > 1 ? L.rightCols(L.cols() - 1).sum() / n : 0.0;
        d.s_pair.push_back(pair);
        d.delta_ho.push_back(higher);
        d.s_total.push_back(pair + higher);
    }
    return d;
}

FittedVine full(const FittedVine& m) {
    FittedVine f = m;
    f.truncation_level = m.structure.levels();
    return f;
}

}  // namespace

Eigen::MatrixXd rank_pseudo_obs(const Eigen::MatrixXd& x) {
    const Eigen::Index n = x.rows();
    if (n == 0) throw DegenerateDataError("rank_pseudo_obs: empty matrix");
    Eigen::MatrixXd u(n, x.cols());
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        std::iota(idx.begin(), idx.end(), Eigen::Index{0});
        std::sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return x(a, c) < x(b, c); });
        for (Eigen::Index r = 0; r < n; ++r) {
            if (!std::isfinite(x(idx[r], c))) throw DegenerateDataError("rank_pseudo_obs: non-finite value");
            if (r > 0 && x(idx[r], c) == x(idx[r - 1], c))
                throw DegenerateDataError("rank_pseudo_obs: tied values in column " + std::to_string(c) +
                                          " (use jitter)");
            u(idx[r], c) = static_cast<double>(r + 1) / static_cast<double>(n + 1);
        }
    }
    return u;
}

std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>> split_rows(Eigen::Index n, double train_frac,
                                                                           SplitMode mode, std::uint64_t seed) {
    if (!(train_frac > 0.0 && train_frac < 1.0)) throw ConfigError("train_frac must lie in (0, 1)");
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    if (mode == SplitMode::Random) {
        SeededRng rng(seed ^ kSplitStream);
        rng.shuffle(idx);
    }
    const auto n_train = static_cast<std::size_t>(std::ceil(train_frac * static_cast<double>(n) - 1e-9));
    std::vector<Eigen::Index> train(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<Eigen::Index> test(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {std::move(train), std::move(test)};
}

PseudoObsSequence make_pseudo_obs(const WindowedDataset& data, double train_frac, std::uint64_t seed, double jitter,
                                  SplitMode mode) {
    if (data.windows.empty()) throw DegenerateDataError("make_pseudo_obs: no windows");
    if (jitter < 0.0) throw ConfigError("jitter must be non-negative");
    PseudoObsSequence p;
    p.seed = seed;
    p.jitter = jitter;
    for (std::size_t t = 0; t < data.windows.size(); ++t) {
        Eigen::MatrixXd x = data.windows[t];
        if (x.rows() < kMinWindowRows)
            throw DegenerateDataError("make_pseudo_obs: window " + std::to_string(t) + " has fewer than 10 rows");
        const std::uint64_t cs = child_seed(seed, static_cast<int>(t));
        if (jitter > 0.0) {
            SeededRng rng(cs ^ kJitterStream);
            for (Eigen::Index c = 0; c < x.cols(); ++c)
                for (Eigen::Index r = 0; r < x.rows(); ++r) x(r, c) += jitter * rng.normal();
        }
        auto [train, test] = split_rows(x.rows(), train_frac, mode, cs);
        if (train.size() < 2 || test.size() < 2)
            throw DegenerateDataError("make_pseudo_obs: split leaves fewer than 2 rows on one side");
        p.train.push_back(rank_pseudo_obs(take_rows(x, train)));
        p.heldout.push_back(rank_pseudo_obs(take_rows(x, test)));
        p.train_rows.push_back(std::move(train));
        p.heldout_rows.push_back(std::move(test));
    }
    return p;
}

PseudoObsSequence make_pseudo_obs(const WindowedDataset& data, double jitter) {
    return make_pseudo_obs(data, data.train_frac, data.seed, jitter, data.split);
}

Decomposition decompose(const FittedVine& model, const WindowSeq& heldout) {
    const FittedVine f = full(model);
    const int T = f.windows();
    if (T > 1 && static_cast<int>(heldout.size()) != T)
        throw DomainError("decompose: model has " + std::to_string(T) + " windows, held-out has " +
                          std::to_string(heldout.size()));
    std::vector<Eigen::MatrixXd> levels;
    for (std::size_t t = 0; t < heldout.size(); ++t)
        levels.push_back(level_log_densities(f, heldout[t], T > 1 ? static_cast<int>(t) : 0));
    return from_levels(levels);
}

Decomposition decompose(const WindowedModel& model, const WindowSeq& heldout) {
    if (model.windows.size() != heldout.size()) throw DomainError("decompose: window count mismatch");
    std::vector<Eigen::MatrixXd> levels;
    for (std::size_t t = 0; t < heldout.size(); ++t)
        levels.push_back(model.windows[t] ? level_log_densities(full(*model.windows[t]), heldout[t], 0)
                                          : Eigen::MatrixXd());
    return from_levels(levels);
}

std::vector<double> heldout_nll(const Decomposition& d) {
    std::vector<double> out;
    for (double s : d.s_total) out.push_back(-s);
    return out;
}

std::vector<double> heldout_nll_truncated(const Decomposition& d) {
    std::vector<double> out;
    for (double s : d.s_pair) out.push_back(-s);
    return out;
}

std::vector<double> nll_gap(const std::vector<double>& baseline, const std::vector<double>& model) {
    if (baseline.size() != model.size())
        throw DomainError("nll_gap: models were not scored on the same held-out windows");
    std::vector<double> g(baseline.size());
    for (std::size_t t = 0; t < g.size(); ++t) g[t] = baseline[t] - model[t];
    return g;
}

double finite_mean(const std::vector<double>& x) {
    double s = 0.0;
    int n = 0;
    for (double v : x)
        if (std::isfinite(v)) s += v, ++n;
    return n ? s / n : std::numeric_limits<double>::quiet_NaN();
}

double positive_fraction(const std::vector<double>& x) {
    int pos = 0, n = 0;
    for (double v : x)
        if (std::isfinite(v)) n++, pos += v > 0.0;
    return n ? static_cast<double>(pos) / n : std::numeric_limits<double>::quiet_NaN();
}

ReferenceStats reference_stats(const std::vector<double>& x, const std::vector<int>& reference) {
    std::vector<double> v;
    for (int t : reference) {
        if (t < 0 || static_cast<std::size_t>(t) >= x.size()) throw DomainError("reference window out of range");
        if (std::isfinite(x[static_cast<std::size_t>(t)])) v.push_back(x[static_cast<std::size_t>(t)]);
    }
    if (v.size() < 2) throw DomainError("need at least 2 independence reference windows");
    ReferenceStats r;
    r.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double a : v) ss += (a - r.mean) * (a - r.mean);
    r.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    return r;
}

std::vector<bool> detect_episodes(const std::vector<double>& nll, const std::vector<int>& independence_windows) {
    const auto r = reference_stats(nll, independence_windows);
    const double thr = r.mean - 2.0 * std::max(r.sd, 0.01);
    std::vector<bool> out;
    for (double v : nll) out.push_back(v < thr);
    return out;
}

std::string order_label_name(OrderLabel l) {
    switch (l) {
        case OrderLabel::None: return "none";
        case OrderLabel::Pairwise: return "pairwise";
        case OrderLabel::Higher: return "higher";
    }
    return "none";
}

std::vector<OrderLabel> assign_order(const Decomposition& d, const std::vector<int>& independence_windows) {
    const auto tot = reference_stats(d.s_total, independence_windows);
    const auto ho = reference_stats(d.delta_ho, independence_windows);
    const double thr_tot = tot.mean + 2.0 * std::max(tot.sd, 0.01);
    const double thr_ho = ho.mean + 2.0 * std::max(ho.sd, 0.005);
    std::vector<OrderLabel> out;
    for (std::size_t t = 0; t < d.size(); ++t) {
        if (!(d.s_total[t] > thr_tot))
            out.push_back(OrderLabel::None);
        else
            out.push_back(d.delta_ho[t] > thr_ho ? OrderLabel::Higher : OrderLabel::Pairwise);
    }
    return out;
}

OrderLabel truth_order(const std::string& regime) {
    if (regime == "independence") return OrderLabel::None;
    if (regime == "pairwise") return OrderLabel::Pairwise;
    if (regime == "higher" || regime == "mixed") return OrderLabel::Higher;
    throw ConfigError("truth_order: unknown regime '" + regime + "'");
}

PseudoObsSequence decorrelated_null(const PseudoObsSequence& p, std::uint64_t seed) {
    PseudoObsSequence out = p;
    auto permute = [](Eigen::MatrixXd& m, SeededRng& rng) {
        std::vector<Eigen::Index> idx(static_cast<std::size_t>(m.rows()));
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            std::iota(idx.begin(), idx.end(), Eigen::Index{0});
            rng.shuffle(idx);
            const Eigen::VectorXd col = m.col(c);
            for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = col(idx[static_cast<std::size_t>(r)]);
        }
    };
    for (std::size_t t = 0; t < out.windows(); ++t) {
        SeededRng rng(child_seed(seed, static_cast<int>(t)) ^ kNullStream);
        permute(out.train[t], rng);
        permute(out.heldout[t], rng);
    }
    return out;
}

double auroc(const std::vector<double>& scores, const std::vector<bool>& positive) {
    if (scores.size() != positive.size()) throw DomainError("auroc: length mismatch");
    double wins = 0.0;
    long np = 0, nn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!positive[i]) continue;
        ++np;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (positive[j]) continue;
            wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
        }
    }
    for (bool b : positive) nn += !b;
    if (np == 0 || nn == 0) throw DomainError("auroc: need both classes");
    return wins / (static_cast<double>(np) * static_cast<double>(nn));
}

int binomial_upper(int n, double p, double alpha) {
    if (n < 0 || !(p >= 0.0 && p <= 1.0)) throw DomainError("binomial_upper: bad arguments");
    double cdf = 0.0;
    for (int k = 0; k <= n; ++k) {
        const double lp = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
                          (k ? k * std::log(p) : 0.0) + (n - k ? (n - k) * std::log1p(-p) : 0.0);
        cdf += std::exp(lp);
        if (1.0 - cdf <= alpha) return k;
    }
    return n;
}

}  // namespace dvc
