#pragma once

#include "dvc/benchgen.hpp"
#include "dvc/temporal.hpp"
#include "dvc/vine.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace dvc {

/// Per-window train and held-out pseudo-observations, ranked separately.
struct PseudoObsSequence {
    WindowSeq train;
    WindowSeq heldout;
    std::uint64_t seed = 0;
    double jitter = 0.0;
    std::vector<std::vector<Eigen::Index>> train_rows;  ///< source rows per window
    std::vector<std::vector<Eigen::Index>> heldout_rows;
    std::size_t windows() const { return train.size(); }
};

/// Column-wise r/(n+1). DegenerateDataError on tied values.
Eigen::MatrixXd rank_pseudo_obs(const Eigen::MatrixXd& x);

/// Rows to train (first ceil(train_frac * n) after a seeded shuffle, or the
/// leading block for a chronological split); the rest held out.
std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>> split_rows(Eigen::Index n, double train_frac,
                                                                           SplitMode mode, std::uint64_t seed);

/// Splits every window, optionally adds seeded Gaussian jitter of scale
/// `jitter` before ranking, and ranks each split on its own. Windows need at
/// least 10 rows.
PseudoObsSequence make_pseudo_obs(const WindowedDataset& data, double train_frac, std::uint64_t seed,
                                  double jitter = 0.0, SplitMode mode = SplitMode::Random);
/// Uses the dataset's own split mode and fraction.
PseudoObsSequence make_pseudo_obs(const WindowedDataset& data, double jitter = 0.0);

// ---------------------------------------------------------------------------
// Held-out scores
// ---------------------------------------------------------------------------

/// Per-window (S_total, S_pair, Delta_HO) as mean held-out log-density per
/// observation. S_total = S_pair + Delta_HO holds exactly.
struct Decomposition {
    std::vector<double> s_total, s_pair, delta_ho;
    std::size_t size() const { return s_total.size(); }
};

/// Temporal (or static) vine evaluated at each window.
Decomposition decompose(const FittedVine& model, const WindowSeq& heldout);
/// Per-window vines; missing windows give NaN.
Decomposition decompose(const WindowedModel& model, const WindowSeq& heldout);

/// Held-out NLL per observation for each window = -S_total.
std::vector<double> heldout_nll(const Decomposition& d);
/// NLL of the matched 1-truncated model = -S_pair.
std::vector<double> heldout_nll_truncated(const Decomposition& d);

/// Per-window gap NLL_baseline - NLL_model. DomainError on length mismatch.
std::vector<double> nll_gap(const std::vector<double>& baseline, const std::vector<double>& model);

/// Mean over finite entries (NaN when none).
double finite_mean(const std::vector<double>& x);
/// Fraction of finite entries strictly above zero.
double positive_fraction(const std::vector<double>& x);

// ---------------------------------------------------------------------------
// Episodes and order labels
// ---------------------------------------------------------------------------

struct ReferenceStats {
    double mean = 0.0;
    double sd = 0.0;
};
/// Mean and sample sd over the reference windows. DomainError for fewer than 2.
ReferenceStats reference_stats(const std::vector<double>& x, const std::vector<int>& reference);

/// Detected where NLL < ref mean - 2 max(sd, 0.01).
std::vector<bool> detect_episodes(const std::vector<double>& nll, const std::vector<int>& independence_windows);

enum class OrderLabel { None, Pairwise, Higher };
std::string order_label_name(OrderLabel l);

/// Interaction when S_total > ref mean + 2 max(sd, 0.01); higher-tree when
/// additionally Delta_HO > ref mean + 2 max(sd, 0.005).
std::vector<OrderLabel> assign_order(const Decomposition& d, const std::vector<int>& independence_windows);

/// Ground-truth regime to an order label; mixed collapses to higher.
OrderLabel truth_order(const std::string& regime);

// ---------------------------------------------------------------------------
// Null and readouts
// ---------------------------------------------------------------------------

/// Permutes each column independently within each split and window.
PseudoObsSequence decorrelated_null(const PseudoObsSequence& p, std::uint64_t seed);

/// Mann-Whitney AUROC of scores for positives vs negatives, ties count 1/2.
double auroc(const std::vector<double>& scores, const std::vector<bool>& positive);

/// Smallest k with P(Bin(n, p) > k) <= alpha.
int binomial_upper(int n, double p, double alpha);

}  // namespace dvc
