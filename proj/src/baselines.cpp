#include "dvc/baselines.hpp"

#include "dvc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dvc {

namespace {

constexpr double kMaxAbsCorr = 0.999999;

Eigen::MatrixXd score_correlation(const Eigen::MatrixXd& x) {
    const Eigen::MatrixXd c = x.rowwise() - x.colwise().mean();
    const Eigen::VectorXd sd = (c.colwise().squaredNorm()).cwiseSqrt().transpose();
    Eigen::MatrixXd r = c.transpose() * c;
    for (Eigen::Index i = 0; i < r.rows(); ++i)
        for (Eigen::Index j = 0; j < r.cols(); ++j)
            r(i, j) = (sd(i) > 0 && sd(j) > 0) ? r(i, j) / (sd(i) * sd(j)) : (i == j ? 1.0 : 0.0);
    r.diagonal().setOnes();
    return r;
}

struct GaussianScorer {
    Eigen::LLT<Eigen::MatrixXd> llt;
    double half_logdet = 0.0;
    explicit GaussianScorer(const CorrelationMatrix& R) : llt(R.matrix()) {
        if (llt.info() != Eigen::Success) throw NumericalError("Gaussian copula: correlation not positive definite");
        half_logdet = llt.matrixLLT().diagonal().array().log().sum();
    }
    double operator()(const Eigen::VectorXd& x) const {
        const Eigen::VectorXd s = llt.matrixL().solve(x);
        return -half_logdet - 0.5 * (s.squaredNorm() - x.squaredNorm());
    }
};

}  // namespace

Eigen::MatrixXd normal_scores(const Eigen::MatrixXd& u) {
    Eigen::MatrixXd x(u.rows(), u.cols());
    for (Eigen::Index c = 0; c < u.cols(); ++c)
        for (Eigen::Index r = 0; r < u.rows(); ++r) {
            const double v = u(r, c);
            if (!(v > 0.0 && v < 1.0)) throw DomainError("normal_scores: inputs must lie in (0, 1)");
            x(r, c) = normal_quantile(v);
        }
    return x;
}

CorrelationMatrix fit_gaussian_copula(const Eigen::MatrixXd& u) {
    if (u.rows() < 2) throw DegenerateDataError("fit_gaussian_copula: needs at least 2 rows");
    return nearest_pd_correlation(score_correlation(normal_scores(u)));
}

double gaussian_copula_logdensity(const CorrelationMatrix& R, std::span<const double> u) {
    if (static_cast<int>(u.size()) != R.dim()) throw DomainError("gaussian_copula_logdensity: dimension mismatch");
    Eigen::VectorXd x(R.dim());
    for (int i = 0; i < R.dim(); ++i) {
        if (!(u[i] > 0.0 && u[i] < 1.0)) throw DomainError("gaussian_copula_logdensity: inputs must lie in (0, 1)");
        x(i) = normal_quantile(u[i]);
    }
    return GaussianScorer(R)(x);
}

Eigen::VectorXd gaussian_copula_logdensities(const CorrelationMatrix& R, const Eigen::MatrixXd& u) {
    if (u.cols() != R.dim()) throw DomainError("gaussian_copula_logdensities: dimension mismatch");
    const GaussianScorer score(R);
    const Eigen::MatrixXd x = normal_scores(u);
    Eigen::VectorXd out(u.rows());
    for (Eigen::Index r = 0; r < u.rows(); ++r) out(r) = score(x.row(r).transpose());
    return out;
}

GaussianCopulaModel fit_gaussian_copula_windows(const WindowSeq& train) {
    GaussianCopulaModel m;
    for (const auto& w : train) m.windows.push_back(fit_gaussian_copula(w));
    return m;
}

KalmanPath kalman_random_walk(std::span<const double> y, std::span<const double> r, double q, double prior_mean,
                              double prior_var) {
    if (y.size() != r.size()) throw DomainError("kalman: observation/variance length mismatch");
    if (q < 0.0) throw ConfigError("kalman: process variance must be non-negative");
    KalmanPath p;
    double m = prior_mean, v = prior_var;
    for (std::size_t t = 0; t < y.size(); ++t) {
        if (t > 0) v += q;
        const double gain = v / (v + r[t]);
        m += gain * (y[t] - m);
        v = v * r[t] / (v + r[t]);  // avoids 1 - gain cancelling under a diffuse prior
        p.mean.push_back(m);
        p.var.push_back(v);
    }
    return p;
}

FisherZSSM fit_gaussian_ssm(const WindowSeq& train, const WindowSeq& heldout, const std::vector<double>& q_grid) {
    const std::size_t T = train.size();
    if (T < 2) throw DomainError("fit_gaussian_ssm: needs at least 2 windows");
    if (heldout.size() != T) throw DomainError("fit_gaussian_ssm: held-out window count mismatch");
    if (q_grid.empty()) throw ConfigError("fit_gaussian_ssm: empty q grid");
    const auto d = train.front().cols();
    FisherZSSM out;
    std::vector<Eigen::MatrixXd> r(T);
    for (std::size_t t = 0; t < T; ++t) {
        if (train[t].rows() <= 3) throw ConfigError("fit_gaussian_ssm: every window needs more than 3 rows");
        if (train[t].cols() != d || heldout[t].cols() != d) throw DomainError("fit_gaussian_ssm: dimension mismatch");
        out.obs_var.push_back(1.0 / static_cast<double>(train[t].rows() - 3));
        r[t] = score_correlation(normal_scores(train[t]));
    }
    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) pairs.emplace_back(i, j);

    auto filter_all = [&](double q) {
        Eigen::MatrixXd z(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(pairs.size()));
        std::vector<double> y(T);
        for (std::size_t p = 0; p < pairs.size(); ++p) {
            for (std::size_t t = 0; t < T; ++t)
                y[t] = fisher_z(std::clamp(r[t](pairs[p].first, pairs[p].second), -kMaxAbsCorr, kMaxAbsCorr));
            const KalmanPath k = kalman_random_walk(y, out.obs_var, q);
            for (std::size_t t = 0; t < T; ++t) z(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(p)) = k.mean[t];
        }
        return z;
    };
    auto assemble = [&](const Eigen::MatrixXd& z) {
        std::vector<CorrelationMatrix> w;
        for (std::size_t t = 0; t < T; ++t) {
            Eigen::MatrixXd R = Eigen::MatrixXd::Identity(d, d);
            for (std::size_t p = 0; p < pairs.size(); ++p)
                R(pairs[p].first, pairs[p].second) = R(pairs[p].second, pairs[p].first) =
                    fisher_z_inverse(z(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(p)));
            w.push_back(nearest_pd_correlation(R));
        }
        return w;
    };

    double best = std::numeric_limits<double>::infinity();
    for (double q : q_grid) {
        const Eigen::MatrixXd z = filter_all(q);
        auto w = assemble(z);
        double nll = 0.0;
        std::size_t n = 0;
        for (std::size_t t = 0; t < T; ++t) {
            if (heldout[t].rows() == 0) continue;
            nll -= gaussian_copula_logdensities(w[t], heldout[t]).sum();
            n += static_cast<std::size_t>(heldout[t].rows());
        }
        const double score = n ? nll / static_cast<double>(n) : 0.0;
        out.q_scores.push_back(score);
        if (score < best) {
            best = score;
            out.q = q;
            out.z = z;
            out.windows = std::move(w);
        }
    }
    return out;
}

}  // namespace dvc
