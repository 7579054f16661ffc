#pragma once

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "tdsurv/breslow.hpp"
#include "tdsurv/dataset.hpp"
#include "tdsurv/partial_likelihood.hpp"

namespace tdsurv {

struct CoxFit {
    Eigen::VectorXd beta;           // original covariate scale
    Eigen::MatrixXd information;    // observed information of the total
                                    // log partial likelihood at beta
    Eigen::VectorXd std_errors;     // NaN for dropped (constant) columns
    double neg_mean_loglik = 0.0;
    bool converged = false;
    int iterations = 0;
    bool identifiable = true;
    std::vector<int> dropped_columns;  // constant columns, coefficient 0
};

class LinearScorer : public RiskScorer {
public:
    explicit LinearScorer(Eigen::VectorXd beta) : beta_(std::move(beta)) {}
    double score(std::span<const double> covariates) const override {
        if (static_cast<Eigen::Index>(covariates.size()) != beta_.size())
            throw error("LinearScorer: covariate width mismatch");
        double s = 0.0;
        for (Eigen::Index j = 0; j < beta_.size(); ++j)
            s += beta_(j) * covariates[static_cast<std::size_t>(j)];
        return s;
    }
    const Eigen::VectorXd& beta() const { return beta_; }

private:
    Eigen::VectorXd beta_;
};

inline std::vector<double> linear_scores(std::span<const LongRecord> records,
                                         const Eigen::VectorXd& beta) {
    std::vector<double> s(records.size(), 0.0);
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& cov = records[i].covariates;
        if (static_cast<Eigen::Index>(cov.size()) != beta.size())
            throw error("linear_scores: covariate width mismatch");
        for (Eigen::Index j = 0; j < beta.size(); ++j)
            s[i] += beta(j) * cov[static_cast<std::size_t>(j)];
    }
    return s;
}

// Efron negative mean log partial likelihood with linear scores; shared with
// efron_loss so cross-module agreement is exact.
inline double loglik_at(std::span<const LongRecord> records,
                        const Eigen::VectorXd& beta) {
    const RiskSetIndex index = build_risk_sets(records);
    return efron_loss(linear_scores(records, beta), index);
}

namespace detail {

// Score vector and observed information of the mean log partial likelihood
// at linear predictor eta = Z beta, Efron tie handling, centered sums.
inline void efron_score_info(const Eigen::MatrixXd& z,
                             const Eigen::VectorXd& eta,
                             const RiskSetIndex& index,
                             Eigen::VectorXd& score, Eigen::MatrixXd& info) {
    const Eigen::Index d = z.cols();
    score = Eigen::VectorXd::Zero(d);
    info = Eigen::MatrixXd::Zero(d, d);

    Eigen::VectorXd s1_risk(d), s1_tied(d), s1_r(d);
    Eigen::MatrixXd s2_risk(d, d), s2_tied(d, d), s2_r(d, d);
    for (const auto& group : index.groups) {
        double gmax = -std::numeric_limits<double>::infinity();
        for (int i : group.at_risk) gmax = std::max(gmax, eta(i));

        double s0_risk = 0.0, s0_tied = 0.0;
        s1_risk.setZero();
        s1_tied.setZero();
        s2_risk.setZero();
        s2_tied.setZero();
        for (int i : group.at_risk) {
            const double w = std::exp(eta(i) - gmax);
            s0_risk += w;
            s1_risk.noalias() += w * z.row(i).transpose();
            s2_risk.noalias() += w * z.row(i).transpose() * z.row(i);
        }
        for (int i : group.tied) {
            const double w = std::exp(eta(i) - gmax);
            s0_tied += w;
            s1_tied.noalias() += w * z.row(i).transpose();
            s2_tied.noalias() += w * z.row(i).transpose() * z.row(i);
            score.noalias() += z.row(i).transpose();
        }
        const double ties = static_cast<double>(group.tied.size());
        for (std::size_t r = 0; r < group.tied.size(); ++r) {
            const double frac = static_cast<double>(r) / ties;
            const double s0_r = s0_risk - frac * s0_tied;
            s1_r = s1_risk - frac * s1_tied;
            s2_r = s2_risk - frac * s2_tied;
            const Eigen::VectorXd zbar = s1_r / s0_r;
            score.noalias() -= zbar;
            info.noalias() += s2_r / s0_r - zbar * zbar.transpose();
        }
    }
    const double n = static_cast<double>(index.n_subjects);
    score /= n;
    info /= n;
}

}  // namespace detail

// Newton-Raphson maximum Efron partial likelihood for the linear
// time-dependent Cox model. Covariates are standardized internally for
// conditioning; coefficients are mapped back to the original scale.
inline CoxFit fit_coxph(std::span<const LongRecord> records) {
    if (records.empty()) throw error("fit_coxph: no records");
    const Eigen::Index d =
        static_cast<Eigen::Index>(records[0].covariates.size());
    const Eigen::Index n = static_cast<Eigen::Index>(records.size());

    Eigen::MatrixXd z(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& cov = records[static_cast<std::size_t>(i)].covariates;
        if (static_cast<Eigen::Index>(cov.size()) != d)
            throw error("fit_coxph: ragged covariate rows");
        for (Eigen::Index j = 0; j < d; ++j)
            z(i, j) = cov[static_cast<std::size_t>(j)];
    }

    const Eigen::VectorXd mean = z.colwise().mean().transpose();
    Eigen::VectorXd sd(d);
    for (Eigen::Index j = 0; j < d; ++j)
        sd(j) = std::sqrt((z.col(j).array() - mean(j)).square().mean());

    CoxFit fit;
    fit.beta = Eigen::VectorXd::Zero(d);
    fit.information = Eigen::MatrixXd::Zero(d, d);
    fit.std_errors =
        Eigen::VectorXd::Constant(d, std::numeric_limits<double>::quiet_NaN());

    std::vector<Eigen::Index> active;
    for (Eigen::Index j = 0; j < d; ++j) {
        if (sd(j) > 1e-12) {
            active.push_back(j);
        } else {
            fit.dropped_columns.push_back(static_cast<int>(j));
            warn("fit_coxph: covariate column " + std::to_string(j + 1) +
                 " is constant; coefficient fixed at 0 (not identifiable)");
        }
    }
    const RiskSetIndex index = build_risk_sets(records);
    if (active.empty()) {
        fit.identifiable = false;
        fit.converged = true;
        fit.neg_mean_loglik = efron_loss(
            std::vector<double>(records.size(), 0.0), index);
        return fit;
    }

    const Eigen::Index da = static_cast<Eigen::Index>(active.size());
    Eigen::MatrixXd za(n, da);
    for (Eigen::Index k = 0; k < da; ++k)
        za.col(k) = (z.col(active[static_cast<std::size_t>(k)]).array() -
                     mean(active[static_cast<std::size_t>(k)])) /
                    sd(active[static_cast<std::size_t>(k)]);

    const auto loss_at = [&](const Eigen::VectorXd& beta_std) {
        const Eigen::VectorXd eta = za * beta_std;
        return efron_loss(
            std::span<const double>(eta.data(),
                                    static_cast<std::size_t>(eta.size())),
            index);
    };

    Eigen::VectorXd beta_std = Eigen::VectorXd::Zero(da);
    double loss = loss_at(beta_std);
    Eigen::VectorXd score(da);
    Eigen::MatrixXd info(da, da);

    constexpr double kScoreTol = 1e-9;
    constexpr double kBetaGuard = 50.0;
    constexpr int kMaxIter = 50;

    for (fit.iterations = 0; fit.iterations < kMaxIter; ++fit.iterations) {
        const Eigen::VectorXd eta = za * beta_std;
        detail::efron_score_info(za, eta, index, score, info);
        if (score.lpNorm<Eigen::Infinity>() < kScoreTol) {
            fit.converged = true;
            break;
        }

        // conditioning check on the observed information
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info);
        const double lmax = eig.eigenvalues().maxCoeff();
        const double lmin = eig.eigenvalues().minCoeff();
        if (!(lmax > 0.0) || lmin < 1e-12 * lmax)
            throw error("fit_coxph: collinear design (singular information "
                        "matrix)");

        const Eigen::VectorXd step = info.ldlt().solve(score);
        double scale = 1.0;
        Eigen::VectorXd beta_try;
        double loss_try = 0.0;
        bool improved = false;
        for (int h = 0; h < 30; ++h) {
            beta_try = beta_std + scale * step;
            loss_try = loss_at(beta_try);
            if (loss_try <= loss + 1e-14) {
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if (!improved) break;
        beta_std = beta_try;
        loss = loss_try;
        if (beta_std.lpNorm<Eigen::Infinity>() > kBetaGuard) {
            warn("fit_coxph: coefficient norm exceeded guard; likely monotone "
                 "likelihood");
            break;
        }
    }

    // check convergence at the final point when the loop ran out
    if (!fit.converged) {
        const Eigen::VectorXd eta = za * beta_std;
        detail::efron_score_info(za, eta, index, score, info);
        fit.converged = score.lpNorm<Eigen::Infinity>() < kScoreTol &&
                        beta_std.lpNorm<Eigen::Infinity>() <= kBetaGuard;
    }

    // map back: beta_orig = beta_std / sd, info_orig = D info_std D with
    // D = diag(sd); standard errors from the total-likelihood information
    {
        const Eigen::VectorXd eta = za * beta_std;
        detail::efron_score_info(za, eta, index, score, info);
        const Eigen::MatrixXd info_total =
            static_cast<double>(index.n_subjects) * info;
        const Eigen::MatrixXd cov_std = info_total.ldlt().solve(
            Eigen::MatrixXd::Identity(da, da));
        for (Eigen::Index k = 0; k < da; ++k) {
            const Eigen::Index j = active[static_cast<std::size_t>(k)];
            fit.beta(j) = beta_std(k) / sd(j);
            fit.std_errors(j) = std::sqrt(cov_std(k, k)) / sd(j);
            for (Eigen::Index l = 0; l < da; ++l) {
                const Eigen::Index jl = active[static_cast<std::size_t>(l)];
                fit.information(j, jl) = sd(j) * info_total(k, l) * sd(jl);
            }
        }
        fit.neg_mean_loglik = loss;
    }
    return fit;
}

// Prediction with the linear model: Breslow baseline from the linear scores,
// then the shared conditional-survival formula.
inline PredictionCurve predict_coxph(const CoxFit& fit,
                                     const BaselineHazard& h0,
                                     std::span<const double> x,
                                     std::span<const double> y_s, double s,
                                     std::span<const double> grid,
                                     long long id = 0) {
    LinearScorer scorer(fit.beta);
    return predict_survival(scorer, h0, x, y_s, s, grid, id);
}

}  // namespace tdsurv
