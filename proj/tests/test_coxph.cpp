#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "tdsurv/coxph.hpp"
#include "tdsurv/rng.hpp"

using namespace tdsurv;

namespace {

LongRecord rec(long long id, double tstart, double tstop, int event,
               std::vector<double> cov) {
    return {id, tstart, tstop, event, std::move(cov)};
}

std::vector<LongRecord> random_cohort(Rng& rng, int n, int d) {
    std::vector<LongRecord> records;
    for (int i = 0; i < n; ++i) {
        std::vector<double> cov(d);
        for (double& v : cov) v = rng.normal();
        const double t = 0.1 + 2.0 * rng.exponential(1.0);
        records.push_back(rec(i, 0, t, rng.bernoulli(0.7) ? 1 : 0, cov));
    }
    bool has_event = false;
    for (auto& r : records) has_event |= r.event == 1;
    if (!has_event) records[0].event = 1;
    return records;
}

}  // namespace

TEST_CASE("closed-form single-covariate estimate") {
    std::vector<LongRecord> records = {rec(1, 0, 1, 1, {0.0}),
                                       rec(2, 0, 2, 1, {1.0}),
                                       rec(3, 0, 3, 0, {0.0})};
    CoxFit fit = fit_coxph(records);
    CHECK(fit.converged);
    CHECK(fit.identifiable);
    CHECK(fit.beta(0) == Catch::Approx(0.5 * std::log(2.0)).margin(1e-8));
}

TEST_CASE("constant covariate yields zero with a warning") {
    std::vector<LongRecord> records = {rec(1, 0, 1, 1, {2.0}),
                                       rec(2, 0, 2, 1, {2.0}),
                                       rec(3, 0, 3, 0, {2.0})};
    int warnings = 0;
    auto old = warn_handler();
    warn_handler() = [&](const std::string&) { ++warnings; };
    CoxFit fit = fit_coxph(records);
    warn_handler() = old;
    CHECK(warnings >= 1);
    CHECK_FALSE(fit.identifiable);
    CHECK(fit.beta(0) == 0.0);
    CHECK(fit.converged);
}

TEST_CASE("estimate matches a grid search of the same loss") {
    Rng rng(123);
    for (int trial = 0; trial < 5; ++trial) {
        auto records = random_cohort(rng, 10, 1);
        CoxFit fit = fit_coxph(records);
        REQUIRE(fit.converged);

        double best_beta = 0.0;
        double best_loss = std::numeric_limits<double>::infinity();
        Eigen::VectorXd beta(1);
        for (double b = -3.0; b <= 3.0; b += 1e-4) {
            beta(0) = b;
            const double loss = loglik_at(records, beta);
            if (loss < best_loss) {
                best_loss = loss;
                best_beta = b;
            }
        }
        CHECK(std::abs(fit.beta(0) - best_beta) < 2e-4);
    }
}

TEST_CASE("loglik_at equals the shared loss on worked values") {
    std::vector<LongRecord> records = {rec(1, 0, 1, 1, {0.0}),
                                       rec(2, 0, 2, 1, {1.0}),
                                       rec(3, 0, 3, 0, {0.0})};
    Eigen::VectorXd zero(1);
    zero(0) = 0.0;
    CHECK(loglik_at(records, zero) ==
          Catch::Approx((std::log(3.0) + std::log(2.0)) / 3.0).margin(1e-15));

    // identical to efron_loss on random coefficients
    Rng rng(8);
    auto cohort = random_cohort(rng, 15, 2);
    RiskSetIndex index = build_risk_sets(cohort);
    for (int trial = 0; trial < 5; ++trial) {
        Eigen::VectorXd beta(2);
        beta << rng.normal(), rng.normal();
        CHECK(loglik_at(cohort, beta) ==
              Catch::Approx(efron_loss(linear_scores(cohort, beta), index))
                  .margin(1e-12));
    }
}

TEST_CASE("reported loss agrees with the shared Efron loss at beta-hat") {
    Rng rng(61);
    auto records = random_cohort(rng, 30, 3);
    CoxFit fit = fit_coxph(records);
    REQUIRE(fit.converged);
    const RiskSetIndex index = build_risk_sets(records);
    const double direct = efron_loss(linear_scores(records, fit.beta), index);
    CHECK(fit.neg_mean_loglik == Catch::Approx(direct).margin(1e-10));
}

TEST_CASE("fitted coefficients are a local minimum") {
    Rng rng(55);
    auto records = random_cohort(rng, 25, 3);
    CoxFit fit = fit_coxph(records);
    REQUIRE(fit.converged);
    const double at_opt = loglik_at(records, fit.beta);
    for (int k = 0; k < 3; ++k) {
        for (double eps : {-1e-3, 1e-3}) {
            Eigen::VectorXd probe = fit.beta;
            probe(k) += eps;
            CHECK(at_opt <= loglik_at(records, probe) + 1e-12);
        }
    }
}

TEST_CASE("newton-raphson converges on random cohorts") {
    Rng rng(777);
    for (int trial = 0; trial < 10; ++trial) {
        auto records = random_cohort(rng, 20 + static_cast<int>(rng.below(30)),
                                     1 + static_cast<int>(rng.below(4)));
        CoxFit fit = fit_coxph(records);
        CHECK(fit.converged);
        CHECK(fit.iterations <= 50);

        // observed information is symmetric positive semi-definite
        const Eigen::MatrixXd sym =
            fit.information - fit.information.transpose();
        CHECK(sym.cwiseAbs().maxCoeff() < 1e-8);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(fit.information);
        CHECK(eig.eigenvalues().minCoeff() >
              -1e-8 * std::max(1.0, eig.eigenvalues().maxCoeff()));
    }
}

TEST_CASE("translating a covariate leaves the estimate unchanged") {
    Rng rng(31);
    auto records = random_cohort(rng, 30, 2);
    CoxFit fit = fit_coxph(records);
    auto shifted = records;
    for (auto& r : shifted) r.covariates[0] += 11.5;
    CoxFit fit2 = fit_coxph(shifted);
    CHECK((fit.beta - fit2.beta).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("linear prediction delegates to the shared baseline machinery") {
    std::vector<LongRecord> records = {rec(1, 0, 1, 1, {0.0}),
                                       rec(2, 0, 2, 1, {0.0}),
                                       rec(3, 0, 3, 0, {0.0})};
    CoxFit fit;
    fit.beta = Eigen::VectorXd::Zero(1);
    BaselineHazard h0 = breslow(records, linear_scores(records, fit.beta));
    const std::vector<double> x = {0.7};
    PredictionCurve curve =
        predict_coxph(fit, h0, {}, std::span<const double>(x).subspan(0, 1),
                      1.0, std::vector<double>{2.0});
    CHECK(curve.probs[0] == Catch::Approx(std::exp(-0.5)).margin(1e-12));

    // doubling a covariate while halving its coefficient changes nothing
    Rng rng(2);
    auto cohort = random_cohort(rng, 12, 1);
    CoxFit f1 = fit_coxph(cohort);
    auto doubled = cohort;
    for (auto& r : doubled) r.covariates[0] *= 2.0;
    CoxFit f2 = fit_coxph(doubled);
    CHECK(f2.beta(0) == Catch::Approx(f1.beta(0) / 2.0).margin(1e-7));
    const auto s1 = linear_scores(cohort, f1.beta);
    const auto s2 = linear_scores(doubled, f2.beta);
    for (std::size_t i = 0; i < s1.size(); ++i)
        CHECK(s1[i] == Catch::Approx(s2[i]).margin(1e-7));
}
