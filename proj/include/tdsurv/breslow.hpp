#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "tdsurv/dataset.hpp"
#include "tdsurv/partial_likelihood.hpp"

namespace tdsurv {

// Right-continuous step estimate of the cumulative baseline hazard:
// zero before the first event time, constant after the last one.
struct BaselineHazard {
    std::vector<double> times;    // strictly increasing event times
    std::vector<double> cumhaz;   // non-decreasing, cumhaz[k] = H0(times[k])

    double at(double t) const {
        const auto it = std::upper_bound(times.begin(), times.end(), t);
        if (it == times.begin()) return 0.0;
        return cumhaz[static_cast<std::size_t>(it - times.begin()) - 1];
    }
};

struct PredictionCurve {
    long long id = 0;
    double landmark = 0.0;
    std::vector<double> horizons;   // u grid, all > landmark
    std::vector<double> probs;      // pi(u | landmark), non-increasing
};

// Anything that maps a covariate row (baseline then longitudinal) to a risk
// score; implemented by the fitted network and by the linear Cox fit.
class RiskScorer {
public:
    virtual ~RiskScorer() = default;
    virtual double score(std::span<const double> covariates) const = 0;
};

// Breslow estimator: increment d(T) / sum_{at risk} e^g at each distinct
// event time, with the delayed-entry at-risk rule.
inline BaselineHazard breslow(std::span<const LongRecord> records,
                              std::span<const double> scores) {
    if (records.size() != scores.size())
        throw error("breslow: record/score length mismatch");
    const RiskSetIndex index = build_risk_sets(records);

    double gmax = -std::numeric_limits<double>::infinity();
    for (double g : scores) {
        if (!std::isfinite(g)) throw error("breslow: non-finite score");
        gmax = std::max(gmax, g);
    }

    BaselineHazard h0;
    double cum = 0.0;
    for (const auto& group : index.groups) {
        double s_risk = 0.0;
        for (int i : group.at_risk) s_risk += std::exp(scores[i] - gmax);
        cum += static_cast<double>(group.tied.size()) /
               (s_risk * std::exp(gmax));
        h0.times.push_back(group.time);
        h0.cumhaz.push_back(cum);
    }
    return h0;
}

// Eq-of-record conditional survival: pi(u|s) = exp(-(H0(u)-H0(s)) e^g) with
// g scored from the covariates in force at the landmark.
inline PredictionCurve predict_survival(const RiskScorer& model,
                                        const BaselineHazard& h0,
                                        std::span<const double> x,
                                        std::span<const double> y_s, double s,
                                        std::span<const double> grid,
                                        long long id = 0) {
    std::vector<double> row(x.begin(), x.end());
    row.insert(row.end(), y_s.begin(), y_s.end());
    const double g = model.score(row);

    PredictionCurve curve;
    curve.id = id;
    curve.landmark = s;
    const double h_s = h0.at(s);
    const double eg = std::exp(g);
    for (double u : grid) {
        if (!(u > s))
            throw error("predict_survival: horizon u=" + std::to_string(u) +
                        " must exceed the landmark s=" + std::to_string(s));
        curve.horizons.push_back(u);
        curve.probs.push_back(std::exp(-(h0.at(u) - h_s) * eg));
    }
    return curve;
}

inline PredictionCurve predict_survival(const RiskScorer& model,
                                        const BaselineHazard& h0,
                                        const Subject& subject, double s,
                                        std::span<const double> grid) {
    return predict_survival(model, h0, subject.baseline,
                            covariate_at(subject, s), s, grid, subject.id);
}

// Dynamic update: re-issue the prediction from a later landmark with the
// covariates then in force. s_new may equal s_prev (idempotent) but must
// not move backwards.
inline PredictionCurve update_prediction(const RiskScorer& model,
                                         const BaselineHazard& h0,
                                         const Subject& subject, double s_prev,
                                         double s_new,
                                         std::span<const double> grid) {
    if (s_new < s_prev)
        throw error("update_prediction: new landmark precedes the previous one");
    return predict_survival(model, h0, subject, s_new, grid);
}

}  // namespace tdsurv
