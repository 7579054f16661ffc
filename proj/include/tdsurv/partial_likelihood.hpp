#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <unordered_set>
#include <vector>

#include "tdsurv/dataset.hpp"

namespace tdsurv {

// Risk-set structure of a set of counting-process records. Indices refer to
// positions in the record span the index was built from. At an event time T
// the at-risk set follows the delayed-entry rule tstart < T <= tstop.
struct RiskSetIndex {
    struct EventGroup {
        double time = 0.0;
        std::vector<int> tied;     // records with tstop == time, event == 1
        std::vector<int> at_risk;  // records with tstart < time <= tstop
    };
    std::vector<EventGroup> groups;  // increasing in time
    int n_subjects = 0;              // distinct ids among the records
    int n_records = 0;
};

namespace detail {

template <class RecordAt>
RiskSetIndex build_risk_sets_impl(RecordAt&& rec, int n) {
    RiskSetIndex index;
    index.n_records = n;

    std::vector<double> event_times;
    std::unordered_set<long long> ids;
    for (int i = 0; i < n; ++i) {
        const LongRecord& r = rec(i);
        ids.insert(r.id);
        if (r.event == 1) event_times.push_back(r.tstop);
    }
    index.n_subjects = static_cast<int>(ids.size());
    if (event_times.empty())
        throw error("build_risk_sets: no events among the records");
    std::sort(event_times.begin(), event_times.end());
    event_times.erase(std::unique(event_times.begin(), event_times.end()),
                      event_times.end());

    index.groups.resize(event_times.size());
    for (std::size_t k = 0; k < event_times.size(); ++k)
        index.groups[k].time = event_times[k];
    for (int i = 0; i < n; ++i) {
        const LongRecord& r = rec(i);
        for (auto& g : index.groups) {
            if (g.time > r.tstop) break;
            if (r.tstart < g.time) {
                g.at_risk.push_back(i);
                if (r.event == 1 && r.tstop == g.time) g.tied.push_back(i);
            }
        }
    }
    return index;
}

}  // namespace detail

inline RiskSetIndex build_risk_sets(std::span<const LongRecord> records) {
    return detail::build_risk_sets_impl(
        [&](int i) -> const LongRecord& { return records[i]; },
        static_cast<int>(records.size()));
}

// Subset variant for mini-batches; indices in the result refer to positions
// within `subset`.
inline RiskSetIndex build_risk_sets(const std::vector<LongRecord>& records,
                                    std::span<const int> subset) {
    return detail::build_risk_sets_impl(
        [&](int i) -> const LongRecord& { return records[subset[i]]; },
        static_cast<int>(subset.size()));
}

// Efron-tied negative log partial likelihood, averaged over subjects:
//   -(1/n) sum over event times T with tied set D, d = |D|, of
//     [ sum_{i in D} g_i - sum_{r=0}^{d-1} log(S_risk - (r/d) S_tied) ]
// with S_risk = sum_{at risk} e^g, S_tied = sum_{i in D} e^g. Scores are
// centered at the group maximum before exponentiation; the loss itself is
// invariant to that shift.
inline double efron_loss(std::span<const double> scores,
                         const RiskSetIndex& index) {
    if (index.groups.empty()) throw error("efron_loss: empty risk-set index");
    if (static_cast<int>(scores.size()) != index.n_records)
        throw error("efron_loss: score count does not match index");
    for (double g : scores)
        if (!std::isfinite(g)) throw error("efron_loss: non-finite score");

    double total = 0.0;
    for (const auto& group : index.groups) {
        if (group.tied.empty())
            throw error("efron_loss: event time with empty tied set");
        double gmax = -std::numeric_limits<double>::infinity();
        for (int i : group.at_risk) gmax = std::max(gmax, scores[i]);
        double s_risk = 0.0;
        for (int i : group.at_risk) s_risk += std::exp(scores[i] - gmax);
        double s_tied = 0.0;
        double tied_scores = 0.0;
        for (int i : group.tied) {
            s_tied += std::exp(scores[i] - gmax);
            tied_scores += scores[i];
        }
        const double d = static_cast<double>(group.tied.size());
        double bracket = tied_scores;
        for (std::size_t r = 0; r < group.tied.size(); ++r) {
            const double denom =
                s_risk - (static_cast<double>(r) / d) * s_tied;
            if (!(denom > 0.0) || !std::isfinite(denom))
                throw error("efron_loss: degenerate risk-set sum");
            bracket -= gmax + std::log(denom);
        }
        total += bracket;
    }
    return -total / static_cast<double>(index.n_subjects);
}

// Analytic gradient of efron_loss with respect to each record's score.
inline std::vector<double> efron_loss_grad(std::span<const double> scores,
                                           const RiskSetIndex& index) {
    if (index.groups.empty())
        throw error("efron_loss_grad: empty risk-set index");
    if (static_cast<int>(scores.size()) != index.n_records)
        throw error("efron_loss_grad: score count does not match index");

    std::vector<double> grad(scores.size(), 0.0);
    for (const auto& group : index.groups) {
        double gmax = -std::numeric_limits<double>::infinity();
        for (int i : group.at_risk) gmax = std::max(gmax, scores[i]);
        double s_risk = 0.0;
        for (int i : group.at_risk) s_risk += std::exp(scores[i] - gmax);
        double s_tied = 0.0;
        for (int i : group.tied) s_tied += std::exp(scores[i] - gmax);

        const double d = static_cast<double>(group.tied.size());
        double inv_sum = 0.0;        // sum_r 1/denom
        double inv_sum_frac = 0.0;   // sum_r (r/d)/denom
        for (std::size_t r = 0; r < group.tied.size(); ++r) {
            const double frac = static_cast<double>(r) / d;
            const double denom = s_risk - frac * s_tied;
            if (!(denom > 0.0) || !std::isfinite(denom))
                throw error("efron_loss_grad: degenerate risk-set sum");
            inv_sum += 1.0 / denom;
            inv_sum_frac += frac / denom;
        }
        for (int i : group.at_risk)
            grad[i] += std::exp(scores[i] - gmax) * inv_sum;
        for (int i : group.tied) {
            grad[i] -= std::exp(scores[i] - gmax) * inv_sum_frac;
            grad[i] -= 1.0;  // the sum_{i in D} g_i term
        }
    }
    const double n = static_cast<double>(index.n_subjects);
    for (double& g : grad) g /= n;
    return grad;
}

}  // namespace tdsurv
