#pragma once

#include <chrono>
#include <cstdint>
#include <numeric>
#include <vector>

#include <Eigen/Core>

#include "tdsurv/dataset.hpp"
#include "tdsurv/network.hpp"
#include "tdsurv/partial_likelihood.hpp"
#include "tdsurv/rng.hpp"

namespace tdsurv {

struct TrainConfig {
    int batch_size = 50;
    int epochs = 20;
    double learning_rate = 0.01;
    std::uint64_t seed = 1;
};

struct EpochLog {
    int epoch = 0;
    double mean_loss = 0.0;
    double seconds = 0.0;
    int batches_run = 0;
    int batches_skipped = 0;
};

struct FittedModel {
    NetworkSpec spec;
    NetworkParams params;
    std::vector<EpochLog> log;
};

inline Eigen::MatrixXd design_matrix(const Dataset& data) {
    const int d = data.p + data.q;
    Eigen::MatrixXd x(data.long_records.size(), d);
    for (std::size_t i = 0; i < data.long_records.size(); ++i) {
        const auto& cov = data.long_records[i].covariates;
        for (int j = 0; j < d; ++j)
            x(static_cast<Eigen::Index>(i), j) = cov[j];
    }
    return x;
}

// Mini-batch training of the risk-score network on the Efron partial
// likelihood. Batches are sets of long records; risk sets are recomputed
// within each batch, so a batch's loss is the partial likelihood of the
// batch treated as its own cohort. Event-free (or sub-2-row) batches are
// skipped and logged.
inline FittedModel fit(const Dataset& data, NetworkSpec spec,
                       const TrainConfig& cfg) {
    if (spec.input_dim == 0) spec.input_dim = data.p + data.q;
    if (spec.input_dim != data.p + data.q)
        throw error("fit: spec.input_dim does not match dataset covariates");
    spec.validate();
    if (cfg.batch_size < 2) throw error("fit: batch_size must be >= 2");
    if (cfg.batch_size > static_cast<int>(data.long_records.size()))
        throw error("fit: batch_size exceeds the number of long records");
    if (cfg.epochs < 1) throw error("fit: epochs must be >= 1");
    const bool any_event =
        std::any_of(data.long_records.begin(), data.long_records.end(),
                    [](const LongRecord& r) { return r.event == 1; });
    if (!any_event) throw error("fit: dataset has no events");

    FittedModel model;
    model.spec = spec;
    Rng init_rng(spec.seed);
    model.params = init_params(spec, init_rng);
    OptimizerState opt = OptimizerState::zeros_like(model.params,
                                                    cfg.learning_rate);
    Rng train_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

    const Eigen::MatrixXd x_all = design_matrix(data);
    const int n_records = static_cast<int>(data.long_records.size());
    std::vector<int> order(n_records);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        train_rng.shuffle(order);

        EpochLog log;
        log.epoch = epoch + 1;
        double loss_sum = 0.0;
        for (int start = 0; start < n_records; start += cfg.batch_size) {
            const int size = std::min(cfg.batch_size, n_records - start);
            const std::span<const int> batch(order.data() + start,
                                             static_cast<std::size_t>(size));
            const bool batch_event = std::any_of(
                batch.begin(), batch.end(),
                [&](int i) { return data.long_records[i].event == 1; });
            if (size < 2 || !batch_event) {
                ++log.batches_skipped;
                continue;
            }
            const RiskSetIndex index =
                build_risk_sets(data.long_records, batch);

            Eigen::MatrixXd xb(size, x_all.cols());
            for (int k = 0; k < size; ++k) xb.row(k) = x_all.row(batch[k]);

            ForwardCache cache;
            const Eigen::VectorXd scores = forward(
                spec, model.params, xb, Mode::Train, &train_rng, &cache);
            const std::span<const double> score_span(scores.data(),
                                                     scores.size());
            loss_sum += efron_loss(score_span, index);
            const std::vector<double> dscore =
                efron_loss_grad(score_span, index);
            const Eigen::VectorXd dscore_vec = Eigen::Map<const Eigen::VectorXd>(
                dscore.data(), static_cast<Eigen::Index>(dscore.size()));
            const ParamGrads grads = backward(model.params, cache, dscore_vec);
            adam_step(model.params, grads, opt);
            ++log.batches_run;
        }
        if (log.batches_run == 0)
            throw error("fit: every batch in epoch " +
                        std::to_string(log.epoch) +
                        " was event-free; increase batch_size");
        if (log.batches_skipped > 0)
            warn("epoch " + std::to_string(log.epoch) + ": skipped " +
                 std::to_string(log.batches_skipped) + " event-free batch(es)");
        log.mean_loss = loss_sum / log.batches_run;
        log.seconds = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
        model.log.push_back(log);
    }
    return model;
}

// Eval-mode risk score for every long record; input to the Breslow step.
inline std::vector<double> record_scores(const NetworkSpec& spec,
                                         const NetworkParams& params,
                                         const Dataset& data) {
    const Eigen::MatrixXd x = design_matrix(data);
    const Eigen::VectorXd s = forward_eval(spec, params, x);
    return std::vector<double>(s.data(), s.data() + s.size());
}

}  // namespace tdsurv
