#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include <Eigen/Core>

#include "tdsurv/dataset.hpp"
#include "tdsurv/rng.hpp"

namespace tdsurv {

// Fixed architecture: input -> hidden affine -> SeLU -> batch norm ->
// dropout -> output affine -> scalar risk score.
struct NetworkSpec {
    int input_dim = 0;
    int hidden_nodes = 30;
    double dropout_rate = 0.2;
    double bn_momentum = 0.9;
    double bn_epsilon = 1e-5;
    std::uint64_t seed = 1;

    void validate() const {
        if (input_dim < 1) throw error("NetworkSpec: input_dim must be >= 1");
        if (hidden_nodes < 1)
            throw error("NetworkSpec: hidden_nodes must be >= 1");
        if (dropout_rate < 0.0 || dropout_rate >= 1.0)
            throw error("NetworkSpec: dropout_rate must be in [0,1)");
        if (bn_momentum < 0.0 || bn_momentum >= 1.0)
            throw error("NetworkSpec: bn_momentum must be in [0,1)");
    }
};

struct NetworkParams {
    Eigen::MatrixXd w1;         // hidden x input
    Eigen::VectorXd b1;         // hidden
    Eigen::VectorXd bn_scale;   // hidden
    Eigen::VectorXd bn_shift;   // hidden
    Eigen::VectorXd w2;         // hidden
    double b2 = 0.0;
    Eigen::VectorXd running_mean;  // hidden
    Eigen::VectorXd running_var;   // hidden
};

// Everything backward() needs from the matching train-mode forward() call.
struct ForwardCache {
    Eigen::MatrixXd input;       // n x d
    Eigen::MatrixXd pre_act;     // n x h, affine outputs
    Eigen::MatrixXd normalized;  // n x h, batch-normalized pre-scale/shift
    Eigen::MatrixXd dropped;     // n x h, values feeding the output layer
    Eigen::MatrixXd mask;        // n x h, inverted-dropout mask (0 or 1/(1-rate))
    Eigen::VectorXd batch_var;   // h, biased
    double bn_epsilon = 0.0;
};

struct ParamGrads {
    Eigen::MatrixXd w1;
    Eigen::VectorXd b1;
    Eigen::VectorXd bn_scale;
    Eigen::VectorXd bn_shift;
    Eigen::VectorXd w2;
    double b2 = 0.0;
};

enum class Mode { Train, Eval };

inline constexpr double kSeluLambda = 1.0507009873554804934193349852946;
inline constexpr double kSeluAlpha = 1.6732632423543772848170429916717;

inline double selu(double x) {
    return x > 0.0 ? kSeluLambda * x
                   : kSeluLambda * kSeluAlpha * (std::exp(x) - 1.0);
}

inline double selu_grad(double x) {
    return x > 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(x);
}

namespace detail {
inline void check_finite(const Eigen::MatrixXd& m, const char* layer) {
    if (!m.allFinite())
        throw error(std::string("non-finite activations in layer: ") + layer);
}
}  // namespace detail

// Train mode normalizes with batch statistics (biased variance), updates the
// running statistics by exponential moving average, and applies inverted
// dropout; eval mode uses running statistics and no dropout. Returns one risk
// score per input row.
inline Eigen::VectorXd forward(const NetworkSpec& spec, NetworkParams& params,
                               const Eigen::MatrixXd& x, Mode mode,
                               Rng* rng = nullptr,
                               ForwardCache* cache = nullptr) {
    const auto n = x.rows();
    const auto h = params.w1.rows();
    if (x.cols() != params.w1.cols())
        throw error("forward: input width " + std::to_string(x.cols()) +
                    " does not match network input_dim " +
                    std::to_string(params.w1.cols()));
    if (mode == Mode::Train && n < 2)
        throw error("forward: train mode needs a batch of >= 2 rows");
    if (mode == Mode::Train && rng == nullptr)
        throw error("forward: train mode needs an rng");
    detail::check_finite(x, "input");

    Eigen::MatrixXd pre = (x * params.w1.transpose()).rowwise() +
                          params.b1.transpose();
    detail::check_finite(pre, "hidden affine");
    Eigen::MatrixXd act = pre.unaryExpr([](double v) { return selu(v); });
    detail::check_finite(act, "selu");

    Eigen::VectorXd mean(h), var(h);
    if (mode == Mode::Train) {
        mean = act.colwise().mean().transpose();
        var = (act.rowwise() - mean.transpose())
                  .array()
                  .square()
                  .colwise()
                  .mean()
                  .transpose();
        params.running_mean = spec.bn_momentum * params.running_mean +
                              (1.0 - spec.bn_momentum) * mean;
        params.running_var = spec.bn_momentum * params.running_var +
                             (1.0 - spec.bn_momentum) * var;
    } else {
        mean = params.running_mean;
        var = params.running_var;
    }
    const Eigen::ArrayXd inv_std = (var.array() + spec.bn_epsilon).sqrt().inverse();
    Eigen::MatrixXd normalized =
        ((act.rowwise() - mean.transpose()).array().rowwise() *
         inv_std.transpose())
            .matrix();
    Eigen::MatrixXd bn_out =
        ((normalized.array().rowwise() * params.bn_scale.transpose().array())
             .rowwise() +
         params.bn_shift.transpose().array())
            .matrix();
    detail::check_finite(bn_out, "batch norm");

    Eigen::MatrixXd mask;
    Eigen::MatrixXd dropped;
    if (mode == Mode::Train && spec.dropout_rate > 0.0) {
        const double keep_scale = 1.0 / (1.0 - spec.dropout_rate);
        mask.resize(n, h);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < h; ++j)
                mask(i, j) = rng->uniform() < spec.dropout_rate ? 0.0
                                                                : keep_scale;
        dropped = bn_out.cwiseProduct(mask);
    } else {
        mask = Eigen::MatrixXd::Ones(n, h);
        dropped = bn_out;
    }

    Eigen::VectorXd score = dropped * params.w2;
    score.array() += params.b2;
    detail::check_finite(score, "output");

    if (cache != nullptr) {
        cache->input = x;
        cache->pre_act = std::move(pre);
        cache->normalized = std::move(normalized);
        cache->dropped = std::move(dropped);
        cache->mask = std::move(mask);
        cache->batch_var = std::move(var);
        cache->bn_epsilon = spec.bn_epsilon;
    }
    return score;
}

inline Eigen::VectorXd forward_eval(const NetworkSpec& spec,
                                    const NetworkParams& params,
                                    const Eigen::MatrixXd& x) {
    return forward(spec, const_cast<NetworkParams&>(params), x, Mode::Eval);
}

inline double score_one(const NetworkSpec& spec, const NetworkParams& params,
                        std::span<const double> row) {
    Eigen::MatrixXd x(1, static_cast<Eigen::Index>(row.size()));
    for (std::size_t j = 0; j < row.size(); ++j)
        x(0, static_cast<Eigen::Index>(j)) = row[j];
    return forward_eval(spec, params, x)(0);
}

// Exact reverse-mode gradient of the train-mode forward pass, including the
// batch-norm statistics and the realized dropout mask.
inline ParamGrads backward(const NetworkParams& params,
                           const ForwardCache& cache,
                           const Eigen::VectorXd& dscore) {
    const auto n = cache.input.rows();
    if (dscore.size() != n)
        throw error("backward: cotangent length does not match cached batch");

    ParamGrads g;
    g.w2 = cache.dropped.transpose() * dscore;
    g.b2 = dscore.sum();

    Eigen::MatrixXd d_dropped = dscore * params.w2.transpose();  // n x h
    Eigen::MatrixXd d_bn_out = d_dropped.cwiseProduct(cache.mask);
    g.bn_scale =
        d_bn_out.cwiseProduct(cache.normalized).colwise().sum().transpose();
    g.bn_shift = d_bn_out.colwise().sum().transpose();

    Eigen::MatrixXd d_norm =
        (d_bn_out.array().rowwise() * params.bn_scale.transpose().array())
            .matrix();

    // batch-norm backward: dact = istd/n * (n*dnorm - sum(dnorm)
    //                              - xhat * sum(dnorm .* xhat)), per column
    const Eigen::ArrayXd inv_std =
        (cache.batch_var.array() + cache.bn_epsilon).sqrt().inverse();
    const Eigen::RowVectorXd sum_d = d_norm.colwise().sum();
    const Eigen::RowVectorXd sum_dx =
        d_norm.cwiseProduct(cache.normalized).colwise().sum();
    Eigen::MatrixXd d_act =
        (static_cast<double>(n) * d_norm).rowwise() - sum_d;
    d_act -= (cache.normalized.array().rowwise() * sum_dx.array()).matrix();
    d_act = (d_act.array().rowwise() *
             (inv_std.transpose() / static_cast<double>(n)))
                .matrix();

    Eigen::MatrixXd d_pre = d_act.cwiseProduct(
        cache.pre_act.unaryExpr([](double v) { return selu_grad(v); }));
    g.w1 = d_pre.transpose() * cache.input;
    g.b1 = d_pre.colwise().sum().transpose();
    return g;
}

// Adam accumulators, one slot per trainable parameter array.
struct OptimizerState {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long step = 0;
    Eigen::MatrixXd m_w1, v_w1;
    Eigen::VectorXd m_b1, v_b1;
    Eigen::VectorXd m_bn_scale, v_bn_scale;
    Eigen::VectorXd m_bn_shift, v_bn_shift;
    Eigen::VectorXd m_w2, v_w2;
    double m_b2 = 0.0, v_b2 = 0.0;

    static OptimizerState zeros_like(const NetworkParams& p, double lr) {
        OptimizerState s;
        s.lr = lr;
        s.m_w1 = Eigen::MatrixXd::Zero(p.w1.rows(), p.w1.cols());
        s.v_w1 = s.m_w1;
        s.m_b1 = Eigen::VectorXd::Zero(p.b1.size());
        s.v_b1 = s.m_b1;
        s.m_bn_scale = Eigen::VectorXd::Zero(p.bn_scale.size());
        s.v_bn_scale = s.m_bn_scale;
        s.m_bn_shift = Eigen::VectorXd::Zero(p.bn_shift.size());
        s.v_bn_shift = s.m_bn_shift;
        s.m_w2 = Eigen::VectorXd::Zero(p.w2.size());
        s.v_w2 = s.m_w2;
        return s;
    }
};

namespace detail {

template <class T>
void adam_update(T& param, const T& grad, T& m, T& v, double lr, double b1,
                 double b2, double eps, double bc1, double bc2) {
    m = b1 * m + (1.0 - b1) * grad;
    v = (b2 * v.array() + (1.0 - b2) * grad.array().square()).matrix();
    param -= (lr * (m.array() / bc1) /
              ((v.array() / bc2).sqrt() + eps))
                 .matrix();
}

inline void adam_update(double& param, double grad, double& m, double& v,
                        double lr, double b1, double b2, double eps,
                        double bc1, double bc2) {
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v + (1.0 - b2) * grad * grad;
    param -= lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
}

inline bool grads_finite(const ParamGrads& g) {
    return g.w1.allFinite() && g.b1.allFinite() && g.bn_scale.allFinite() &&
           g.bn_shift.allFinite() && g.w2.allFinite() && std::isfinite(g.b2);
}

}  // namespace detail

// Standard bias-corrected Adam update over every trainable array.
inline void adam_step(NetworkParams& params, const ParamGrads& grads,
                      OptimizerState& s) {
    if (!detail::grads_finite(grads)) throw error("adam_step: non-finite gradient");
    s.step += 1;
    const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
    const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
    detail::adam_update(params.w1, grads.w1, s.m_w1, s.v_w1, s.lr, s.beta1,
                        s.beta2, s.epsilon, bc1, bc2);
    detail::adam_update(params.b1, grads.b1, s.m_b1, s.v_b1, s.lr, s.beta1,
                        s.beta2, s.epsilon, bc1, bc2);
    detail::adam_update(params.bn_scale, grads.bn_scale, s.m_bn_scale,
                        s.v_bn_scale, s.lr, s.beta1, s.beta2, s.epsilon, bc1,
                        bc2);
    detail::adam_update(params.bn_shift, grads.bn_shift, s.m_bn_shift,
                        s.v_bn_shift, s.lr, s.beta1, s.beta2, s.epsilon, bc1,
                        bc2);
    detail::adam_update(params.w2, grads.w2, s.m_w2, s.v_w2, s.lr, s.beta1,
                        s.beta2, s.epsilon, bc1, bc2);
    detail::adam_update(params.b2, grads.b2, s.m_b2, s.v_b2, s.lr, s.beta1,
                        s.beta2, s.epsilon, bc1, bc2);
}

// LeCun-style initialization: affine weights ~ N(0, 1/fan_in), shifts zero,
// batch-norm identity, running stats at the standard-normal fixed point.
inline NetworkParams init_params(const NetworkSpec& spec, Rng& rng) {
    spec.validate();
    NetworkParams p;
    const int h = spec.hidden_nodes;
    const int d = spec.input_dim;
    p.w1.resize(h, d);
    const double sd1 = std::sqrt(1.0 / static_cast<double>(d));
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < d; ++c) p.w1(r, c) = rng.normal(0.0, sd1);
    p.b1 = Eigen::VectorXd::Zero(h);
    p.bn_scale = Eigen::VectorXd::Ones(h);
    p.bn_shift = Eigen::VectorXd::Zero(h);
    p.w2.resize(h);
    const double sd2 = std::sqrt(1.0 / static_cast<double>(h));
    for (int r = 0; r < h; ++r) p.w2(r) = rng.normal(0.0, sd2);
    p.b2 = 0.0;
    p.running_mean = Eigen::VectorXd::Zero(h);
    p.running_var = Eigen::VectorXd::Ones(h);
    return p;
}

inline NetworkParams init_params(const NetworkSpec& spec) {
    Rng rng(spec.seed);
    return init_params(spec, rng);
}

}  // namespace tdsurv
