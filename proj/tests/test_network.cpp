#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "tdsurv/network.hpp"
#include "tdsurv/rng.hpp"

using namespace tdsurv;

namespace {

Eigen::MatrixXd random_input(Rng& rng, int n, int d) {
    Eigen::MatrixXd x(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) x(i, j) = rng.normal();
    return x;
}

struct FlatParam {
    double* ptr;
};

std::vector<FlatParam> flatten(NetworkParams& p) {
    std::vector<FlatParam> out;
    for (Eigen::Index i = 0; i < p.w1.size(); ++i) out.push_back({p.w1.data() + i});
    for (Eigen::Index i = 0; i < p.b1.size(); ++i) out.push_back({p.b1.data() + i});
    for (Eigen::Index i = 0; i < p.bn_scale.size(); ++i)
        out.push_back({p.bn_scale.data() + i});
    for (Eigen::Index i = 0; i < p.bn_shift.size(); ++i)
        out.push_back({p.bn_shift.data() + i});
    for (Eigen::Index i = 0; i < p.w2.size(); ++i) out.push_back({p.w2.data() + i});
    out.push_back({&p.b2});
    return out;
}

std::vector<double> flatten_grads(const ParamGrads& g) {
    std::vector<double> out;
    for (Eigen::Index i = 0; i < g.w1.size(); ++i) out.push_back(g.w1.data()[i]);
    for (Eigen::Index i = 0; i < g.b1.size(); ++i) out.push_back(g.b1.data()[i]);
    for (Eigen::Index i = 0; i < g.bn_scale.size(); ++i)
        out.push_back(g.bn_scale.data()[i]);
    for (Eigen::Index i = 0; i < g.bn_shift.size(); ++i)
        out.push_back(g.bn_shift.data()[i]);
    for (Eigen::Index i = 0; i < g.w2.size(); ++i) out.push_back(g.w2.data()[i]);
    out.push_back(g.b2);
    return out;
}

}  // namespace

TEST_CASE("selu fixed points and limits") {
    CHECK(selu(0.0) == 0.0);
    CHECK(selu(1.0) == Catch::Approx(1.0507009874).margin(1e-9));
    CHECK(selu(-100.0) == Catch::Approx(-1.7580993408).margin(1e-9));
}

TEST_CASE("eval forward is deterministic") {
    NetworkSpec spec;
    spec.input_dim = 5;
    spec.hidden_nodes = 8;
    spec.seed = 3;
    NetworkParams params = init_params(spec);
    Rng rng(7);
    const Eigen::MatrixXd x = random_input(rng, 6, 5);
    const Eigen::VectorXd a = forward_eval(spec, params, x);
    const Eigen::VectorXd b = forward_eval(spec, params, x);
    CHECK(a == b);
}

TEST_CASE("train equals eval with dropout off and frozen statistics") {
    NetworkSpec spec;
    spec.input_dim = 4;
    spec.hidden_nodes = 6;
    spec.dropout_rate = 0.0;
    spec.bn_momentum = 0.0;  // running stats become the batch stats
    spec.seed = 21;
    NetworkParams params = init_params(spec);
    Rng data_rng(5), train_rng(9);
    const Eigen::MatrixXd x = random_input(data_rng, 10, 4);
    const Eigen::VectorXd train_out =
        forward(spec, params, x, Mode::Train, &train_rng);
    const Eigen::VectorXd eval_out = forward_eval(spec, params, x);
    for (Eigen::Index i = 0; i < train_out.size(); ++i)
        CHECK(std::abs(train_out(i) - eval_out(i)) < 1e-10);
}

TEST_CASE("train-mode batch of one row is rejected") {
    NetworkSpec spec;
    spec.input_dim = 3;
    NetworkParams params = init_params(spec);
    Rng rng(1);
    Eigen::MatrixXd x = random_input(rng, 1, 3);
    CHECK_THROWS_AS(forward(spec, params, x, Mode::Train, &rng), error);
}

TEST_CASE("batch statistics are normalized before scale and shift") {
    NetworkSpec spec;
    spec.input_dim = 5;
    spec.hidden_nodes = 7;
    spec.seed = 12;
    NetworkParams params = init_params(spec);
    Rng rng(2);
    const Eigen::MatrixXd x = random_input(rng, 64, 5);
    ForwardCache cache;
    forward(spec, params, x, Mode::Train, &rng, &cache);
    for (Eigen::Index j = 0; j < cache.normalized.cols(); ++j) {
        const double mean = cache.normalized.col(j).mean();
        const double var =
            (cache.normalized.col(j).array() - mean).square().mean();
        CHECK(std::abs(mean) < 1e-6);
        // normalization divides by sqrt(var + eps), so var is just below 1
        CHECK(var == Catch::Approx(1.0).margin(1e-3));
    }
}

TEST_CASE("zero cotangent gives zero gradients") {
    NetworkSpec spec;
    spec.input_dim = 4;
    spec.hidden_nodes = 5;
    spec.seed = 8;
    NetworkParams params = init_params(spec);
    Rng rng(3);
    const Eigen::MatrixXd x = random_input(rng, 6, 4);
    ForwardCache cache;
    forward(spec, params, x, Mode::Train, &rng, &cache);
    const ParamGrads g =
        backward(params, cache, Eigen::VectorXd::Zero(6));
    for (double v : flatten_grads(g)) CHECK(v == 0.0);
}

TEST_CASE("output-weight gradient is the cotangent-activation sum") {
    NetworkSpec spec;
    spec.input_dim = 3;
    spec.hidden_nodes = 1;
    spec.dropout_rate = 0.0;
    spec.seed = 4;
    NetworkParams params = init_params(spec);
    Rng rng(6);
    const Eigen::MatrixXd x = random_input(rng, 5, 3).cwiseAbs();
    ForwardCache cache;
    forward(spec, params, x, Mode::Train, &rng, &cache);
    Eigen::VectorXd dscore(5);
    for (int i = 0; i < 5; ++i) dscore(i) = 0.1 * (i + 1);
    const ParamGrads g = backward(params, cache, dscore);
    double expected = 0.0;
    for (int i = 0; i < 5; ++i) expected += dscore(i) * cache.dropped(i, 0);
    CHECK(g.w2(0) == Catch::Approx(expected).margin(1e-14));
}

TEST_CASE("analytic parameter gradients match central differences") {
    NetworkSpec spec;
    spec.input_dim = 4;
    spec.hidden_nodes = 5;
    spec.dropout_rate = 0.0;  // keep the pass deterministic for the probe
    spec.seed = 31;
    NetworkParams params = init_params(spec);
    Rng data_rng(14);
    const Eigen::MatrixXd x = random_input(data_rng, 10, 4);
    Eigen::VectorXd weights(10);
    for (int i = 0; i < 10; ++i) weights(i) = data_rng.normal();

    Rng fwd_rng(1);
    ForwardCache cache;
    forward(spec, params, x, Mode::Train, &fwd_rng, &cache);
    const ParamGrads analytic_grads = backward(params, cache, weights);
    const std::vector<double> analytic = flatten_grads(analytic_grads);

    const auto loss = [&]() {
        Rng r(1);
        return weights.dot(forward(spec, params, x, Mode::Train, &r));
    };
    const std::vector<FlatParam> flat = flatten(params);
    REQUIRE(flat.size() == analytic.size());
    const double h = 1e-5;
    for (std::size_t k = 0; k < flat.size(); ++k) {
        const double saved = *flat[k].ptr;
        *flat[k].ptr = saved + h;
        const double up = loss();
        *flat[k].ptr = saved - h;
        const double down = loss();
        *flat[k].ptr = saved;
        const double fd = (up - down) / (2.0 * h);
        const double denom =
            std::max({std::abs(fd), std::abs(analytic[k]), 1e-8});
        CHECK(std::abs(fd - analytic[k]) / denom < 1e-4);
    }
}

TEST_CASE("adam first step and closed-form recursion") {
    SECTION("first step moves by about -lr for unit-scale gradient") {
        NetworkParams p;
        p.w1 = Eigen::MatrixXd::Zero(1, 1);
        p.b1 = Eigen::VectorXd::Zero(1);
        p.bn_scale = Eigen::VectorXd::Ones(1);
        p.bn_shift = Eigen::VectorXd::Zero(1);
        p.w2 = Eigen::VectorXd::Zero(1);
        OptimizerState s = OptimizerState::zeros_like(p, 0.01);
        ParamGrads g;
        g.w1 = Eigen::MatrixXd::Constant(1, 1, 2.0);
        g.b1 = Eigen::VectorXd::Zero(1);
        g.bn_scale = Eigen::VectorXd::Zero(1);
        g.bn_shift = Eigen::VectorXd::Zero(1);
        g.w2 = Eigen::VectorXd::Zero(1);
        g.b2 = 0.0;
        adam_step(p, g, s);
        CHECK(p.w1(0, 0) == Catch::Approx(-0.01).margin(1e-9));
        // zero-gradient entries stay exactly in place
        CHECK(p.b1(0) == 0.0);
        CHECK(p.w2(0) == 0.0);
    }
    SECTION("two identical steps reproduce the hand recursion") {
        const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8, grad = 0.7;
        NetworkParams p;
        p.w1 = Eigen::MatrixXd::Zero(1, 1);
        p.b1 = Eigen::VectorXd::Zero(1);
        p.bn_scale = Eigen::VectorXd::Zero(1);
        p.bn_shift = Eigen::VectorXd::Zero(1);
        p.w2 = Eigen::VectorXd::Zero(1);
        OptimizerState s = OptimizerState::zeros_like(p, lr);
        ParamGrads g;
        g.w1 = Eigen::MatrixXd::Constant(1, 1, grad);
        g.b1 = Eigen::VectorXd::Zero(1);
        g.bn_scale = Eigen::VectorXd::Zero(1);
        g.bn_shift = Eigen::VectorXd::Zero(1);
        g.w2 = Eigen::VectorXd::Zero(1);
        adam_step(p, g, s);
        adam_step(p, g, s);

        double m = 0.0, v = 0.0, x = 0.0;
        for (int t = 1; t <= 2; ++t) {
            m = b1 * m + (1 - b1) * grad;
            v = b2 * v + (1 - b2) * grad * grad;
            const double mhat = m / (1 - std::pow(b1, t));
            const double vhat = v / (1 - std::pow(b2, t));
            x -= lr * mhat / (std::sqrt(vhat) + eps);
        }
        CHECK(p.w1(0, 0) == Catch::Approx(x).margin(1e-15));
    }
    SECTION("non-finite gradients are rejected") {
        NetworkParams p;
        p.w1 = Eigen::MatrixXd::Zero(1, 1);
        p.b1 = Eigen::VectorXd::Zero(1);
        p.bn_scale = Eigen::VectorXd::Zero(1);
        p.bn_shift = Eigen::VectorXd::Zero(1);
        p.w2 = Eigen::VectorXd::Zero(1);
        OptimizerState s = OptimizerState::zeros_like(p, 0.01);
        ParamGrads g;
        g.w1 = Eigen::MatrixXd::Constant(1, 1,
                                         std::numeric_limits<double>::quiet_NaN());
        g.b1 = Eigen::VectorXd::Zero(1);
        g.bn_scale = Eigen::VectorXd::Zero(1);
        g.bn_shift = Eigen::VectorXd::Zero(1);
        g.w2 = Eigen::VectorXd::Zero(1);
        CHECK_THROWS_AS(adam_step(p, g, s), error);
    }
}

TEST_CASE("initialization is seeded and LeCun-scaled") {
    NetworkSpec spec;
    spec.input_dim = 10;
    spec.hidden_nodes = 1000;  // 10,000 hidden weights with fan-in 10
    spec.seed = 77;
    const NetworkParams a = init_params(spec);
    const NetworkParams b = init_params(spec);
    CHECK(a.w1 == b.w1);
    CHECK(a.w2 == b.w2);
    CHECK(a.b2 == 0.0);
    CHECK((a.bn_scale.array() == 1.0).all());
    CHECK((a.running_var.array() == 1.0).all());

    const double var = a.w1.array().square().mean() -
                       std::pow(a.w1.array().mean(), 2);
    CHECK(var == Catch::Approx(0.1).epsilon(0.10));
}
