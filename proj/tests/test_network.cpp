#include <doctest.h>

#include <cmath>

#include <Eigen/Dense>

#include "ntklens/diagnostics.hpp"
#include "ntklens/errors.hpp"
#include "ntklens/network.hpp"
#include "ntklens/rng.hpp"
#include "ntklens/train.hpp"

using namespace ntklens;

namespace {

// Single affine layer with raw (unscaled) weights: f(x) = W x, a plain linear
// model whose Jacobian in the weights is the input itself.
NetworkSpec linear_model(int in, int out = 1, bool bias = false) {
    NetworkSpec spec;
    LayerSpec layer;
    layer.in = in;
    layer.out = out;
    layer.bias = bias;
    layer.scale = WeightScale::None;
    spec.layers = {layer};
    return spec;
}

}  // namespace

TEST_CASE("parameter count: 2->8->1 NTP MLP without bias") {
    const NetworkSpec spec = NetworkSpec::mlp_ntp(2, {8}, 1, /*bias=*/false);
    CHECK(spec.param_count() == 8 * 2 + 1 * 8);
}

TEST_CASE("frozen Rademacher layer holds only +-1 values") {
    auto [spec, params] = shallow_relu_net(64, /*seed=*/3);
    CHECK(spec.param_count() == 2 * 64);  // only W1 is trainable
    for (Eigen::Index i = 0; i < params.W[1].size(); ++i) {
        const double v = params.W[1].reshaped()[i];
        CHECK((v == 1.0 || v == -1.0));
    }
}

TEST_CASE("NTP forward scaling gives effective weight variance 1/fan_in") {
    // One NTP layer with fan-in 1024: W = V / sqrt(1024), V ~ N(0, 1).
    const NetworkSpec spec = NetworkSpec::mlp_ntp(1024, {}, 1, /*bias=*/false);
    double sum = 0.0, sum2 = 0.0;
    long count = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const Params p = init_params(spec, {seed, 1.0});
        const Eigen::MatrixXd W = p.W[0] / std::sqrt(1024.0);
        sum += W.sum();
        sum2 += W.array().square().sum();
        count += W.size();
    }
    const double var = sum2 / count - (sum / count) * (sum / count);
    CHECK(var == doctest::Approx(1.0 / 1024.0).epsilon(0.05));
}

TEST_CASE("SP and NTP induce matching output variance at initialization") {
    const int fan_in = 64;
    const NetworkSpec ntp = NetworkSpec::mlp_ntp(fan_in, {}, 1, false);
    const NetworkSpec sp = NetworkSpec::mlp_sp(fan_in, {}, 1, false);
    Eigen::MatrixXd x(1, fan_in);
    Rng rng(11);
    for (int i = 0; i < fan_in; ++i) x(0, i) = rng.normal();
    double v_ntp = 0.0, v_sp = 0.0;
    const int trials = 10000;
    for (std::uint64_t s = 0; s < trials; ++s) {
        v_ntp += std::pow(forward(ntp, init_params(ntp, {s, 1.0}), x)(0, 0), 2);
        v_sp += std::pow(forward(sp, init_params(sp, {s + 500000, 1.0}), x)(0, 0), 2);
    }
    CHECK(v_ntp / trials == doctest::Approx(v_sp / trials).epsilon(0.05));
}

TEST_CASE("forward: identity-activation single layer is the plain linear map") {
    const NetworkSpec spec = linear_model(3, 2);
    Params p = init_params(spec, {0, 1.0});
    p.W[0] << 1, 2, 3, 4, 5, 6;
    Eigen::MatrixXd X(2, 3);
    X << 1, 0, 0, 1, 1, 1;
    const Eigen::MatrixXd out = forward(spec, p, X);
    CHECK(out(0, 0) == 1.0);
    CHECK(out(0, 1) == 4.0);
    CHECK(out(1, 0) == 6.0);
    CHECK(out(1, 1) == 15.0);
}

TEST_CASE("forward: ReLU net maps zero input to zero without biases") {
    const NetworkSpec spec = NetworkSpec::mlp_ntp(4, {8, 8}, 2, /*bias=*/false);
    const Params p = init_params(spec, {7, 1.0});
    const Eigen::MatrixXd out = forward(spec, p, Eigen::MatrixXd::Zero(3, 4));
    CHECK(out.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward matches a hand-rolled evaluation on a 2->3->1 ReLU net") {
    const NetworkSpec spec = NetworkSpec::mlp_ntp(2, {3}, 1, /*bias=*/true);
    const Params p = init_params(spec, {1, 1.0});
    Eigen::MatrixXd X(4, 2);
    X << 0.3, -0.7, 1.1, 0.2, -0.5, -0.4, 0.0, 2.0;
    const Eigen::MatrixXd out = forward(spec, p, X);
    for (int n = 0; n < 4; ++n) {
        // Independent re-implementation, scalar arithmetic only.
        double acc = p.b[1][0];
        for (int j = 0; j < 3; ++j) {
            double h = p.b[0][j];
            for (int i = 0; i < 2; ++i) h += p.W[0](j, i) / std::sqrt(2.0) * X(n, i);
            acc += p.W[1](0, j) / std::sqrt(3.0) * std::max(h, 0.0);
        }
        CHECK(out(n, 0) == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("forward rejects shape mismatch and non-finite input") {
    const NetworkSpec spec = NetworkSpec::mlp_ntp(2, {3}, 1, false);
    const Params p = init_params(spec, {0, 1.0});
    CHECK_THROWS_AS(forward(spec, p, Eigen::MatrixXd::Zero(1, 5)), ShapeError);
    Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(1, 2);
    bad(0, 1) = std::nan("");
    CHECK_THROWS_AS(forward(spec, p, bad), InputError);
}

TEST_CASE("flatten/unflatten round trip is the identity") {
    auto [spec, params] = shallow_relu_net(16, 5);
    const Eigen::VectorXd theta = flatten(spec, params);
    Params copy = params;
    copy.W[0].setZero();
    unflatten(spec, theta, copy);
    CHECK((copy.W[0] - params.W[0]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((copy.W[1] - params.W[1]).cwiseAbs().maxCoeff() == 0.0);  // frozen untouched
}

TEST_CASE("jacobian of the linear model is the input, for any parameter value") {
    const NetworkSpec spec = linear_model(4);
    Params p = init_params(spec, {0, 1.0});
    Eigen::MatrixXd X(2, 4);
    X << 1, 2, 3, 4, -1, 0.5, 0, 2;
    for (double scale : {1.0, -3.0}) {
        p.W[0] *= scale;
        const Eigen::MatrixXd J = jacobian(spec, p, X);
        CHECK((J - X).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("jacobian matches central finite differences on random small nets") {
    Rng rng(42);
    for (int trial = 0; trial < 20; ++trial) {
        const int in = 2 + int(rng.index(3));
        const int hidden = 2 + int(rng.index(4));
        const int out = 1 + int(rng.index(2));
        const NetworkSpec spec = NetworkSpec::mlp_ntp(in, {hidden}, out, trial % 2 == 0);
        Params p = init_params(spec, {std::uint64_t(trial), 1.0});
        const Eigen::MatrixXd X = rng.normal_matrix(3, in);
        const Eigen::MatrixXd J = jacobian(spec, p, X);
        const Eigen::VectorXd theta0 = flatten(spec, p);
        const double h = 1e-5;
        double max_rel = 0.0;
        const double scale = J.cwiseAbs().maxCoeff() + 1e-12;
        for (Eigen::Index k = 0; k < theta0.size(); ++k) {
            Eigen::VectorXd theta = theta0;
            theta[k] = theta0[k] + h;
            unflatten(spec, theta, p);
            const Eigen::MatrixXd fp = forward(spec, p, X);
            theta[k] = theta0[k] - h;
            unflatten(spec, theta, p);
            const Eigen::MatrixXd fm = forward(spec, p, X);
            unflatten(spec, theta0, p);
            const Eigen::MatrixXd fd = (fp - fm) / (2 * h);
            for (Eigen::Index n = 0; n < X.rows(); ++n)
                for (int c = 0; c < out; ++c)
                    max_rel = std::max(max_rel,
                                       std::abs(J(n * out + c, k) - fd(n, c)) / scale);
        }
        CHECK(max_rel < 1e-4);
    }
}

TEST_CASE("jacobian refuses to materialize past the memory budget") {
    const NetworkSpec spec = NetworkSpec::mlp_ntp(2, {64}, 1, false);
    const Params p = init_params(spec, {0, 1.0});
    const Eigen::MatrixXd X = Eigen::MatrixXd::Ones(4, 2) * 0.5;
    CHECK_THROWS_AS(jacobian(spec, p, X, /*budget=*/16), CapacityError);
}

TEST_CASE("jvp/vjp agree with the dense Jacobian and are adjoint") {
    const NetworkSpec spec = NetworkSpec::mlp_ntp(2, {3}, 1, true);
    const Params p = init_params(spec, {9, 1.0});
    Rng rng(17);
    const Eigen::MatrixXd X = rng.normal_matrix(5, 2);
    const JacobianOperator op(spec, p, X);
    const Eigen::MatrixXd J = jacobian(spec, p, X);

    CHECK(op.jvp(Eigen::VectorXd::Zero(op.cols())).cwiseAbs().maxCoeff() == 0.0);

    for (int i = 0; i < 10; ++i) {
        const Eigen::VectorXd v = rng.normal_vector(op.cols());
        const Eigen::VectorXd u = rng.normal_vector(op.rows());
        CHECK((op.jvp(v) - J * v).cwiseAbs().maxCoeff() < 1e-12 * J.cwiseAbs().maxCoeff());
        const double lhs = u.dot(op.jvp(v));
        const double rhs = op.vjp(u).dot(v);
        CHECK(std::abs(lhs - rhs) <= 1e-10 * (std::abs(lhs) + 1.0));
    }

    CHECK_THROWS_AS(op.jvp(Eigen::VectorXd::Zero(op.cols() + 1)), ShapeError);
    CHECK_THROWS_AS(op.vjp(Eigen::VectorXd::Zero(op.rows() + 1)), ShapeError);
}

TEST_CASE("training with zero epochs is a no-op") {
    const NetworkSpec spec = NetworkSpec::mlp_ntp(2, {4}, 1, false);
    const Params p0 = init_params(spec, {0, 1.0});
    TrainData data;
    data.X = Eigen::MatrixXd::Ones(4, 2);
    data.Y = Eigen::VectorXd::Ones(4);
    TrainConfig cfg;
    cfg.epochs = 0;
    const TrainResult r = train(spec, p0, data, cfg);
    CHECK((flatten(spec, r.params) - flatten(spec, p0)).norm() == 0.0);
}

TEST_CASE("SGD on the linear model reaches the least-squares solution") {
    const NetworkSpec spec = linear_model(2);
    Params p0 = init_params(spec, {0, 1.0});
    p0.W[0].setZero();
    Rng rng(3);
    TrainData data;
    data.X = rng.normal_matrix(32, 2);
    Eigen::VectorXd w_true(2);
    w_true << 1.5, -0.75;
    data.Y = data.X * w_true;
    TrainConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.batch_size = 32;  // full batch: plain gradient descent
    cfg.epochs = 2000;
    const TrainResult r = train(spec, p0, data, cfg);
    const Eigen::VectorXd w_ls =
        (data.X.transpose() * data.X).ldlt().solve(data.X.transpose() * data.Y);
    CHECK((r.params.W[0].transpose() - w_ls).norm() < 1e-6);
}

TEST_CASE("overparametrized net interpolates a small problem") {
    // The sinusoid target has most of its mass in small-eigenvalue kernel
    // directions, so full interpolation genuinely needs many epochs.
    const SyntheticProblem prob = synthetic_problem(8, 0);
    auto [spec, p0] = shallow_relu_net(2048, 1);
    TrainData data;
    data.X = prob.X;
    data.Y = prob.y;
    TrainConfig cfg;
    cfg.learning_rate = 1.5;
    cfg.momentum = 0.9;
    cfg.batch_size = 8;
    cfg.epochs = 100000;
    cfg.shuffle_seed = 1;
    const TrainResult r = train(spec, p0, data, cfg);
    CHECK(r.epoch_loss.back() < 1e-3);
}

TEST_CASE("training is bit-deterministic under identical seeds") {
    const NetworkSpec spec = NetworkSpec::mlp_sp(3, {8}, 2, true);
    const Params p0 = init_params(spec, {4, 1.0});
    Rng rng(8);
    TrainData data;
    data.X = rng.normal_matrix(20, 3);
    data.labels = Eigen::VectorXi::Zero(20);
    for (int i = 0; i < 20; ++i) data.labels[i] = i % 2;
    TrainConfig cfg;
    cfg.optimizer = Optimizer::AdamW;
    cfg.loss = Loss::CrossEntropy;
    cfg.learning_rate = 1e-3;
    cfg.weight_decay = 1e-2;
    cfg.batch_size = 8;
    cfg.epochs = 5;
    cfg.shuffle_seed = 77;
    const Eigen::VectorXd a = train(spec, p0, data, cfg).theta;
    const Eigen::VectorXd b = train(spec, p0, data, cfg).theta;
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("diverging training reports the last finite epoch") {
    const NetworkSpec spec = linear_model(1);
    Params p0 = init_params(spec, {0, 1.0});
    p0.W[0](0, 0) = 1.0;
    TrainData data;
    data.X = Eigen::MatrixXd::Ones(4, 1) * 10.0;
    data.Y = Eigen::VectorXd::Zero(4);
    TrainConfig cfg;
    cfg.learning_rate = 1e6;  // wildly unstable step
    cfg.batch_size = 4;
    cfg.epochs = 400;
    CHECK_THROWS_AS(train(spec, p0, data, cfg), TrainingDivergenceError);
}

TEST_CASE("linearized prediction is exact at the expansion point and for linear nets") {
    const NetworkSpec relu = NetworkSpec::mlp_ntp(2, {5}, 1, true);
    const Params p0 = init_params(relu, {2, 1.0});
    Rng rng(5);
    const Eigen::MatrixXd X = rng.normal_matrix(6, 2);
    const Eigen::VectorXd theta0 = flatten(relu, p0);
    CHECK((linearized_predict(relu, p0, X, theta0) - forward(relu, p0, X))
              .cwiseAbs()
              .maxCoeff() < 1e-14);

    const NetworkSpec lin = linear_model(2);
    Params q0 = init_params(lin, {0, 1.0});
    const Eigen::VectorXd phi = flatten(lin, q0) + rng.normal_vector(2);
    Params q1 = q0;
    unflatten(lin, phi, q1);
    CHECK((linearized_predict(lin, q0, X, phi) - forward(lin, q1, X)).cwiseAbs().maxCoeff() <
          1e-12);
}

TEST_CASE("linearization error is second order in the parameter step") {
    const NetworkSpec spec = NetworkSpec::mlp_ntp(2, {16}, 1, true);
    const Params p0 = init_params(spec, {6, 1.0});
    Rng rng(13);
    const Eigen::MatrixXd X = rng.normal_matrix(4, 2);
    const Eigen::VectorXd theta0 = flatten(spec, p0);
    Eigen::VectorXd dir = rng.normal_vector(theta0.size());
    dir.normalize();
    // Error at step eps vs 10*eps should scale roughly quadratically; allow a
    // generous factor since ReLU kinks make the bound only typical.
    double err_small = 0.0, err_big = 0.0;
    for (double eps : {1e-3, 1e-2}) {
        Params p = p0;
        unflatten(spec, theta0 + eps * dir, p);
        const double err = (forward(spec, p, X) -
                            linearized_predict(spec, p0, X, theta0 + eps * dir))
                               .cwiseAbs()
                               .maxCoeff();
        (eps == 1e-3 ? err_small : err_big) = err;
    }
    CHECK(err_small <= err_big + 1e-12);
    CHECK(err_small < 1e-4);
}
