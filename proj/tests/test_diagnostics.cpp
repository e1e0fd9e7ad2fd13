#include <doctest.h>

#include <cmath>

#include <Eigen/Dense>

#include "ntklens/diagnostics.hpp"
#include "ntklens/errors.hpp"
#include "ntklens/rng.hpp"
#include "ntklens/spectral.hpp"

using namespace ntklens;

namespace {

KernelMatrix wrap(const Eigen::MatrixXd& M) {
    KernelMatrix K;
    K.M = M;
    K.provenance = KernelProvenance::Analytic;
    return K;
}

NetworkSpec linear_model(int in) {
    NetworkSpec spec;
    LayerSpec layer;
    layer.in = in;
    layer.out = 1;
    layer.scale = WeightScale::None;
    spec.layers = {layer};
    return spec;
}

}  // namespace

TEST_CASE("synthetic problem: unit-norm rows, noiseless branch, determinism") {
    const SyntheticProblem a = synthetic_problem(16, 5);
    for (int n = 0; n < 16; ++n)
        CHECK(a.X.row(n).norm() == doctest::Approx(1.0).epsilon(1e-12));

    const SyntheticProblem noiseless = synthetic_problem(16, 5, true, /*noise_scale=*/0.0);
    // With the noise term zeroed, y must equal the target function of the raw
    // (pre-normalization) inputs; verify against the stored noise draws.
    for (int n = 0; n < 16; ++n)
        CHECK(a.y[n] == doctest::Approx(noiseless.y[n] + 0.1 * a.eps[n]).epsilon(1e-12));

    const SyntheticProblem b = synthetic_problem(16, 5);
    CHECK((a.X - b.X).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.y - b.y).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("shallow diagnostic model: P = 2m and frozen sign layer") {
    auto [spec, params] = shallow_relu_net(4, 0);
    CHECK(spec.param_count() == 8);
    for (int j = 0; j < 4; ++j)
        CHECK(std::abs(params.W[1](0, j)) == 1.0);
}

TEST_CASE("shallow model output variance is width-stable (NTK scaling)") {
    Eigen::MatrixXd x(1, 2);
    x << 0.6, 0.8;
    std::vector<double> vars;
    for (int m : {32, 512}) {
        double v = 0.0;
        const int trials = 10000;
        for (std::uint64_t s = 0; s < trials; ++s) {
            auto [spec, p] = shallow_relu_net(m, s);
            v += std::pow(forward(spec, p, x)(0, 0), 2);
        }
        vars.push_back(v / trials);
    }
    CHECK(vars[0] == doctest::Approx(vars[1]).epsilon(0.1));
}

TEST_CASE("gram_min_eigenvalue: identity, near-singular diagonal, rank deficiency") {
    CHECK(gram_min_eigenvalue(wrap(Eigen::MatrixXd::Identity(16, 16))) ==
          doctest::Approx(1.0).epsilon(1e-14));

    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(2, 2);
    D(0, 0) = 3.0;
    D(1, 1) = 1e-4;
    CHECK(gram_min_eigenvalue(wrap(D)) == doctest::Approx(1e-4).epsilon(1e-10));

    Rng rng(3);
    const Eigen::MatrixXd A = rng.normal_matrix(16, 8);
    CHECK(gram_min_eigenvalue(wrap(A * A.transpose())) <= 1e-10);
}

TEST_CASE("dense and Lanczos smallest eigenvalues agree") {
    Rng rng(4);
    for (int n : {8, 32, 64}) {
        const Eigen::MatrixXd A = rng.normal_matrix(n, 2 * n);
        const KernelMatrix K = wrap(A * A.transpose() / (2.0 * n));
        const double dense = gram_min_eigenvalue(K, EigMethod::Dense);
        const double iter = gram_min_eigenvalue(K, EigMethod::Iterative);
        CHECK(iter == doctest::Approx(dense).epsilon(1e-6));
    }
}

TEST_CASE("stability radius arithmetic and failure when the Gram floor is gone") {
    Eigen::VectorXd y(2), f0(2);
    y << 1.0, 0.0;
    f0 << 0.0, 0.0;
    CHECK(stability_radius(9.0, y, f0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(stability_radius(4.0, y, y) == 0.0);
    CHECK_THROWS_AS(stability_radius(0.0, y, f0), ConditionViolatedError);
    CHECK_THROWS_AS(stability_radius(-1.0, y, f0), ConditionViolatedError);
}

TEST_CASE("sphere sampling: exact radius, degenerate case, centered mean") {
    Rng rng(5);
    const Eigen::VectorXd theta0 = rng.normal_vector(40);

    for (const auto& s : sample_sphere(theta0, 0.0, 1, 3))
        CHECK((s - theta0).norm() == 0.0);

    const double rho = 2.5;
    for (const auto& s : sample_sphere(theta0, rho, 2, 5))
        CHECK((s - theta0).norm() == doctest::Approx(rho).epsilon(1e-12));

    // Empirical mean returns to the center within a 3-sigma Monte-Carlo band.
    const int k = 10000;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(40);
    for (const auto& s : sample_sphere(theta0, rho, 3, k)) mean += s - theta0;
    mean /= double(k);
    // Each coordinate has variance rho^2/P across samples.
    const double sigma = rho / std::sqrt(40.0 * k);
    CHECK(mean.cwiseAbs().maxCoeff() < 5.0 * sigma);
}

TEST_CASE("jacobian deviation: zero cases and the dense-SVD oracle") {
    const NetworkSpec lin = linear_model(3);
    Params q0 = init_params(lin, {0, 1.0});
    Params q1 = q0;
    q1.W[0].array() += 2.0;
    Rng rng(6);
    const Eigen::MatrixXd X = rng.normal_matrix(5, 3);
    CHECK(jacobian_deviation(lin, q0, q0, X) == 0.0);
    CHECK(jacobian_deviation(lin, q1, q0, X) == 0.0);  // constant Jacobian

    const NetworkSpec spec = NetworkSpec::mlp_ntp(3, {12}, 1, true);
    const Params p0 = init_params(spec, {1, 1.0});
    Params p1 = p0;
    const Eigen::VectorXd theta = flatten(spec, p0);
    unflatten(spec, theta + 0.3 * rng.normal_vector(theta.size()).normalized() *
                                theta.norm(),
              p1);
    const Eigen::MatrixXd Xs = rng.normal_matrix(4, 3);
    const Eigen::MatrixXd dJ = jacobian(spec, p1, Xs) - jacobian(spec, p0, Xs);
    const double dense = Eigen::JacobiSVD<Eigen::MatrixXd>(dJ).singularValues()(0);
    const double powered = jacobian_deviation(spec, p1, p0, Xs, NormMethod::PowerIteration);
    CHECK(powered == doctest::Approx(dense).epsilon(1e-6));
    CHECK(jacobian_deviation(spec, p0, p1, Xs, NormMethod::PowerIteration) ==
          doctest::Approx(powered).epsilon(1e-8));  // symmetric in the swap
}

TEST_CASE("stability proxy on an exactly linear model: C' = 0, verdict possible") {
    const NetworkSpec lin = linear_model(2);
    Params p0 = init_params(lin, {0, 1.0});
    Rng rng(7);
    Eigen::MatrixXd X = rng.normal_matrix(8, 2);
    // Make the Gram strictly positive definite (full-rank inputs, N <= P would
    // be needed; with N=8 > P=2 the Gram is rank-2, so use 2 samples).
    X = X.topRows(2);
    const Eigen::VectorXd y = rng.normal_vector(2);
    const StabilityReport report = stability_proxy(lin, p0, X, y, 4, 99);
    for (const double c : report.c_prime) CHECK(c == 0.0);
    CHECK(report.verdict == Verdict::StablePossible);
}

TEST_CASE("stability report JSON round trip is lossless") {
    const SyntheticProblem prob = synthetic_problem(8, 2);
    auto [spec, p0] = shallow_relu_net(128, 3);
    StabilityReport r = stability_proxy(spec, p0, prob.X, prob.y, 3, 12);
    r.width = 128;
    r.depth = 2;
    r.seed = 3;
    r.analytic_lambda0 = gram_min_eigenvalue(shallow_ntk_gram(prob.X));
    const StabilityReport back = StabilityReport::from_json(r.to_json());
    CHECK(back.width == r.width);
    CHECK(back.lambda_min == r.lambda_min);
    CHECK(back.rho == r.rho);
    CHECK(back.c_prime == r.c_prime);
    CHECK(back.deviation_norms == r.deviation_norms);
    CHECK(back.verdict == r.verdict);
    CHECK(back.analytic_lambda0.has_value());
    CHECK(*back.analytic_lambda0 == *r.analytic_lambda0);
}

TEST_CASE("rho is recomputable from the stored report fields") {
    const SyntheticProblem prob = synthetic_problem(16, 0);
    auto [spec, p0] = shallow_relu_net(512, 0);
    const StabilityReport r = stability_proxy(spec, p0, prob.X, prob.y, 2, 1);
    const Eigen::VectorXd f0 = forward(spec, p0, prob.X).col(0);
    const double rho = 3.0 * (prob.y - f0).norm() / std::sqrt(r.lambda_min);
    CHECK(r.rho == doctest::Approx(rho).epsilon(1e-12));
    for (std::size_t i = 0; i < r.c_prime.size(); ++i)
        CHECK(r.c_prime[i] ==
              doctest::Approx(3.0 * r.deviation_norms[i] / std::sqrt(r.lambda_min))
                  .epsilon(1e-12));
}

TEST_CASE("C' is invariant under reordering the training samples") {
    // Wide enough that lambda_min is far from the dense solver's noise floor;
    // at small widths the Gram matrix is numerically singular and lambda_min
    // is not a stable function of the row order.
    const SyntheticProblem prob = synthetic_problem(8, 4);
    auto [spec, p0] = shallow_relu_net(1024, 7);
    Eigen::MatrixXd Xr(8, 2);
    Eigen::VectorXd yr(8);
    const int perm[8] = {5, 2, 7, 0, 3, 6, 1, 4};
    for (int i = 0; i < 8; ++i) {
        Xr.row(i) = prob.X.row(perm[i]);
        yr[i] = prob.y[perm[i]];
    }
    const StabilityReport a = stability_proxy(spec, p0, prob.X, prob.y, 3, 11);
    const StabilityReport b = stability_proxy(spec, p0, Xr, yr, 3, 11);
    CHECK(a.lambda_min == doctest::Approx(b.lambda_min).epsilon(1e-9));
    CHECK(a.rho == doctest::Approx(b.rho).epsilon(1e-9));
    for (std::size_t i = 0; i < a.c_prime.size(); ++i)
        CHECK(a.c_prime[i] == doctest::Approx(b.c_prime[i]).epsilon(1e-6));
}

TEST_CASE("width sweep: one row per seed, failures recorded, lambda_min grows") {
    const SyntheticProblem prob = synthetic_problem(16, 0);
    const SweepTable table = width_sweep({64, 1024}, {2}, {1, 2, 3}, prob, 2);
    CHECK(table.cells.size() == 6);
    std::vector<double> lm64, lm1024;
    for (const auto& cell : table.cells) {
        if (!cell.ok) continue;  // a seed can land below the Gram transition
        (cell.width == 64 ? lm64 : lm1024).push_back(cell.report.lambda_min);
        CHECK(cell.report.analytic_lambda0.has_value());
    }
    REQUIRE(!lm1024.empty());
    double max64 = 0.0, min1024 = lm1024[0];
    for (double v : lm64) max64 = std::max(max64, v);
    for (double v : lm1024) min1024 = std::min(min1024, v);
    CHECK(min1024 > max64);
}

TEST_CASE("spectral utilities agree with dense references") {
    Rng rng(15);
    const Eigen::MatrixXd A = rng.normal_matrix(12, 12);
    const Eigen::MatrixXd S = A * A.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);

    const LinOp op = [&](const Eigen::VectorXd& v) { return S * v; };
    CHECK(largest_eigenvalue_power(op, 12) ==
          doctest::Approx(es.eigenvalues().maxCoeff()).epsilon(1e-6));
    CHECK(smallest_eigenvalue_lanczos(op, 12) ==
          doctest::Approx(es.eigenvalues().minCoeff()).epsilon(1e-6));

    const Eigen::MatrixXd M = rng.normal_matrix(6, 20);
    CHECK(spectral_norm_dense(M) ==
          doctest::Approx(Eigen::JacobiSVD<Eigen::MatrixXd>(M).singularValues()(0))
              .epsilon(1e-12));
}
