#include "ntklens/diagnostics.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "ntklens/rng.hpp"

namespace ntklens {

SyntheticProblem synthetic_problem(int N, std::uint64_t seed, bool targets_from_raw_inputs,
                                   double noise_scale) {
    if (N < 1) throw ConfigError("synthetic problem needs N >= 1");
    SyntheticProblem prob;
    prob.seed = seed;
    prob.X.resize(N, 2);
    prob.y.resize(N);
    prob.eps.resize(N);
    Rng rng(seed);
    for (int n = 0; n < N; ++n) {
        Eigen::Vector2d x(rng.uniform(), rng.uniform());
        prob.eps[n] = rng.normal();
        const Eigen::Vector2d raw = x;
        x.normalize();
        const Eigen::Vector2d& basis = targets_from_raw_inputs ? raw : x;
        prob.y[n] =
            std::sin(2.0 * M_PI * (basis[0] + basis[1])) + noise_scale * prob.eps[n];
        prob.X.row(n) = x;
    }
    return prob;
}

std::pair<NetworkSpec, Params> shallow_relu_net(int m, std::uint64_t seed, int input_dim,
                                                double nu) {
    if (m < 1) throw ConfigError("width must be >= 1");
    NetworkSpec spec;
    spec.layers.push_back({input_dim, m, Activation::Relu, false, true, WeightScale::None,
                           InitDist::Gaussian, 1.0});
    spec.layers.push_back({m, 1, Activation::Identity, false, false,
                           WeightScale::NtkSqrtFanIn, InitDist::Rademacher, 1.0});
    spec.validate();
    Params params = init_params(spec, {seed, nu});
    return {spec, params};
}

NetworkSpec deep_relu_mlp(int depth, int width, int input_dim, bool bias) {
    if (depth < 2) throw ConfigError("deep MLP needs depth >= 2");
    std::vector<int> hidden(std::size_t(depth) - 1, width);
    return NetworkSpec::mlp_ntp(input_dim, hidden, 1, bias);
}

KernelMatrix shallow_ntk_gram(const Eigen::MatrixXd& X, double nu) {
    const Eigen::Index N = X.rows();
    KernelMatrix K;
    K.provenance = KernelProvenance::Analytic;
    K.fingerprint = fingerprint_matrix(X);
    K.M.resize(N, N);
    for (Eigen::Index i = 0; i < N; ++i)
        for (Eigen::Index j = i; j < N; ++j) {
            const double ni = X.row(i).norm(), nj = X.row(j).norm();
            double rho = ni > 0 && nj > 0 ? X.row(i).dot(X.row(j)) / (ni * nj) : 0.0;
            rho = std::clamp(rho, -1.0, 1.0);
            const double v =
                nu * nu * X.row(i).dot(X.row(j)) * (M_PI - std::acos(rho)) / (2.0 * M_PI);
            K.M(i, j) = v;
            K.M(j, i) = v;
        }
    return K;
}

double gram_min_eigenvalue(const KernelMatrix& K, EigMethod method) {
    if (K.M.rows() != K.M.cols()) throw ShapeError("Gram matrix is not square");
    if (method == EigMethod::Dense) return smallest_eigenvalue_dense(K.M);
    const Eigen::MatrixXd& M = K.M;
    return smallest_eigenvalue_lanczos(
        [&M](const Eigen::VectorXd& v) -> Eigen::VectorXd { return M * v; }, M.rows());
}

double stability_radius(double lambda_min, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& f0) {
    if (!(lambda_min > 0.0))
        throw ConditionViolatedError(
            "lambda_min(G(0)) = " + std::to_string(lambda_min) +
            " is not positive; the Gram condition already fails");
    return 3.0 * (y - f0).norm() / std::sqrt(lambda_min);
}

std::vector<Eigen::VectorXd> sample_sphere(const Eigen::VectorXd& theta0, double rho,
                                           std::uint64_t seed, int k) {
    if (rho < 0.0) throw ConfigError("sphere radius must be >= 0");
    std::vector<Eigen::VectorXd> samples;
    samples.reserve(std::size_t(k));
    Rng rng(seed);
    for (int i = 0; i < k; ++i) {
        Eigen::VectorXd dir = rng.normal_vector(theta0.size());
        const double norm = dir.norm();
        if (norm == 0.0 || rho == 0.0) {
            samples.push_back(theta0);
            continue;
        }
        samples.push_back(theta0 + (rho / norm) * dir);
    }
    return samples;
}

double jacobian_deviation(const NetworkSpec& spec, const Params& params,
                          const Params& params0, const Eigen::MatrixXd& X,
                          NormMethod method) {
    const Eigen::Index NC = X.rows() * spec.output_dim();
    const Eigen::Index P = spec.param_count();
    const bool dense = method == NormMethod::Dense ||
                       (method == NormMethod::Auto && NC * P <= (Eigen::Index(1) << 22));
    if (dense) {
        return spectral_norm_dense(jacobian(spec, params, X) - jacobian(spec, params0, X));
    }
    const JacobianOperator op(spec, params, X);
    const JacobianOperator op0(spec, params0, X);
    const LinOp apply = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
        return op.jvp(v) - op0.jvp(v);
    };
    const LinOp apply_adjoint = [&](const Eigen::VectorXd& u) -> Eigen::VectorXd {
        return op.vjp(u) - op0.vjp(u);
    };
    return spectral_norm_power(apply, apply_adjoint, NC);
}

std::string StabilityReport::to_json() const {
    nlohmann::json j;
    j["width"] = width;
    j["depth"] = depth;
    j["lambda_min"] = lambda_min;
    j["rho"] = rho;
    j["deviation_norms"] = deviation_norms;
    j["c_prime"] = c_prime;
    j["verdict"] = verdict == Verdict::StableViolated ? "stable-violated" : "stable-possible";
    j["seed"] = seed;
    j["perturbation_seed"] = perturbation_seed;
    if (analytic_lambda0) j["analytic_lambda0"] = *analytic_lambda0;
    return j.dump();
}

StabilityReport StabilityReport::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    StabilityReport r;
    r.width = j.at("width").get<int>();
    r.depth = j.at("depth").get<int>();
    r.lambda_min = j.at("lambda_min").get<double>();
    r.rho = j.at("rho").get<double>();
    r.deviation_norms = j.at("deviation_norms").get<std::vector<double>>();
    r.c_prime = j.at("c_prime").get<std::vector<double>>();
    r.verdict = j.at("verdict").get<std::string>() == "stable-violated"
                    ? Verdict::StableViolated
                    : Verdict::StablePossible;
    r.seed = j.at("seed").get<std::uint64_t>();
    r.perturbation_seed = j.at("perturbation_seed").get<std::uint64_t>();
    if (j.contains("analytic_lambda0"))
        r.analytic_lambda0 = j.at("analytic_lambda0").get<double>();
    return r;
}

StabilityReport stability_proxy(const NetworkSpec& spec, const Params& params0,
                                const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                int k_samples, std::uint64_t perturbation_seed) {
    StabilityReport report;
    report.depth = spec.depth();
    report.width = spec.layers.front().out;
    report.perturbation_seed = perturbation_seed;

    const KernelMatrix G0 = entk(spec, params0, X);
    report.lambda_min = gram_min_eigenvalue(G0);
    const Eigen::VectorXd f0 = forward(spec, params0, X).col(0);
    report.rho = stability_radius(report.lambda_min, y, f0);

    const Eigen::VectorXd theta0 = flatten(spec, params0);
    const auto thetas = sample_sphere(theta0, report.rho, perturbation_seed, k_samples);
    const double sqrt_lambda = std::sqrt(report.lambda_min);
    Params params = params0;
    for (const auto& theta : thetas) {
        unflatten(spec, theta, params);
        const double dev = jacobian_deviation(spec, params, params0, X);
        report.deviation_norms.push_back(dev);
        report.c_prime.push_back(3.0 * dev / sqrt_lambda);
    }
    bool violated = false;
    for (double c : report.c_prime)
        if (c > 0.5) violated = true;
    report.verdict = violated ? Verdict::StableViolated : Verdict::StablePossible;
    return report;
}

SweepTable width_sweep(const std::vector<int>& widths, const std::vector<int>& depths,
                       const std::vector<std::uint64_t>& seeds,
                       const SyntheticProblem& problem, int k_samples, bool deep_bias) {
    if (widths.empty() || depths.empty() || seeds.empty())
        throw ConfigError("sweep grids must be non-empty");
    SweepTable table;
    for (int depth : depths) {
        for (int width : widths) {
            for (std::uint64_t seed : seeds) {
                SweepCell cell;
                cell.width = width;
                cell.depth = depth;
                cell.seed = seed;
                try {
                    NetworkSpec spec;
                    Params params;
                    if (depth == 2) {
                        std::tie(spec, params) =
                            shallow_relu_net(width, derive_seed(seed, "init"));
                    } else {
                        spec = deep_relu_mlp(depth, width, int(problem.X.cols()), deep_bias);
                        params = init_params(spec, {derive_seed(seed, "init"), 1.0});
                    }
                    cell.report = stability_proxy(spec, params, problem.X, problem.y,
                                                  k_samples, derive_seed(seed, "perturbation"));
                    cell.report.seed = seed;
                    if (depth == 2)
                        cell.report.analytic_lambda0 =
                            gram_min_eigenvalue(shallow_ntk_gram(problem.X));
                    cell.ok = true;
                } catch (const std::exception& e) {
                    cell.ok = false;
                    cell.error = e.what();
                }
                table.cells.push_back(std::move(cell));
            }
        }
    }
    return table;
}

}  // namespace ntklens
