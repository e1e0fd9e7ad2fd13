#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ntklens/kernel.hpp"
#include "ntklens/network.hpp"
#include "ntklens/spectral.hpp"

namespace ntklens {

// Synthetic regression problem: x_n ~ U([0,1]^2) normalized to the unit
// sphere, y_n = sin(2 pi ([x]_1 + [x]_2)) + 0.1 eps_n.
struct SyntheticProblem {
    Eigen::MatrixXd X;   // N x 2, rows unit-norm
    Eigen::VectorXd y;   // N
    Eigen::VectorXd eps; // the standard-normal noise draws actually used
    std::uint64_t seed = 0;
};

// `targets_from_raw_inputs`: compute y from the pre-normalization inputs
// (generation order as listed), false computes y after normalization.
SyntheticProblem synthetic_problem(int N, std::uint64_t seed,
                                   bool targets_from_raw_inputs = true,
                                   double noise_scale = 0.1);

// Shallow two-layer diagnostic model f(x) = (1/sqrt(m)) W2 ReLU(W1 x) with
// trainable Gaussian W1 (std nu, unscaled forward) and frozen Rademacher W2.
// P = input_dim * m trainable parameters.
std::pair<NetworkSpec, Params> shallow_relu_net(int m, std::uint64_t seed, int input_dim = 2,
                                                double nu = 1.0);

// Depth-L ReLU MLP of equal hidden widths in the NTK parametrization.
NetworkSpec deep_relu_mlp(int depth, int width, int input_dim = 2, bool bias = true);

// Analytic NTK Gram of the shallow diagnostic model (layer-1 training only):
// K(x, x') = nu^2 (x . x') (pi - arccos(corr)) / (2 pi) for unit-norm inputs.
KernelMatrix shallow_ntk_gram(const Eigen::MatrixXd& X, double nu = 1.0);

enum class EigMethod { Dense, Iterative };

double gram_min_eigenvalue(const KernelMatrix& K, EigMethod method = EigMethod::Dense);

// rho = 3 ||y - f0||_2 / sqrt(lambda_min); throws ConditionViolatedError when
// lambda_min <= 0.
double stability_radius(double lambda_min, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& f0);

// k points uniform on the sphere ||theta - theta0|| = rho (Gaussian direction,
// exact radius).
std::vector<Eigen::VectorXd> sample_sphere(const Eigen::VectorXd& theta0, double rho,
                                           std::uint64_t seed, int k);

enum class NormMethod { Auto, Dense, PowerIteration };

// Spectral norm of J(theta) - J(theta0) on the batch X.
double jacobian_deviation(const NetworkSpec& spec, const Params& params,
                          const Params& params0, const Eigen::MatrixXd& X,
                          NormMethod method = NormMethod::Auto);

enum class Verdict { StablePossible, StableViolated };

struct StabilityReport {
    int width = 0;
    int depth = 0;
    double lambda_min = 0.0;
    double rho = 0.0;
    std::vector<double> deviation_norms;      // ||J(theta_i) - J(0)||_2
    std::vector<double> c_prime;              // 3 dev / sqrt(lambda_min)
    Verdict verdict = Verdict::StablePossible;
    std::uint64_t seed = 0;                   // init seed
    std::uint64_t perturbation_seed = 0;
    std::optional<double> analytic_lambda0;   // lambda_min of the analytic NTK Gram

    std::string to_json() const;
    static StabilityReport from_json(const std::string& text);
};

// Runs the full condition check: lambda_min(G(0)), rho, k sphere samples,
// deviation norms, C' values and the verdict (violated iff any C' > 1/2).
StabilityReport stability_proxy(const NetworkSpec& spec, const Params& params0,
                                const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                int k_samples, std::uint64_t perturbation_seed);

struct SweepCell {
    int width = 0;
    int depth = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;  // set when the cell failed
    StabilityReport report;
};

struct SweepTable {
    std::vector<SweepCell> cells;
};

// Per (width, depth, seed) stability reports on the given problem. Cell
// failures are recorded and the sweep continues. Depth 2 uses the shallow
// diagnostic model; larger depths the equal-width NTP MLP.
SweepTable width_sweep(const std::vector<int>& widths, const std::vector<int>& depths,
                       const std::vector<std::uint64_t>& seeds, const SyntheticProblem& problem,
                       int k_samples = 5, bool deep_bias = true);

}  // namespace ntklens
