#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "ntklens/network.hpp"

namespace ntklens {

enum class KernelProvenance { Empirical, Analytic };

struct KernelMatrix {
    Eigen::MatrixXd M;
    KernelProvenance provenance = KernelProvenance::Empirical;
    std::uint64_t fingerprint = 0;  // hash of the generating inputs

    Eigen::Index size() const { return M.rows(); }

    // Invariants: symmetry to 1e-10, non-negative diagonal, eigenvalues above
    // -1e-8. Throws NumericError on violation.
    void validate_psd(double eig_tol = 1e-8) const;
};

std::uint64_t fingerprint_matrix(const Eigen::MatrixXd& X);

// Empirical NTK Gram matrix K(X, X) = J J^T at the given parameters.
// Strategy: dense Jacobian outer product when N*C*P fits the budget,
// otherwise an exact layer-blocked accumulation that never materializes J
// (memory O(N*C*max layer width)).
KernelMatrix entk(const NetworkSpec& spec, const Params& params, const Eigen::MatrixXd& X,
                  Eigen::Index dense_budget = Eigen::Index(1) << 26);

// Cross-kernel block K(Xa, Xb) = J(Xa) J(Xb)^T, (Na*C) x (Nb*C).
Eigen::MatrixXd entk_cross(const NetworkSpec& spec, const Params& params,
                           const Eigen::MatrixXd& Xa, const Eigen::MatrixXd& Xb);

// Counts silent clips of the arc-cosine argument; anything past 1e-6 from
// [-1, 1] raises NumericError instead.
struct ClipCounter {
    long clips = 0;
};

struct NtkValue {
    double nngp;  // Sigma^L
    double ntk;   // Theta^L
};

// Analytic NTK/NNGP of a depth-L fully connected ReLU network in the NTK
// parametrization (last layer linear), with per-layer bias variance beta2.
// Depth counts affine layers, matching NetworkSpec::depth().
NtkValue ntk_relu_analytic(int depth, const Eigen::VectorXd& x, const Eigen::VectorXd& xp,
                           double beta2, ClipCounter* clips = nullptr);

KernelMatrix ntk_relu_gram(int depth, const Eigen::MatrixXd& X, double beta2,
                           ClipCounter* clips = nullptr);
Eigen::MatrixXd ntk_relu_cross(int depth, const Eigen::MatrixXd& Xa,
                               const Eigen::MatrixXd& Xb, double beta2,
                               ClipCounter* clips = nullptr);

// NTK-GP regression posterior conditioned on (X, y) with prior mean f0 and
// observation noise sigma2 (zero allowed; jitter covers conditioning).
struct GPPosterior {
    Eigen::MatrixXd chol;       // lower Cholesky factor of K + sigma2 I + jitter I
    Eigen::VectorXd alpha;      // (K + sigma2 I)^{-1} (y - f0)
    Eigen::VectorXd residual;   // y - f0
    double sigma2 = 0.0;
    double jitter = 0.0;                  // jitter actually applied
    std::vector<double> jitters_tried;    // ladder of attempted jitters

    // Posterior mean at a point with cross-kernel vector k = K(x, X) and prior
    // mean f0_x.
    double mean(const Eigen::VectorXd& k, double f0_x) const;

    // Posterior covariance of two points given their cross-kernel vectors and
    // prior kernel value K(a, b).
    double cov(const Eigen::VectorXd& ka, const Eigen::VectorXd& kb, double k_ab) const;
};

GPPosterior gp_posterior(const KernelMatrix& K_train, const Eigen::VectorXd& y,
                         const Eigen::VectorXd& f0, double sigma2);

// Solves K v = r (the unique minimizer of 1/2 v^T K v - r^T v when K > 0).
Eigen::VectorXd solve_quadratic(const KernelMatrix& K, const Eigen::VectorXd& r);

// Discrete-time kernel gradient descent on the training outputs for square
// loss: f_{t+1} = f_t - (eta/N) K (f_t - y). Returns the trajectory f_0..f_T.
// Throws StabilityError when eta >= 2/lambda_max(K).
std::vector<Eigen::VectorXd> kernel_gradient_descent(const KernelMatrix& K,
                                                     const Eigen::VectorXd& y,
                                                     const Eigen::VectorXd& f0, double eta,
                                                     int steps);

}  // namespace ntklens
