#pragma once

#include <cstdint>
#include <functional>

#include <Eigen/Core>

namespace ntklens {

using LinOp = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// Smallest eigenvalue of a dense symmetric matrix.
double smallest_eigenvalue_dense(const Eigen::MatrixXd& K);

// Smallest eigenvalue of a symmetric operator given only matrix-vector
// products. Lanczos with full reorthogonalization, applied to a spectral
// shift so the target becomes the extreme eigenvalue. Relative tolerance on
// the Ritz value. Throws ConvergenceError when max_iter is exhausted.
double smallest_eigenvalue_lanczos(const LinOp& apply, Eigen::Index n, double rel_tol = 1e-8,
                                   int max_iter = 500, std::uint64_t seed = 0x5eed);

// Largest eigenvalue of a symmetric PSD operator (power iteration).
double largest_eigenvalue_power(const LinOp& apply, Eigen::Index n, double rel_tol = 1e-10,
                                int max_iter = 10000, std::uint64_t seed = 0x5eed);

// Spectral norm of a (rows x cols) linear map M given products with M and
// M^T, via power iteration on M M^T. Runs `restarts` independently seeded
// starts and returns the largest estimate; throws ConvergenceError (with the
// iterate history in the message) when an iteration stagnates without
// meeting rel_tol.
double spectral_norm_power(const LinOp& apply, const LinOp& apply_adjoint, Eigen::Index rows,
                           double rel_tol = 1e-6, int max_iter = 2000, int restarts = 2,
                           std::uint64_t seed = 0x5eed);

// Dense singular-value route for small problems.
double spectral_norm_dense(const Eigen::MatrixXd& M);

}  // namespace ntklens
