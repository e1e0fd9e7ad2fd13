#include "ntklens/spectral.hpp"

#include <cmath>
#include <sstream>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "ntklens/errors.hpp"
#include "ntklens/rng.hpp"

namespace ntklens {

double smallest_eigenvalue_dense(const Eigen::MatrixXd& K) {
    if (K.rows() != K.cols()) throw ShapeError("matrix is not square");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

double largest_eigenvalue_power(const LinOp& apply, Eigen::Index n, double rel_tol,
                                int max_iter, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::VectorXd v = rng.normal_vector(n).normalized();
    double lambda = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        Eigen::VectorXd w = apply(v);
        const double nw = w.norm();
        if (nw == 0.0) return 0.0;
        w /= nw;
        const double next = w.dot(apply(w));
        if (it > 0 && std::abs(next - lambda) <= rel_tol * std::max(std::abs(next), 1e-300)) {
            return next;
        }
        lambda = next;
        v = w;
    }
    throw ConvergenceError("power iteration did not converge after " +
                           std::to_string(max_iter) + " iterations");
}

double smallest_eigenvalue_lanczos(const LinOp& apply, Eigen::Index n, double rel_tol,
                                   int max_iter, std::uint64_t seed) {
    // Shift so the smallest eigenvalue of K becomes the largest of
    // (mu I - K), with mu a safe upper bound on lambda_max.
    const double mu = 1.1 * std::abs(largest_eigenvalue_power(apply, n, 1e-6, 10000, seed)) +
                      1e-12;
    const LinOp shifted = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
        return mu * v - apply(v);
    };

    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<Eigen::VectorXd> basis;
    Eigen::VectorXd v = rng.normal_vector(n).normalized();
    basis.push_back(v);
    std::vector<double> alpha, beta;
    double prev_ritz = 0.0;
    const int m_max = std::min<Eigen::Index>(max_iter, n);
    for (int j = 0; j < m_max; ++j) {
        Eigen::VectorXd w = shifted(basis.back());
        const double a = basis.back().dot(w);
        alpha.push_back(a);
        w -= a * basis.back();
        if (j > 0) w -= beta.back() * basis[basis.size() - 2];
        // Full reorthogonalization; the Gram matrices here are small enough
        // that the extra products are cheap and the Ritz values stay clean.
        for (const auto& q : basis) w -= q.dot(w) * q;
        const double b = w.norm();

        // Ritz value of the tridiagonal section.
        const int k = j + 1;
        Eigen::MatrixXd T = Eigen::MatrixXd::Zero(k, k);
        for (int i = 0; i < k; ++i) T(i, i) = alpha[std::size_t(i)];
        for (int i = 0; i + 1 < k; ++i) {
            T(i, i + 1) = beta[std::size_t(i)];
            T(i + 1, i) = beta[std::size_t(i)];
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T, Eigen::EigenvaluesOnly);
        const double ritz = es.eigenvalues().maxCoeff();
        const double lambda_min = mu - ritz;
        if (j > 2 && std::abs(ritz - prev_ritz) <=
                         rel_tol * std::max(std::abs(ritz), 1e-300)) {
            return lambda_min;
        }
        prev_ritz = ritz;
        if (b < 1e-14 || k == n) return lambda_min;  // exact invariant subspace
        beta.push_back(b);
        basis.push_back(w / b);
    }
    throw ConvergenceError("Lanczos did not converge after " + std::to_string(m_max) +
                           " iterations; last residual ritz " + std::to_string(prev_ritz));
}

double spectral_norm_power(const LinOp& apply, const LinOp& apply_adjoint, Eigen::Index rows,
                           double rel_tol, int max_iter, int restarts, std::uint64_t seed) {
    double best = 0.0;
    for (int r = 0; r < restarts; ++r) {
        Rng rng(seed + std::uint64_t(r) * 0x9e3779b97f4a7c15ULL);
        Eigen::VectorXd v = rng.normal_vector(rows).normalized();
        double sigma2 = 0.0;
        bool converged = false;
        std::vector<double> history;
        for (int it = 0; it < max_iter; ++it) {
            Eigen::VectorXd w = apply(apply_adjoint(v));
            const double nw = w.norm();
            if (nw == 0.0) {
                sigma2 = 0.0;
                converged = true;
                break;
            }
            const double next = v.dot(w);
            history.push_back(next);
            v = w / nw;
            if (it > 0 && std::abs(next - sigma2) <=
                              rel_tol * std::max(std::abs(next), 1e-300)) {
                sigma2 = next;
                converged = true;
                break;
            }
            sigma2 = next;
        }
        if (!converged) {
            std::ostringstream oss;
            oss << "spectral-norm power iteration stagnated; last iterates:";
            for (std::size_t i = history.size() > 5 ? history.size() - 5 : 0;
                 i < history.size(); ++i)
                oss << " " << history[i];
            throw ConvergenceError(oss.str());
        }
        best = std::max(best, std::sqrt(std::max(sigma2, 0.0)));
    }
    return best;
}

double spectral_norm_dense(const Eigen::MatrixXd& M) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
    return svd.singularValues().size() == 0 ? 0.0 : svd.singularValues()[0];
}

}  // namespace ntklens
