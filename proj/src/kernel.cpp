#include "ntklens/kernel.hpp"

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace ntklens {

void KernelMatrix::validate_psd(double eig_tol) const {
    if (M.rows() != M.cols()) throw ShapeError("kernel matrix is not square");
    const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
    if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw NumericError("kernel matrix is not symmetric");
    if (M.diagonal().minCoeff() < -1e-12 * scale)
        throw NumericError("kernel matrix has a negative diagonal entry");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -eig_tol * scale)
        throw NumericError("kernel matrix has eigenvalue below tolerance: " +
                           std::to_string(es.eigenvalues().minCoeff()));
}

std::uint64_t fingerprint_matrix(const Eigen::MatrixXd& X) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const auto* bytes = reinterpret_cast<const unsigned char*>(X.data());
    for (Eigen::Index i = 0; i < X.size() * Eigen::Index(sizeof(double)); ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

double layer_scale(const LayerSpec& layer) {
    return layer.scale == WeightScale::NtkSqrtFanIn ? 1.0 / std::sqrt(double(layer.in)) : 1.0;
}

// Pre-activation cotangents for output component c, for every layer;
// U = e_c broadcast across samples.
std::vector<Eigen::MatrixXd> output_cotangents(const NetworkSpec& spec, const Params& params,
                                               const ForwardCache& cache, int c) {
    const Eigen::Index N = cache.x[0].cols();
    const int L = spec.depth();
    std::vector<Eigen::MatrixXd> g(L);
    Eigen::MatrixXd U = Eigen::MatrixXd::Zero(spec.output_dim(), N);
    U.row(c).setOnes();
    g[L - 1] = U;
    for (int l = L - 1; l > 0; --l) {
        const auto& layer = spec.layers[l];
        Eigen::MatrixXd back = layer_scale(layer) * (params.W[l].transpose() * g[l]);
        if (spec.layers[l - 1].activation == Activation::Relu)
            g[l - 1] = back.array() * (cache.h[l - 1].array() > 0.0).cast<double>();
        else
            g[l - 1] = back;
    }
    return g;
}

// Layer-blocked eNTK: since the per-sample gradient of layer l is the outer
// product s * g_l(:, n) x_{l-1}(:, n)^T, inner products of gradients factor as
// s^2 (g_n . g_m)(x_n . x_m), plus (g_n . g_m) for the bias. This never forms
// the Jacobian.
Eigen::MatrixXd entk_blocked(const NetworkSpec& spec, const Params& params,
                             const Eigen::MatrixXd& Xa, const Eigen::MatrixXd& Xb) {
    const int C = spec.output_dim();
    const Eigen::Index Na = Xa.rows(), Nb = Xb.rows();
    const ForwardCache ca = forward_cached(spec, params, Xa);
    const ForwardCache cb = forward_cached(spec, params, Xb);
    std::vector<std::vector<Eigen::MatrixXd>> ga(C), gb(C);
    for (int c = 0; c < C; ++c) {
        ga[c] = output_cotangents(spec, params, ca, c);
        gb[c] = output_cotangents(spec, params, cb, c);
    }
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(Na * C, Nb * C);
    for (int c = 0; c < C; ++c) {
        for (int cp = 0; cp < C; ++cp) {
            Eigen::MatrixXd block = Eigen::MatrixXd::Zero(Na, Nb);
            for (int l = 0; l < spec.depth(); ++l) {
                const auto& layer = spec.layers[l];
                if (!layer.trainable) continue;
                const double s2 = layer_scale(layer) * layer_scale(layer);
                Eigen::MatrixXd gg = ga[c][l].transpose() * gb[cp][l];
                block.noalias() +=
                    s2 * gg.cwiseProduct(ca.x[l].transpose() * cb.x[l]);
                if (layer.bias) block += gg;
            }
            for (Eigen::Index n = 0; n < Na; ++n)
                for (Eigen::Index m = 0; m < Nb; ++m) K(n * C + c, m * C + cp) = block(n, m);
        }
    }
    return K;
}

}  // namespace

KernelMatrix entk(const NetworkSpec& spec, const Params& params, const Eigen::MatrixXd& X,
                  Eigen::Index dense_budget) {
    KernelMatrix K;
    K.provenance = KernelProvenance::Empirical;
    K.fingerprint = fingerprint_matrix(X);
    const Eigen::Index NCP = X.rows() * spec.output_dim() * spec.param_count();
    if (NCP <= dense_budget) {
        Eigen::MatrixXd J = spec.output_dim() == 1 ? per_sample_gradients(spec, params, X)
                                                   : jacobian(spec, params, X);
        K.M.noalias() = J * J.transpose();
    } else {
        K.M = entk_blocked(spec, params, X, X);
    }
    // Exact symmetrization; the two assembly paths are symmetric to rounding.
    K.M = 0.5 * (K.M + K.M.transpose()).eval();
    return K;
}

Eigen::MatrixXd entk_cross(const NetworkSpec& spec, const Params& params,
                           const Eigen::MatrixXd& Xa, const Eigen::MatrixXd& Xb) {
    if (Xa.cols() != Xb.cols()) throw ShapeError("cross-kernel inputs differ in width");
    return entk_blocked(spec, params, Xa, Xb);
}

namespace {

double clip_cosine(double rho, ClipCounter* clips) {
    if (std::abs(rho) <= 1.0) return rho;
    const double over = std::abs(rho) - 1.0;
    if (over > 1e-6)
        throw NumericError("cosine argument " + std::to_string(rho) + " outside [-1, 1]");
    if (over > 1e-12 && clips != nullptr) ++clips->clips;
    return rho > 0.0 ? 1.0 : -1.0;
}

}  // namespace

NtkValue ntk_relu_analytic(int depth, const Eigen::VectorXd& x, const Eigen::VectorXd& xp,
                           double beta2, ClipCounter* clips) {
    if (depth < 1) throw ConfigError("analytic NTK needs depth >= 1");
    if (x.size() != xp.size()) throw ShapeError("input pair dimensions differ");
    if (!x.allFinite() || !xp.allFinite()) throw InputError("non-finite input to analytic NTK");
    const double d = double(x.size());
    // First affine layer (linear in the parameters): Sigma^1 = Theta^1.
    double sxx = x.dot(x) / d + beta2;
    double syy = xp.dot(xp) / d + beta2;
    double sxy = x.dot(xp) / d + beta2;
    double theta = sxy;
    for (int l = 2; l <= depth; ++l) {
        const double s1 = std::sqrt(std::max(sxx, 0.0));
        const double s2 = std::sqrt(std::max(syy, 0.0));
        double rho = (s1 > 0.0 && s2 > 0.0) ? sxy / (s1 * s2) : 0.0;
        rho = clip_cosine(rho, clips);
        const double alpha = std::acos(rho);
        // Arc-cosine closed forms for ReLU moments of a bivariate Gaussian.
        const double e_phiphi =
            (s1 * s2) / (2.0 * M_PI) * (std::sin(alpha) + (M_PI - alpha) * std::cos(alpha));
        const double e_dphidphi = (M_PI - alpha) / (2.0 * M_PI);
        sxx = 0.5 * sxx + beta2;
        syy = 0.5 * syy + beta2;
        sxy = e_phiphi + beta2;
        theta = sxy + theta * e_dphidphi;
    }
    return {sxy, theta};
}

KernelMatrix ntk_relu_gram(int depth, const Eigen::MatrixXd& X, double beta2,
                           ClipCounter* clips) {
    const Eigen::Index N = X.rows();
    KernelMatrix K;
    K.provenance = KernelProvenance::Analytic;
    K.fingerprint = fingerprint_matrix(X);
    K.M.resize(N, N);
    for (Eigen::Index i = 0; i < N; ++i)
        for (Eigen::Index j = i; j < N; ++j) {
            const double v =
                ntk_relu_analytic(depth, X.row(i), X.row(j), beta2, clips).ntk;
            K.M(i, j) = v;
            K.M(j, i) = v;
        }
    return K;
}

Eigen::MatrixXd ntk_relu_cross(int depth, const Eigen::MatrixXd& Xa, const Eigen::MatrixXd& Xb,
                               double beta2, ClipCounter* clips) {
    Eigen::MatrixXd K(Xa.rows(), Xb.rows());
    for (Eigen::Index i = 0; i < Xa.rows(); ++i)
        for (Eigen::Index j = 0; j < Xb.rows(); ++j)
            K(i, j) = ntk_relu_analytic(depth, Xa.row(i), Xb.row(j), beta2, clips).ntk;
    return K;
}

double GPPosterior::mean(const Eigen::VectorXd& k, double f0_x) const {
    if (k.size() != alpha.size()) throw ShapeError("cross-kernel vector length mismatch");
    return f0_x + k.dot(alpha);
}

double GPPosterior::cov(const Eigen::VectorXd& ka, const Eigen::VectorXd& kb,
                        double k_ab) const {
    const Eigen::VectorXd va = chol.triangularView<Eigen::Lower>().solve(ka);
    const Eigen::VectorXd vb = chol.triangularView<Eigen::Lower>().solve(kb);
    return k_ab - va.dot(vb);
}

GPPosterior gp_posterior(const KernelMatrix& K_train, const Eigen::VectorXd& y,
                         const Eigen::VectorXd& f0, double sigma2) {
    const Eigen::Index N = K_train.size();
    if (y.size() != N || f0.size() != N)
        throw ShapeError("target/prior-mean length does not match kernel size");
    GPPosterior post;
    post.sigma2 = sigma2;
    post.residual = y - f0;
    const double mean_diag = K_train.M.diagonal().mean();
    // Jitter ladder: 0, then 1e-10 * mean(diag) escalating by 10x up to
    // 1e-4 * mean(diag).
    std::vector<double> ladder = {0.0};
    for (double j = 1e-10 * mean_diag; j <= 1e-4 * mean_diag * (1.0 + 1e-12); j *= 10.0)
        ladder.push_back(j);
    for (double jitter : ladder) {
        post.jitters_tried.push_back(jitter);
        Eigen::MatrixXd A = K_train.M;
        A.diagonal().array() += sigma2 + jitter;
        Eigen::LLT<Eigen::MatrixXd> llt(A);
        if (llt.info() == Eigen::Success) {
            post.chol = llt.matrixL();
            post.alpha = llt.solve(post.residual);
            post.jitter = jitter;
            return post;
        }
    }
    throw ConditioningError("Cholesky failed after " +
                            std::to_string(post.jitters_tried.size()) +
                            " jitter attempts up to " +
                            std::to_string(post.jitters_tried.back()));
}

Eigen::VectorXd solve_quadratic(const KernelMatrix& K, const Eigen::VectorXd& r) {
    if (r.size() != K.size()) throw ShapeError("right-hand side length mismatch");
    Eigen::LDLT<Eigen::MatrixXd> ldlt(K.M);
    if (ldlt.info() != Eigen::Success)
        throw ConditioningError("factorization of the kernel matrix failed");
    const Eigen::VectorXd v = ldlt.solve(r);
    const double grad_norm = (K.M * v - r).norm();
    if (grad_norm > 1e-8 * std::max(r.norm(), 1e-30))
        throw ConditioningError("singular kernel: residual norm " + std::to_string(grad_norm));
    return v;
}

std::vector<Eigen::VectorXd> kernel_gradient_descent(const KernelMatrix& K,
                                                     const Eigen::VectorXd& y,
                                                     const Eigen::VectorXd& f0, double eta,
                                                     int steps) {
    const Eigen::Index N = K.size();
    if (y.size() != N || f0.size() != N) throw ShapeError("vector length mismatch");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K.M, Eigen::EigenvaluesOnly);
    const double lambda_max = es.eigenvalues().maxCoeff();
    if (lambda_max > 0.0 && eta >= 2.0 / lambda_max)
        throw StabilityError("step size " + std::to_string(eta) +
                             " exceeds the stability bound " +
                             std::to_string(2.0 / lambda_max));
    std::vector<Eigen::VectorXd> traj;
    traj.reserve(std::size_t(steps) + 1);
    traj.push_back(f0);
    Eigen::VectorXd f = f0;
    for (int t = 0; t < steps; ++t) {
        f -= (eta / double(N)) * (K.M * (f - y));
        traj.push_back(f);
    }
    return traj;
}

}  // namespace ntklens
