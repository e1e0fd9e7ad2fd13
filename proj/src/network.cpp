#include "ntklens/network.hpp"

#include <cmath>

#include "ntklens/rng.hpp"

namespace ntklens {

namespace {

double forward_scale(const LayerSpec& layer) {
    return layer.scale == WeightScale::NtkSqrtFanIn ? 1.0 / std::sqrt(double(layer.in)) : 1.0;
}

Eigen::MatrixXd apply_activation(const LayerSpec& layer, const Eigen::MatrixXd& h) {
    if (layer.activation == Activation::Relu) return h.cwiseMax(0.0);
    return h;
}

// ReLU subgradient at 0 is taken as 0.
Eigen::ArrayXXd activation_mask(const LayerSpec& layer, const Eigen::MatrixXd& h) {
    if (layer.activation == Activation::Relu)
        return (h.array() > 0.0).cast<double>();
    return Eigen::ArrayXXd::Ones(h.rows(), h.cols());
}

Eigen::Index layer_param_count(const LayerSpec& l) {
    return Eigen::Index(l.out) * l.in + (l.bias ? l.out : 0);
}

}  // namespace

Eigen::Index NetworkSpec::param_count() const {
    Eigen::Index p = 0;
    for (const auto& l : layers)
        if (l.trainable) p += layer_param_count(l);
    return p;
}

void NetworkSpec::validate() const {
    if (layers.empty()) throw ConfigError("network needs at least one affine layer");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        if (l.in < 1 || l.out < 1) throw ConfigError("layer widths must be >= 1");
        if (i > 0 && layers[i - 1].out != l.in)
            throw ConfigError("layer " + std::to_string(i) + " input width does not chain");
        if (l.dist == InitDist::Rademacher && l.bias)
            throw ConfigError("rademacher layers are weight-only (no bias)");
    }
}

NetworkSpec NetworkSpec::mlp_ntp(int in, const std::vector<int>& hidden, int out, bool bias) {
    NetworkSpec spec;
    int prev = in;
    for (int w : hidden) {
        spec.layers.push_back({prev, w, Activation::Relu, bias, true,
                               WeightScale::NtkSqrtFanIn, InitDist::Gaussian, 1.0});
        prev = w;
    }
    spec.layers.push_back({prev, out, Activation::Identity, bias, true,
                           WeightScale::NtkSqrtFanIn, InitDist::Gaussian, 1.0});
    spec.validate();
    return spec;
}

NetworkSpec NetworkSpec::mlp_sp(int in, const std::vector<int>& hidden, int out, bool bias) {
    NetworkSpec spec;
    int prev = in;
    for (int w : hidden) {
        spec.layers.push_back({prev, w, Activation::Relu, bias, true, WeightScale::None,
                               InitDist::Gaussian, 1.0 / std::sqrt(double(prev))});
        prev = w;
    }
    spec.layers.push_back({prev, out, Activation::Identity, bias, true, WeightScale::None,
                           InitDist::Gaussian, 1.0 / std::sqrt(double(prev))});
    spec.validate();
    return spec;
}

Params init_params(const NetworkSpec& spec, const InitConfig& cfg) {
    spec.validate();
    Params params;
    Rng rng(cfg.seed);
    for (const auto& l : spec.layers) {
        Eigen::MatrixXd W(l.out, l.in);
        const double std = cfg.nu * l.init_std_factor;
        switch (l.dist) {
            case InitDist::Gaussian:
                for (int r = 0; r < l.out; ++r)
                    for (int c = 0; c < l.in; ++c) W(r, c) = std * rng.normal();
                break;
            case InitDist::Rademacher:
                for (int r = 0; r < l.out; ++r)
                    for (int c = 0; c < l.in; ++c) W(r, c) = std * rng.rademacher();
                break;
        }
        params.W.push_back(std::move(W));
        if (l.bias) {
            Eigen::VectorXd b(l.out);
            for (int r = 0; r < l.out; ++r) b[r] = cfg.nu * rng.normal();
            params.b.push_back(std::move(b));
        } else {
            params.b.emplace_back(0);
        }
    }
    return params;
}

Eigen::VectorXd flatten(const NetworkSpec& spec, const Params& params) {
    Eigen::VectorXd theta(spec.param_count());
    Eigen::Index pos = 0;
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        if (!spec.layers[l].trainable) continue;
        const auto& W = params.W[l];
        for (Eigen::Index r = 0; r < W.rows(); ++r)
            for (Eigen::Index c = 0; c < W.cols(); ++c) theta[pos++] = W(r, c);
        const auto& b = params.b[l];
        for (Eigen::Index r = 0; r < b.size(); ++r) theta[pos++] = b[r];
    }
    return theta;
}

void unflatten(const NetworkSpec& spec, const Eigen::VectorXd& theta, Params& params) {
    if (theta.size() != spec.param_count())
        throw ShapeError("parameter vector length " + std::to_string(theta.size()) +
                         " does not match P = " + std::to_string(spec.param_count()));
    Eigen::Index pos = 0;
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        if (!spec.layers[l].trainable) continue;
        auto& W = params.W[l];
        for (Eigen::Index r = 0; r < W.rows(); ++r)
            for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = theta[pos++];
        auto& b = params.b[l];
        for (Eigen::Index r = 0; r < b.size(); ++r) b[r] = theta[pos++];
    }
}

ForwardCache forward_cached(const NetworkSpec& spec, const Params& params,
                            const Eigen::MatrixXd& X) {
    if (X.cols() != spec.input_dim())
        throw ShapeError("input has " + std::to_string(X.cols()) + " columns, expected " +
                         std::to_string(spec.input_dim()));
    if (!X.allFinite()) throw InputError("non-finite value in input batch");
    ForwardCache cache;
    cache.x.push_back(X.transpose());
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const auto& layer = spec.layers[l];
        const double s = forward_scale(layer);
        Eigen::MatrixXd h = s * (params.W[l] * cache.x.back());
        if (layer.bias) h.colwise() += params.b[l];
        cache.x.push_back(apply_activation(layer, h));
        cache.h.push_back(std::move(h));
    }
    return cache;
}

Eigen::MatrixXd forward(const NetworkSpec& spec, const Params& params,
                        const Eigen::MatrixXd& X) {
    if (X.cols() != spec.input_dim())
        throw ShapeError("input has " + std::to_string(X.cols()) + " columns, expected " +
                         std::to_string(spec.input_dim()));
    if (!X.allFinite()) throw InputError("non-finite value in input batch");
    Eigen::MatrixXd cur = X.transpose();
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const auto& layer = spec.layers[l];
        Eigen::MatrixXd h = forward_scale(layer) * (params.W[l] * cur);
        if (layer.bias) h.colwise() += params.b[l];
        cur = apply_activation(layer, h);
    }
    return cur.transpose();
}

namespace {

// Backward sweep from an output cotangent U (C x N); returns the pre-activation
// cotangents g_l (m_l x N) for every layer.
std::vector<Eigen::MatrixXd> backward_cotangents(const NetworkSpec& spec, const Params& params,
                                                 const ForwardCache& cache,
                                                 const Eigen::MatrixXd& U) {
    const int L = spec.depth();
    std::vector<Eigen::MatrixXd> g(L);
    g[L - 1] = U;
    for (int l = L - 1; l > 0; --l) {
        const auto& layer = spec.layers[l];
        Eigen::MatrixXd back = forward_scale(layer) * (params.W[l].transpose() * g[l]);
        g[l - 1] = back.array() * activation_mask(spec.layers[l - 1], cache.h[l - 1]);
    }
    return g;
}

// Writes the flat gradient implied by cotangents g for sample column n into a
// contiguous buffer of length P.
void write_sample_gradient(const NetworkSpec& spec, const ForwardCache& cache,
                           const std::vector<Eigen::MatrixXd>& g, Eigen::Index n,
                           double* out) {
    Eigen::Index pos = 0;
    for (int l = 0; l < spec.depth(); ++l) {
        const auto& layer = spec.layers[l];
        if (!layer.trainable) continue;
        const double s = forward_scale(layer);
        const auto gi = g[l].col(n);
        const auto xi = cache.x[l].col(n);
        for (int r = 0; r < layer.out; ++r) {
            const double gr = s * gi[r];
            for (int c = 0; c < layer.in; ++c) out[pos++] = gr * xi[c];
        }
        if (layer.bias)
            for (int r = 0; r < layer.out; ++r) out[pos++] = gi[r];
    }
}

}  // namespace

LayerGrads backprop(const NetworkSpec& spec, const Params& params, const ForwardCache& cache,
                    const Eigen::MatrixXd& U) {
    const auto g = backward_cotangents(spec, params, cache, U);
    LayerGrads grads;
    grads.W.resize(spec.depth());
    grads.b.resize(spec.depth());
    for (int l = 0; l < spec.depth(); ++l) {
        const auto& layer = spec.layers[l];
        if (!layer.trainable) continue;
        grads.W[l].noalias() = forward_scale(layer) * (g[l] * cache.x[l].transpose());
        if (layer.bias) grads.b[l] = g[l].rowwise().sum();
    }
    return grads;
}

JacobianOperator::JacobianOperator(const NetworkSpec& s, const Params& p,
                                   const Eigen::MatrixXd& x)
    : spec(&s), params(&p), X(x), cache(forward_cached(s, p, x)) {}

Eigen::Index JacobianOperator::rows() const {
    return X.rows() * spec->output_dim();
}

Eigen::Index JacobianOperator::cols() const {
    return spec->param_count();
}

Eigen::VectorXd JacobianOperator::jvp(const Eigen::VectorXd& v) const {
    if (v.size() != cols())
        throw ShapeError("jvp tangent length " + std::to_string(v.size()) + " != P");
    const Eigen::Index N = X.rows();
    const int C = spec->output_dim();
    Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(spec->input_dim(), N);
    Eigen::Index pos = 0;
    Eigen::MatrixXd dh;
    for (int l = 0; l < spec->depth(); ++l) {
        const auto& layer = spec->layers[l];
        const double s = forward_scale(layer);
        dh.noalias() = s * (params->W[l] * dx);
        if (layer.trainable) {
            Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                           Eigen::RowMajor>>
                dW(v.data() + pos, layer.out, layer.in);
            pos += Eigen::Index(layer.out) * layer.in;
            dh.noalias() += s * (dW * cache.x[l]);
            if (layer.bias) {
                dh.colwise() += Eigen::Map<const Eigen::VectorXd>(v.data() + pos, layer.out);
                pos += layer.out;
            }
        }
        if (l + 1 < spec->depth())
            dx = dh.array() * activation_mask(layer, cache.h[l]);
    }
    // Stack sample-major, output-minor: entry n*C + c.
    Eigen::VectorXd out(N * C);
    for (Eigen::Index n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) out[n * C + c] = dh(c, n);
    return out;
}

Eigen::VectorXd JacobianOperator::vjp(const Eigen::VectorXd& u) const {
    if (u.size() != rows())
        throw ShapeError("vjp cotangent length " + std::to_string(u.size()) + " != N*C");
    const Eigen::Index N = X.rows();
    const int C = spec->output_dim();
    Eigen::MatrixXd U(C, N);
    for (Eigen::Index n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) U(c, n) = u[n * C + c];
    const auto g = backward_cotangents(*spec, *params, cache, U);
    Eigen::VectorXd grad(cols());
    Eigen::Index pos = 0;
    for (int l = 0; l < spec->depth(); ++l) {
        const auto& layer = spec->layers[l];
        if (!layer.trainable) continue;
        const double s = forward_scale(layer);
        Eigen::MatrixXd gW = s * (g[l] * cache.x[l].transpose());
        for (int r = 0; r < layer.out; ++r)
            for (int c = 0; c < layer.in; ++c) grad[pos++] = gW(r, c);
        if (layer.bias) {
            Eigen::VectorXd gb = g[l].rowwise().sum();
            for (int r = 0; r < layer.out; ++r) grad[pos++] = gb[r];
        }
    }
    return grad;
}

namespace {

// Per-sample gradients for a single output component c, all samples at once.
void per_sample_gradients_for_output(const NetworkSpec& spec, const Params& params,
                                     const ForwardCache& cache, int c,
                                     Eigen::MatrixXd& J, int C) {
    const Eigen::Index N = cache.x[0].cols();
    Eigen::MatrixXd U = Eigen::MatrixXd::Zero(spec.output_dim(), N);
    U.row(c).setOnes();
    const auto g = backward_cotangents(spec, params, cache, U);
    Eigen::VectorXd buf(J.cols());
    for (Eigen::Index n = 0; n < N; ++n) {
        write_sample_gradient(spec, cache, g, n, buf.data());
        J.row(n * C + c) = buf;
    }
}

}  // namespace

Eigen::MatrixXd per_sample_gradients(const NetworkSpec& spec, const Params& params,
                                     const Eigen::MatrixXd& X) {
    if (spec.output_dim() != 1)
        throw ShapeError("per_sample_gradients expects a scalar-output network");
    const ForwardCache cache = forward_cached(spec, params, X);
    Eigen::MatrixXd J(X.rows(), spec.param_count());
    per_sample_gradients_for_output(spec, params, cache, 0, J, 1);
    return J;
}

Eigen::MatrixXd jacobian(const NetworkSpec& spec, const Params& params,
                         const Eigen::MatrixXd& X, Eigen::Index budget) {
    const Eigen::Index N = X.rows();
    const int C = spec.output_dim();
    const Eigen::Index P = spec.param_count();
    if (N * C * P > budget)
        throw CapacityError("dense Jacobian needs " + std::to_string(N * C * P) +
                            " doubles, over the budget of " + std::to_string(budget) +
                            "; use jvp/vjp instead");
    const ForwardCache cache = forward_cached(spec, params, X);
    Eigen::MatrixXd J(N * C, P);
    for (int c = 0; c < C; ++c)
        per_sample_gradients_for_output(spec, params, cache, c, J, C);
    return J;
}

Eigen::MatrixXd linearized_predict(const NetworkSpec& spec, const Params& params0,
                                   const Eigen::MatrixXd& X, const Eigen::VectorXd& theta) {
    const Eigen::VectorXd theta0 = flatten(spec, params0);
    JacobianOperator op(spec, params0, X);
    const Eigen::VectorXd df = op.jvp(theta - theta0);
    const int C = spec.output_dim();
    Eigen::MatrixXd out = forward(spec, params0, X);
    for (Eigen::Index n = 0; n < X.rows(); ++n)
        for (int c = 0; c < C; ++c) out(n, c) += df[n * C + c];
    return out;
}

}  // namespace ntklens
