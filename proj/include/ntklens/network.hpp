#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "ntklens/errors.hpp"

namespace ntklens {

enum class Activation { Relu, Identity };

// Forward scaling of the stored weight values. NtkSqrtFanIn applies the
// 1/sqrt(fan_in) factor at evaluation time (NTK parametrization); None uses
// the stored values directly (standard parametrization, or the raw first
// layer of the shallow diagnostic model).
enum class WeightScale { NtkSqrtFanIn, None };

enum class InitDist { Gaussian, Rademacher };

struct LayerSpec {
    int in = 0;
    int out = 0;
    Activation activation = Activation::Identity;  // applied to this layer's output
    bool bias = false;
    bool trainable = true;
    WeightScale scale = WeightScale::NtkSqrtFanIn;
    InitDist dist = InitDist::Gaussian;
    // Extra multiplier folded into the initialization std (on top of the
    // global nu). Used to realize the SP convention nu/sqrt(fan_in).
    double init_std_factor = 1.0;
};

struct NetworkSpec {
    std::vector<LayerSpec> layers;

    int depth() const { return static_cast<int>(layers.size()); }
    int input_dim() const { return layers.front().in; }
    int output_dim() const { return layers.back().out; }

    // Count of trainable parameters. Frozen layers carry values but do not
    // appear in the flat parameter vector.
    Eigen::Index param_count() const;

    void validate() const;

    // Fully connected ReLU MLP in the NTK parametrization:
    // stored V ~ N(0, nu^2), forward weight W = V / sqrt(fan_in).
    static NetworkSpec mlp_ntp(int in, const std::vector<int>& hidden, int out, bool bias);

    // Standard parametrization: no forward scaling, init std nu / sqrt(fan_in).
    static NetworkSpec mlp_sp(int in, const std::vector<int>& hidden, int out, bool bias);
};

struct InitConfig {
    std::uint64_t seed = 0;
    double nu = 1.0;  // std multiplier on the per-layer draw
};

// Per-layer parameter values (raw stored values, before forward scaling),
// covering trainable and frozen layers alike.
struct Params {
    std::vector<Eigen::MatrixXd> W;  // out x in
    std::vector<Eigen::VectorXd> b;  // size 0 when the layer has no bias
};

Params init_params(const NetworkSpec& spec, const InitConfig& cfg);

// Flat parameter vector over trainable layers only. Order: layers in network
// order; within a layer the weight matrix in row-major order (each output
// unit's fan-in weights contiguous), then the bias. This order is what sphere
// sampling and parameter-distance metrics operate on.
Eigen::VectorXd flatten(const NetworkSpec& spec, const Params& params);

// Writes the trainable entries of `theta` back into `params`; frozen layers
// are left untouched.
void unflatten(const NetworkSpec& spec, const Eigen::VectorXd& theta, Params& params);

// Forward evaluation. X has one sample per row (N x m_0); output is N x C.
Eigen::MatrixXd forward(const NetworkSpec& spec, const Params& params,
                        const Eigen::MatrixXd& X);

// Intermediate activations kept for backward passes. Column-major with one
// sample per column.
struct ForwardCache {
    std::vector<Eigen::MatrixXd> x;  // x[l] = post-activation of layer l; x[0] = inputs
    std::vector<Eigen::MatrixXd> h;  // h[l] = pre-activation of layer l (1-based via l-1)
};

ForwardCache forward_cached(const NetworkSpec& spec, const Params& params,
                            const Eigen::MatrixXd& X);

// Dense Jacobian of the stacked outputs w.r.t. the flat trainable parameters.
// Rows are ordered sample-major, output-minor: row n*C + c is d f_c(x_n)/d theta.
// Refuses to materialize more than `budget` doubles.
Eigen::MatrixXd jacobian(const NetworkSpec& spec, const Params& params,
                         const Eigen::MatrixXd& X, Eigen::Index budget = Eigen::Index(1) << 28);

// Matrix-free Jacobian products at (spec, params, X). jvp maps a flat tangent
// v in R^P to R^{N*C}; vjp maps a cotangent u in R^{N*C} to R^P. The two are
// adjoint: <u, J v> = <J^T u, v>.
struct JacobianOperator {
    const NetworkSpec* spec;
    const Params* params;
    Eigen::MatrixXd X;  // N x m_0
    ForwardCache cache;

    JacobianOperator(const NetworkSpec& s, const Params& p, const Eigen::MatrixXd& x);

    Eigen::Index rows() const;  // N*C
    Eigen::Index cols() const;  // P

    Eigen::VectorXd jvp(const Eigen::VectorXd& v) const;
    Eigen::VectorXd vjp(const Eigen::VectorXd& u) const;
};

// Per-sample gradient matrix for scalar-output networks: row n is
// d f(x_n)/d theta. Exact and O(N*P) memory.
Eigen::MatrixXd per_sample_gradients(const NetworkSpec& spec, const Params& params,
                                     const Eigen::MatrixXd& X);

// Per-layer gradients of a scalar objective given the output cotangent
// U = dL/df (C x N, samples as columns). Frozen layers get empty gradients.
struct LayerGrads {
    std::vector<Eigen::MatrixXd> W;
    std::vector<Eigen::VectorXd> b;
};

LayerGrads backprop(const NetworkSpec& spec, const Params& params, const ForwardCache& cache,
                    const Eigen::MatrixXd& U);

// First-order model around params0: f(X; theta0) + J(X; theta0) (theta - theta0),
// evaluated matrix-free.
Eigen::MatrixXd linearized_predict(const NetworkSpec& spec, const Params& params0,
                                   const Eigen::MatrixXd& X, const Eigen::VectorXd& theta);

}  // namespace ntklens
