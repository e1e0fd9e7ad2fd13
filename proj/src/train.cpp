#include "ntklens/train.hpp"

#include <cmath>
#include <limits>

#include "ntklens/rng.hpp"

namespace ntklens {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw ConfigError("learning rate must be finite and positive");
    if (!std::isfinite(momentum) || momentum < 0.0)
        throw ConfigError("momentum must be finite and non-negative");
    if (!std::isfinite(weight_decay) || weight_decay < 0.0)
        throw ConfigError("weight decay must be finite and non-negative");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
}

namespace {

std::vector<int> resolve_outputs(const TrainConfig& cfg, int C) {
    if (cfg.active_outputs.empty()) {
        std::vector<int> all(C);
        for (int c = 0; c < C; ++c) all[c] = c;
        return all;
    }
    for (int c : cfg.active_outputs)
        if (c < 0 || c >= C) throw ConfigError("active output index out of range");
    return cfg.active_outputs;
}

// Loss over a batch plus the output cotangent dL/df. Batch is given by row
// indices into data. Returns the summed per-sample loss.
double batch_loss_and_cotangent(const NetworkSpec& spec, const TrainData& data,
                                const TrainConfig& cfg, const std::vector<int>& outputs,
                                const Eigen::MatrixXd& f,  // C x B
                                const std::vector<std::size_t>& rows, Eigen::MatrixXd& U) {
    const Eigen::Index B = f.cols();
    U.setZero(f.rows(), B);
    double loss = 0.0;
    if (cfg.loss == Loss::Mse) {
        for (Eigen::Index j = 0; j < B; ++j) {
            for (std::size_t k = 0; k < outputs.size(); ++k) {
                const int c = outputs[k];
                const double r = f(c, j) - data.Y(Eigen::Index(rows[j]), c);
                loss += 0.5 * r * r;
                U(c, j) = r / double(B);
            }
        }
    } else {
        for (Eigen::Index j = 0; j < B; ++j) {
            const int label = data.labels[Eigen::Index(rows[j])];
            // Softmax restricted to the active outputs.
            double mx = -std::numeric_limits<double>::infinity();
            for (int c : outputs) mx = std::max(mx, f(c, j));
            double z = 0.0;
            for (int c : outputs) z += std::exp(f(c, j) - mx);
            bool found = false;
            for (int c : outputs) {
                const double p = std::exp(f(c, j) - mx) / z;
                if (c == label) {
                    loss -= std::log(std::max(p, 1e-300));
                    U(c, j) = (p - 1.0) / double(B);
                    found = true;
                } else {
                    U(c, j) = p / double(B);
                }
            }
            if (!found) throw ConfigError("label outside the active output set");
        }
    }
    return loss;
}

struct OptState {
    std::vector<Eigen::MatrixXd> vW, mW, sW;
    std::vector<Eigen::VectorXd> vb, mb, sb;
    long step = 0;
};

void init_state(OptState& st, const NetworkSpec& spec) {
    const int L = spec.depth();
    st.vW.resize(L);
    st.mW.resize(L);
    st.sW.resize(L);
    st.vb.resize(L);
    st.mb.resize(L);
    st.sb.resize(L);
    for (int l = 0; l < L; ++l) {
        const auto& layer = spec.layers[l];
        if (!layer.trainable) continue;
        st.vW[l] = Eigen::MatrixXd::Zero(layer.out, layer.in);
        st.mW[l] = st.vW[l];
        st.sW[l] = st.vW[l];
        if (layer.bias) {
            st.vb[l] = Eigen::VectorXd::Zero(layer.out);
            st.mb[l] = st.vb[l];
            st.sb[l] = st.vb[l];
        }
    }
}

template <typename Value, typename Grad, typename Vel, typename M1, typename M2>
void apply_update(const TrainConfig& cfg, long step, Value& w, const Grad& g, Vel& v, M1& m,
                  M2& s) {
    if (cfg.optimizer == Optimizer::SgdMomentum) {
        // PyTorch convention: decay folded into the gradient, then momentum.
        auto geff = (g + cfg.weight_decay * w).eval();
        v = cfg.momentum * v + geff;
        w -= cfg.learning_rate * v;
    } else {
        m.array() = cfg.beta1 * m.array() + (1.0 - cfg.beta1) * g.array();
        s.array() = cfg.beta2 * s.array() + (1.0 - cfg.beta2) * g.array().square();
        const double bc1 = 1.0 - std::pow(cfg.beta1, double(step));
        const double bc2 = 1.0 - std::pow(cfg.beta2, double(step));
        w.array() -= cfg.learning_rate *
                     ((m.array() / bc1) / ((s.array() / bc2).sqrt() + cfg.adam_eps) +
                      cfg.weight_decay * w.array());
    }
}

}  // namespace

TrainResult train(const NetworkSpec& spec, const Params& initial, const TrainData& data,
                  const TrainConfig& cfg) {
    spec.validate();
    cfg.validate();
    const Eigen::Index N = data.X.rows();
    if (N == 0) throw ConfigError("dataset is empty");
    if (cfg.loss == Loss::Mse && data.Y.rows() != N)
        throw ShapeError("target rows do not match input rows");
    if (cfg.loss == Loss::CrossEntropy && data.labels.size() != N)
        throw ShapeError("label count does not match input rows");
    const auto outputs = resolve_outputs(cfg, spec.output_dim());

    TrainResult result;
    result.params = initial;
    OptState st;
    init_state(st, spec);
    Rng shuffle_rng(cfg.shuffle_seed);

    Eigen::MatrixXd U;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = shuffled_indices(std::size_t(N), shuffle_rng);
        double epoch_loss = 0.0;
        for (Eigen::Index start = 0; start < N; start += cfg.batch_size) {
            const Eigen::Index B = std::min<Eigen::Index>(cfg.batch_size, N - start);
            std::vector<std::size_t> rows(order.begin() + start, order.begin() + start + B);
            Eigen::MatrixXd Xb(B, data.X.cols());
            for (Eigen::Index j = 0; j < B; ++j) Xb.row(j) = data.X.row(Eigen::Index(rows[j]));
            const ForwardCache cache = forward_cached(spec, result.params, Xb);
            const Eigen::MatrixXd& f = cache.x.back();
            epoch_loss += batch_loss_and_cotangent(spec, data, cfg, outputs, f, rows, U);
            const LayerGrads grads = backprop(spec, result.params, cache, U);
            ++st.step;
            for (int l = 0; l < spec.depth(); ++l) {
                const auto& layer = spec.layers[l];
                if (!layer.trainable) continue;
                apply_update(cfg, st.step, result.params.W[l], grads.W[l], st.vW[l], st.mW[l],
                             st.sW[l]);
                if (layer.bias)
                    apply_update(cfg, st.step, result.params.b[l], grads.b[l], st.vb[l],
                                 st.mb[l], st.sb[l]);
            }
        }
        epoch_loss /= double(N);
        if (!std::isfinite(epoch_loss))
            throw TrainingDivergenceError(
                "non-finite loss at epoch " + std::to_string(epoch), epoch - 1);
        result.epoch_loss.push_back(epoch_loss);
    }
    result.theta = flatten(spec, result.params);
    return result;
}

double evaluate_loss(const NetworkSpec& spec, const Params& params, const TrainData& data,
                     const TrainConfig& cfg) {
    const auto outputs = resolve_outputs(cfg, spec.output_dim());
    const Eigen::Index N = data.X.rows();
    std::vector<std::size_t> rows(static_cast<std::size_t>(N));
    for (Eigen::Index i = 0; i < N; ++i) rows[std::size_t(i)] = std::size_t(i);
    const ForwardCache cache = forward_cached(spec, params, data.X);
    Eigen::MatrixXd U;
    return batch_loss_and_cotangent(spec, data, cfg, outputs, cache.x.back(), rows, U) /
           double(N);
}

double classification_accuracy(const NetworkSpec& spec, const Params& params,
                               const Eigen::MatrixXd& X, const Eigen::VectorXi& labels,
                               const std::vector<int>& classes) {
    if (X.rows() != labels.size()) throw ShapeError("label count does not match inputs");
    const Eigen::MatrixXd f = forward(spec, params, X);
    std::vector<int> cls = classes;
    if (cls.empty())
        for (int c = 0; c < spec.output_dim(); ++c) cls.push_back(c);
    Eigen::Index correct = 0;
    for (Eigen::Index n = 0; n < X.rows(); ++n) {
        int best = cls[0];
        for (int c : cls)
            if (f(n, c) > f(n, best)) best = c;
        if (best == labels[n]) ++correct;
    }
    return double(correct) / double(X.rows());
}

}  // namespace ntklens
