#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "ntklens/network.hpp"

namespace ntklens {

enum class Optimizer { SgdMomentum, AdamW };
enum class Loss { Mse, CrossEntropy };

struct TrainConfig {
    Optimizer optimizer = Optimizer::SgdMomentum;
    double learning_rate = 1e-2;
    double momentum = 0.0;
    double weight_decay = 0.0;
    int batch_size = 32;
    int epochs = 0;  // 0 = no training
    Loss loss = Loss::Mse;
    std::uint64_t shuffle_seed = 0;
    // AdamW moment constants; conventional defaults.
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    // Optional restriction of the loss (and gradients) to a subset of output
    // units: empty means all outputs. Used for per-task heads.
    std::vector<int> active_outputs;

    void validate() const;
};

struct TrainData {
    Eigen::MatrixXd X;       // N x D
    Eigen::MatrixXd Y;       // N x C regression targets (Mse)
    Eigen::VectorXi labels;  // N integer labels (CrossEntropy)
};

struct TrainResult {
    Params params;
    Eigen::VectorXd theta;            // final flat trainable parameters
    std::vector<double> epoch_loss;   // mean training loss per epoch
};

// Mini-batch training; deterministic given (init params, shuffle seed).
// Throws TrainingDivergenceError when the loss leaves the finite range.
TrainResult train(const NetworkSpec& spec, const Params& initial, const TrainData& data,
                  const TrainConfig& cfg);

// Mean loss of the network on `data` under cfg.loss / cfg.active_outputs.
double evaluate_loss(const NetworkSpec& spec, const Params& params, const TrainData& data,
                     const TrainConfig& cfg);

// Classification accuracy by argmax over `classes` (all outputs when empty).
double classification_accuracy(const NetworkSpec& spec, const Params& params,
                               const Eigen::MatrixXd& X, const Eigen::VectorXi& labels,
                               const std::vector<int>& classes = {});

}  // namespace ntklens
