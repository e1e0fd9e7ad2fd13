#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ntklens/data.hpp"
#include "ntklens/network.hpp"
#include "ntklens/train.hpp"

namespace ntklens {

// Contextual bandit from a classification dataset: each round presents a
// (shuffled) row's features; arm a's feature vector is the context placed in
// block a of a zero vector of length D*K; reward is 1 iff a is the row's
// class. Exactly one arm per round pays out.
struct BanditEnvironment {
    int context_dim = 0;
    int num_arms = 0;
    Eigen::MatrixXd contexts;  // one row per round (wraps around the dataset)
    Eigen::VectorXi labels;
    std::uint64_t seed = 0;

    Eigen::Index rounds() const { return contexts.rows(); }
    int arm_feature_dim() const { return context_dim * num_arms; }
    Eigen::VectorXd arm_feature(Eigen::Index round, int arm) const;
    int optimal_arm(Eigen::Index round) const { return labels[round]; }
    double reward(Eigen::Index round, int arm) const {
        return arm == labels[round] ? 1.0 : 0.0;
    }
};

BanditEnvironment make_bandit_env(const TabularDataset& dataset, std::uint64_t seed,
                                  Eigen::Index rounds);

// Linearized-Laplace posterior at a MAP estimate for a scalar-output
// surrogate under squared loss (Lambda_n = I). The GGN is J^T J with J the
// N x P per-observation Jacobian; all posterior quantities are evaluated
// through the eigendecomposition of J J^T (N x N), never the P x P matrix.
struct LaplacePosterior {
    const NetworkSpec* spec = nullptr;
    Params params;             // MAP estimate
    Eigen::MatrixXd J;         // N x P
    Eigen::MatrixXd eigvec;    // eigenvectors of J J^T
    Eigen::VectorXd eigval;    // eigenvalues of J J^T (>= 0 up to rounding)
    double theta_norm2 = 0.0;  // ||theta*||^2
    double sse = 0.0;          // sum of squared residuals at theta*
    Eigen::Index n_obs = 0;
    double lambda = 1.0;       // prior precision
    double sigma2 = 1.0;       // observation noise

    // var = j(z)^T (G/sigma2 + lambda I)^{-1} j(z), via Woodbury.
    double predictive_variance(const Eigen::VectorXd& z) const;

    // Laplace evidence at a given prior precision (defaults to the stored one).
    double log_marginal_likelihood() const { return log_marginal_likelihood(lambda); }
    double log_marginal_likelihood(double lambda_value) const;
};

LaplacePosterior fit_laplace(const NetworkSpec& spec, const Params& params,
                             const Eigen::MatrixXd& Z, const Eigen::VectorXd& rewards,
                             double lambda, double sigma2);

enum class TuneMode { Posthoc, Online };

// Marginal-likelihood calibration of the prior precision. Posthoc scans
// log10(lambda) on a grid over [-6, 6]; Online takes one gradient-ascent step
// on log(lambda) from the stored value (a no-op when `new_observations` is 0).
// Updates post.lambda and returns it.
double tune_prior_precision(LaplacePosterior& post, TuneMode mode,
                            Eigen::Index new_observations = 1, int grid_points = 49,
                            double online_step = 0.5);

// Evidence fixed-point update for the observation noise: sigma2 = SSE / (n - d_eff)
// with d_eff = sum_i mu_i / (mu_i + lambda * sigma2) the effective degrees of
// freedom. Updates post.sigma2 and returns it; a no-op without observations.
double tune_noise_variance(LaplacePosterior& post);

// argmax of mean + gamma * sqrt(var); ties broken toward the lowest index.
int ucb_select(const Eigen::VectorXd& means, const Eigen::VectorXd& variances, double gamma);

// Exploration parameter transcribed from the NeuralUCB-style theory schedule.
// Every constant is exposed; the width enters through m^{-1/6} error terms.
struct NtkScheduleParams {
    double width_m = 100.0;
    double depth_L = 3.0;
    double delta = 0.1;        // failure probability
    double lambda_reg = 1.0;   // regularizer
    double scale_S = 1.0;      // RKHS-norm bound multiplier
    double nu = 1.0;           // confidence-scaling constant
    double c1 = 1.0;           // m-dependent error constants
    double c2 = 1.0;
    double eff_dim = 1.0;      // effective-dimension proxy in the log-det term
    int num_arms = 2;
    double floor = 0.0;        // additive floor (the value at scale_S = 0)
};

double gamma_ntk_theory(long t, const NtkScheduleParams& p);

enum class ScheduleKind { Random, Constant, NtkTheory, MlPosthoc, MlOnline };

struct ExplorationSchedule {
    ScheduleKind kind = ScheduleKind::Constant;
    double constant_gamma = 1.0;
    NtkScheduleParams ntk;

    // Parses e.g. "random", "constant:0.1", "ntk-theory:m=100,L=3",
    // "ml-posthoc", "ml-online".
    static ExplorationSchedule parse(const std::string& text);
    std::string name() const;
    double gamma(long t) const;
    bool tunes_lambda() const {
        return kind == ScheduleKind::MlPosthoc || kind == ScheduleKind::MlOnline;
    }
};

struct BanditRunConfig {
    Eigen::Index horizon = 2000;
    int warmup_rounds = 10;       // random policy before the first fit
    int retrain_every = 100;
    TrainConfig train;            // defaults set by make_default_bandit_train()
    std::vector<int> hidden = {100, 100};
    bool ntk_parametrization = false;  // SP by default
    bool warm_start = false;           // reuse the previous MAP as the starting point
    double lambda0 = 1.0;
    double sigma2 = 1.0;
    bool tune_sigma2 = false;     // ML schedules also learn the noise variance
    std::uint64_t seed = 0;       // drives init/shuffle/warmup substreams
};

TrainConfig make_default_bandit_train();

struct RegretTrace {
    std::vector<int> arms;
    std::vector<double> rewards;
    std::vector<double> optimal_rewards;
    std::vector<double> gammas;
    std::vector<char> retrained;   // 1 when a retraining happened before this round
    std::vector<double> lambdas;   // prior precision in force at each round

    Eigen::Index rounds() const { return Eigen::Index(arms.size()); }
};

RegretTrace run_bandit(const BanditEnvironment& env, const ExplorationSchedule& schedule,
                       const BanditRunConfig& cfg);

// R(t) = sum_{s <= t} (optimal reward - obtained reward); non-decreasing.
Eigen::VectorXd cumulative_regret(const RegretTrace& trace);

}  // namespace ntklens
