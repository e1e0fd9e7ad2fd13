#include "ntklens/bandit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Dense>

#include "ntklens/errors.hpp"
#include "ntklens/rng.hpp"

namespace ntklens {

Eigen::VectorXd BanditEnvironment::arm_feature(Eigen::Index round, int arm) const {
    if (round < 0 || round >= contexts.rows())
        throw InputError("bandit round index out of range");
    if (arm < 0 || arm >= num_arms) throw InputError("bandit arm index out of range");
    Eigen::VectorXd z = Eigen::VectorXd::Zero(arm_feature_dim());
    z.segment(Eigen::Index(arm) * context_dim, context_dim) = contexts.row(round);
    return z;
}

BanditEnvironment make_bandit_env(const TabularDataset& dataset, std::uint64_t seed,
                                  Eigen::Index rounds) {
    if (dataset.X.rows() == 0) throw InputError("bandit environment needs a non-empty dataset");
    if (rounds <= 0) throw InputError("bandit horizon must be positive");
    BanditEnvironment env;
    env.context_dim = static_cast<int>(dataset.X.cols());
    env.num_arms = dataset.num_classes;
    env.seed = seed;
    env.contexts.resize(rounds, dataset.X.cols());
    env.labels.resize(rounds);
    Rng order_rng(derive_seed(seed, "bandit-order", 0));
    const auto order = shuffled_indices(static_cast<std::size_t>(dataset.X.rows()), order_rng);
    for (Eigen::Index t = 0; t < rounds; ++t) {
        const Eigen::Index i =
            static_cast<Eigen::Index>(order[static_cast<std::size_t>(t % dataset.X.rows())]);
        env.contexts.row(t) = dataset.X.row(i);
        env.labels[t] = dataset.y[i];
    }
    return env;
}

double LaplacePosterior::predictive_variance(const Eigen::VectorXd& z) const {
    Eigen::MatrixXd Z(1, z.size());
    Z.row(0) = z;
    const Eigen::MatrixXd G = per_sample_gradients(*spec, params, Z);
    const Eigen::VectorXd j = G.row(0);
    double var = j.squaredNorm() / lambda;
    if (n_obs > 0) {
        const Eigen::VectorXd w = eigvec.transpose() * (J * j);
        for (Eigen::Index i = 0; i < eigval.size(); ++i) {
            const double mu = std::max(eigval[i], 0.0);
            var -= w[i] * w[i] / (lambda * (sigma2 * lambda + mu));
        }
    }
    return std::max(var, 0.0);
}

double LaplacePosterior::log_marginal_likelihood(double lambda_value) const {
    if (lambda_value <= 0.0) throw InputError("prior precision must be positive");
    const double n = static_cast<double>(n_obs);
    double log_det = 0.0;  // log det(G/sigma2 + lambda I) - (P - N) log lambda
    for (Eigen::Index i = 0; i < eigval.size(); ++i)
        log_det += std::log(std::max(eigval[i], 0.0) / sigma2 + lambda_value);
    return -0.5 * n * std::log(2.0 * M_PI * sigma2) - sse / (2.0 * sigma2) +
           0.5 * n * std::log(lambda_value) - 0.5 * lambda_value * theta_norm2 - 0.5 * log_det;
}

LaplacePosterior fit_laplace(const NetworkSpec& spec, const Params& params,
                             const Eigen::MatrixXd& Z, const Eigen::VectorXd& rewards,
                             double lambda, double sigma2) {
    if (spec.output_dim() != 1)
        throw ShapeError("Laplace posterior expects a scalar-output network");
    if (Z.rows() != rewards.size())
        throw ShapeError("observation count mismatch between features and rewards");
    if (lambda <= 0.0 || sigma2 <= 0.0)
        throw InputError("prior precision and noise variance must be positive");
    LaplacePosterior post;
    post.spec = &spec;
    post.params = params;
    post.lambda = lambda;
    post.sigma2 = sigma2;
    post.n_obs = Z.rows();
    post.theta_norm2 = flatten(spec, params).squaredNorm();
    if (Z.rows() > 0) {
        post.J = per_sample_gradients(spec, params, Z);
        const Eigen::MatrixXd K = post.J * post.J.transpose();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K);
        if (es.info() != Eigen::Success)
            throw NumericError("eigendecomposition of the Gram matrix failed");
        post.eigvec = es.eigenvectors();
        post.eigval = es.eigenvalues();
        const Eigen::VectorXd f = forward(spec, params, Z).col(0);
        post.sse = (rewards - f).squaredNorm();
    }
    return post;
}

double tune_prior_precision(LaplacePosterior& post, TuneMode mode,
                            Eigen::Index new_observations, int grid_points,
                            double online_step) {
    if (post.n_obs == 0) return post.lambda;
    if (mode == TuneMode::Posthoc) {
        if (grid_points < 2) throw InputError("prior-precision grid needs at least two points");
        double best_lambda = post.lambda;
        double best_value = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < grid_points; ++i) {
            const double log10_lambda = -6.0 + 12.0 * i / (grid_points - 1);
            const double lam = std::pow(10.0, log10_lambda);
            const double value = post.log_marginal_likelihood(lam);
            if (value > best_value) {
                best_value = value;
                best_lambda = lam;
            }
        }
        post.lambda = best_lambda;
        return post.lambda;
    }
    // Online mode: one ascent step on log(lambda), skipped when no data arrived.
    if (new_observations == 0) return post.lambda;
    const double lam = post.lambda;
    double trace_term = 0.0;  // sum_i 1 / (mu_i / sigma2 + lambda), N-dim part
    for (Eigen::Index i = 0; i < post.eigval.size(); ++i)
        trace_term += 1.0 / (std::max(post.eigval[i], 0.0) / post.sigma2 + lam);
    const double n = static_cast<double>(post.n_obs);
    // d logZ / d log(lambda); the (P - N) prior/determinant terms cancel.
    const double grad = 0.5 * n - 0.5 * lam * post.theta_norm2 - 0.5 * lam * trace_term;
    // Trust region on log(lambda): a single ascent step never moves lambda by
    // more than one decade, which keeps the warm-started iteration stable when
    // the gradient is huge far from the optimum.
    const double step = std::clamp(online_step * grad / std::max(1.0, n),
                                   -std::numbers::ln10, std::numbers::ln10);
    const double new_log = std::log(lam) + step;
    post.lambda = std::clamp(std::exp(new_log), 1e-6, 1e6);
    return post.lambda;
}

double tune_noise_variance(LaplacePosterior& post) {
    if (post.n_obs == 0) return post.sigma2;
    double d_eff = 0.0;
    for (Eigen::Index i = 0; i < post.eigval.size(); ++i) {
        const double mu = std::max(post.eigval[i], 0.0);
        d_eff += mu / (mu + post.lambda * post.sigma2);
    }
    const double denom = std::max(static_cast<double>(post.n_obs) - d_eff, 1.0);
    post.sigma2 = std::clamp(post.sse / denom, 1e-8, 1e8);
    return post.sigma2;
}

int ucb_select(const Eigen::VectorXd& means, const Eigen::VectorXd& variances, double gamma) {
    if (means.size() == 0) throw InputError("UCB selection over an empty arm set");
    if (means.size() != variances.size())
        throw ShapeError("mean/variance size mismatch in UCB selection");
    int best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < means.size(); ++a) {
        if (variances[a] < 0.0) throw InputError("negative predictive variance");
        if (!std::isfinite(means[a]) || !std::isfinite(variances[a]))
            throw NumericError("non-finite UCB score");
        const double score = means[a] + gamma * std::sqrt(variances[a]);
        if (score > best_score) {  // strict: ties keep the lowest index
            best_score = score;
            best = a;
        }
    }
    return best;
}

double gamma_ntk_theory(long t, const NtkScheduleParams& p) {
    if (t < 1) throw InputError("the exploration schedule is defined for t >= 1");
    if (p.width_m <= 1.0 || p.depth_L < 1.0 || p.lambda_reg <= 0.0 || p.delta <= 0.0 ||
        p.delta >= 1.0 || p.num_arms < 1)
        throw InputError("invalid exploration-schedule constants");
    const double m = p.width_m;
    const double L4 = std::pow(p.depth_L, 4.0);
    const double m_err = std::pow(m, -1.0 / 6.0) * std::sqrt(std::log(m)) * L4;
    const double td = static_cast<double>(t);
    const double eps1 = p.c1 * m_err * std::pow(td, 7.0 / 6.0) * std::pow(p.lambda_reg, -7.0 / 6.0);
    const double eps2 = p.c2 * m_err * std::pow(td, 5.0 / 3.0) * std::pow(p.lambda_reg, -1.0 / 6.0);
    const double log_det =
        p.eff_dim * std::log(1.0 + td * p.num_arms / p.lambda_reg);
    const double conf = p.nu * std::sqrt(log_det + eps2 + 2.0 * std::log(1.0 / p.delta)) +
                        std::sqrt(p.lambda_reg);
    return p.floor + p.scale_S * std::sqrt(1.0 + eps1) * conf;
}

namespace {

double parse_double_or_throw(const std::string& text, const std::string& what) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(text, &pos);
        if (pos != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("bad numeric value for " + what + ": '" + text + "'");
    }
}

}  // namespace

ExplorationSchedule ExplorationSchedule::parse(const std::string& text) {
    ExplorationSchedule s;
    std::string head = text, args;
    if (const auto colon = text.find(':'); colon != std::string::npos) {
        head = text.substr(0, colon);
        args = text.substr(colon + 1);
    }
    if (head == "random") {
        s.kind = ScheduleKind::Random;
    } else if (head == "constant") {
        s.kind = ScheduleKind::Constant;
        if (!args.empty()) s.constant_gamma = parse_double_or_throw(args, "constant gamma");
    } else if (head == "ntk-theory") {
        s.kind = ScheduleKind::NtkTheory;
        std::istringstream in(args);
        std::string item;
        while (std::getline(in, item, ',')) {
            const auto eq = item.find('=');
            if (eq == std::string::npos)
                throw ConfigError("schedule option '" + item + "' is not key=value");
            const std::string key = item.substr(0, eq);
            const double value = parse_double_or_throw(item.substr(eq + 1), key);
            if (key == "m") s.ntk.width_m = value;
            else if (key == "L") s.ntk.depth_L = value;
            else if (key == "delta") s.ntk.delta = value;
            else if (key == "lambda") s.ntk.lambda_reg = value;
            else if (key == "S") s.ntk.scale_S = value;
            else if (key == "nu") s.ntk.nu = value;
            else if (key == "c1") s.ntk.c1 = value;
            else if (key == "c2") s.ntk.c2 = value;
            else if (key == "dtilde") s.ntk.eff_dim = value;
            else if (key == "K") s.ntk.num_arms = static_cast<int>(value);
            else if (key == "floor") s.ntk.floor = value;
            else throw ConfigError("unknown schedule option '" + key + "'");
        }
    } else if (head == "ml-posthoc") {
        s.kind = ScheduleKind::MlPosthoc;
        if (!args.empty()) s.constant_gamma = parse_double_or_throw(args, "gamma");
    } else if (head == "ml-online") {
        s.kind = ScheduleKind::MlOnline;
        if (!args.empty()) s.constant_gamma = parse_double_or_throw(args, "gamma");
    } else {
        throw ConfigError("unknown exploration schedule '" + head + "'");
    }
    return s;
}

std::string ExplorationSchedule::name() const {
    switch (kind) {
        case ScheduleKind::Random: return "random";
        case ScheduleKind::Constant: return "constant";
        case ScheduleKind::NtkTheory: return "ntk-theory";
        case ScheduleKind::MlPosthoc: return "ml-posthoc";
        case ScheduleKind::MlOnline: return "ml-online";
    }
    return "unknown";
}

double ExplorationSchedule::gamma(long t) const {
    switch (kind) {
        case ScheduleKind::Random: return 0.0;
        case ScheduleKind::NtkTheory: return gamma_ntk_theory(t, ntk);
        default: return constant_gamma;
    }
}

TrainConfig make_default_bandit_train() {
    TrainConfig cfg;
    cfg.optimizer = Optimizer::AdamW;
    cfg.learning_rate = 1e-3;
    cfg.weight_decay = 1e-2;
    cfg.batch_size = 128;
    cfg.epochs = 500;
    cfg.loss = Loss::Mse;
    return cfg;
}

RegretTrace run_bandit(const BanditEnvironment& env, const ExplorationSchedule& schedule,
                       const BanditRunConfig& cfg) {
    if (cfg.horizon > env.rounds())
        throw InputError("bandit horizon exceeds the environment's prepared rounds");
    if (cfg.warmup_rounds < 1 || cfg.retrain_every < 1)
        throw ConfigError("warmup and retraining periods must be at least 1");

    const int D = env.arm_feature_dim();
    const NetworkSpec spec = cfg.ntk_parametrization
                                 ? NetworkSpec::mlp_ntp(D, cfg.hidden, 1, true)
                                 : NetworkSpec::mlp_sp(D, cfg.hidden, 1, true);
    InitConfig init;
    init.seed = derive_seed(cfg.seed, "bandit-init", 0);
    Params params = init_params(spec, init);
    const Params params0 = params;

    Rng policy_rng(derive_seed(cfg.seed, "bandit-policy", 0));
    TrainConfig train_cfg = cfg.train;

    RegretTrace trace;
    trace.arms.reserve(static_cast<std::size_t>(cfg.horizon));

    // Growing observation history over selected arm features.
    Eigen::MatrixXd Zs(cfg.horizon, D);
    Eigen::VectorXd rewards(cfg.horizon);

    LaplacePosterior post;
    double lambda = cfg.lambda0;
    double sigma2 = cfg.sigma2;
    bool have_posterior = false;
    long fits = 0;

    for (Eigen::Index t = 0; t < cfg.horizon; ++t) {
        bool retrained = false;
        const bool past_warmup = t >= cfg.warmup_rounds;
        const bool needs_model = past_warmup && schedule.kind != ScheduleKind::Random;
        if (needs_model &&
            (!have_posterior || (t - cfg.warmup_rounds) % cfg.retrain_every == 0)) {
            TrainData data;
            data.X = Zs.topRows(t);
            data.Y = rewards.head(t);
            if (!cfg.warm_start) params = params0;
            train_cfg.shuffle_seed = derive_seed(cfg.seed, "bandit-train", fits);
            params = train(spec, params, data, train_cfg).params;
            post = fit_laplace(spec, params, data.X, data.Y.col(0), lambda, sigma2);
            if (schedule.kind == ScheduleKind::MlPosthoc) {
                lambda = tune_prior_precision(post, TuneMode::Posthoc);
                if (cfg.tune_sigma2) {
                    // Coordinate ascent on (lambda, sigma2); a handful of
                    // alternations is enough for the fixed point to settle.
                    for (int it = 0; it < 8; ++it) {
                        sigma2 = tune_noise_variance(post);
                        lambda = tune_prior_precision(post, TuneMode::Posthoc);
                    }
                }
            } else if (schedule.kind == ScheduleKind::MlOnline) {
                lambda = tune_prior_precision(post, TuneMode::Online, cfg.retrain_every);
                if (cfg.tune_sigma2) sigma2 = tune_noise_variance(post);
            }
            have_posterior = true;
            retrained = true;
            ++fits;
        }

        int arm;
        double gamma = 0.0;
        if (!past_warmup || schedule.kind == ScheduleKind::Random) {
            arm = static_cast<int>(policy_rng.index(env.num_arms));
        } else {
            gamma = schedule.gamma(static_cast<long>(t) + 1);
            Eigen::MatrixXd Zt(env.num_arms, D);
            for (int a = 0; a < env.num_arms; ++a) Zt.row(a) = env.arm_feature(t, a);
            const Eigen::VectorXd means = forward(spec, post.params, Zt).col(0);
            Eigen::VectorXd vars(env.num_arms);
            for (int a = 0; a < env.num_arms; ++a)
                vars[a] = post.predictive_variance(Zt.row(a));
            arm = ucb_select(means, vars, gamma);
        }

        const double r = env.reward(t, arm);
        Zs.row(t) = env.arm_feature(t, arm);
        rewards[t] = r;
        trace.arms.push_back(arm);
        trace.rewards.push_back(r);
        trace.optimal_rewards.push_back(1.0);
        trace.gammas.push_back(gamma);
        trace.retrained.push_back(retrained ? 1 : 0);
        trace.lambdas.push_back(lambda);
    }
    return trace;
}

Eigen::VectorXd cumulative_regret(const RegretTrace& trace) {
    Eigen::VectorXd r(trace.rounds());
    double acc = 0.0;
    for (Eigen::Index t = 0; t < trace.rounds(); ++t) {
        acc += trace.optimal_rewards[static_cast<std::size_t>(t)] -
               trace.rewards[static_cast<std::size_t>(t)];
        r[t] = acc;
    }
    return r;
}

}  // namespace ntklens
