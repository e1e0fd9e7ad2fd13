#include "ntklens/harness.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include <Eigen/Dense>

#include "ntklens/bandit.hpp"
#include "ntklens/continual.hpp"
#include "ntklens/data.hpp"
#include "ntklens/diagnostics.hpp"
#include "ntklens/errors.hpp"
#include "ntklens/kernel.hpp"
#include "ntklens/rng.hpp"
#include "ntklens/train.hpp"

namespace ntklens {

namespace {

std::vector<int> parse_int_list(const std::string& text, const std::string& what) {
    std::vector<int> out;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            std::size_t pos = 0;
            out.push_back(std::stoi(item, &pos));
            if (pos != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError("bad integer '" + item + "' in " + what);
        }
    }
    if (out.empty()) throw ConfigError(what + " must list at least one value");
    return out;
}

std::vector<double> parse_double_list(const std::string& text, const std::string& what) {
    std::vector<double> out;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            std::size_t pos = 0;
            out.push_back(std::stod(item, &pos));
            if (pos != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError("bad number '" + item + "' in " + what);
        }
    }
    return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> out;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        try {
            std::size_t pos = 0;
            out.push_back(std::stoull(item, &pos));
            if (pos != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError("bad seed '" + item + "' in seed list");
        }
    }
    return out;
}

const std::set<std::string>& allowed_keys(ExperimentKind kind) {
    static const std::set<std::string> common = {"seeds", "out"};
    static const std::set<std::string> diagnose = [] {
        std::set<std::string> s = common;
        s.insert({"widths", "depths", "n_train", "k_samples", "problem_seed", "noise_scale",
                  "deep_bias"});
        return s;
    }();
    static const std::set<std::string> bandit = [] {
        std::set<std::string> s = common;
        s.insert({"dataset", "label_column", "schedules", "horizon", "hidden", "epochs",
                  "batch_size", "learning_rate", "weight_decay", "warmup", "retrain_every",
                  "warm_start", "lambda0", "sigma2", "tune_sigma2", "ntk_param", "synthetic_dim",
                  "synthetic_classes", "synthetic_rows", "synthetic_separation"});
        return s;
    }();
    static const std::set<std::string> continual = [] {
        std::set<std::string> s = common;
        s.insert({"widths", "epochs", "batch_size", "learning_rate", "momentum",
                  "weight_decay", "train_rows", "test_rows", "angles", "side", "num_classes",
                  "dataset", "train_images", "train_labels", "test_images", "test_labels",
                  "problem_seed"});
        return s;
    }();
    static const std::set<std::string> figure1 = [] {
        std::set<std::string> s = common;
        s.insert({"width", "width_factor", "depth", "n_train", "sigma2", "lambda", "epochs",
                  "learning_rate", "momentum", "grid_points", "beta2"});
        return s;
    }();
    switch (kind) {
        case ExperimentKind::Diagnose: return diagnose;
        case ExperimentKind::Bandit: return bandit;
        case ExperimentKind::Continual: return continual;
        case ExperimentKind::Figure1: return figure1;
    }
    return common;
}

const char* kind_name(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::Diagnose: return "diagnose";
        case ExperimentKind::Bandit: return "bandit";
        case ExperimentKind::Continual: return "continual";
        case ExperimentKind::Figure1: return "figure1";
    }
    return "unknown";
}

// Appends a written file to the inventory with its name relative to out_dir.
struct Emitter {
    std::string out_dir;
    std::vector<std::string>* files;

    std::string path(const std::string& name) const {
        return (std::filesystem::path(out_dir) / name).string();
    }
    void table(const std::string& name, const CsvTable& t) {
        t.write(path(name));
        files->push_back(name);
    }
    void text(const std::string& name, const std::string& body) {
        write_text_atomic(path(name), body);
        files->push_back(name);
    }
};

std::string verdict_name(Verdict v) {
    return v == Verdict::StableViolated ? "violated" : "possible";
}

void run_diagnose(const ExperimentConfig& cfg, Emitter& emit,
                  std::vector<std::string>& incidents) {
    const auto widths = parse_int_list(cfg.raw.get("widths", "64,256,1024"), "widths");
    const auto depths = parse_int_list(cfg.raw.get("depths", "2"), "depths");
    const int n_train = static_cast<int>(cfg.raw.get_long("n_train", 16));
    const int k_samples = static_cast<int>(cfg.raw.get_long("k_samples", 5));
    const auto problem_seed =
        static_cast<std::uint64_t>(cfg.raw.get_long("problem_seed", 0));
    const double noise = cfg.raw.get_double("noise_scale", 0.1);
    const bool deep_bias = cfg.raw.get_long("deep_bias", 1) != 0;

    const SyntheticProblem problem = synthetic_problem(n_train, problem_seed, true, noise);
    const SweepTable sweep = width_sweep(widths, depths, cfg.seeds, problem, k_samples,
                                         deep_bias);

    CsvTable report({"width", "depth", "seed", "sample", "lambda_min", "rho", "deviation",
                     "c_prime", "verdict", "analytic_lambda0"});
    std::string json = "[\n";
    bool first = true;
    for (const auto& cell : sweep.cells) {
        if (!cell.ok) {
            incidents.push_back("diagnose cell width=" + std::to_string(cell.width) +
                                " depth=" + std::to_string(cell.depth) +
                                " seed=" + std::to_string(cell.seed) + ": " + cell.error);
            continue;
        }
        const auto& r = cell.report;
        const std::string analytic =
            r.analytic_lambda0 ? format_double(*r.analytic_lambda0) : "";
        for (std::size_t i = 0; i < r.c_prime.size(); ++i) {
            report.add_row({std::to_string(r.width), std::to_string(r.depth),
                            std::to_string(r.seed), std::to_string(i),
                            format_double(r.lambda_min), format_double(r.rho),
                            format_double(r.deviation_norms[i]), format_double(r.c_prime[i]),
                            verdict_name(r.verdict), analytic});
        }
        json += (first ? "" : ",\n") + r.to_json();
        first = false;
    }
    json += "\n]\n";
    emit.table("stability_report.csv", report);
    emit.text("stability_manifest.json", json);
}

void run_bandit_experiment(const ExperimentConfig& cfg, Emitter& emit,
                           std::vector<std::string>& incidents) {
    const std::string dataset_name = cfg.raw.get("dataset", "synthetic");
    const auto horizon = static_cast<Eigen::Index>(cfg.raw.get_long("horizon", 2000));

    TabularDataset data;
    if (dataset_name == "synthetic") {
        data = synthetic_blobs(static_cast<int>(cfg.raw.get_long("synthetic_dim", 10)),
                               static_cast<int>(cfg.raw.get_long("synthetic_classes", 4)),
                               static_cast<int>(cfg.raw.get_long("synthetic_rows", 4000)),
                               /*seed=*/0xb4d17,
                               cfg.raw.get_double("synthetic_separation", 3.0));
    } else {
        const std::string label = cfg.raw.get("label_column", "label");
        data = load_tabular_csv(
            (std::filesystem::path(dataset_root()) / dataset_name).string(), label);
    }

    std::vector<ExplorationSchedule> schedules;
    {
        std::istringstream in(cfg.raw.get("schedules", "constant:1"));
        std::string item;
        while (std::getline(in, item, ';'))
            if (!item.empty()) schedules.push_back(ExplorationSchedule::parse(item));
        if (schedules.empty()) throw ConfigError("no exploration schedules given");
    }

    BanditRunConfig run_cfg;
    run_cfg.horizon = horizon;
    run_cfg.warmup_rounds = static_cast<int>(cfg.raw.get_long("warmup", 10));
    run_cfg.retrain_every = static_cast<int>(cfg.raw.get_long("retrain_every", 100));
    run_cfg.hidden = parse_int_list(cfg.raw.get("hidden", "100,100"), "hidden");
    run_cfg.ntk_parametrization = cfg.raw.get_long("ntk_param", 0) != 0;
    run_cfg.warm_start = cfg.raw.get_long("warm_start", 0) != 0;
    run_cfg.lambda0 = cfg.raw.get_double("lambda0", 1.0);
    run_cfg.sigma2 = cfg.raw.get_double("sigma2", 1.0);
    run_cfg.tune_sigma2 = cfg.raw.get_long("tune_sigma2", 0) != 0;
    run_cfg.train = make_default_bandit_train();
    run_cfg.train.epochs = static_cast<int>(cfg.raw.get_long("epochs", 500));
    run_cfg.train.batch_size = static_cast<int>(cfg.raw.get_long("batch_size", 128));
    run_cfg.train.learning_rate = cfg.raw.get_double("learning_rate", 1e-3);
    run_cfg.train.weight_decay = cfg.raw.get_double("weight_decay", 1e-2);

    CsvTable regret({"t", "seed", "schedule", "R"});
    CsvTable gammas({"t", "seed", "schedule", "gamma", "lambda", "retrained"});
    for (const auto& schedule : schedules) {
        for (const auto seed : cfg.seeds) {
            try {
                const BanditEnvironment env =
                    make_bandit_env(data, derive_seed(seed, "bandit-env", 0), horizon);
                BanditRunConfig rc = run_cfg;
                rc.seed = seed;
                const RegretTrace trace = run_bandit(env, schedule, rc);
                const Eigen::VectorXd R = cumulative_regret(trace);
                for (Eigen::Index t = 0; t < trace.rounds(); ++t) {
                    const auto ti = static_cast<std::size_t>(t);
                    regret.add_row({std::to_string(t), std::to_string(seed), schedule.name(),
                                    format_double(R[t])});
                    gammas.add_row({std::to_string(t), std::to_string(seed), schedule.name(),
                                    format_double(trace.gammas[ti]),
                                    format_double(trace.lambdas[ti]),
                                    std::to_string(int(trace.retrained[ti]))});
                }
            } catch (const std::exception& e) {
                incidents.push_back("bandit run schedule=" + schedule.name() +
                                    " seed=" + std::to_string(seed) + ": " + e.what());
            }
        }
    }
    emit.table("regret_trace.csv", regret);
    emit.table("gamma_trace.csv", gammas);
}

ImageDataset subsample_images(const ImageDataset& src, Eigen::Index rows, std::uint64_t seed) {
    if (rows <= 0 || rows >= src.X.rows()) return src;
    Rng rng(seed);
    const auto order = shuffled_indices(static_cast<std::size_t>(src.X.rows()), rng);
    ImageDataset out = src;
    out.X.resize(rows, src.X.cols());
    out.y.resize(rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
        out.X.row(i) = src.X.row(static_cast<Eigen::Index>(order[std::size_t(i)]));
        out.y[i] = src.y[static_cast<Eigen::Index>(order[std::size_t(i)])];
    }
    return out;
}

void run_continual(const ExperimentConfig& cfg, Emitter& emit,
                   std::vector<std::string>& incidents) {
    const auto widths = parse_int_list(cfg.raw.get("widths", "64,256,1024"), "widths");
    const auto train_rows = static_cast<Eigen::Index>(cfg.raw.get_long("train_rows", 2000));
    const auto test_rows = static_cast<Eigen::Index>(cfg.raw.get_long("test_rows", 500));
    const auto problem_seed =
        static_cast<std::uint64_t>(cfg.raw.get_long("problem_seed", 0));

    ImageDataset train_set, test_set;
    if (cfg.raw.get("dataset", "synthetic") == "synthetic") {
        const int side = static_cast<int>(cfg.raw.get_long("side", 14));
        const int classes = static_cast<int>(cfg.raw.get_long("num_classes", 10));
        train_set = synthetic_digits(static_cast<int>(train_rows),
                                     derive_seed(problem_seed, "digits-train", 0), side,
                                     classes);
        test_set = synthetic_digits(static_cast<int>(test_rows),
                                    derive_seed(problem_seed, "digits-test", 0), side,
                                    classes);
    } else {
        const std::filesystem::path root = dataset_root();
        train_set = load_idx_images((root / cfg.raw.get("train_images", "")).string(),
                                    (root / cfg.raw.get("train_labels", "")).string());
        test_set = load_idx_images((root / cfg.raw.get("test_images", "")).string(),
                                   (root / cfg.raw.get("test_labels", "")).string());
        train_set = subsample_images(train_set, train_rows,
                                     derive_seed(problem_seed, "subsample-train", 0));
        test_set = subsample_images(test_set, test_rows,
                                    derive_seed(problem_seed, "subsample-test", 0));
    }

    std::vector<double> angles =
        parse_double_list(cfg.raw.get("angles", ""), "angles");  // empty = default 9 tasks
    const std::vector<TaskData> tasks = rotated_task_sequence(train_set, test_set, angles);

    TrainConfig train_cfg;
    train_cfg.optimizer = Optimizer::SgdMomentum;
    train_cfg.learning_rate = cfg.raw.get_double("learning_rate", 1e-4);
    train_cfg.momentum = cfg.raw.get_double("momentum", 0.9);
    train_cfg.weight_decay = cfg.raw.get_double("weight_decay", 1e-4);
    train_cfg.batch_size = static_cast<int>(cfg.raw.get_long("batch_size", 32));
    train_cfg.epochs = static_cast<int>(cfg.raw.get_long("epochs", 5));
    train_cfg.loss = Loss::CrossEntropy;

    CsvTable metrics({"width", "seed", "avg_forgetting", "avg_forgetting_incl_final",
                      "avg_accuracy", "learning_accuracy", "param_distance"});
    for (const int width : widths) {
        for (const auto seed : cfg.seeds) {
            try {
                const NetworkSpec spec = NetworkSpec::mlp_sp(
                    static_cast<int>(train_set.X.cols()), {width}, train_set.num_classes,
                    /*bias=*/true);
                InitConfig init{derive_seed(seed, "continual-init",
                                            static_cast<std::uint64_t>(width)),
                                1.0};
                TrainConfig tc = train_cfg;
                tc.shuffle_seed = derive_seed(seed, "continual-shuffle",
                                              static_cast<std::uint64_t>(width));
                const ContinualResult result =
                    train_sequential(spec, init_params(spec, init), tasks, tc);

                const std::string matrix_name = "accuracy_matrix_" + std::to_string(width) +
                                                "_" + std::to_string(seed) + ".csv";
                result.acc.write_csv(emit.path(matrix_name));
                emit.files->push_back(matrix_name);
                metrics.add_row({std::to_string(width), std::to_string(seed),
                                 format_double(average_forgetting(result.acc)),
                                 format_double(average_forgetting(result.acc, true)),
                                 format_double(average_accuracy(result.acc)),
                                 format_double(learning_accuracy(result.acc)),
                                 format_double(
                                     param_distance(result.theta0, result.thetaT))});
            } catch (const std::exception& e) {
                incidents.push_back("continual cell width=" + std::to_string(width) +
                                    " seed=" + std::to_string(seed) + ": " + e.what());
            }
        }
    }
    emit.table("continual_metrics.csv", metrics);
}

void run_figure1(const ExperimentConfig& cfg, Emitter& emit,
                 std::vector<std::string>& incidents) {
    const int base_width = static_cast<int>(cfg.raw.get_long("width", 128));
    const int factor = static_cast<int>(cfg.raw.get_long("width_factor", 10));
    const int depth = static_cast<int>(cfg.raw.get_long("depth", 3));
    const int n_train = static_cast<int>(cfg.raw.get_long("n_train", 20));
    const double sigma2 = cfg.raw.get_double("sigma2", 1e-6);
    const double lambda = cfg.raw.get_double("lambda", 1.0);
    const double beta2 = cfg.raw.get_double("beta2", 1.0);
    const int grid_points = static_cast<int>(cfg.raw.get_long("grid_points", 201));
    if (depth < 2) throw ConfigError("figure1 needs depth >= 2");
    const std::uint64_t seed = cfg.seeds.empty() ? 0 : cfg.seeds.front();

    // 1D sinusoid with a gap in the middle of [-1, 1]: half of the training
    // points on each side, none in (-0.2, 0.2).
    Eigen::MatrixXd X(n_train, 1);
    Eigen::VectorXd y(n_train);
    const int half = n_train / 2;
    for (int i = 0; i < n_train; ++i) {
        const double u = (i < half) ? -1.0 + 0.8 * i / std::max(1, half - 1)
                                    : 0.2 + 0.8 * (i - half) / std::max(1, n_train - half - 1);
        X(i, 0) = u;
        y[i] = std::sin(2.0 * M_PI * u / 1.6);
    }

    Eigen::VectorXd grid(grid_points);
    for (int i = 0; i < grid_points; ++i)
        grid[i] = -1.2 + 2.4 * i / (grid_points - 1);

    // Infinite-width reference: analytic NTK-GP posterior.
    const KernelMatrix K = ntk_relu_gram(depth, X, beta2);
    const GPPosterior gp =
        gp_posterior(K, y, Eigen::VectorXd::Zero(n_train), sigma2);
    Eigen::MatrixXd Xg(grid_points, 1);
    Xg.col(0) = grid;
    const Eigen::MatrixXd Kx = ntk_relu_cross(depth, Xg, X, beta2);

    std::vector<std::string> columns = {"x", "target", "ntk_mean", "ntk_lo", "ntk_hi"};
    std::vector<int> variant_widths = {base_width};
    if (factor > 1) variant_widths.push_back(base_width * factor);
    for (const int w : variant_widths) {
        const std::string tag = "_m" + std::to_string(w);
        columns.push_back("pred" + tag);
        columns.push_back("lla_lo" + tag);
        columns.push_back("lla_hi" + tag);
    }
    CsvTable table{columns};

    std::vector<Eigen::VectorXd> preds, los, his;
    for (const int w : variant_widths) {
        const NetworkSpec spec =
            NetworkSpec::mlp_ntp(1, std::vector<int>(depth - 1, w), 1, /*bias=*/true);
        InitConfig init{derive_seed(seed, "figure1-init", static_cast<std::uint64_t>(w)),
                        1.0};
        TrainData data;
        data.X = X;
        data.Y = y;
        TrainConfig tc;
        tc.optimizer = Optimizer::SgdMomentum;
        tc.learning_rate = cfg.raw.get_double("learning_rate", 0.05);
        tc.momentum = cfg.raw.get_double("momentum", 0.9);
        tc.batch_size = n_train;
        tc.epochs = static_cast<int>(cfg.raw.get_long("epochs", 2000));
        tc.shuffle_seed = derive_seed(seed, "figure1-shuffle", static_cast<std::uint64_t>(w));
        const TrainResult tr = train(spec, init_params(spec, init), data, tc);

        const LaplacePosterior post = fit_laplace(spec, tr.params, X, y, lambda, sigma2);
        Eigen::VectorXd pred = forward(spec, tr.params, Xg).col(0);
        Eigen::VectorXd sd(grid_points);
        for (int i = 0; i < grid_points; ++i)
            sd[i] = std::sqrt(post.predictive_variance(Xg.row(i)));
        preds.push_back(pred);
        los.push_back(pred - 2.0 * sd);
        his.push_back(pred + 2.0 * sd);
    }

    for (int i = 0; i < grid_points; ++i) {
        const Eigen::VectorXd k = Kx.row(i);
        const double mean = gp.mean(k, 0.0);
        const double var =
            gp.cov(k, k, ntk_relu_analytic(depth, Xg.row(i), Xg.row(i), beta2).ntk);
        const double sd = std::sqrt(std::max(var, 0.0));
        std::vector<std::string> row = {
            format_double(grid[i]), format_double(std::sin(2.0 * M_PI * grid[i] / 1.6)),
            format_double(mean), format_double(mean - 2.0 * sd),
            format_double(mean + 2.0 * sd)};
        for (std::size_t v = 0; v < variant_widths.size(); ++v) {
            row.push_back(format_double(preds[v][i]));
            row.push_back(format_double(los[v][i]));
            row.push_back(format_double(his[v][i]));
        }
        table.add_row(row);
    }
    emit.table("figure1.csv", table);

    CsvTable train_table({"x", "y"});
    for (int i = 0; i < n_train; ++i)
        train_table.add_row({format_double(X(i, 0)), format_double(y[i])});
    emit.table("figure1_train.csv", train_table);
    (void)incidents;
}

}  // namespace

ExperimentKind ExperimentConfig::parse_kind(const std::string& name) {
    if (name == "diagnose") return ExperimentKind::Diagnose;
    if (name == "bandit") return ExperimentKind::Bandit;
    if (name == "continual") return ExperimentKind::Continual;
    if (name == "figure1") return ExperimentKind::Figure1;
    throw ConfigError("unknown experiment kind '" + name + "'");
}

ExperimentConfig ExperimentConfig::load(ExperimentKind kind, const std::string& config_path,
                                        const std::string& out_override,
                                        const std::string& seeds_override) {
    ExperimentConfig cfg;
    cfg.kind = kind;
    cfg.raw = KVConfig::parse_file(config_path, allowed_keys(kind));
    if (!out_override.empty()) cfg.raw.set("out", out_override);
    if (!seeds_override.empty()) cfg.raw.set("seeds", seeds_override);
    cfg.out_dir = cfg.raw.get("out", "out");
    cfg.seeds = parse_seed_list(cfg.raw.get("seeds", ""));
    return cfg;
}

std::string dataset_root() {
    const char* env = std::getenv("NTK_LENS_DATA_ROOT");
    return env && *env ? env : ".";
}

RunOutcome run_experiment(const ExperimentConfig& config) {
    const auto t0 = std::chrono::steady_clock::now();
    std::filesystem::create_directories(config.out_dir);

    RunOutcome outcome;
    outcome.manifest.config_hash =
        hash_text(std::string(kind_name(config.kind)) + "\n" + config.raw.canonical());
    outcome.manifest.seeds = config.seeds;
    Emitter emit{config.out_dir, &outcome.manifest.files};

    if (!config.seeds.empty() || config.kind == ExperimentKind::Figure1) {
        switch (config.kind) {
            case ExperimentKind::Diagnose:
                run_diagnose(config, emit, outcome.manifest.incidents);
                break;
            case ExperimentKind::Bandit:
                run_bandit_experiment(config, emit, outcome.manifest.incidents);
                break;
            case ExperimentKind::Continual:
                run_continual(config, emit, outcome.manifest.incidents);
                break;
            case ExperimentKind::Figure1:
                run_figure1(config, emit, outcome.manifest.incidents);
                break;
        }
    }

    outcome.partial_failure = !outcome.manifest.incidents.empty();
    outcome.manifest.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_text_atomic((std::filesystem::path(config.out_dir) / "manifest.json").string(),
                      outcome.manifest.to_json());
    return outcome;
}

CsvTable emit_plot_data(const CsvTable& table) {
    const auto& cols = table.columns();
    if (cols.size() < 2 || cols.back() != "value")
        throw InputError("plot-data aggregation expects key columns plus a final 'value'");
    std::vector<std::string> out_cols(cols.begin(), cols.end() - 1);
    out_cols.push_back("statistic");
    out_cols.push_back("value");
    CsvTable out{out_cols};

    std::vector<std::vector<std::string>> group_order;
    std::map<std::vector<std::string>, std::vector<double>> groups;
    for (const auto& row : table.data()) {
        std::vector<std::string> key(row.begin(), row.end() - 1);
        auto [it, inserted] = groups.try_emplace(key);
        if (inserted) group_order.push_back(key);
        it->second.push_back(std::stod(row.back()));
    }
    for (const auto& key : group_order) {
        const auto& values = groups[key];
        const std::vector<std::pair<const char*, double>> stats = {
            {"median", quantile(values, 0.5)},
            {"q25", quantile(values, 0.25)},
            {"q75", quantile(values, 0.75)}};
        for (const auto& [name, value] : stats) {
            std::vector<std::string> row = key;
            row.push_back(name);
            row.push_back(format_double(value));
            out.add_row(row);
        }
    }
    return out;
}

}  // namespace ntklens
