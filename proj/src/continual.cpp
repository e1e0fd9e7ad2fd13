#include "ntklens/continual.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ntklens/errors.hpp"
#include "ntklens/io.hpp"
#include "ntklens/rng.hpp"

namespace ntklens {

Eigen::VectorXd rotate_image(const Eigen::VectorXd& pixels, int side, double degrees) {
    if (side <= 0 || pixels.size() != Eigen::Index(side) * side)
        throw ShapeError("rotate_image expects a square row-major image");
    const double theta = degrees * M_PI / 180.0;
    const double c = std::cos(theta), s = std::sin(theta);
    const double mid = (side - 1) / 2.0;
    Eigen::VectorXd out(pixels.size());
    for (int r = 0; r < side; ++r) {
        for (int col = 0; col < side; ++col) {
            // Inverse map: where in the source does output pixel (r, col) land?
            const double dx = col - mid, dy = r - mid;
            const double sx = c * dx - s * dy + mid;
            const double sy = s * dx + c * dy + mid;
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const double fx = sx - x0, fy = sy - y0;
            double value = 0.0;
            for (int dyi = 0; dyi <= 1; ++dyi) {
                for (int dxi = 0; dxi <= 1; ++dxi) {
                    const int xx = x0 + dxi, yy = y0 + dyi;
                    if (xx < 0 || xx >= side || yy < 0 || yy >= side) continue;  // background 0
                    const double w = (dxi ? fx : 1.0 - fx) * (dyi ? fy : 1.0 - fy);
                    value += w * pixels[Eigen::Index(yy) * side + xx];
                }
            }
            out[Eigen::Index(r) * side + col] = value;
        }
    }
    return out;
}

namespace {

Eigen::MatrixXd rotate_all(const Eigen::MatrixXd& X, int side, double degrees) {
    Eigen::MatrixXd out(X.rows(), X.cols());
    for (Eigen::Index n = 0; n < X.rows(); ++n)
        out.row(n) = rotate_image(X.row(n), side, degrees);
    return out;
}

}  // namespace

std::vector<TaskData> rotated_task_sequence(const ImageDataset& train, const ImageDataset& test,
                                            const std::vector<double>& angles) {
    if (train.height != train.width) throw ShapeError("rotation tasks need square images");
    std::vector<double> use = angles;
    if (use.empty())
        for (int k = 0; k <= 8; ++k) use.push_back(22.5 * k);  // 0..180 degrees
    std::vector<int> all_classes(train.num_classes);
    for (int c = 0; c < train.num_classes; ++c) all_classes[c] = c;
    std::vector<TaskData> tasks;
    for (std::size_t t = 0; t < use.size(); ++t) {
        TaskData task;
        task.X_train = rotate_all(train.X, train.height, use[t]);
        task.y_train = train.y;
        task.X_test = rotate_all(test.X, test.height, use[t]);
        task.y_test = test.y;
        task.classes = all_classes;
        task.name = "rot" + format_double(use[t]);
        tasks.push_back(std::move(task));
    }
    return tasks;
}

namespace {

void take_classes(const ImageDataset& src, int lo, int hi, Eigen::MatrixXd& X,
                  Eigen::VectorXi& y) {
    std::vector<Eigen::Index> keep;
    for (Eigen::Index n = 0; n < src.X.rows(); ++n)
        if (src.y[n] >= lo && src.y[n] < hi) keep.push_back(n);
    X.resize(Eigen::Index(keep.size()), src.X.cols());
    y.resize(Eigen::Index(keep.size()));
    for (std::size_t i = 0; i < keep.size(); ++i) {
        X.row(Eigen::Index(i)) = src.X.row(keep[i]);
        y[Eigen::Index(i)] = src.y[keep[i]];
    }
}

}  // namespace

std::vector<TaskData> split_task_sequence(const ImageDataset& train, const ImageDataset& test,
                                          int num_tasks) {
    if (num_tasks < 1) throw ConfigError("split sequence needs at least one task");
    if (train.num_classes % num_tasks != 0)
        throw ConfigError("class count is not divisible by the number of split tasks");
    const int per = train.num_classes / num_tasks;
    std::vector<TaskData> tasks;
    for (int t = 0; t < num_tasks; ++t) {
        TaskData task;
        const int lo = t * per, hi = (t + 1) * per;
        take_classes(train, lo, hi, task.X_train, task.y_train);
        take_classes(test, lo, hi, task.X_test, task.y_test);
        for (int c = lo; c < hi; ++c) task.classes.push_back(c);
        task.name = "split" + std::to_string(t);
        tasks.push_back(std::move(task));
    }
    return tasks;
}

bool AccuracyMatrix::complete() const {
    for (Eigen::Index t = 0; t < a.rows(); ++t)
        for (Eigen::Index i = 0; i <= t; ++i)
            if (!std::isfinite(a(t, i))) return false;
    return true;
}

void AccuracyMatrix::write_csv(const std::string& path) const {
    CsvTable table({"after_task", "on_task", "accuracy"});
    for (Eigen::Index t = 0; t < a.rows(); ++t)
        for (Eigen::Index i = 0; i <= t; ++i)
            table.add_row({std::to_string(t), std::to_string(i), format_double(a(t, i))});
    table.write(path);
}

AccuracyMatrix AccuracyMatrix::read_csv(const std::string& path) {
    const CsvTable table = CsvTable::read(path);
    if (table.columns() != std::vector<std::string>{"after_task", "on_task", "accuracy"})
        throw FormatError("unexpected accuracy-matrix schema in " + path);
    Eigen::Index T = 0;
    for (const auto& row : table.data())
        T = std::max(T, Eigen::Index(std::stol(row[0])) + 1);
    AccuracyMatrix acc;
    acc.a = Eigen::MatrixXd::Constant(T, T, std::numeric_limits<double>::quiet_NaN());
    for (const auto& row : table.data())
        acc.a(std::stol(row[0]), std::stol(row[1])) = std::stod(row[2]);
    if (!acc.complete()) throw FormatError("accuracy matrix in " + path + " has missing cells");
    return acc;
}

ContinualResult train_sequential(const NetworkSpec& spec, const Params& initial,
                                 const std::vector<TaskData>& tasks, const TrainConfig& cfg) {
    if (tasks.empty()) throw InputError("empty task sequence");
    const Eigen::Index T = Eigen::Index(tasks.size());
    ContinualResult result;
    result.acc.a =
        Eigen::MatrixXd::Constant(T, T, std::numeric_limits<double>::quiet_NaN());
    result.theta0 = flatten(spec, initial);

    Params params = initial;
    for (Eigen::Index t = 0; t < T; ++t) {
        TrainConfig task_cfg = cfg;
        task_cfg.active_outputs = tasks[t].classes;
        task_cfg.shuffle_seed = derive_seed(cfg.shuffle_seed, "task", t);
        TrainData data;
        data.X = tasks[t].X_train;
        data.labels = tasks[t].y_train;
        TrainResult tr = train(spec, params, data, task_cfg);
        params = std::move(tr.params);
        result.final_task_loss.push_back(tr.epoch_loss.empty() ? 0.0 : tr.epoch_loss.back());
        for (Eigen::Index i = 0; i <= t; ++i)
            result.acc.a(t, i) = classification_accuracy(spec, params, tasks[i].X_test,
                                                         tasks[i].y_test, tasks[i].classes);
    }
    result.thetaT = flatten(spec, params);
    return result;
}

namespace {

void require_complete(const AccuracyMatrix& acc, const char* metric) {
    if (!acc.complete())
        throw UndefinedMetricError(std::string(metric) + " needs a complete accuracy matrix");
}

}  // namespace

double average_forgetting(const AccuracyMatrix& acc, bool max_includes_final) {
    const Eigen::Index T = acc.tasks();
    if (T < 2) throw UndefinedMetricError("forgetting is undefined for fewer than two tasks");
    require_complete(acc, "average forgetting");
    double total = 0.0;
    for (Eigen::Index i = 0; i < T - 1; ++i) {
        double best = -std::numeric_limits<double>::infinity();
        const Eigen::Index last = max_includes_final ? T - 1 : T - 2;
        for (Eigen::Index t = i; t <= last; ++t) best = std::max(best, acc.a(t, i));
        total += best - acc.a(T - 1, i);
    }
    return total / static_cast<double>(T - 1);
}

double average_accuracy(const AccuracyMatrix& acc) {
    const Eigen::Index T = acc.tasks();
    if (T < 1) throw UndefinedMetricError("average accuracy needs at least one task");
    require_complete(acc, "average accuracy");
    return acc.a.row(T - 1).head(T).mean();
}

double learning_accuracy(const AccuracyMatrix& acc) {
    const Eigen::Index T = acc.tasks();
    if (T < 1) throw UndefinedMetricError("learning accuracy needs at least one task");
    require_complete(acc, "learning accuracy");
    return acc.a.diagonal().mean();
}

double param_distance(const Eigen::VectorXd& theta0, const Eigen::VectorXd& thetaT) {
    if (theta0.size() != thetaT.size())
        throw ShapeError("parameter vectors of different sizes");
    const double base = theta0.norm();
    if (base == 0.0) throw UndefinedMetricError("relative distance from a zero parameter vector");
    return (thetaT - theta0).norm() / base;
}

}  // namespace ntklens
