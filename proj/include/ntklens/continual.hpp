#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ntklens/data.hpp"
#include "ntklens/network.hpp"
#include "ntklens/train.hpp"

namespace ntklens {

// Rotates a square image counter-clockwise by `degrees` about its center
// ((H-1)/2), using inverse mapping with bilinear interpolation and a zero
// background. `pixels` is row-major H x H in [0, 1].
Eigen::VectorXd rotate_image(const Eigen::VectorXd& pixels, int side, double degrees);

struct TaskData {
    Eigen::MatrixXd X_train;
    Eigen::VectorXi y_train;
    Eigen::MatrixXd X_test;
    Eigen::VectorXi y_test;
    std::string name;
    // Class columns this task's head reads/writes; identical across tasks for
    // rotated sequences, disjoint contiguous blocks for split sequences.
    std::vector<int> classes;
};

// Rotation task sequence: task t applies angle `angles[t]` to every train and
// test image. All tasks share the full label set. Default angles are
// 0..180 degrees in 22.5-degree steps (9 tasks).
std::vector<TaskData> rotated_task_sequence(const ImageDataset& train, const ImageDataset& test,
                                            const std::vector<double>& angles = {});

// Split task sequence: the classes are partitioned into `num_tasks` contiguous
// blocks of equal size; task t keeps only its block's samples and its head is
// that block of outputs. Throws ConfigError if the class count is not
// divisible by num_tasks.
std::vector<TaskData> split_task_sequence(const ImageDataset& train, const ImageDataset& test,
                                          int num_tasks);

// Lower-triangular accuracy record: entry (t, i) for i <= t is the test
// accuracy on task i after finishing training on task t. Cells above the
// diagonal are NaN.
struct AccuracyMatrix {
    Eigen::MatrixXd a;  // T x T

    Eigen::Index tasks() const { return a.rows(); }
    bool complete() const;
    void write_csv(const std::string& path) const;
    static AccuracyMatrix read_csv(const std::string& path);
};

struct ContinualResult {
    AccuracyMatrix acc;
    Eigen::VectorXd theta0;  // flat parameters before task 1
    Eigen::VectorXd thetaT;  // flat parameters after the last task
    std::vector<double> final_task_loss;  // last-epoch training loss per task
};

// Plain sequential fine-tuning: one network trained through the task list in
// order, no replay or regularization toward old tasks. After each task, the
// test accuracy of every task seen so far is recorded.
ContinualResult train_sequential(const NetworkSpec& spec, const Params& initial,
                                 const std::vector<TaskData>& tasks, const TrainConfig& cfg);

// Mean over earlier tasks of the drop from their best recorded accuracy
// (over checkpoints t <= T-1) to their final accuracy. `max_includes_final`
// switches the inner max to t <= T, a variant that is never negative.
// Throws UndefinedMetricError for fewer than two tasks.
double average_forgetting(const AccuracyMatrix& acc, bool max_includes_final = false);

// Mean final accuracy over all tasks: (1/T) sum_i a(T-1, i).
double average_accuracy(const AccuracyMatrix& acc);

// Mean diagonal accuracy: each task measured right after it was learned.
double learning_accuracy(const AccuracyMatrix& acc);

// Relative parameter movement ||theta_T - theta_0|| / ||theta_0||.
double param_distance(const Eigen::VectorXd& theta0, const Eigen::VectorXd& thetaT);

}  // namespace ntklens
