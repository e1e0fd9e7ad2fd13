#pragma once

#include <stdexcept>
#include <string>

namespace ntklens {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

struct InputError : std::runtime_error {
    explicit InputError(const std::string& msg) : std::runtime_error("input error: " + msg) {}
};

struct CapacityError : std::runtime_error {
    explicit CapacityError(const std::string& msg) : std::runtime_error("capacity error: " + msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error("numeric error: " + msg) {}
};

struct ConditioningError : std::runtime_error {
    explicit ConditioningError(const std::string& msg) : std::runtime_error("conditioning error: " + msg) {}
};

struct ConvergenceError : std::runtime_error {
    explicit ConvergenceError(const std::string& msg) : std::runtime_error("convergence error: " + msg) {}
};

struct StabilityError : std::runtime_error {
    explicit StabilityError(const std::string& msg) : std::runtime_error("stability error: " + msg) {}
};

// Training left the finite range; carries the last epoch with a finite loss.
struct TrainingDivergenceError : std::runtime_error {
    int last_finite_epoch;
    TrainingDivergenceError(const std::string& msg, int epoch)
        : std::runtime_error("training diverged: " + msg), last_finite_epoch(epoch) {}
};

struct ConditionViolatedError : std::runtime_error {
    explicit ConditionViolatedError(const std::string& msg)
        : std::runtime_error("condition violated: " + msg) {}
};

struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error("parse error: " + msg) {}
};

struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error("format error: " + msg) {}
};

struct SelectionError : std::runtime_error {
    explicit SelectionError(const std::string& msg) : std::runtime_error("selection error: " + msg) {}
};

struct CalibrationError : std::runtime_error {
    explicit CalibrationError(const std::string& msg) : std::runtime_error("calibration error: " + msg) {}
};

struct UndefinedMetricError : std::runtime_error {
    explicit UndefinedMetricError(const std::string& msg)
        : std::runtime_error("undefined metric: " + msg) {}
};

}  // namespace ntklens
