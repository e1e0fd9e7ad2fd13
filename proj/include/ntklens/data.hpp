#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ntklens/errors.hpp"

namespace ntklens {

struct TabularDataset {
    Eigen::MatrixXd X;   // standardized features, N x D
    Eigen::VectorXi y;   // labels in [0, K)
    std::vector<std::string> feature_names;
    Eigen::VectorXd feature_mean;  // statistics used for standardization
    Eigen::VectorXd feature_std;
    int num_classes = 0;
};

// CSV with a header row; all columns numeric except that `label_column` may
// hold arbitrary class tokens (mapped to [0, K) in first-appearance order
// when non-numeric, by sorted numeric value otherwise). Features are z-score
// standardized. Parse failures name the offending row and column.
TabularDataset load_tabular_csv(const std::string& path, const std::string& label_column);

struct ImageDataset {
    Eigen::MatrixXd X;  // N x (H*W), row-major pixels in [0, 1]
    Eigen::VectorXi y;
    int height = 0;
    int width = 0;
    int num_classes = 0;
};

// Big-endian IDX3 image + IDX1 label pair; pixels scaled to [0, 1].
ImageDataset load_idx_images(const std::string& images_path, const std::string& labels_path);

// IDX writers for fixtures and interchange.
void write_idx_images(const std::string& path, const ImageDataset& data);
void write_idx_labels(const std::string& path, const ImageDataset& data);

// Gaussian-blobs classification problem: K class means on a sphere of radius
// `separation`, unit-variance features, standardized. The no-download
// stand-in for the tabular bandit benchmarks.
TabularDataset synthetic_blobs(int dim, int num_classes, int rows, std::uint64_t seed,
                               double separation = 3.0);

// Synthetic digit-like images: per-class templates made of Gaussian bumps at
// class-specific locations plus pixel noise. Used as the MNIST-format
// stand-in for rotation tasks.
ImageDataset synthetic_digits(int rows, std::uint64_t seed, int side = 28,
                              int num_classes = 10, double noise = 0.08);

}  // namespace ntklens
