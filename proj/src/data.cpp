#include "ntklens/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>

#include "ntklens/rng.hpp"

namespace ntklens {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

}  // namespace

TabularDataset load_tabular_csv(const std::string& path, const std::string& label_column) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + " is empty");
    const auto header = split_csv_line(line);
    if (header.empty()) throw ParseError(path + ": empty header row");
    Eigen::Index label_idx = -1;
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == label_column) label_idx = Eigen::Index(i);
    if (label_idx < 0) throw ParseError(path + ": missing column '" + label_column + "'");

    std::vector<std::vector<double>> feature_rows;
    std::vector<std::string> label_tokens;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected " +
                             std::to_string(header.size()) + " cells, got " +
                             std::to_string(cells.size()));
        std::vector<double> row;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (Eigen::Index(i) == label_idx) {
                label_tokens.push_back(cells[i]);
                continue;
            }
            std::size_t consumed = 0;
            double v = 0.0;
            try {
                v = std::stod(cells[i], &consumed);
            } catch (...) {
                consumed = 0;
            }
            if (consumed != cells[i].size() || !std::isfinite(v))
                throw ParseError(path + ":" + std::to_string(lineno) + ": column '" +
                                 header[i] + "': non-numeric or non-finite cell '" +
                                 cells[i] + "'");
            row.push_back(v);
        }
        feature_rows.push_back(std::move(row));
    }
    if (feature_rows.empty()) throw ParseError(path + ": no data rows");

    TabularDataset data;
    for (std::size_t i = 0; i < header.size(); ++i)
        if (Eigen::Index(i) != label_idx) data.feature_names.push_back(header[i]);

    const Eigen::Index N = Eigen::Index(feature_rows.size());
    const Eigen::Index D = Eigen::Index(feature_rows.front().size());
    data.X.resize(N, D);
    for (Eigen::Index n = 0; n < N; ++n)
        for (Eigen::Index d = 0; d < D; ++d) data.X(n, d) = feature_rows[std::size_t(n)][std::size_t(d)];

    // Label mapping: sorted numeric values when all tokens parse as numbers,
    // otherwise first-appearance order of the tokens.
    bool all_numeric = true;
    std::vector<double> numeric(label_tokens.size());
    for (std::size_t i = 0; i < label_tokens.size(); ++i) {
        std::size_t consumed = 0;
        try {
            numeric[i] = std::stod(label_tokens[i], &consumed);
        } catch (...) {
            consumed = 0;
        }
        if (consumed != label_tokens[i].size()) {
            all_numeric = false;
            break;
        }
    }
    data.y.resize(N);
    if (all_numeric) {
        std::vector<double> distinct(numeric);
        std::sort(distinct.begin(), distinct.end());
        distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
        std::map<double, int> index;
        for (std::size_t i = 0; i < distinct.size(); ++i) index[distinct[i]] = int(i);
        for (Eigen::Index n = 0; n < N; ++n) data.y[n] = index[numeric[std::size_t(n)]];
        data.num_classes = int(distinct.size());
    } else {
        std::map<std::string, int> index;
        for (Eigen::Index n = 0; n < N; ++n) {
            auto [it, inserted] =
                index.emplace(label_tokens[std::size_t(n)], int(index.size()));
            data.y[n] = it->second;
        }
        data.num_classes = int(index.size());
    }

    data.feature_mean = data.X.colwise().mean();
    data.feature_std.resize(D);
    for (Eigen::Index d = 0; d < D; ++d) {
        const double var =
            (data.X.col(d).array() - data.feature_mean[d]).square().sum() / double(N);
        data.feature_std[d] = var > 0.0 ? std::sqrt(var) : 1.0;
        data.X.col(d) = (data.X.col(d).array() - data.feature_mean[d]) / data.feature_std[d];
    }
    return data;
}

namespace {

std::uint32_t read_be_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw FormatError(path + ": truncated IDX header");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<char*>(b), 4);
}

}  // namespace

ImageDataset load_idx_images(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw FormatError("cannot open " + images_path);
    if (read_be_u32(img, images_path) != 0x00000803u)
        throw FormatError(images_path + ": bad IDX3 magic number");
    const std::uint32_t n = read_be_u32(img, images_path);
    const std::uint32_t h = read_be_u32(img, images_path);
    const std::uint32_t w = read_be_u32(img, images_path);

    ImageDataset data;
    data.height = int(h);
    data.width = int(w);
    data.X.resize(n, Eigen::Index(h) * w);
    std::vector<unsigned char> buf(std::size_t(h) * w);
    for (std::uint32_t i = 0; i < n; ++i) {
        if (!img.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size())))
            throw FormatError(images_path + ": truncated image data at record " +
                              std::to_string(i));
        for (std::size_t p = 0; p < buf.size(); ++p)
            data.X(i, Eigen::Index(p)) = double(buf[p]) / 255.0;
    }

    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw FormatError("cannot open " + labels_path);
    if (read_be_u32(lab, labels_path) != 0x00000801u)
        throw FormatError(labels_path + ": bad IDX1 magic number");
    const std::uint32_t nl = read_be_u32(lab, labels_path);
    if (nl != n)
        throw FormatError(labels_path + ": label count does not match image count");
    data.y.resize(n);
    int max_label = 0;
    for (std::uint32_t i = 0; i < n; ++i) {
        char c;
        if (!lab.get(c)) throw FormatError(labels_path + ": truncated label data");
        data.y[i] = int(static_cast<unsigned char>(c));
        max_label = std::max(max_label, data.y[i]);
    }
    data.num_classes = max_label + 1;
    return data;
}

void write_idx_images(const std::string& path, const ImageDataset& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    write_be_u32(out, 0x00000803u);
    write_be_u32(out, std::uint32_t(data.X.rows()));
    write_be_u32(out, std::uint32_t(data.height));
    write_be_u32(out, std::uint32_t(data.width));
    for (Eigen::Index i = 0; i < data.X.rows(); ++i)
        for (Eigen::Index p = 0; p < data.X.cols(); ++p) {
            const double v = std::clamp(data.X(i, p), 0.0, 1.0);
            out.put(char(static_cast<unsigned char>(std::lround(v * 255.0))));
        }
}

void write_idx_labels(const std::string& path, const ImageDataset& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    write_be_u32(out, 0x00000801u);
    write_be_u32(out, std::uint32_t(data.y.size()));
    for (Eigen::Index i = 0; i < data.y.size(); ++i)
        out.put(char(static_cast<unsigned char>(data.y[i])));
}

TabularDataset synthetic_blobs(int dim, int num_classes, int rows, std::uint64_t seed,
                               double separation) {
    if (dim < 1 || num_classes < 2 || rows < num_classes)
        throw ConfigError("blobs need dim >= 1, K >= 2 and rows >= K");
    // Class means are a fixed function of the class index so different seeds
    // sample the same underlying problem.
    Eigen::MatrixXd means(num_classes, dim);
    for (int k = 0; k < num_classes; ++k) {
        Rng mean_rng(derive_seed(0xb10b5, "class-mean", std::uint64_t(k)));
        Eigen::VectorXd dir = mean_rng.normal_vector(dim).normalized();
        means.row(k) = separation * dir;
    }
    TabularDataset data;
    data.X.resize(rows, dim);
    data.y.resize(rows);
    data.num_classes = num_classes;
    Rng rng(seed);
    for (int n = 0; n < rows; ++n) {
        const int k = n % num_classes;
        data.y[n] = k;
        data.X.row(n) = means.row(k) + rng.normal_vector(dim).transpose();
    }
    for (int d = 0; d < dim; ++d)
        data.feature_names.push_back("f" + std::to_string(d));
    data.feature_mean = data.X.colwise().mean();
    data.feature_std.resize(dim);
    for (int d = 0; d < dim; ++d) {
        const double var =
            (data.X.col(d).array() - data.feature_mean[d]).square().sum() / double(rows);
        data.feature_std[d] = var > 0.0 ? std::sqrt(var) : 1.0;
        data.X.col(d) = (data.X.col(d).array() - data.feature_mean[d]) / data.feature_std[d];
    }
    return data;
}

ImageDataset synthetic_digits(int rows, std::uint64_t seed, int side, int num_classes,
                              double noise) {
    if (rows < 1 || side < 4) throw ConfigError("synthetic digits need rows >= 1, side >= 4");
    ImageDataset data;
    data.height = side;
    data.width = side;
    data.num_classes = num_classes;
    data.X.resize(rows, Eigen::Index(side) * side);
    data.y.resize(rows);

    // Per-class template: three Gaussian bumps at class-specific positions,
    // fixed independent of the sampling seed.
    const int bumps = 3;
    std::vector<Eigen::MatrixXd> centers(static_cast<std::size_t>(num_classes));
    for (int k = 0; k < num_classes; ++k) {
        Rng trng(derive_seed(0xd161e5, "class-template", std::uint64_t(k)));
        Eigen::MatrixXd c(bumps, 2);
        for (int b = 0; b < bumps; ++b) {
            c(b, 0) = side * (0.25 + 0.5 * trng.uniform());
            c(b, 1) = side * (0.25 + 0.5 * trng.uniform());
        }
        centers[std::size_t(k)] = c;
    }

    Rng rng(seed);
    const double sigma = side / 11.0;
    for (int n = 0; n < rows; ++n) {
        const int k = n % num_classes;
        data.y[n] = k;
        // Small per-sample jitter of the bump centers.
        Eigen::MatrixXd c = centers[std::size_t(k)];
        for (int b = 0; b < bumps; ++b) {
            c(b, 0) += 0.6 * rng.normal();
            c(b, 1) += 0.6 * rng.normal();
        }
        for (int r = 0; r < side; ++r) {
            for (int col = 0; col < side; ++col) {
                double v = 0.0;
                for (int b = 0; b < bumps; ++b) {
                    const double dr = r - c(b, 0);
                    const double dc = col - c(b, 1);
                    v += std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
                }
                v += noise * rng.normal();
                data.X(n, Eigen::Index(r) * side + col) = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return data;
}

}  // namespace ntklens
