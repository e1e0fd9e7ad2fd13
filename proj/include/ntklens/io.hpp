#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ntklens/errors.hpp"

namespace ntklens {

// Deterministic double formatting used in every emitted CSV ('%.12g').
std::string format_double(double v);

// A CSV table with a fixed column schema; rows are appended as string or
// numeric cells. write() is atomic (temp file + rename).
class CsvTable {
  public:
    explicit CsvTable(std::vector<std::string> columns);

    void add_row(const std::vector<std::string>& cells);
    std::string& cell(std::size_t row, std::size_t col);
    std::size_t rows() const { return rows_.size(); }
    const std::vector<std::string>& columns() const { return columns_; }
    const std::vector<std::vector<std::string>>& data() const { return rows_; }

    void write(const std::string& path) const;
    static CsvTable read(const std::string& path);

  private:
    std::vector<std::string> columns_;
    std::vector<std::vector<std::string>> rows_;
};

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& M,
                      const std::vector<std::string>& columns = {});

// Quantiles with linear interpolation between order statistics
// (q in [0,1]; the rule matching numpy's default).
double quantile(std::vector<double> values, double q);

// Low-tech human-readable config: 'key = value' lines, '#' comments. Unknown
// keys are rejected against the allowed set.
class KVConfig {
  public:
    static KVConfig parse_file(const std::string& path, const std::set<std::string>& allowed);
    static KVConfig parse_text(const std::string& text, const std::set<std::string>& allowed);

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    std::string get(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    long get_long(const std::string& key, long fallback) const;
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    // Canonical text (sorted keys) used for config hashing.
    std::string canonical() const;

    const std::map<std::string, std::string>& values() const { return values_; }

  private:
    std::map<std::string, std::string> values_;
};

std::uint64_t hash_text(const std::string& text);

struct RunManifest {
    std::uint64_t config_hash = 0;
    std::string artifact_version = "0.1.0";
    std::vector<std::uint64_t> seeds;
    double wall_seconds = 0.0;
    std::vector<std::string> incidents;  // jitter escalations, convergence retries, cell errors
    std::vector<std::string> files;      // every emitted output file (relative names)

    std::string to_json() const;
};

// Atomic text write: temp file in the same directory, then rename.
void write_text_atomic(const std::string& path, const std::string& text);

}  // namespace ntklens
