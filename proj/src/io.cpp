#include "ntklens/io.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace ntklens {

std::string format_double(double v) {
    // Shortest decimal representation that round-trips to the same double, so
    // CSV files preserve values bit-exactly.
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

CsvTable::CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {
    if (columns_.empty()) throw ConfigError("CSV schema needs at least one column");
}

void CsvTable::add_row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_.size())
        throw ShapeError("CSV row has " + std::to_string(cells.size()) + " cells, schema has " +
                         std::to_string(columns_.size()));
    rows_.push_back(cells);
}

std::string& CsvTable::cell(std::size_t row, std::size_t col) { return rows_.at(row).at(col); }

void CsvTable::write(const std::string& path) const {
    std::ostringstream out;
    for (std::size_t c = 0; c < columns_.size(); ++c)
        out << columns_[c] << (c + 1 < columns_.size() ? "," : "\n");
    for (const auto& row : rows_)
        for (std::size_t c = 0; c < row.size(); ++c)
            out << row[c] << (c + 1 < row.size() ? "," : "\n");
    write_text_atomic(path, out.str());
}

CsvTable CsvTable::read(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + " is empty");
    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::stringstream ss(s);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            if (!cell.empty() && cell.back() == '\r') cell.pop_back();
            cells.push_back(cell);
        }
        return cells;
    };
    CsvTable table(split(line));
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        table.add_row(split(line));
    }
    return table;
}

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& M,
                      const std::vector<std::string>& columns) {
    std::vector<std::string> cols = columns;
    if (cols.empty())
        for (Eigen::Index c = 0; c < M.cols(); ++c) cols.push_back("c" + std::to_string(c));
    CsvTable table(cols);
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
        std::vector<std::string> row;
        for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(format_double(M(r, c)));
        table.add_row(row);
    }
    table.write(path);
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw InputError("quantile of an empty set");
    if (q < 0.0 || q > 1.0) throw InputError("quantile level outside [0, 1]");
    std::sort(values.begin(), values.end());
    const double pos = q * double(values.size() - 1);
    const std::size_t lo = std::size_t(std::floor(pos));
    const std::size_t hi = std::size_t(std::ceil(pos));
    const double frac = pos - double(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
}

KVConfig KVConfig::parse_text(const std::string& text, const std::set<std::string>& allowed) {
    KVConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return std::string();
        const auto b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!allowed.count(key))
            throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        cfg.values_[key] = value;
    }
    return cfg;
}

KVConfig KVConfig::parse_file(const std::string& path, const std::set<std::string>& allowed) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_text(ss.str(), allowed);
}

std::string KVConfig::get(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double KVConfig::get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (...) {
        throw ConfigError("key '" + key + "': cannot parse '" + it->second + "' as a number");
    }
}

long KVConfig::get_long(const std::string& key, long fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stol(it->second);
    } catch (...) {
        throw ConfigError("key '" + key + "': cannot parse '" + it->second + "' as an integer");
    }
}

std::string KVConfig::canonical() const {
    std::ostringstream out;
    for (const auto& [k, v] : values_) out << k << "=" << v << "\n";
    return out.str();
}

std::uint64_t hash_text(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string RunManifest::to_json() const {
    nlohmann::json j;
    j["config_hash"] = config_hash;
    j["artifact_version"] = artifact_version;
    j["seeds"] = seeds;
    j["wall_seconds"] = wall_seconds;
    j["incidents"] = incidents;
    j["files"] = files;
    return j.dump(2);
}

void write_text_atomic(const std::string& path, const std::string& text) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.parent_path() / (target.filename().string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw InputError("cannot write " + tmp.string());
        out << text;
    }
    fs::rename(tmp, target);
}

}  // namespace ntklens
