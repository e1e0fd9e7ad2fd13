#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ntklens/io.hpp"

namespace ntklens {

enum class ExperimentKind { Diagnose, Bandit, Continual, Figure1 };

// Fully validated experiment description. Built from a key-value config file
// plus CLI overrides; unknown keys and malformed values are rejected up front,
// before any compute runs.
struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::Diagnose;
    std::string out_dir = "out";
    std::vector<std::uint64_t> seeds;
    KVConfig raw;  // validated key-value block (kind-specific parameters)

    static ExperimentKind parse_kind(const std::string& name);
    // `overrides` are applied after the file is parsed (CLI flags win).
    static ExperimentConfig load(ExperimentKind kind, const std::string& config_path,
                                 const std::string& out_override,
                                 const std::string& seeds_override);
};

struct RunOutcome {
    RunManifest manifest;
    bool partial_failure = false;  // at least one cell failed and was recorded
};

// Dispatches to the experiment pipelines. Per-cell failures are recorded in
// the manifest incidents and the run continues; the manifest itself is
// written atomically, last, as <out>/manifest.json.
RunOutcome run_experiment(const ExperimentConfig& config);

// Aggregates a long-format table (experiment, key columns..., value) into
// median/q25/q75 rows per key group: output schema is the key columns plus
// (statistic, value). Group order follows first appearance.
CsvTable emit_plot_data(const CsvTable& table);

// Root directory for on-disk datasets referenced by relative paths in
// configs; from the NTK_LENS_DATA_ROOT environment variable, "." by default.
std::string dataset_root();

}  // namespace ntklens
