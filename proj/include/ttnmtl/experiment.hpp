#pragma once

#include "ttnmtl/data.hpp"
#include "ttnmtl/trainer.hpp"

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace ttnmtl {

/// Where the tasks come from: a dataset file, a PGM directory tree, or the
/// synthetic generator (when neither path is set).
struct DataSource {
    std::optional<std::filesystem::path> file;
    std::optional<std::filesystem::path> pgm_dir;
    SynthConfig synth;
};

struct ExperimentConfig {
    DataSource data;
    std::vector<Method> methods{Method::Stl, Method::Laf, Method::Tucker, Method::Tt};
    TrainConfig train;  // train.method and train.seed are set per run
    double train_fraction = 0.1;
    std::size_t repeats = 5;
    std::uint64_t seed = 0;  // repeat r uses seed + r for both split and init
    std::size_t threads = 1;
    std::filesystem::path output_dir = "runs";

    void validate() const;
};

/// Strict JSON parsing: unknown keys and wrong types throw ParseError naming
/// the offending key.
ExperimentConfig parse_experiment_config(std::string_view json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

MultiTaskDataset load_data(const DataSource& source);

struct RunOutcome {
    Method method = Method::Stl;
    std::size_t repeat = 0;
    std::uint64_t seed = 0;
    MetricsLog log;
    std::optional<std::string> failure;  // set when training diverged

    /// Macro-averaged test accuracy and mean full-train CE at the last evaluation.
    double final_test_acc() const;
    double final_train_ce() const;
};

struct ExperimentResult {
    std::vector<RunOutcome> runs;  // method-major, then repeat
    bool any_failure() const;
};

/// Effective worker count: cfg.threads capped by TTNMTL_THREADS when set.
std::size_t worker_count(std::size_t requested);

/// Trains every (method, repeat) pair. When `write_files` is set, writes
/// <out>/<METHOD>/metrics_<r>.csv, <out>/summary.csv and <out>/sharing.csv.
ExperimentResult run_experiment(const ExperimentConfig& cfg, bool write_files = true);

/// Metrics table, one row per (step, task):
///   step,task,train_ce,norm_laf,norm_tucker,norm_tt,test_acc
/// Rows at evaluation steps carry the full training-set CE after the step,
/// the unit-weight norm totals and the test accuracy; other rows carry the
/// minibatch CE seen by that step and leave the last four cells empty.
void write_metrics_csv(std::ostream& out, const MetricsLog& log);

void write_summary_csv(std::ostream& out, const ExperimentResult& result);
void write_sharing_csv(std::ostream& out, const ExperimentResult& result);

/// Shortest decimal that round-trips.
std::string format_double(double v);

} // namespace ttnmtl
