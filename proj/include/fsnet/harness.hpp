#pragma once

// Experiment orchestration: a declarative config, the (context x seed x
// strategy) run matrix, seed aggregation and CSV / JSON reports.

#include "fsnet/continual.hpp"
#include "fsnet/kvconfig.hpp"

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fsnet {

struct ExperimentConfig {
    std::string name = "experiment";
    std::string csv;                  ///< empty: generate the synthetic scenario
    std::string scenario_name = "default";
    ShiftScenario scenario = scenario_preset("default");
    std::vector<ContextMode> contexts{ContextMode::both};
    std::vector<StrategyKind> strategies{StrategyKind::frozen, StrategyKind::ogd, StrategyKind::er,
                                         StrategyKind::derpp, StrategyKind::fsnet};
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};

    TcnConfig model;  ///< input_channels is set per context
    AdaptorConfig adaptor;
    PretrainOptions pretrain{20, 0.02, 16, 0};
    std::optional<Real> online_lr;
    Real online_lr_factor = 0.1;  ///< online lr = factor * pretrain lr unless online_lr is set
    Index capacity = 500;
    Index replay_batch = 8;
    Real a_logit = 0.5;
    Real b_label = 0.5;

    Index pretrain_hours = 2160;
    Index validation_hours = 2160;
    TimePoint boundary = default_boundary();

    std::string out;
    Index threads = 1;

    Real effective_online_lr() const;
    Strategy strategy(StrategyKind kind) const;
    std::string dataset_name() const;
    void validate() const;

    /// Every effective setting as `key = value` lines in a fixed order.
    std::string canonical_text() const;
    std::string hash() const { return fnv1a_hex(canonical_text()); }
};

/// Unknown keys are an error so that typos do not silently fall back to defaults.
ExperimentConfig parse_experiment(const KeyValues& keys);
/// Throws ConfigError naming `path` when the file cannot be read.
ExperimentConfig load_experiment(const std::string& path);

struct PreparedData {
    std::string dataset;
    TimeSeriesFrame raw;
    TimeSeriesFrame normalized;
    PeriodSplit split;
};

PreparedData prepare_data(const ExperimentConfig& config);

struct WindowSets {
    std::vector<Sample> train;
    std::vector<Sample> validation;
    std::vector<Sample> online;
};

/// Training targets stay inside the pretrain range and validation targets
/// inside the validation range; online issues start at the online range.
WindowSets make_window_sets(const PreparedData& data, const ExperimentConfig& config, ContextMode mode);

TcnConfig model_config_for(const ExperimentConfig& config, ContextMode mode);

/// Pretrains the shared checkpoint of one (context, seed) cell.
PretrainResult pretrain_cell(const ExperimentConfig& config, const WindowSets& windows, ContextMode mode,
                             std::uint64_t seed);

using ProgressFn = std::function<void(const std::string&)>;

/// One report per (context, strategy, seed), ordered context-major, then seed,
/// then strategy. Failed runs are reported with `failed` set; the rest continue.
std::vector<MetricsReport> run_experiment(const ExperimentConfig& config, const ProgressFn& progress = {});

// ---------------------------------------------------------------------------

struct SummaryCell {
    std::string dataset;
    Period period = Period::pre;
    std::string context;
    std::string strategy;
    Real mean = 0;
    Real stddev = 0;  ///< sample std over seeds; 0 with single_seed set when only one seed
    Index seeds = 0;
    Index failed = 0;
    bool single_seed = false;
};

/// Improvement from adding context, positive = better: +M = none - mobility,
/// +T = none - temperature, T+M = temperature - both.
struct ContextDelta {
    std::string dataset;
    Period period = Period::pre;
    std::string strategy;
    std::optional<Real> plus_m;
    std::optional<Real> plus_t;
    std::optional<Real> t_plus_m;
};

struct Summary {
    std::vector<SummaryCell> cells;
    std::vector<ContextDelta> deltas;

    const SummaryCell* find(const std::string& dataset, Period period, const std::string& context,
                            const std::string& strategy) const;
};

/// Per-period mean and sample std of per-seed accumulated MAE. Independent of report order.
Summary aggregate_seeds(std::span<const MetricsReport> reports);

std::vector<std::string> supported_formats();

/// Writes `<dir>/summary.<format>` atomically and returns the path. JSON carries the full config.
std::string report_emit(const Summary& summary, const std::string& format, const std::string& dir,
                        const ExperimentConfig& config);

std::string summary_to_csv(const Summary& summary, const std::string& config_hash);
/// Inverse of summary_to_csv for the cell rows.
std::vector<SummaryCell> parse_summary_csv(const std::string& text);

/// One row per step: timestamp, mae, mse, strategy, seed, context, period.
std::string report_to_csv(const MetricsReport& report);
std::string run_file_name(const MetricsReport& report);

/// Per-run CSVs under `<out>/runs/` plus summary.csv and summary.json.
void write_experiment(const ExperimentConfig& config, std::span<const MetricsReport> reports, const Summary& summary);

enum class TableAxis { context, strategy };
/// Plain-text table: rows are dataset x period, columns contexts or strategies.
std::string render_table(const Summary& summary, TableAxis axis, const std::string& fixed);

/// Writes `text` to `path` through a temporary file and rename.
void write_file_atomic(const std::string& path, const std::string& text);

} // namespace fsnet
