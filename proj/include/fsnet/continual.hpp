#pragma once

// Offline pretraining, the prequential online loop and the update strategies
// compared against each other: frozen, OGD, ER, DER++ and FSNet.

#include "fsnet/data.hpp"
#include "fsnet/fsnet.hpp"
#include "fsnet/replay_buffer.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fsnet {

enum class StrategyKind { frozen, ogd, er, derpp, fsnet };

StrategyKind parse_strategy(std::string_view name);
std::string to_string(StrategyKind kind);
bool uses_buffer(StrategyKind kind);

struct Strategy {
    StrategyKind kind = StrategyKind::ogd;
    Real lr = 0.003;
    Index capacity = 500;
    Index replay_batch = 8;
    Real a_logit = 0.5;
    Real b_label = 0.5;

    void validate() const;
};

/// (window, target, model output recorded at insertion time)
struct Experience {
    Mat window;
    Vec target;
    Vec recorded_forecast;
};

using ExperienceBuffer = ReplayBuffer<Experience>;

// ---------------------------------------------------------------------------

struct PretrainOptions {
    Index epochs = 20;
    Real lr = 0.02;
    Index batch_size = 16;
    std::uint64_t seed = 0;
};

struct PretrainResult {
    TcnModel model;  ///< best-validation checkpoint
    Real val_mae = 0;
    Real initial_val_mae = 0;
    Index best_epoch = 0;  ///< 0 means the initial model was never beaten
    std::vector<Real> val_history;
};

/// Mean over samples of the per-sample MAE across the horizon.
Real evaluate_mae(const TcnModel& model, std::span<const Sample> samples, ForwardMode mode = ForwardMode::plain);

/// Mini-batch SGD on the pretrain windows; the checkpoint with the best validation MAE is returned.
PretrainResult pretrain(const TcnModel& model, std::span<const Sample> train, std::span<const Sample> validation,
                        const PretrainOptions& options);

// ---------------------------------------------------------------------------

/// One SGD step on the newest sample's MSE.
StepResult ogd_step(TcnModel& model, const Mat& window, const Vec& target, Real lr);

/// SGD on MSE(new) + mean replay MSE, then reservoir insertion of the new sample.
StepResult er_step(TcnModel& model, const Mat& window, const Vec& target, ExperienceBuffer& buffer,
                   Index replay_batch, Real lr);

/// SGD on MSE(new) + a * replayed-output MSE + b * replayed-label MSE over two
/// independent draws; the new sample is stored with the model's current output.
StepResult derpp_step(TcnModel& model, const Mat& window, const Vec& target, ExperienceBuffer& buffer,
                      Index replay_batch, Real lr, Real a_logit, Real b_label);

// ---------------------------------------------------------------------------

struct StepRecord {
    TimePoint issue;
    Period period = Period::pre;
    Real mae = 0;
    Real mse = 0;
};

struct MetricsReport {
    std::string dataset;
    std::string context;
    std::string strategy;
    std::uint64_t seed = 0;
    std::string checkpoint_hash;
    std::vector<StepRecord> rows;
    bool failed = false;
    std::string error;

    /// Mean per-step MAE, optionally restricted to one period; NaN when no rows match.
    Real accumulated_mae(std::optional<Period> period = std::nullopt) const;
    Index count(std::optional<Period> period = std::nullopt) const;
};

struct OnlineResult {
    MetricsReport report;
    std::vector<Vec> forecasts;  ///< one per stream sample, as emitted at its issue time
    TcnModel final_model;
};

/// Prequential loop. At the issue time of sample i the forecast is emitted with
/// the current model; then sample i - H, whose targets have all arrived, is used
/// for the strategy update. Every sample is scored against its own forecast.
OnlineResult run_online(const TcnModel& model, std::span<const Sample> stream, const Strategy& strategy,
                        std::uint64_t seed, TimePoint boundary);

} // namespace fsnet
