#include "fsnet/continual.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace fsnet {

StrategyKind parse_strategy(std::string_view name)
{
    if (name == "frozen" || name == "tcn")
        return StrategyKind::frozen;
    if (name == "ogd")
        return StrategyKind::ogd;
    if (name == "er")
        return StrategyKind::er;
    if (name == "derpp" || name == "der++")
        return StrategyKind::derpp;
    if (name == "fsnet")
        return StrategyKind::fsnet;
    throw ConfigError("unknown strategy '" + std::string(name) + "' (expected frozen, ogd, er, derpp, fsnet)");
}

std::string to_string(StrategyKind kind)
{
    switch (kind) {
    case StrategyKind::frozen:
        return "frozen";
    case StrategyKind::ogd:
        return "ogd";
    case StrategyKind::er:
        return "er";
    case StrategyKind::derpp:
        return "derpp";
    case StrategyKind::fsnet:
        return "fsnet";
    }
    return "?";
}

bool uses_buffer(StrategyKind kind) { return kind == StrategyKind::er || kind == StrategyKind::derpp; }

void Strategy::validate() const
{
    if (!(lr >= 0) || !std::isfinite(lr))
        throw ConfigError("strategy: learning rate must be finite and >= 0");
    if (uses_buffer(kind) && (capacity < 1 || replay_batch < 0))
        throw ConfigError("strategy " + to_string(kind) + ": needs capacity >= 1 and replay_batch >= 0");
    if (kind == StrategyKind::derpp && (a_logit < 0 || b_label < 0))
        throw ConfigError("strategy derpp: a_logit and b_label must be >= 0");
}

// ---------------------------------------------------------------------------
// Pretraining
// ---------------------------------------------------------------------------

Real evaluate_mae(const TcnModel& model, std::span<const Sample> samples, ForwardMode mode)
{
    if (samples.empty())
        throw DataError("evaluate_mae: no samples");
    Real total = 0;
    for (const auto& s : samples)
        total += (tcn_forward(model, s.window, mode) - s.target).cwiseAbs().mean();
    return total / static_cast<Real>(samples.size());
}

PretrainResult pretrain(const TcnModel& model, std::span<const Sample> train, std::span<const Sample> validation,
                        const PretrainOptions& options)
{
    if (train.empty())
        throw DataError("pretrain: empty training split");
    if (validation.empty())
        throw DataError("pretrain: empty validation split");
    if (options.epochs < 0 || options.batch_size < 1)
        throw ConfigError("pretrain: epochs must be >= 0 and batch_size >= 1");

    PretrainResult result;
    result.model = model;
    result.model.pretrained = true;
    result.initial_val_mae = evaluate_mae(model, validation);
    result.val_mae = result.initial_val_mae;

    TcnModel current = result.model;
    std::mt19937_64 rng(options.seed);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<LossTerm> terms;
    for (Index epoch = 1; epoch <= options.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(options.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(options.batch_size));
            terms.clear();
            const Real w = 1.0 / static_cast<Real>(stop - start);
            for (std::size_t i = start; i < stop; ++i)
                terms.push_back({&train[order[i]].window, &train[order[i]].target, w});
            const TcnGradients g = loss_gradients(current, terms, ForwardMode::plain);
            apply_sgd(current, g, options.lr, false);
        }
        const Real val = evaluate_mae(current, validation);
        result.val_history.push_back(val);
        if (val < result.val_mae) {
            result.val_mae = val;
            result.best_epoch = epoch;
            result.model = current;
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Update rules
// ---------------------------------------------------------------------------

StepResult ogd_step(TcnModel& model, const Mat& window, const Vec& target, Real lr)
{
    const TcnGradients g = tcn_backward(model, window, target, ForwardMode::plain);
    apply_sgd(model, g, lr, false);
    return {g.forecast, g.loss, 0};
}

StepResult er_step(TcnModel& model, const Mat& window, const Vec& target, ExperienceBuffer& buffer,
                   Index replay_batch, Real lr)
{
    std::vector<LossTerm> terms{{&window, &target, 1.0}};
    const auto picks = buffer.sample_indices(static_cast<std::size_t>(std::max<Index>(replay_batch, 0)));
    for (std::size_t i : picks)
        terms.push_back({&buffer[i].window, &buffer[i].target, 1.0 / static_cast<Real>(picks.size())});
    const TcnGradients g = loss_gradients(model, terms, ForwardMode::plain);
    apply_sgd(model, g, lr, false);
    buffer.insert({window, target, g.forecast});
    return {g.forecast, g.loss, 0};
}

StepResult derpp_step(TcnModel& model, const Mat& window, const Vec& target, ExperienceBuffer& buffer,
                      Index replay_batch, Real lr, Real a_logit, Real b_label)
{
    std::vector<LossTerm> terms{{&window, &target, 1.0}};
    const std::size_t batch = static_cast<std::size_t>(std::max<Index>(replay_batch, 0));
    if (a_logit > 0) {
        const auto picks = buffer.sample_indices(batch);
        for (std::size_t i : picks)
            terms.push_back({&buffer[i].window, &buffer[i].recorded_forecast, a_logit / static_cast<Real>(picks.size())});
    }
    if (b_label > 0) {
        const auto picks = buffer.sample_indices(batch);
        for (std::size_t i : picks)
            terms.push_back({&buffer[i].window, &buffer[i].target, b_label / static_cast<Real>(picks.size())});
    }
    const TcnGradients g = loss_gradients(model, terms, ForwardMode::plain);
    apply_sgd(model, g, lr, false);
    buffer.insert({window, target, g.forecast});
    return {g.forecast, g.loss, 0};
}

// ---------------------------------------------------------------------------
// Online loop
// ---------------------------------------------------------------------------

Real MetricsReport::accumulated_mae(std::optional<Period> period) const
{
    Real total = 0;
    Index n = 0;
    for (const auto& r : rows) {
        if (period && r.period != *period)
            continue;
        total += r.mae;
        ++n;
    }
    return n == 0 ? std::numeric_limits<Real>::quiet_NaN() : total / static_cast<Real>(n);
}

Index MetricsReport::count(std::optional<Period> period) const
{
    if (!period)
        return static_cast<Index>(rows.size());
    return static_cast<Index>(std::count_if(rows.begin(), rows.end(), [&](const StepRecord& r) { return r.period == *period; }));
}

OnlineResult run_online(const TcnModel& model, std::span<const Sample> stream, const Strategy& strategy,
                        std::uint64_t seed, TimePoint boundary)
{
    strategy.validate();
    if (!model.pretrained)
        throw std::logic_error("run_online: model has not been pretrained");
    for (std::size_t i = 1; i < stream.size(); ++i)
        if (stream[i].issue - stream[i - 1].issue != kHour)
            throw DataError("run_online: stream is not hourly-contiguous at " + format_timestamp(stream[i].issue));

    OnlineResult out;
    out.final_model = model;
    TcnModel& m = out.final_model;
    out.report.strategy = to_string(strategy.kind);
    out.report.seed = seed;
    out.report.checkpoint_hash = model_hash(model);

    const ForwardMode mode = strategy.kind == StrategyKind::fsnet ? ForwardMode::adapted : ForwardMode::plain;
    const std::size_t delay = static_cast<std::size_t>(m.config.horizon);
    ExperienceBuffer buffer(uses_buffer(strategy.kind) ? static_cast<std::size_t>(strategy.capacity) : 0, seed);

    out.forecasts.reserve(stream.size());
    out.report.rows.reserve(stream.size());
    for (std::size_t i = 0; i < stream.size(); ++i) {
        const Sample& s = stream[i];
        Vec forecast = tcn_forward(m, s.window, mode);
        const Vec err = forecast - s.target;
        out.report.rows.push_back({s.issue, period_of(s.issue, boundary), err.cwiseAbs().mean(),
                                   err.squaredNorm() / static_cast<Real>(err.size())});
        out.forecasts.push_back(std::move(forecast));

        if (i < delay)
            continue;
        const Sample& ready = stream[i - delay];
        switch (strategy.kind) {
        case StrategyKind::frozen:
            break;
        case StrategyKind::ogd:
            ogd_step(m, ready.window, ready.target, strategy.lr);
            break;
        case StrategyKind::er:
            er_step(m, ready.window, ready.target, buffer, strategy.replay_batch, strategy.lr);
            break;
        case StrategyKind::derpp:
            derpp_step(m, ready.window, ready.target, buffer, strategy.replay_batch, strategy.lr, strategy.a_logit,
                       strategy.b_label);
            break;
        case StrategyKind::fsnet:
            fsnet_step(m, ready.window, ready.target, strategy.lr);
            break;
        }
    }
    return out;
}

} // namespace fsnet
