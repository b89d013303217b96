#pragma once

// Hourly multivariate frames: CSV ingestion, timestamp alignment and gap
// filling, z-score normalization, windowing, pre/post boundary labelling and
// a synthetic regime-shift generator.

#include "fsnet/kvconfig.hpp"
#include "fsnet/numerics.hpp"

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fsnet {

using TimePoint = std::chrono::sys_seconds;
inline constexpr std::chrono::seconds kHour{3600};

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Accepts `YYYY-MM-DD`, `YYYY-MM-DDTHH:MM[:SS]` and the same with a space or a trailing `Z`.
TimePoint parse_timestamp(std::string_view text);
/// `YYYY-MM-DDTHH:MM:SS`
std::string format_timestamp(TimePoint t);

struct NormalizationStats {
    std::vector<std::string> names;
    Vec mean;
    Vec stddev;
};

struct TimeSeriesFrame {
    std::vector<TimePoint> timestamps;  ///< strictly increasing, on whole hours
    std::vector<std::string> names;     ///< channel names, one per column
    Eigen::MatrixXd values;             ///< [T x C]; NaN marks a missing cell
    std::optional<NormalizationStats> stats;

    Index length() const { return values.rows(); }
    Index channel_count() const { return values.cols(); }
    /// Column of a named channel; throws DataError when absent.
    Index channel(const std::string& name) const;
    bool has_channel(const std::string& name) const;
    /// Row of an exact timestamp, or the first row at or after it.
    Index row_at_or_after(TimePoint t) const;
};

struct CsvSchema {
    std::vector<std::string> columns{"energy", "mobility", "temperature"};
};

TimeSeriesFrame parse_csv(std::string_view text, const CsvSchema& schema, const std::string& source = "<csv>");
TimeSeriesFrame load_csv(const std::string& path, const CsvSchema& schema = {});
std::string to_csv(const TimeSeriesFrame& frame);
void write_csv(const TimeSeriesFrame& frame, const std::string& path);

struct AlignResult {
    TimeSeriesFrame frame;
    Index filled_cells = 0;
    Index dropped_rows = 0;
    std::vector<std::string> notes;
};

/// Inner join on the common hourly range. Missing runs up to `max_fill_hours`
/// are linearly interpolated; longer gaps split the range and only the longest
/// complete block survives.
AlignResult align_and_fill(std::span<const TimeSeriesFrame> frames, Index max_fill_hours = 6);

/// Z-score every channel with statistics from rows [stats_begin, stats_end).
TimeSeriesFrame normalize(const TimeSeriesFrame& frame, Index stats_begin, Index stats_end);
TimeSeriesFrame denormalize(const TimeSeriesFrame& frame);

enum class ContextMode { none, mobility, temperature, both };

ContextMode parse_context(std::string_view name);
std::string to_string(ContextMode mode);
/// Energy first, then the context channels in the order mobility, temperature.
std::vector<std::string> context_channels(ContextMode mode);

struct Sample {
    Mat window;  ///< [N x L]; column L - 1 is the issue hour
    Vec target;  ///< energy at the next H hours
    TimePoint issue;
    Index issue_row = 0;
};

/// Stride-1 windows whose issue row lies in [first_issue, last_issue) and whose
/// look-back and targets fit inside the frame. Pass -1 for "no limit".
std::vector<Sample> make_windows(const TimeSeriesFrame& frame, Index lookback, Index horizon, ContextMode mode,
                                 Index first_issue = -1, Index last_issue = -1);

enum class Period { pre, post };
std::string to_string(Period p);

struct RowRange {
    Index begin = 0;
    Index end = 0;  ///< exclusive
    Index size() const { return end - begin; }
};

struct Interval {
    TimePoint begin;
    TimePoint end;
};

struct PeriodSplit {
    RowRange pretrain;
    RowRange validation;
    RowRange online;
    TimePoint boundary;
    std::vector<Interval> lockdowns;
};

TimePoint default_boundary();
std::vector<Interval> default_lockdowns();

/// Consecutive pretrain / validation / online ranges starting at row 0.
PeriodSplit make_split(const TimeSeriesFrame& frame, Index pretrain_hours, Index validation_hours,
                       TimePoint boundary = default_boundary());
void validate_split(const TimeSeriesFrame& frame, const PeriodSplit& split);

/// Closed-left: the boundary instant itself is `post`.
Period period_of(TimePoint t, TimePoint boundary);

/// Period label for every row of the online range.
std::vector<Period> split_periods(const TimeSeriesFrame& frame, const PeriodSplit& split);

// ---------------------------------------------------------------------------
// Synthetic regime-shift data.
// ---------------------------------------------------------------------------

struct ShiftScenario {
    TimePoint start;
    Index duration_hours = 0;

    // energy (kWh)
    double base_load = 0;
    double occupancy_load = 0;       ///< load at occupancy 1
    double daily_amplitude = 0;      ///< occupancy-independent daily harmonic
    double weekly_amplitude = 0;
    double temperature_load = 0;     ///< kWh per degree away from comfort
    double comfort_temperature = 20;
    double energy_noise_std = 0;
    Index occupancy_lag_hours = 0;   ///< energy follows occupancy with this delay

    // occupancy process
    double weekend_factor = 1;
    double day_factor_rho = 0;       ///< AR(1) persistence of the daily occupancy level
    double day_factor_std = 0;       ///< stationary std of the log daily level
    double post_day_factor_std = 0;  ///< same, after onset
    double hourly_noise_std = 0;     ///< lognormal multiplicative noise

    // mobility (count)
    double mobility_scale = 0;       ///< count at occupancy 1
    double mobility_noise_std = 0;   ///< lognormal multiplicative noise

    // temperature (deg C)
    double temp_mean = 15;
    double temp_annual_amplitude = 0;
    double temp_daily_amplitude = 0;
    double temp_noise_rho = 0;
    double temp_noise_std = 0;       ///< stationary std of the AR(1) weather anomaly

    // shift
    TimePoint onset;
    double mobility_collapse = 1;    ///< post-onset multiplier on mobility, in [0, 1]
    double energy_decoupling = 1;    ///< post-onset multiplier on the occupancy load, in [0, 1]

    std::uint64_t seed = 0;

    void validate() const;
};

/// Named presets: "default" (18 months, shift at month 12), "bc1" (two years
/// calibrated to the BC1 complex), "recoupled" (post-shift energy tracks a
/// volatile occupancy level).
ShiftScenario scenario_preset(const std::string& name);
std::vector<std::string> scenario_preset_names();

/// Starts from `preset` (or its own `preset` key) and applies every documented key.
ShiftScenario scenario_from_keys(const KeyValues& keys, const std::string& preset = "default");
std::string scenario_to_text(const ShiftScenario& scenario);

struct SyntheticFrame {
    TimeSeriesFrame frame;
    Index clamped_energy = 0;
    Index clamped_mobility = 0;
};

SyntheticFrame gen_synthetic(const ShiftScenario& scenario);

} // namespace fsnet
