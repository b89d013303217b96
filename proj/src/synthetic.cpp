#include "fsnet/data.hpp"

#include <cmath>
#include <algorithm>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <utility>

namespace fsnet {

namespace {

struct RealField {
    const char* key;
    double ShiftScenario::*member;
};

constexpr RealField kRealFields[] = {
    {"base_load", &ShiftScenario::base_load},
    {"occupancy_load", &ShiftScenario::occupancy_load},
    {"daily_amplitude", &ShiftScenario::daily_amplitude},
    {"weekly_amplitude", &ShiftScenario::weekly_amplitude},
    {"temperature_load", &ShiftScenario::temperature_load},
    {"comfort_temperature", &ShiftScenario::comfort_temperature},
    {"energy_noise_std", &ShiftScenario::energy_noise_std},
    {"weekend_factor", &ShiftScenario::weekend_factor},
    {"day_factor_rho", &ShiftScenario::day_factor_rho},
    {"day_factor_std", &ShiftScenario::day_factor_std},
    {"post_day_factor_std", &ShiftScenario::post_day_factor_std},
    {"hourly_noise_std", &ShiftScenario::hourly_noise_std},
    {"mobility_scale", &ShiftScenario::mobility_scale},
    {"mobility_noise_std", &ShiftScenario::mobility_noise_std},
    {"temp_mean", &ShiftScenario::temp_mean},
    {"temp_annual_amplitude", &ShiftScenario::temp_annual_amplitude},
    {"temp_daily_amplitude", &ShiftScenario::temp_daily_amplitude},
    {"temp_noise_rho", &ShiftScenario::temp_noise_rho},
    {"temp_noise_std", &ShiftScenario::temp_noise_std},
    {"mobility_collapse", &ShiftScenario::mobility_collapse},
    {"energy_decoupling", &ShiftScenario::energy_decoupling},
};

/// Weekday double-peak occupancy with a lunchtime shoulder; weekends scaled down.
double occupancy_profile(int hour, bool weekend, double weekend_factor)
{
    const auto bump = [hour](double centre, double width) {
        const double z = (hour - centre) / width;
        return std::exp(-0.5 * z * z);
    };
    const double p = 0.03 + 0.9 * bump(8.5, 1.3) + 0.55 * bump(12.5, 1.6) + 1.0 * bump(17.5, 1.4);
    return weekend ? weekend_factor * p : p;
}

ShiftScenario base_scenario()
{
    ShiftScenario s;
    s.base_load = 95.0;
    s.occupancy_load = 380.0;
    s.daily_amplitude = 22.0;
    s.weekly_amplitude = 8.0;
    s.temperature_load = 3.5;
    s.comfort_temperature = 20.0;
    s.energy_noise_std = 18.0;
    s.occupancy_lag_hours = 1;

    s.weekend_factor = 0.35;
    s.day_factor_rho = 0.7;
    s.day_factor_std = 0.12;
    s.post_day_factor_std = 0.12;
    s.hourly_noise_std = 0.15;

    s.mobility_scale = 3040.0;
    s.mobility_noise_std = 0.2;

    s.temp_mean = 16.0;
    s.temp_annual_amplitude = 5.5;
    s.temp_daily_amplitude = 4.0;
    s.temp_noise_rho = 0.995;
    s.temp_noise_std = 2.5;

    s.onset = default_boundary();
    s.mobility_collapse = 0.2;
    s.energy_decoupling = 0.4;
    s.seed = 7;
    return s;
}

} // namespace

void ShiftScenario::validate() const
{
    if (duration_hours < 1)
        throw DataError("scenario: duration_hours must be >= 1");
    if (onset <= start || onset >= start + kHour * duration_hours)
        throw DataError("scenario: onset must fall strictly inside the generated span");
    if (!(mobility_collapse >= 0 && mobility_collapse <= 1))
        throw DataError("scenario: mobility_collapse must lie in [0, 1]");
    if (!(energy_decoupling >= 0 && energy_decoupling <= 1))
        throw DataError("scenario: energy_decoupling must lie in [0, 1]");
    if (!(day_factor_rho >= 0 && day_factor_rho < 1) || !(temp_noise_rho >= 0 && temp_noise_rho < 1))
        throw DataError("scenario: AR persistence must lie in [0, 1)");
    if (day_factor_std < 0 || post_day_factor_std < 0 || hourly_noise_std < 0 || mobility_noise_std < 0
        || temp_noise_std < 0 || energy_noise_std < 0)
        throw DataError("scenario: noise levels must be non-negative");
    if (occupancy_lag_hours < 0)
        throw DataError("scenario: occupancy_lag_hours must be >= 0");
}

std::vector<std::string> scenario_preset_names() { return {"default", "bc1", "recoupled"}; }

ShiftScenario scenario_preset(const std::string& name)
{
    ShiftScenario s = base_scenario();
    if (name == "default") {
        s.start = parse_timestamp("2019-03-31T00:00:00");
        s.duration_hours = 549 * 24;
    } else if (name == "bc1") {
        s.start = parse_timestamp("2019-01-01T00:00:00");
        s.duration_hours = 731 * 24;
    } else if (name == "recoupled") {
        s.start = parse_timestamp("2019-03-31T00:00:00");
        s.duration_hours = 549 * 24;
        s.energy_decoupling = 1.0;
        s.mobility_collapse = 0.35;
        s.day_factor_std = 0.1;
        s.post_day_factor_std = 0.4;
        s.day_factor_rho = 0.9;
        s.occupancy_lag_hours = 6;
    } else {
        throw DataError("unknown scenario preset '" + name + "' (expected default, bc1, recoupled)");
    }
    return s;
}

ShiftScenario scenario_from_keys(const KeyValues& keys, const std::string& preset)
{
    ShiftScenario s = scenario_preset(keys.get_string("preset", preset));
    for (const auto& f : kRealFields)
        s.*(f.member) = keys.get_real(f.key, s.*(f.member));
    if (keys.has("start"))
        s.start = parse_timestamp(keys.get_string("start", ""));
    if (keys.has("onset"))
        s.onset = parse_timestamp(keys.get_string("onset", ""));
    s.duration_hours = keys.get_int("duration_hours", s.duration_hours);
    s.occupancy_lag_hours = keys.get_int("occupancy_lag_hours", s.occupancy_lag_hours);
    s.seed = static_cast<std::uint64_t>(keys.get_int("seed", static_cast<long long>(s.seed)));
    s.validate();
    return s;
}

std::string scenario_to_text(const ShiftScenario& s)
{
    std::ostringstream out;
    out.precision(17);
    out << "start = " << format_timestamp(s.start) << "\n";
    out << "duration_hours = " << s.duration_hours << "\n";
    out << "onset = " << format_timestamp(s.onset) << "\n";
    out << "occupancy_lag_hours = " << s.occupancy_lag_hours << "\n";
    out << "seed = " << s.seed << "\n";
    for (const auto& f : kRealFields)
        out << f.key << " = " << s.*(f.member) << "\n";
    return out.str();
}

SyntheticFrame gen_synthetic(const ShiftScenario& s)
{
    using namespace std::chrono;
    s.validate();
    std::mt19937_64 rng(s.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double two_pi = 2.0 * std::numbers::pi;
    const Index n = s.duration_hours;

    // Occupancy first; energy reads it with a lag.
    std::vector<double> occupancy(static_cast<std::size_t>(n));
    double log_level = 0.0;
    long long current_day = std::numeric_limits<long long>::min();
    double day_level = 1.0;
    for (Index i = 0; i < n; ++i) {
        const TimePoint t = s.start + kHour * i;
        const auto day_point = floor<days>(t);
        const long long day_no = day_point.time_since_epoch().count();
        const bool post = t >= s.onset;
        if (day_no != current_day) {
            const double sigma = post ? s.post_day_factor_std : s.day_factor_std;
            log_level = s.day_factor_rho * log_level
                        + std::sqrt(1 - s.day_factor_rho * s.day_factor_rho) * sigma * normal(rng);
            day_level = std::exp(log_level - 0.5 * sigma * sigma);
            current_day = day_no;
        }
        const int hour = static_cast<int>((t - day_point) / kHour);
        const unsigned wd = weekday{day_point}.c_encoding();
        const bool weekend = wd == 0 || wd == 6;
        const double hourly = std::exp(s.hourly_noise_std * normal(rng) - 0.5 * s.hourly_noise_std * s.hourly_noise_std);
        occupancy[static_cast<std::size_t>(i)] = occupancy_profile(hour, weekend, s.weekend_factor) * day_level * hourly;
    }

    SyntheticFrame out;
    TimeSeriesFrame& f = out.frame;
    f.names = {"energy", "mobility", "temperature"};
    f.values.resize(n, 3);
    f.timestamps.reserve(static_cast<std::size_t>(n));
    double anomaly = 0.0;
    for (Index i = 0; i < n; ++i) {
        const TimePoint t = s.start + kHour * i;
        const auto day_point = floor<days>(t);
        const bool post = t >= s.onset;
        const double hour = static_cast<double>((t - day_point) / kHour);
        const year_month_day ymd{day_point};
        const double day_of_year =
            static_cast<double>((day_point - sys_days{ymd.year() / January / 1}).count());
        const double week_phase =
            static_cast<double>((weekday{day_point}.c_encoding() * 24 + static_cast<unsigned>(hour))) / 168.0;

        anomaly = s.temp_noise_rho * anomaly
                  + std::sqrt(1 - s.temp_noise_rho * s.temp_noise_rho) * s.temp_noise_std * normal(rng);
        const double temperature = s.temp_mean + s.temp_annual_amplitude * std::cos(two_pi * (day_of_year - 15.0) / 365.25)
                                   + s.temp_daily_amplitude * std::cos(two_pi * (hour - 15.0) / 24.0) + anomaly;

        const Index lagged = std::max<Index>(0, i - s.occupancy_lag_hours);
        const double occ_energy = occupancy[static_cast<std::size_t>(lagged)];
        double energy = s.base_load + s.occupancy_load * (post ? s.energy_decoupling : 1.0) * occ_energy
                        + s.daily_amplitude * std::cos(two_pi * (hour - 14.0) / 24.0)
                        + s.weekly_amplitude * std::cos(two_pi * week_phase)
                        + s.temperature_load * std::abs(temperature - s.comfort_temperature)
                        + s.energy_noise_std * normal(rng);

        const double mob_noise =
            std::exp(s.mobility_noise_std * normal(rng) - 0.5 * s.mobility_noise_std * s.mobility_noise_std);
        double mobility = std::round(s.mobility_scale * occupancy[static_cast<std::size_t>(i)]
                                     * (post ? s.mobility_collapse : 1.0) * mob_noise);
        if (energy < 0) {
            energy = 0;
            ++out.clamped_energy;
        }
        if (mobility < 0) {
            mobility = 0;
            ++out.clamped_mobility;
        }
        f.timestamps.push_back(t);
        f.values(i, 0) = energy;
        f.values(i, 1) = mobility;
        f.values(i, 2) = temperature;
    }
    return out;
}

} // namespace fsnet
