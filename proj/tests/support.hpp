#pragma once

#include "fsnet/continual.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

namespace fsnet::test {

inline Mat random_mat(Index rows, Index cols, std::mt19937_64& rng, Real scale = 1.0)
{
    std::normal_distribution<Real> n(0.0, scale);
    Mat m(rows, cols);
    for (Index i = 0; i < m.size(); ++i)
        m.data()[i] = n(rng);
    return m;
}

inline Vec random_vec(Index n, std::mt19937_64& rng, Real scale = 1.0)
{
    std::normal_distribution<Real> d(0.0, scale);
    Vec v(n);
    for (Index i = 0; i < n; ++i)
        v(i) = d(rng);
    return v;
}

inline Mat mat(std::initializer_list<std::initializer_list<Real>> rows)
{
    Mat m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
    Index r = 0;
    for (const auto& row : rows) {
        Index c = 0;
        for (Real v : row)
            m(r, c++) = v;
        ++r;
    }
    return m;
}

inline Vec vec(std::initializer_list<Real> values)
{
    Vec v(static_cast<Index>(values.size()));
    Index i = 0;
    for (Real x : values)
        v(i++) = x;
    return v;
}

template <typename A, typename B>
bool same(const A& a, const B& b)
{
    return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

/// Small TCN for fast tests.
inline TcnConfig small_config(Index inputs = 2)
{
    TcnConfig c;
    c.input_channels = inputs;
    c.channels = 4;
    c.kernel_size = 2;
    c.num_blocks = 3;
    c.convs_per_block = 2;
    c.lookback = 8;
    c.horizon = 4;
    return c;
}

/// Hourly energy / mobility / temperature frame with a daily cycle and noise,
/// starting at 2020-01-01T00:00:00.
inline TimeSeriesFrame cycle_frame(Index hours, std::uint64_t seed, Real noise = 0.1)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<Real> n(0.0, noise);
    TimeSeriesFrame f;
    f.names = {"energy", "mobility", "temperature"};
    f.values.resize(hours, 3);
    const TimePoint start = parse_timestamp("2020-01-01T00:00:00");
    for (Index t = 0; t < hours; ++t) {
        f.timestamps.push_back(start + t * kHour);
        const Real phase = 2 * M_PI * static_cast<Real>(t % 24) / 24.0;
        f.values(t, 1) = std::sin(phase) + n(rng);
        f.values(t, 0) = 0.8 * std::sin(phase - 0.5) + n(rng);
        f.values(t, 2) = std::cos(phase) + n(rng);
    }
    return f;
}

} // namespace fsnet::test
