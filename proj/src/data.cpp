#include "fsnet/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace fsnet {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

int parse_fixed_int(std::string_view s, std::size_t pos, std::size_t len, std::string_view whole)
{
    if (pos + len > s.size())
        throw DataError("malformed timestamp '" + std::string(whole) + "'");
    int v = 0;
    const auto [ptr, ec] = std::from_chars(s.data() + pos, s.data() + pos + len, v);
    if (ec != std::errc() || ptr != s.data() + pos + len)
        throw DataError("malformed timestamp '" + std::string(whole) + "'");
    return v;
}

} // namespace

TimePoint parse_timestamp(std::string_view text)
{
    using namespace std::chrono;
    std::string_view s = text;
    if (!s.empty() && (s.back() == 'Z' || s.back() == 'z'))
        s.remove_suffix(1);
    if (s.size() < 10 || s[4] != '-' || s[7] != '-')
        throw DataError("malformed timestamp '" + std::string(text) + "'");
    const int y = parse_fixed_int(s, 0, 4, text);
    const int mo = parse_fixed_int(s, 5, 2, text);
    const int d = parse_fixed_int(s, 8, 2, text);
    int hh = 0, mm = 0, ss = 0;
    if (s.size() > 10) {
        if ((s[10] != 'T' && s[10] != ' ') || s.size() < 16 || s[13] != ':')
            throw DataError("malformed timestamp '" + std::string(text) + "'");
        hh = parse_fixed_int(s, 11, 2, text);
        mm = parse_fixed_int(s, 14, 2, text);
        if (s.size() > 16) {
            if (s[16] != ':' || s.size() != 19)
                throw DataError("malformed timestamp '" + std::string(text) + "'");
            ss = parse_fixed_int(s, 17, 2, text);
        }
    }
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || hh > 23 || mm > 59 || ss > 59)
        throw DataError("invalid date/time in timestamp '" + std::string(text) + "'");
    return sys_days{ymd} + hours{hh} + minutes{mm} + seconds{ss};
}

std::string format_timestamp(TimePoint t)
{
    using namespace std::chrono;
    const auto day_point = floor<days>(t);
    const year_month_day ymd{day_point};
    const auto secs = (t - day_point).count();
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02lld:%02lld:%02lld", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<long long>(secs / 3600), static_cast<long long>((secs / 60) % 60),
                  static_cast<long long>(secs % 60));
    return buf;
}

// ---------------------------------------------------------------------------
// Frame
// ---------------------------------------------------------------------------

bool TimeSeriesFrame::has_channel(const std::string& name) const
{
    return std::find(names.begin(), names.end(), name) != names.end();
}

Index TimeSeriesFrame::channel(const std::string& name) const
{
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end())
        throw DataError("frame has no channel '" + name + "'");
    return static_cast<Index>(it - names.begin());
}

Index TimeSeriesFrame::row_at_or_after(TimePoint t) const
{
    return static_cast<Index>(std::lower_bound(timestamps.begin(), timestamps.end(), t) - timestamps.begin());
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ','))
        cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',')
        cells.emplace_back();
    return cells;
}

} // namespace

TimeSeriesFrame parse_csv(std::string_view text, const CsvSchema& schema, const std::string& source)
{
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.rfind("\xEF\xBB\xBF", 0) == 0)
            line.erase(0, 3);
        if (!trim(line).empty()) {
            header = split_csv_line(line);
            break;
        }
    }
    if (header.empty())
        throw DataError(source + ": missing header");
    const auto ts_col = std::find(header.begin(), header.end(), "timestamp");
    if (ts_col == header.end())
        throw DataError(source + ": header has no 'timestamp' column");
    std::vector<std::size_t> cols;
    for (const auto& name : schema.columns) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            throw DataError(source + ": header is missing column '" + name + "'");
        cols.push_back(static_cast<std::size_t>(it - header.begin()));
    }
    const std::size_t ts_index = static_cast<std::size_t>(ts_col - header.begin());

    struct Row {
        TimePoint t;
        std::vector<double> v;
    };
    std::vector<Row> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (trim(line).empty())
            continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw DataError(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size())
                            + " cells, found " + std::to_string(cells.size()));
        Row row;
        try {
            row.t = parse_timestamp(cells[ts_index]);
        } catch (const DataError& e) {
            throw DataError(source + ":" + std::to_string(line_no) + ": " + e.what());
        }
        for (std::size_t c = 0; c < cols.size(); ++c) {
            const std::string& cell = cells[cols[c]];
            if (cell.empty()) {
                row.v.push_back(kNaN);
                continue;
            }
            double value = 0;
            const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
            if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(value))
                throw DataError(source + ":" + std::to_string(line_no) + ": column '" + schema.columns[c] + "': '"
                                + cell + "' is not a number");
            row.v.push_back(value);
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty())
        throw DataError(source + ": no rows");

    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.t < b.t; });
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (i > 0 && rows[i].t == rows[i - 1].t)
            throw DataError(source + ": duplicate timestamp " + format_timestamp(rows[i].t));
        if (rows[i].t.time_since_epoch() % kHour != std::chrono::seconds{0})
            throw DataError(source + ": timestamp " + format_timestamp(rows[i].t) + " is off the hourly grid");
    }

    TimeSeriesFrame frame;
    frame.names = schema.columns;
    frame.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        frame.timestamps.push_back(rows[i].t);
        for (std::size_t c = 0; c < cols.size(); ++c)
            frame.values(static_cast<Index>(i), static_cast<Index>(c)) = rows[i].v[c];
    }
    return frame;
}

TimeSeriesFrame load_csv(const std::string& path, const CsvSchema& schema)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str(), schema, path);
}

std::string to_csv(const TimeSeriesFrame& frame)
{
    std::string out = "timestamp";
    for (const auto& n : frame.names)
        out += "," + n;
    out += "\n";
    char buf[64];
    for (Index r = 0; r < frame.length(); ++r) {
        out += format_timestamp(frame.timestamps[static_cast<std::size_t>(r)]);
        for (Index c = 0; c < frame.channel_count(); ++c) {
            out += ",";
            const double v = frame.values(r, c);
            if (std::isfinite(v)) {
                std::snprintf(buf, sizeof buf, "%.17g", v);
                out += buf;
            }
        }
        out += "\n";
    }
    return out;
}

void write_csv(const TimeSeriesFrame& frame, const std::string& path)
{
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        out << to_csv(frame);
        if (!out)
            throw DataError("cannot write " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw DataError("cannot move " + tmp + " to " + path);
}

// ---------------------------------------------------------------------------
// Alignment
// ---------------------------------------------------------------------------

AlignResult align_and_fill(std::span<const TimeSeriesFrame> frames, Index max_fill_hours)
{
    if (frames.empty())
        throw DataError("align_and_fill: no frames");
    AlignResult result;
    TimePoint start = frames[0].timestamps.front();
    TimePoint end = frames[0].timestamps.back();
    std::vector<std::string> names;
    for (const auto& f : frames) {
        if (f.length() == 0)
            throw DataError("align_and_fill: empty frame");
        start = std::max(start, f.timestamps.front());
        end = std::min(end, f.timestamps.back());
        for (const auto& n : f.names) {
            if (std::find(names.begin(), names.end(), n) != names.end())
                throw DataError("align_and_fill: channel '" + n + "' appears in more than one frame");
            names.push_back(n);
        }
    }
    if (end < start)
        throw DataError("align_and_fill: frames share no common time range");

    const Index grid = static_cast<Index>((end - start) / kHour) + 1;
    Eigen::MatrixXd values = Eigen::MatrixXd::Constant(grid, static_cast<Index>(names.size()), kNaN);
    Index col = 0;
    for (const auto& f : frames) {
        for (Index r = 0; r < f.length(); ++r) {
            const TimePoint t = f.timestamps[static_cast<std::size_t>(r)];
            if (t < start || t > end || (t - start) % kHour != std::chrono::seconds{0})
                continue;
            const Index g = static_cast<Index>((t - start) / kHour);
            values.block(g, col, 1, f.channel_count()) = f.values.row(r);
        }
        col += f.channel_count();
    }

    // Fill short interior runs; everything else stays NaN and breaks the range.
    for (Index c = 0; c < values.cols(); ++c) {
        Index r = 0;
        while (r < grid) {
            if (std::isfinite(values(r, c))) {
                ++r;
                continue;
            }
            Index run_end = r;
            while (run_end < grid && !std::isfinite(values(run_end, c)))
                ++run_end;
            const Index run = run_end - r;
            if (r > 0 && run_end < grid && run <= max_fill_hours) {
                const double a = values(r - 1, c);
                const double b = values(run_end, c);
                for (Index i = 0; i < run; ++i)
                    values(r + i, c) = a + (b - a) * static_cast<double>(i + 1) / static_cast<double>(run + 1);
                result.filled_cells += run;
            } else if (r > 0 && run_end < grid) {
                result.notes.push_back("channel '" + names[static_cast<std::size_t>(c)] + "': "
                                       + std::to_string(run) + "-hour gap starting "
                                       + format_timestamp(start + kHour * r) + " splits the range");
            }
            r = run_end;
        }
    }

    Index best_begin = 0, best_len = 0, cur_begin = 0;
    for (Index r = 0; r <= grid; ++r) {
        const bool ok = r < grid && values.row(r).allFinite();
        if (!ok) {
            if (r - cur_begin > best_len) {
                best_len = r - cur_begin;
                best_begin = cur_begin;
            }
            cur_begin = r + 1;
        }
    }
    if (best_len == 0)
        throw DataError("align_and_fill: no complete rows after alignment");
    result.dropped_rows = grid - best_len;
    if (result.dropped_rows > 0)
        result.notes.push_back("kept " + std::to_string(best_len) + " contiguous hours from "
                               + format_timestamp(start + kHour * best_begin) + ", dropped "
                               + std::to_string(result.dropped_rows));

    result.frame.names = names;
    result.frame.values = values.middleRows(best_begin, best_len);
    for (Index r = 0; r < best_len; ++r)
        result.frame.timestamps.push_back(start + kHour * (best_begin + r));
    return result;
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

TimeSeriesFrame normalize(const TimeSeriesFrame& frame, Index stats_begin, Index stats_end)
{
    if (stats_begin < 0 || stats_end > frame.length() || stats_end - stats_begin < 2)
        throw DataError("normalize: statistics range must hold at least two rows inside the frame");
    const auto block = frame.values.middleRows(stats_begin, stats_end - stats_begin);
    if (!block.allFinite())
        throw DataError("normalize: statistics range contains missing values");
    NormalizationStats stats;
    stats.names = frame.names;
    stats.mean = block.colwise().mean().transpose();
    stats.stddev.resize(frame.channel_count());
    for (Index c = 0; c < frame.channel_count(); ++c) {
        const double var = (block.col(c).array() - stats.mean(c)).square().mean();
        stats.stddev(c) = std::sqrt(var);
        if (stats.stddev(c) < 1e-9)
            throw DataError("normalize: channel '" + frame.names[static_cast<std::size_t>(c)]
                            + "' is constant over the statistics range");
    }
    TimeSeriesFrame out = frame;
    for (Index c = 0; c < frame.channel_count(); ++c)
        out.values.col(c) = (frame.values.col(c).array() - stats.mean(c)) / stats.stddev(c);
    out.stats = std::move(stats);
    return out;
}

TimeSeriesFrame denormalize(const TimeSeriesFrame& frame)
{
    if (!frame.stats)
        throw DataError("denormalize: frame carries no normalization statistics");
    TimeSeriesFrame out = frame;
    for (Index c = 0; c < frame.channel_count(); ++c)
        out.values.col(c) = frame.values.col(c).array() * frame.stats->stddev(c) + frame.stats->mean(c);
    out.stats.reset();
    return out;
}

// ---------------------------------------------------------------------------
// Windows
// ---------------------------------------------------------------------------

ContextMode parse_context(std::string_view name)
{
    if (name == "none")
        return ContextMode::none;
    if (name == "mobility")
        return ContextMode::mobility;
    if (name == "temperature")
        return ContextMode::temperature;
    if (name == "both")
        return ContextMode::both;
    throw DataError("unknown context mode '" + std::string(name) + "' (expected none, mobility, temperature, both)");
}

std::string to_string(ContextMode mode)
{
    switch (mode) {
    case ContextMode::none:
        return "none";
    case ContextMode::mobility:
        return "mobility";
    case ContextMode::temperature:
        return "temperature";
    case ContextMode::both:
        return "both";
    }
    return "?";
}

std::vector<std::string> context_channels(ContextMode mode)
{
    switch (mode) {
    case ContextMode::none:
        return {"energy"};
    case ContextMode::mobility:
        return {"energy", "mobility"};
    case ContextMode::temperature:
        return {"energy", "temperature"};
    case ContextMode::both:
        return {"energy", "mobility", "temperature"};
    }
    return {};
}

std::vector<Sample> make_windows(const TimeSeriesFrame& frame, Index lookback, Index horizon, ContextMode mode,
                                 Index first_issue, Index last_issue)
{
    if (lookback < 1 || horizon < 1)
        throw DataError("make_windows: lookback and horizon must be >= 1");
    const auto channels = context_channels(mode);
    std::vector<Index> cols;
    for (const auto& c : channels)
        cols.push_back(frame.channel(c));
    const Index energy = cols.front();

    const Index lo = std::max(first_issue < 0 ? Index(0) : first_issue, lookback - 1);
    const Index hi = std::min(last_issue < 0 ? frame.length() : last_issue, frame.length() - horizon);
    std::vector<Sample> out;
    if (hi <= lo)
        return out;
    for (Index r = lo - lookback + 1; r < hi + horizon; ++r) {
        if (r > lo - lookback + 1 && frame.timestamps[static_cast<std::size_t>(r)]
                                         - frame.timestamps[static_cast<std::size_t>(r - 1)] != kHour)
            throw DataError("make_windows: non-hourly step at " + format_timestamp(frame.timestamps[static_cast<std::size_t>(r)]));
        for (Index c : cols)
            if (!std::isfinite(frame.values(r, c)))
                throw DataError("make_windows: missing value at " + format_timestamp(frame.timestamps[static_cast<std::size_t>(r)]));
    }
    out.reserve(static_cast<std::size_t>(hi - lo));
    for (Index t = lo; t < hi; ++t) {
        Sample s;
        s.window.resize(static_cast<Index>(cols.size()), lookback);
        for (std::size_t c = 0; c < cols.size(); ++c)
            s.window.row(static_cast<Index>(c)) = frame.values.col(cols[c]).segment(t - lookback + 1, lookback).transpose();
        s.target = frame.values.col(energy).segment(t + 1, horizon);
        s.issue = frame.timestamps[static_cast<std::size_t>(t)];
        s.issue_row = t;
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Periods
// ---------------------------------------------------------------------------

std::string to_string(Period p) { return p == Period::pre ? "pre" : "post"; }

TimePoint default_boundary() { return parse_timestamp("2020-03-30T00:00:00"); }

std::vector<Interval> default_lockdowns()
{
    return {{parse_timestamp("2020-03-30"), parse_timestamp("2020-05-12")},
            {parse_timestamp("2020-07-08"), parse_timestamp("2020-10-27")}};
}

PeriodSplit make_split(const TimeSeriesFrame& frame, Index pretrain_hours, Index validation_hours, TimePoint boundary)
{
    PeriodSplit split;
    split.pretrain = {0, pretrain_hours};
    split.validation = {pretrain_hours, pretrain_hours + validation_hours};
    split.online = {pretrain_hours + validation_hours, frame.length()};
    split.boundary = boundary;
    split.lockdowns = default_lockdowns();
    validate_split(frame, split);
    return split;
}

void validate_split(const TimeSeriesFrame& frame, const PeriodSplit& split)
{
    const auto ok = [&](const RowRange& r) { return r.begin >= 0 && r.end <= frame.length() && r.size() > 0; };
    if (!ok(split.pretrain) || !ok(split.validation) || !ok(split.online))
        throw DataError("period split: every range must be non-empty and inside the frame ("
                        + std::to_string(frame.length()) + " rows)");
    if (split.pretrain.end > split.validation.begin || split.validation.end > split.online.begin)
        throw DataError("period split: ranges must be disjoint and ordered pretrain < validation < online");
    for (const auto& l : split.lockdowns)
        if (l.end < l.begin)
            throw DataError("period split: lockdown interval ends before it begins");
}

Period period_of(TimePoint t, TimePoint boundary) { return t < boundary ? Period::pre : Period::post; }

std::vector<Period> split_periods(const TimeSeriesFrame& frame, const PeriodSplit& split)
{
    validate_split(frame, split);
    std::vector<Period> labels;
    labels.reserve(static_cast<std::size_t>(split.online.size()));
    for (Index r = split.online.begin; r < split.online.end; ++r)
        labels.push_back(period_of(frame.timestamps[static_cast<std::size_t>(r)], split.boundary));
    return labels;
}

} // namespace fsnet
