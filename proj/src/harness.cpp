#include "fsnet/harness.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

namespace fsnet {

namespace {

std::string format_real(Real v)
{
    if (std::isnan(v))
        return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <typename T, typename F>
std::string join(const std::vector<T>& items, F&& fmt)
{
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i)
            out += ",";
        out += fmt(items[i]);
    }
    return out;
}

std::string join_ints(const std::vector<Index>& v)
{
    return join(v, [](Index x) { return std::to_string(x); });
}

void reject_unused(const KeyValues& keys, const std::string& what)
{
    const auto unused = keys.unused_keys();
    if (unused.empty())
        return;
    std::string msg = keys.source() + ": unknown " + what + " key(s):";
    for (const auto& k : unused)
        msg += " " + k;
    throw ConfigError(msg);
}

} // namespace

// ---------------------------------------------------------------------------
// ExperimentConfig
// ---------------------------------------------------------------------------

Real ExperimentConfig::effective_online_lr() const { return online_lr ? *online_lr : online_lr_factor * pretrain.lr; }

Strategy ExperimentConfig::strategy(StrategyKind kind) const
{
    Strategy s;
    s.kind = kind;
    s.lr = effective_online_lr();
    s.capacity = capacity;
    s.replay_batch = replay_batch;
    s.a_logit = a_logit;
    s.b_label = b_label;
    return s;
}

std::string ExperimentConfig::dataset_name() const
{
    if (!csv.empty())
        return std::filesystem::path(csv).stem().string();
    return "synthetic-" + scenario_name;
}

void ExperimentConfig::validate() const
{
    if (seeds.empty())
        throw ConfigError("experiment: at least one seed is required");
    if (contexts.empty() || strategies.empty())
        throw ConfigError("experiment: at least one context and one strategy are required");
    if (pretrain_hours < 1 || validation_hours < 1)
        throw ConfigError("experiment: pretrain_hours and validation_hours must be >= 1");
    if (threads < 1)
        throw ConfigError("experiment: threads must be >= 1");
    if (!csv.empty() && !std::filesystem::exists(csv))
        throw ConfigError("experiment: csv file not found: " + csv);
    TcnConfig m = model;
    m.input_channels = 1;
    m.validate();
    adaptor.validate();
    for (auto k : strategies)
        strategy(k).validate();
    if (pretrain.epochs < 0 || pretrain.batch_size < 1 || !(pretrain.lr >= 0))
        throw ConfigError("experiment: pretrain needs epochs >= 0, batch_size >= 1, lr >= 0");
    if (csv.empty())
        scenario.validate();
}

std::string ExperimentConfig::canonical_text() const
{
    std::ostringstream out;
    out << "name = " << name << "\n";
    out << "csv = " << csv << "\n";
    if (csv.empty()) {
        out << "scenario = " << scenario_name << "\n";
        std::istringstream lines(scenario_to_text(scenario));
        std::string line;
        while (std::getline(lines, line))
            out << "scenario." << line << "\n";
    }
    out << "contexts = " << join(contexts, [](ContextMode c) { return to_string(c); }) << "\n";
    out << "strategies = " << join(strategies, [](StrategyKind k) { return to_string(k); }) << "\n";
    out << "seeds = " << join(seeds, [](std::uint64_t s) { return std::to_string(s); }) << "\n";
    out << "lookback = " << model.lookback << "\n";
    out << "horizon = " << model.horizon << "\n";
    out << "model.channels = " << model.channels << "\n";
    out << "model.kernel_size = " << model.kernel_size << "\n";
    out << "model.num_blocks = " << model.num_blocks << "\n";
    out << "model.convs_per_block = " << model.convs_per_block << "\n";
    out << "model.dilations = " << join_ints(model.dilation_schedule()) << "\n";
    out << "fsnet.gamma = " << format_real(adaptor.gamma) << "\n";
    out << "fsnet.gamma_prime = " << format_real(adaptor.gamma_prime) << "\n";
    out << "fsnet.tau = " << format_real(adaptor.tau) << "\n";
    out << "fsnet.squash = " << format_real(adaptor.squash) << "\n";
    out << "fsnet.memory_slots = " << adaptor.memory_slots << "\n";
    out << "fsnet.top_k = " << adaptor.top_k << "\n";
    out << "fsnet.memory = " << (adaptor.memory_enabled ? "true" : "false") << "\n";
    out << "fsnet.train_adaptor = " << (adaptor.train_adaptor ? "true" : "false") << "\n";
    out << "pretrain.epochs = " << pretrain.epochs << "\n";
    out << "pretrain.lr = " << format_real(pretrain.lr) << "\n";
    out << "pretrain.batch_size = " << pretrain.batch_size << "\n";
    out << "online.lr = " << format_real(effective_online_lr()) << "\n";
    out << "buffer.capacity = " << capacity << "\n";
    out << "buffer.replay_batch = " << replay_batch << "\n";
    out << "derpp.a_logit = " << format_real(a_logit) << "\n";
    out << "derpp.b_label = " << format_real(b_label) << "\n";
    out << "pretrain_hours = " << pretrain_hours << "\n";
    out << "validation_hours = " << validation_hours << "\n";
    out << "boundary = " << format_timestamp(boundary) << "\n";
    return out.str();
}

ExperimentConfig parse_experiment(const KeyValues& keys)
{
    ExperimentConfig c;
    c.name = keys.get_string("name", c.name);
    c.csv = keys.get_string("csv", "");
    c.out = keys.get_string("out", "");

    c.scenario_name = keys.get_string("scenario", c.scenario_name);
    KeyValues scenario_keys;
    if (keys.has("scenario_file"))
        scenario_keys = KeyValues::load(keys.get_string("scenario_file", ""));
    const KeyValues overrides = keys.with_prefix("scenario.");
    for (const auto& [k, v] : overrides.entries())
        scenario_keys.set(k, v);
    c.scenario = scenario_from_keys(scenario_keys, c.scenario_name);
    reject_unused(scenario_keys, "scenario");

    std::vector<ContextMode> contexts;
    for (const auto& s : keys.get_list("contexts", {}))
        contexts.push_back(parse_context(s));
    if (!contexts.empty())
        c.contexts = contexts;
    std::vector<StrategyKind> strategies;
    for (const auto& s : keys.get_list("strategies", {}))
        strategies.push_back(parse_strategy(s));
    if (!strategies.empty())
        c.strategies = strategies;

    if (keys.has("seeds")) {
        c.seeds.clear();
        for (const auto& s : keys.get_list("seeds", {})) {
            KeyValues one;
            one.set("seed", s);
            c.seeds.push_back(static_cast<std::uint64_t>(one.get_int("seed", 0)));
        }
    } else {
        const long long first = keys.get_int("seed", 1);
        const long long count = keys.get_int("num_seeds", 10);
        if (count < 1)
            throw ConfigError("experiment: num_seeds must be >= 1");
        c.seeds.clear();
        for (long long i = 0; i < count; ++i)
            c.seeds.push_back(static_cast<std::uint64_t>(first + i));
    }

    c.model.lookback = keys.get_int("lookback", c.model.lookback);
    c.model.horizon = keys.get_int("horizon", c.model.horizon);
    c.model.channels = keys.get_int("model.channels", c.model.channels);
    c.model.kernel_size = keys.get_int("model.kernel_size", c.model.kernel_size);
    c.model.num_blocks = keys.get_int("model.num_blocks", c.model.num_blocks);
    c.model.convs_per_block = keys.get_int("model.convs_per_block", c.model.convs_per_block);
    if (keys.has("model.dilations")) {
        c.model.dilations.clear();
        for (const auto& s : keys.get_list("model.dilations", {})) {
            KeyValues one;
            one.set("d", s);
            c.model.dilations.push_back(one.get_int("d", 1));
        }
    }

    c.adaptor.gamma = keys.get_real("fsnet.gamma", c.adaptor.gamma);
    c.adaptor.gamma_prime = keys.get_real("fsnet.gamma_prime", c.adaptor.gamma_prime);
    c.adaptor.tau = keys.get_real("fsnet.tau", c.adaptor.tau);
    c.adaptor.squash = keys.get_real("fsnet.squash", c.adaptor.squash);
    c.adaptor.memory_slots = keys.get_int("fsnet.memory_slots", c.adaptor.memory_slots);
    c.adaptor.top_k = keys.get_int("fsnet.top_k", c.adaptor.top_k);
    c.adaptor.memory_enabled = keys.get_bool("fsnet.memory", c.adaptor.memory_enabled);
    c.adaptor.train_adaptor = keys.get_bool("fsnet.train_adaptor", c.adaptor.train_adaptor);

    c.pretrain.epochs = keys.get_int("pretrain.epochs", c.pretrain.epochs);
    c.pretrain.lr = keys.get_real("pretrain.lr", c.pretrain.lr);
    c.pretrain.batch_size = keys.get_int("pretrain.batch_size", c.pretrain.batch_size);
    if (keys.has("online.lr"))
        c.online_lr = keys.get_real("online.lr", 0);
    c.online_lr_factor = keys.get_real("online.lr_factor", c.online_lr_factor);
    c.capacity = keys.get_int("buffer.capacity", c.capacity);
    c.replay_batch = keys.get_int("buffer.replay_batch", c.replay_batch);
    c.a_logit = keys.get_real("derpp.a_logit", c.a_logit);
    c.b_label = keys.get_real("derpp.b_label", c.b_label);

    c.pretrain_hours = keys.get_int("pretrain_hours", c.pretrain_hours);
    c.validation_hours = keys.get_int("validation_hours", c.validation_hours);
    if (keys.has("boundary"))
        c.boundary = parse_timestamp(keys.get_string("boundary", ""));
    c.threads = keys.get_int("threads", c.threads);

    reject_unused(keys, "experiment");
    c.validate();
    return c;
}

ExperimentConfig load_experiment(const std::string& path)
{
    if (!std::filesystem::exists(path))
        throw ConfigError("config file not found: " + path);
    try {
        return parse_experiment(KeyValues::load(path));
    } catch (const KeyValueError& e) {
        throw ConfigError(e.what());
    }
}

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

PreparedData prepare_data(const ExperimentConfig& config)
{
    PreparedData d;
    d.dataset = config.dataset_name();
    if (config.csv.empty()) {
        d.raw = gen_synthetic(config.scenario).frame;
    } else {
        const TimeSeriesFrame loaded = load_csv(config.csv);
        d.raw = align_and_fill(std::span<const TimeSeriesFrame>(&loaded, 1)).frame;
    }
    d.split = make_split(d.raw, config.pretrain_hours, config.validation_hours, config.boundary);
    d.normalized = normalize(d.raw, d.split.pretrain.begin, d.split.pretrain.end);
    return d;
}

WindowSets make_window_sets(const PreparedData& data, const ExperimentConfig& config, ContextMode mode)
{
    const Index L = config.model.lookback;
    const Index H = config.model.horizon;
    const auto& s = data.split;
    WindowSets w;
    w.train = make_windows(data.normalized, L, H, mode, s.pretrain.begin, s.pretrain.end - H);
    w.validation = make_windows(data.normalized, L, H, mode, s.validation.begin, s.validation.end - H);
    w.online = make_windows(data.normalized, L, H, mode, s.online.begin, s.online.end);
    if (w.train.empty() || w.validation.empty() || w.online.empty())
        throw DataError("experiment: pretrain, validation and online ranges must each yield at least one window");
    return w;
}

TcnConfig model_config_for(const ExperimentConfig& config, ContextMode mode)
{
    TcnConfig m = config.model;
    m.input_channels = static_cast<Index>(context_channels(mode).size());
    return m;
}

PretrainResult pretrain_cell(const ExperimentConfig& config, const WindowSets& windows, ContextMode mode,
                             std::uint64_t seed)
{
    const TcnModel init = tcn_init(model_config_for(config, mode), seed, config.adaptor);
    PretrainOptions opts = config.pretrain;
    opts.seed = seed;
    return pretrain(init, windows.train, windows.validation, opts);
}

std::vector<MetricsReport> run_experiment(const ExperimentConfig& config, const ProgressFn& progress)
{
    config.validate();
    const PreparedData data = prepare_data(config);

    std::vector<WindowSets> windows;
    for (ContextMode mode : config.contexts)
        windows.push_back(make_window_sets(data, config, mode));

    const std::size_t n_ctx = config.contexts.size();
    const std::size_t n_seed = config.seeds.size();
    const std::size_t n_strat = config.strategies.size();
    std::vector<MetricsReport> reports(n_ctx * n_seed * n_strat);
    std::mutex log_mutex;
    const auto log = [&](const std::string& msg) {
        if (!progress)
            return;
        std::lock_guard<std::mutex> lock(log_mutex);
        progress(msg);
    };

    const auto run_cell = [&](std::size_t cell) {
        const std::size_t ci = cell / n_seed;
        const std::size_t si = cell % n_seed;
        const ContextMode mode = config.contexts[ci];
        const std::uint64_t seed = config.seeds[si];
        const std::string tag = to_string(mode) + " seed " + std::to_string(seed);
        const auto slot = [&](std::size_t k) -> MetricsReport& { return reports[(ci * n_seed + si) * n_strat + k]; };
        for (std::size_t k = 0; k < n_strat; ++k) {
            MetricsReport& r = slot(k);
            r.dataset = data.dataset;
            r.context = to_string(mode);
            r.strategy = to_string(config.strategies[k]);
            r.seed = seed;
        }
        std::optional<PretrainResult> pre;
        try {
            pre = pretrain_cell(config, windows[ci], mode, seed);
            log(tag + ": pretrained, validation MAE " + format_real(pre->initial_val_mae) + " -> "
                + format_real(pre->val_mae));
        } catch (const std::exception& e) {
            for (std::size_t k = 0; k < n_strat; ++k) {
                slot(k).failed = true;
                slot(k).error = std::string("pretrain failed: ") + e.what();
            }
            log(tag + ": pretrain failed: " + e.what());
            return;
        }
        for (std::size_t k = 0; k < n_strat; ++k) {
            MetricsReport& r = slot(k);
            try {
                OnlineResult res =
                    run_online(pre->model, windows[ci].online, config.strategy(config.strategies[k]), seed, config.boundary);
                res.report.dataset = r.dataset;
                res.report.context = r.context;
                r = std::move(res.report);
                log(tag + " " + r.strategy + ": post MAE " + format_real(r.accumulated_mae(Period::post)));
            } catch (const std::exception& e) {
                r.failed = true;
                r.error = e.what();
                r.rows.clear();
                log(tag + " " + r.strategy + ": failed: " + e.what());
            }
        }
    };

    const std::size_t cells = n_ctx * n_seed;
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(config.threads), cells);
    if (workers <= 1) {
        for (std::size_t cell = 0; cell < cells; ++cell)
            run_cell(cell);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t cell = next++; cell < cells; cell = next++)
                    run_cell(cell);
            });
        for (auto& t : pool)
            t.join();
    }
    return reports;
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

const SummaryCell* Summary::find(const std::string& dataset, Period period, const std::string& context,
                                 const std::string& strategy) const
{
    for (const auto& c : cells)
        if (c.dataset == dataset && c.period == period && c.context == context && c.strategy == strategy)
            return &c;
    return nullptr;
}

Summary aggregate_seeds(std::span<const MetricsReport> reports)
{
    using Key = std::tuple<std::string, int, std::string, std::string>;
    struct Acc {
        std::vector<std::pair<std::uint64_t, Real>> values;
        Index failed = 0;
    };
    std::map<Key, Acc> groups;
    for (const auto& r : reports) {
        for (Period p : {Period::pre, Period::post}) {
            Acc& acc = groups[Key{r.dataset, static_cast<int>(p), r.context, r.strategy}];
            const Real v = r.failed ? std::numeric_limits<Real>::quiet_NaN() : r.accumulated_mae(p);
            if (std::isnan(v))
                ++acc.failed;
            else
                acc.values.emplace_back(r.seed, v);
        }
    }

    Summary s;
    for (auto& [key, acc] : groups) {
        std::sort(acc.values.begin(), acc.values.end());
        SummaryCell c;
        c.dataset = std::get<0>(key);
        c.period = static_cast<Period>(std::get<1>(key));
        c.context = std::get<2>(key);
        c.strategy = std::get<3>(key);
        c.seeds = static_cast<Index>(acc.values.size());
        c.failed = acc.failed;
        if (acc.values.empty()) {
            c.mean = c.stddev = std::numeric_limits<Real>::quiet_NaN();
        } else {
            Real sum = 0;
            for (const auto& [seed, v] : acc.values)
                sum += v;
            c.mean = sum / static_cast<Real>(acc.values.size());
            if (acc.values.size() == 1) {
                c.stddev = 0;
                c.single_seed = true;
            } else {
                Real sq = 0;
                for (const auto& [seed, v] : acc.values)
                    sq += (v - c.mean) * (v - c.mean);
                c.stddev = std::sqrt(sq / static_cast<Real>(acc.values.size() - 1));
            }
        }
        s.cells.push_back(c);
    }

    std::map<std::tuple<std::string, int, std::string>, ContextDelta> deltas;
    for (const auto& c : s.cells) {
        auto& d = deltas[{c.dataset, static_cast<int>(c.period), c.strategy}];
        d.dataset = c.dataset;
        d.period = c.period;
        d.strategy = c.strategy;
    }
    for (auto& [key, d] : deltas) {
        const auto mean_of = [&](const char* ctx) -> std::optional<Real> {
            const SummaryCell* c = s.find(d.dataset, d.period, ctx, d.strategy);
            if (!c || c->seeds == 0)
                return std::nullopt;
            return c->mean;
        };
        const auto diff = [](std::optional<Real> a, std::optional<Real> b) -> std::optional<Real> {
            if (a && b)
                return *a - *b;
            return std::nullopt;
        };
        d.plus_m = diff(mean_of("none"), mean_of("mobility"));
        d.plus_t = diff(mean_of("none"), mean_of("temperature"));
        d.t_plus_m = diff(mean_of("temperature"), mean_of("both"));
        if (d.plus_m || d.plus_t || d.t_plus_m)
            s.deltas.push_back(d);
    }
    return s;
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

void write_file_atomic(const std::string& path, const std::string& text)
{
    const std::filesystem::path p(path);
    if (p.has_parent_path())
        std::filesystem::create_directories(p.parent_path());
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        out << text;
        out.flush();
        if (!out)
            throw std::runtime_error("cannot write " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        std::remove(tmp.c_str());
        throw std::runtime_error("cannot move " + tmp + " to " + path);
    }
}

std::vector<std::string> supported_formats() { return {"csv", "json"}; }

std::string summary_to_csv(const Summary& summary, const std::string& config_hash)
{
    std::ostringstream out;
    out << "# config_hash " << config_hash << "\n";
    out << "# mae is in normalized energy units (z-score over the pretrain split)\n";
    out << "dataset,period,context,strategy,mean_mae,std_mae,seeds,failed,single_seed\n";
    for (const auto& c : summary.cells)
        out << c.dataset << "," << to_string(c.period) << "," << c.context << "," << c.strategy << ","
            << format_real(c.mean) << "," << format_real(c.stddev) << "," << c.seeds << "," << c.failed << ","
            << (c.single_seed ? 1 : 0) << "\n";
    return out.str();
}

std::vector<SummaryCell> parse_summary_csv(const std::string& text)
{
    std::vector<SummaryCell> cells;
    std::istringstream in(text);
    std::string line;
    bool header = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#')
            continue;
        if (!header) {
            header = true;
            continue;
        }
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string item;
        while (std::getline(ss, item, ','))
            f.push_back(item);
        if (f.size() != 9)
            throw DataError("summary csv: expected 9 fields, got " + std::to_string(f.size()) + " in '" + line + "'");
        SummaryCell c;
        c.dataset = f[0];
        if (f[1] != "pre" && f[1] != "post")
            throw DataError("summary csv: bad period '" + f[1] + "'");
        c.period = f[1] == "pre" ? Period::pre : Period::post;
        c.context = f[2];
        c.strategy = f[3];
        c.mean = f[4] == "nan" ? std::numeric_limits<Real>::quiet_NaN() : std::stod(f[4]);
        c.stddev = f[5] == "nan" ? std::numeric_limits<Real>::quiet_NaN() : std::stod(f[5]);
        c.seeds = std::stoll(f[6]);
        c.failed = std::stoll(f[7]);
        c.single_seed = f[8] == "1";
        cells.push_back(c);
    }
    return cells;
}

namespace {

nlohmann::json optional_json(const std::optional<Real>& v)
{
    if (!v)
        return nullptr;
    return *v;
}

nlohmann::json real_json(Real v)
{
    if (std::isnan(v))
        return nullptr;
    return v;
}

std::string summary_to_json(const Summary& summary, const ExperimentConfig& config)
{
    using nlohmann::json;
    json j;
    j["config_hash"] = config.hash();
    j["config"] = config.canonical_text();
    j["mae_units"] = "normalized energy (z-score over the pretrain split)";
    json cells = json::array();
    for (const auto& c : summary.cells)
        cells.push_back({{"dataset", c.dataset},
                         {"period", to_string(c.period)},
                         {"context", c.context},
                         {"strategy", c.strategy},
                         {"mean_mae", real_json(c.mean)},
                         {"std_mae", real_json(c.stddev)},
                         {"seeds", c.seeds},
                         {"failed", c.failed},
                         {"single_seed", c.single_seed}});
    j["cells"] = cells;
    json deltas = json::array();
    for (const auto& d : summary.deltas)
        deltas.push_back({{"dataset", d.dataset},
                          {"period", to_string(d.period)},
                          {"strategy", d.strategy},
                          {"plus_m", optional_json(d.plus_m)},
                          {"plus_t", optional_json(d.plus_t)},
                          {"t_plus_m", optional_json(d.t_plus_m)}});
    j["context_deltas"] = deltas;
    return j.dump(2) + "\n";
}

} // namespace

std::string report_emit(const Summary& summary, const std::string& format, const std::string& dir,
                        const ExperimentConfig& config)
{
    std::string text;
    if (format == "csv") {
        text = summary_to_csv(summary, config.hash());
    } else if (format == "json") {
        text = summary_to_json(summary, config);
    } else {
        std::string list;
        for (const auto& f : supported_formats())
            list += (list.empty() ? "" : ", ") + f;
        throw ConfigError("unknown report format '" + format + "' (supported: " + list + ")");
    }
    const std::string path = (std::filesystem::path(dir) / ("summary." + format)).string();
    write_file_atomic(path, text);
    return path;
}

std::string report_to_csv(const MetricsReport& report)
{
    std::ostringstream out;
    out << "timestamp,mae,mse,strategy,seed,context,period\n";
    for (const auto& r : report.rows)
        out << format_timestamp(r.issue) << "," << format_real(r.mae) << "," << format_real(r.mse) << ","
            << report.strategy << "," << report.seed << "," << report.context << "," << to_string(r.period) << "\n";
    return out.str();
}

std::string run_file_name(const MetricsReport& report)
{
    return report.context + "_" + report.strategy + "_seed" + std::to_string(report.seed) + ".csv";
}

void write_experiment(const ExperimentConfig& config, std::span<const MetricsReport> reports, const Summary& summary)
{
    if (config.out.empty())
        throw ConfigError("experiment: no output directory set (use out = DIR or --out)");
    const std::filesystem::path dir(config.out);
    std::ostringstream failures;
    for (const auto& r : reports) {
        if (r.failed) {
            failures << run_file_name(r) << ": " << r.error << "\n";
            continue;
        }
        write_file_atomic((dir / "runs" / run_file_name(r)).string(), report_to_csv(r));
    }
    report_emit(summary, "csv", config.out, config);
    report_emit(summary, "json", config.out, config);
    const std::string failed = failures.str();
    const auto failure_path = dir / "failures.txt";
    if (!failed.empty())
        write_file_atomic(failure_path.string(), failed);
    else if (std::filesystem::exists(failure_path))
        std::filesystem::remove(failure_path);
}

std::string render_table(const Summary& summary, TableAxis axis, const std::string& fixed)
{
    std::vector<std::string> columns;
    std::vector<std::pair<std::string, Period>> rows;
    for (const auto& c : summary.cells) {
        const std::string& other = axis == TableAxis::context ? c.strategy : c.context;
        if (other != fixed)
            continue;
        const std::string& col = axis == TableAxis::context ? c.context : c.strategy;
        if (std::find(columns.begin(), columns.end(), col) == columns.end())
            columns.push_back(col);
        const auto row = std::make_pair(c.dataset, c.period);
        if (std::find(rows.begin(), rows.end(), row) == rows.end())
            rows.push_back(row);
    }
    const auto rank = [](const std::string& name) {
        static const std::vector<std::string> order{"none", "mobility", "temperature", "both",
                                                    "frozen", "ogd", "er", "derpp", "fsnet"};
        const auto it = std::find(order.begin(), order.end(), name);
        return std::distance(order.begin(), it);
    };
    std::sort(columns.begin(), columns.end(), [&](const auto& a, const auto& b) { return rank(a) < rank(b); });

    std::ostringstream out;
    out << std::left << std::setw(28) << "dataset / period";
    for (const auto& col : columns)
        out << std::setw(22) << col;
    const bool with_deltas = axis == TableAxis::context;
    if (with_deltas)
        out << std::setw(10) << "+M" << std::setw(10) << "+T" << std::setw(10) << "T+M";
    out << "\n";
    out << std::fixed << std::setprecision(4);
    for (const auto& [dataset, period] : rows) {
        out << std::setw(28) << (dataset + " " + to_string(period));
        for (const auto& col : columns) {
            const SummaryCell* c = axis == TableAxis::context ? summary.find(dataset, period, col, fixed)
                                                              : summary.find(dataset, period, fixed, col);
            std::ostringstream cell;
            cell << std::fixed << std::setprecision(4);
            if (!c || c->seeds == 0)
                cell << "failed";
            else
                cell << c->mean << " +- " << c->stddev << (c->single_seed ? "*" : "");
            out << std::setw(22) << cell.str();
        }
        if (with_deltas) {
            for (const auto& d : summary.deltas) {
                if (d.dataset != dataset || d.period != period || d.strategy != fixed)
                    continue;
                for (const auto& v : {d.plus_m, d.plus_t, d.t_plus_m}) {
                    std::ostringstream cell;
                    cell << std::fixed << std::setprecision(4);
                    if (v)
                        cell << *v;
                    else
                        cell << "-";
                    out << std::setw(10) << cell.str();
                }
            }
        }
        out << "\n";
    }
    return out.str();
}

} // namespace fsnet
