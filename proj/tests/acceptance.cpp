// Acceptance suite: one PASS/FAIL line per criterion, tolerances fixed here.

#include "fsnet/gradcheck.hpp"
#include "fsnet/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

using namespace fsnet;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

Mat random_mat(Index r, Index c, std::mt19937_64& rng)
{
    std::normal_distribution<Real> n(0.0, 1.0);
    Mat m(r, c);
    for (Index i = 0; i < m.size(); ++i)
        m.data()[i] = n(rng);
    return m;
}

bool same(const Mat& a, const Mat& b)
{
    return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

bool same_params(const TcnModel& a, const TcnModel& b)
{
    if (!same(a.head_weight, b.head_weight) || !same(a.head_bias, b.head_bias))
        return false;
    for (std::size_t l = 0; l < a.layers.size(); ++l)
        if (!same(a.layers[l].theta, b.layers[l].theta) || !same(a.layers[l].bias, b.layers[l].bias))
            return false;
    for (std::size_t s = 0; s < a.skips.size(); ++s)
        if (a.skips[s] && (!same(a.skips[s]->weight, b.skips[s]->weight) || !same(a.skips[s]->bias, b.skips[s]->bias)))
            return false;
    return true;
}

std::string fmt(double v, int prec = 4)
{
    std::ostringstream o;
    o.precision(prec);
    o << std::fixed << v;
    return o.str();
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Small synthetic stream for the model-level checks.
struct Stream {
    ExperimentConfig config;
    PreparedData data;
    WindowSets windows;
};

Stream default_stream()
{
    Stream s;
    s.config = parse_experiment(KeyValues{});
    s.data = prepare_data(s.config);
    s.windows = make_window_sets(s.data, s.config, ContextMode::both);
    return s;
}

ExperimentConfig load_for_matrix(const std::string& name)
{
    ExperimentConfig c = load_experiment(std::string(FSNET_SOURCE_DIR) + "/configs/" + name);
    const std::size_t cells = c.contexts.size() * c.seeds.size();
    c.threads = static_cast<Index>(std::max<std::size_t>(1, std::min<std::size_t>(cells, std::thread::hardware_concurrency())));
    return c;
}

// ---------------------------------------------------------------------------

Outcome gradients()
{
    const auto t0 = Clock::now();
    const GradcheckReport r = run_gradcheck({100, 1e-5, 1e-4, 1});
    const double secs = seconds_since(t0);
    Real worst = 0;
    Index failures = 0;
    for (const auto& c : r.cases) {
        worst = std::max(worst, c.max_error);
        failures += c.failures;
    }
    return {r.passed() && secs < 30.0,
            std::to_string(r.cases.size()) + " ops x 100 trials, " + std::to_string(failures)
                + " failures, max rel error " + fmt(worst * 1e6, 2) + "e-6, " + fmt(secs, 2) + " s (limit 30 s)"};
}

Outcome causality(const Stream& s)
{
    const auto t0 = Clock::now();
    std::mt19937_64 rng(21);
    bool conv_ok = true;
    for (Index dilation : {1, 2, 4, 8}) {
        const Mat x = random_mat(3, 40, rng);
        const Mat k = random_mat(5, 3 * 3, rng);
        const Mat y = conv1d_causal(x, k, 3, dilation);
        for (Index j = 0; j < 40; ++j) {
            Mat xp = x;
            xp.col(j).array() += 1.0;
            const Mat yp = conv1d_causal(xp, k, 3, dilation);
            conv_ok = conv_ok && same(yp.leftCols(j), y.leftCols(j));
        }
    }

    bool window_ok = true;
    const TimeSeriesFrame& f = s.data.normalized;
    const auto windows = make_windows(f, 24, 24, ContextMode::both);
    for (const auto& w : windows) {
        window_ok = window_ok && w.issue == f.timestamps[static_cast<std::size_t>(w.issue_row)];
        for (Index c = 0; c < 3 && window_ok; ++c)
            window_ok = window_ok && std::equal(w.window.row(c).begin(), w.window.row(c).end(),
                                                f.values.col(c).segment(w.issue_row - 23, 24).begin());
        window_ok = window_ok && std::equal(w.target.begin(), w.target.end(),
                                            f.values.col(0).segment(w.issue_row + 1, 24).begin());
    }

    // Future-permutation invariance of emitted forecasts, every strategy.
    const std::size_t length = 240, cut = 120;
    std::vector<Sample> stream(s.windows.online.begin(), s.windows.online.begin() + length);
    std::vector<Sample> permuted = stream;
    std::vector<std::size_t> order;
    for (std::size_t i = cut + 1; i < length; ++i)
        order.push_back(i);
    std::vector<std::size_t> shuffled = order;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    for (std::size_t j = 0; j < order.size(); ++j) {
        permuted[order[j]].window = stream[shuffled[j]].window;
        permuted[order[j]].target = stream[shuffled[j]].target;
    }
    TcnModel model = tcn_init(model_config_for(s.config, ContextMode::both), 3, s.config.adaptor);
    model.pretrained = true;
    bool prequential_ok = true;
    for (StrategyKind k : s.config.strategies) {
        Strategy st = s.config.strategy(k);
        st.capacity = 50;
        const OnlineResult a = run_online(model, stream, st, 5, s.config.boundary);
        const OnlineResult b = run_online(model, permuted, st, 5, s.config.boundary);
        for (std::size_t i = 0; i <= cut; ++i)
            prequential_ok = prequential_ok && same(a.forecasts[i], b.forecasts[i]);
    }
    const double secs = seconds_since(t0);
    return {conv_ok && window_ok && prequential_ok && secs < 60.0,
            std::string("conv perturbation ") + (conv_ok ? "ok" : "FAILED") + ", " + std::to_string(windows.size())
                + " windows audited " + (window_ok ? "ok" : "FAILED") + ", prequential invariance over 5 strategies "
                + (prequential_ok ? "ok" : "FAILED") + ", " + fmt(secs, 2) + " s (limit 60 s)"};
}

Outcome identity(const Stream& s)
{
    std::vector<Sample> train(s.windows.train.begin(), s.windows.train.begin() + 400);
    std::vector<Sample> val(s.windows.validation.begin(), s.windows.validation.begin() + 100);
    const TcnModel init = tcn_init(model_config_for(s.config, ContextMode::both), 1, s.config.adaptor);
    const PretrainResult p = pretrain(init, train, val, {2, 0.02, 16, 1});
    std::mt19937_64 rng(31);
    Index equal = 0;
    for (int i = 0; i < 1000; ++i) {
        const Mat x = random_mat(3, 24, rng);
        equal += same(tcn_forward(p.model, x, ForwardMode::adapted), tcn_forward(p.model, x)) ? 1 : 0;
    }
    return {equal == 1000, std::to_string(equal) + " / 1000 windows bit-identical after pretraining (best epoch "
                               + std::to_string(p.best_epoch) + ")"};
}

Outcome degeneracy(const Stream& s)
{
    AdaptorConfig a = s.config.adaptor;
    a.gamma = 0;
    a.gamma_prime = 0;
    a.memory_enabled = false;
    a.train_adaptor = false;
    TcnModel f = tcn_init(model_config_for(s.config, ContextMode::both), 2, a);
    f.pretrained = true;
    TcnModel o = f;
    const Real lr = s.config.effective_online_lr();
    Index equal = 0;
    bool phi_zero = true;
    for (std::size_t i = 0; i < 100; ++i) {
        const Sample& x = s.windows.online[i];
        fsnet_step(f, x.window, x.target, lr);
        ogd_step(o, x.window, x.target, lr);
        equal += same_params(f, o) ? 1 : 0;
        for (const auto& l : f.layers)
            phi_zero = phi_zero && l.phi_weight.isZero(0) && l.phi_bias.isZero(0);
    }
    return {equal == 100 && phi_zero, std::to_string(equal) + " / 100 steps with identical parameters"};
}

Outcome memory()
{
    LayerState l = make_layer(Mat::Ones(1, 2), Vec::Zero(1), 1, 1, {});
    std::string fired;
    bool ok = true;
    for (Real c : {-1.0, -0.71, -0.69, 0.0, 1.0}) {
        l.g_fast = (Vec(2) << 1, 0).finished();
        l.g_slow = (Vec(2) << c, std::sqrt(std::max(0.0, 1 - c * c))).finished();
        const bool t = should_trigger(l, 0.7);
        ok = ok && t == (c < -0.7);
        fired += (fired.empty() ? "" : " ") + fmt(c, 2) + (t ? ":on" : ":off");
    }
    AssociativeMemory mem;
    mem.slots = Mat::Zero(1, 6);
    mem.top_k = 1;
    mem.tau = 0.7;
    const Vec v = (Vec(6) << 0.3, -0.1, 0.25, -0.4, 0.05, 0.2).finished();
    for (int i = 0; i < 50; ++i)
        memory_write(mem, v, memory_read(mem, v).selected);
    const Real err = (mem.slots.row(0).transpose() - v).cwiseAbs().maxCoeff();
    return {ok && err < 1e-6, "cosines " + fired + "; |slot - value| after 50 writes " + fmt(err * 1e9, 2) + "e-9 (limit 1e-6)"};
}

Outcome reservoir()
{
    const auto t0 = Clock::now();
    const std::size_t capacity = 500, n = 10000, trials = 10000;
    std::vector<std::uint32_t> kept(n, 0);
    for (std::size_t t = 0; t < trials; ++t) {
        ReplayBuffer<std::uint32_t> buf(capacity, 0xace0000 + t);
        for (std::uint32_t i = 0; i < n; ++i)
            buf.insert(i);
        for (std::uint32_t v : buf.items())
            ++kept[v];
    }
    const double p = static_cast<double>(capacity) / static_cast<double>(n);
    double worst_item = 0;
    for (std::uint32_t k : kept)
        worst_item = std::max(worst_item, std::abs(k / static_cast<double>(trials) - p));
    // groups of 100 consecutive items: 1e6 draws each
    double worst_group = 0;
    for (std::size_t g = 0; g < n / 100; ++g) {
        double sum = 0;
        for (std::size_t i = g * 100; i < (g + 1) * 100; ++i)
            sum += kept[i];
        worst_group = std::max(worst_group, std::abs(sum / (100.0 * trials) / p - 1));
    }
    return {worst_item <= 0.02 && worst_group <= 0.02,
            "p = " + fmt(p, 3) + "; worst item |p_hat - p| " + fmt(worst_item, 4) + " (limit 0.02), worst 100-item group "
                + fmt(100 * worst_group, 2) + "% (limit 2%), " + fmt(seconds_since(t0), 1) + " s"};
}

Outcome strategies()
{
    const ExperimentConfig c = load_for_matrix("strategies.cfg");
    const auto t0 = Clock::now();
    const auto reports = run_experiment(c);
    const double secs = seconds_since(t0);
    const Summary s = aggregate_seeds(reports);
    const std::string ds = c.dataset_name();
    const std::string ctx = to_string(c.contexts.front());
    const SummaryCell* frozen = s.find(ds, Period::post, ctx, "frozen");
    bool ok = frozen && frozen->seeds == static_cast<Index>(c.seeds.size());
    std::string detail = "post MAE frozen " + (frozen ? fmt(frozen->mean) : std::string("n/a"));
    Real worst_ratio = 0;
    for (const char* st : {"ogd", "er", "derpp", "fsnet"}) {
        const SummaryCell* cell = s.find(ds, Period::post, ctx, st);
        ok = ok && cell && cell->seeds == static_cast<Index>(c.seeds.size());
        if (cell && frozen) {
            worst_ratio = std::max(worst_ratio, cell->mean / frozen->mean);
            detail += std::string(", ") + st + " " + fmt(cell->mean);
        }
    }
    ok = ok && worst_ratio <= 0.8;
    Index frozen_worst = 0;
    for (std::uint64_t seed : c.seeds) {
        Real frozen_mae = 0, best_other = -1;
        for (const auto& r : reports) {
            if (r.seed != seed || r.failed)
                continue;
            const Real v = r.accumulated_mae(Period::post);
            if (r.strategy == "frozen")
                frozen_mae = v;
            else
                best_other = std::max(best_other, v);
        }
        frozen_worst += frozen_mae > best_other ? 1 : 0;
    }
    ok = ok && frozen_worst == static_cast<Index>(c.seeds.size()) && secs < 15 * 60;
    return {ok, detail + "; worst CL/frozen ratio " + fmt(worst_ratio, 3) + " (limit 0.8); frozen worst in "
                    + std::to_string(frozen_worst) + "/" + std::to_string(c.seeds.size()) + " seeds; " + fmt(secs, 0)
                    + " s on " + std::to_string(c.threads) + " threads (limit 900 s)"};
}

Outcome contexts()
{
    const ExperimentConfig c = load_for_matrix("contexts.cfg");
    const auto t0 = Clock::now();
    const auto reports = run_experiment(c);
    const double secs = seconds_since(t0);
    const Summary s = aggregate_seeds(reports);
    const std::string st = to_string(c.strategies.front());
    Index wins = 0;
    for (std::uint64_t seed : c.seeds) {
        Real none = -1, both = -1;
        for (const auto& r : reports) {
            if (r.seed != seed || r.failed)
                continue;
            if (r.context == "none")
                none = r.accumulated_mae(Period::post);
            if (r.context == "both")
                both = r.accumulated_mae(Period::post);
        }
        wins += (none >= 0 && both >= 0 && both < none) ? 1 : 0;
    }
    const auto d = std::find_if(s.deltas.begin(), s.deltas.end(), [&](const ContextDelta& x) {
        return x.period == Period::post && x.strategy == st;
    });
    const bool have = d != s.deltas.end() && d->plus_m && d->plus_t;
    const bool ok = wins >= 4 && have && *d->plus_m > *d->plus_t && secs < 10 * 60;
    return {ok, "both beats none post-shift in " + std::to_string(wins) + "/" + std::to_string(c.seeds.size())
                    + " seeds (need 4); post +M " + (have ? fmt(*d->plus_m) : "n/a") + " vs +T "
                    + (have ? fmt(*d->plus_t) : "n/a") + "; " + fmt(secs, 0) + " s on " + std::to_string(c.threads)
                    + " threads (limit 600 s)"};
}

Outcome calibration()
{
    const auto t0 = Clock::now();
    const TimeSeriesFrame f = gen_synthetic(scenario_preset("bc1")).frame;
    const double secs = seconds_since(t0);
    const double energy = f.values.col(f.channel("energy")).mean();
    const double mobility = f.values.col(f.channel("mobility")).mean();
    const double e_err = std::abs(energy / 207.27 - 1);
    const double m_err = std::abs(mobility / 661.4 - 1);
    return {e_err <= 0.10 && m_err <= 0.15 && secs < 5,
            "energy mean " + fmt(energy, 2) + " kWh (" + fmt(100 * e_err, 1) + "% off 207.27, limit 10%), mobility mean "
                + fmt(mobility, 1) + " (" + fmt(100 * m_err, 1) + "% off 661.4, limit 15%), " + fmt(secs, 3) + " s"};
}

Outcome determinism()
{
    namespace fs = std::filesystem;
    const fs::path root = fs::temp_directory_path() / "fsnet_acceptance_determinism";
    fs::remove_all(root);
    fs::create_directories(root);
    const fs::path cfg = root / "run.cfg";
    {
        std::ofstream(cfg) << "name = determinism\nscenario = default\nscenario.start = 2020-01-01\n"
                              "scenario.duration_hours = 2400\ncontexts = none, both\n"
                              "strategies = frozen, ogd, er, derpp, fsnet\nseeds = 1, 2\nmodel.channels = 8\n"
                              "pretrain.epochs = 2\npretrain_hours = 720\nvalidation_hours = 480\nthreads = 2\n";
    }
    for (const char* run : {"a", "b"}) {
        const std::string cmd = std::string("\"") + FSNET_CLI + "\" run --config \"" + cfg.string() + "\" --out \""
                                + (root / run).string() + "\" > \"" + (root / run).string() + ".log\" 2>&1";
        if (std::system(cmd.c_str()) != 0)
            return {false, std::string("`fsnet run` failed, see ") + (root / run).string() + ".log"};
    }
    Index files = 0, identical = 0;
    for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
        if (!e.is_regular_file() || e.path().extension() != ".csv")
            continue;
        ++files;
        const fs::path other = root / "b" / fs::relative(e.path(), root / "a");
        identical += fs::exists(other) && slurp(e.path()) == slurp(other) ? 1 : 0;
    }
    const bool ok = files > 0 && identical == files;
    if (ok)
        fs::remove_all(root);
    return {ok, std::to_string(identical) + " / " + std::to_string(files) + " CSV files byte-identical across two `fsnet run` processes"};
}

} // namespace

int main(int argc, char** argv)
{
    std::vector<int> only;
    for (int i = 1; i < argc; ++i)
        only.push_back(std::atoi(argv[i]));
    const auto selected = [&](int n) { return only.empty() || std::find(only.begin(), only.end(), n) != only.end(); };

    std::optional<Stream> stream;
    const auto shared = [&]() -> const Stream& {
        if (!stream)
            stream = default_stream();
        return *stream;
    };

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"gradient correctness", gradients},
        {"causality suite", [&] { return causality(shared()); }},
        {"identity at init", [&] { return identity(shared()); }},
        {"degeneracy to OGD", [&] { return degeneracy(shared()); }},
        {"memory mechanics", memory},
        {"reservoir retention", reservoir},
        {"continual learning beats frozen", strategies},
        {"context ablation", contexts},
        {"bc1 calibration", calibration},
        {"run determinism", determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int n = static_cast<int>(i) + 1;
        if (!selected(n))
            continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS" : "FAIL") << " " << n << " " << criteria[i].first << ": " << o.detail << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
