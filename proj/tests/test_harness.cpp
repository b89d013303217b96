#include "support.hpp"

#include "fsnet/harness.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace fsnet;

namespace {

const char* kTiny = R"(
name = tiny
scenario = default
scenario.start = 2020-02-20T00:00:00
scenario.duration_hours = 1000
lookback = 8
horizon = 4
model.channels = 4
model.kernel_size = 2
model.num_blocks = 3
pretrain.epochs = 1
pretrain_hours = 300
validation_hours = 200
buffer.capacity = 20
buffer.replay_batch = 2
)";

ExperimentConfig tiny(const std::string& extra = "")
{
    return parse_experiment(KeyValues::parse(std::string(kTiny) + extra));
}

MetricsReport fake(const std::string& context, const std::string& strategy, std::uint64_t seed, Real pre, Real post)
{
    MetricsReport r;
    r.dataset = "d";
    r.context = context;
    r.strategy = strategy;
    r.seed = seed;
    const TimePoint t = parse_timestamp("2020-03-01");
    r.rows.push_back({t, Period::pre, pre, pre * pre});
    r.rows.push_back({t + kHour, Period::post, post, post * post});
    return r;
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::filesystem::path scratch(const std::string& name)
{
    const auto p = std::filesystem::temp_directory_path() / ("fsnet_harness_" + name);
    std::filesystem::remove_all(p);
    return p;
}

} // namespace

TEST_SUITE("config")
{
    TEST_CASE("defaults")
    {
        const ExperimentConfig c = parse_experiment(KeyValues{});
        CHECK(c.seeds.size() == 10);
        CHECK(c.model.lookback == 24);
        CHECK(c.model.horizon == 24);
        CHECK(c.pretrain_hours == 2160);
        CHECK(c.validation_hours == 2160);
        CHECK(c.strategies.size() == 5);
        CHECK(c.effective_online_lr() == doctest::Approx(0.1 * c.pretrain.lr));
    }

    TEST_CASE("parsing")
    {
        const ExperimentConfig c = tiny("seeds = 4, 9\ncontexts = none, both\nonline.lr = 0.5\n");
        CHECK(c.seeds == std::vector<std::uint64_t>{4, 9});
        CHECK(c.contexts == std::vector<ContextMode>{ContextMode::none, ContextMode::both});
        CHECK(c.effective_online_lr() == 0.5);
        CHECK(c.scenario.duration_hours == 1000);
        CHECK(tiny("seed = 3\nnum_seeds = 2\n").seeds == std::vector<std::uint64_t>{3, 4});
    }

    TEST_CASE("errors")
    {
        CHECK_THROWS_AS(tiny("pretrian.epochs = 3\n"), ConfigError);
        CHECK_THROWS_AS(tiny("num_seeds = 0\n"), ConfigError);
        CHECK_THROWS_AS(tiny("horizon = 0\n"), ConfigError);
        CHECK_THROWS_AS(tiny("strategies = sgd\n"), ConfigError);
        CHECK_THROWS_AS(tiny("csv = /no/such/file.csv\n"), std::exception);
        try {
            load_experiment("missing.cfg");
            FAIL("expected an error");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("missing.cfg") != std::string::npos);
        }
    }

    TEST_CASE("hash covers every setting")
    {
        CHECK(tiny().hash() == tiny().hash());
        CHECK(tiny().hash() != tiny("pretrain.lr = 0.03\n").hash());
        CHECK(tiny().hash() != tiny("scenario.seed = 8\n").hash());
    }
}

TEST_SUITE("run_experiment")
{
    TEST_CASE("one report per cell, deterministic, paired checkpoints")
    {
        const ExperimentConfig c = tiny("strategies = ogd, fsnet\nseeds = 1, 2, 3\n");
        const auto a = run_experiment(c);
        REQUIRE(a.size() == 6);
        for (const auto& r : a) {
            CHECK_FALSE(r.failed);
            CHECK(r.dataset == "synthetic-default");
            CHECK(r.context == "both");
        }
        // ordered by seed, then strategy; both strategies start from one checkpoint
        for (std::size_t i = 0; i < 6; i += 2) {
            CHECK(a[i].seed == a[i + 1].seed);
            CHECK(a[i].strategy == "ogd");
            CHECK(a[i + 1].strategy == "fsnet");
            CHECK(a[i].checkpoint_hash == a[i + 1].checkpoint_hash);
        }
        CHECK(a[0].checkpoint_hash != a[2].checkpoint_hash);

        ExperimentConfig threaded = c;
        threaded.threads = 3;
        const auto b = run_experiment(threaded);
        REQUIRE(b.size() == a.size());
        for (std::size_t i = 0; i < a.size(); ++i)
            CHECK(report_to_csv(a[i]) == report_to_csv(b[i]));
    }

    TEST_CASE("a failing run is recorded and the rest continue")
    {
        const ExperimentConfig c = tiny("strategies = frozen, ogd\nseeds = 1\nonline.lr = 1e200\n");
        const auto r = run_experiment(c);
        REQUIRE(r.size() == 2);
        CHECK_FALSE(r[0].failed);
        CHECK(r[1].failed);
        CHECK_FALSE(r[1].error.empty());
        const Summary s = aggregate_seeds(r);
        const SummaryCell* cell = s.find("synthetic-default", Period::post, "both", "ogd");
        REQUIRE(cell != nullptr);
        CHECK(cell->failed == 1);
        CHECK(cell->seeds == 0);
    }

    TEST_CASE("window sets respect the split")
    {
        const ExperimentConfig c = tiny();
        const PreparedData d = prepare_data(c);
        const WindowSets w = make_window_sets(d, c, ContextMode::both);
        CHECK(w.train.back().issue_row + 4 < d.split.pretrain.end);
        CHECK(w.validation.front().issue_row >= d.split.validation.begin);
        CHECK(w.validation.back().issue_row + 4 < d.split.validation.end);
        CHECK(w.online.front().issue_row == d.split.online.begin);
        CHECK(w.train.front().window.rows() == 3);
    }
}

TEST_SUITE("aggregation")
{
    TEST_CASE("single seed: zero std with the flag")
    {
        const std::vector<MetricsReport> r{fake("none", "ogd", 1, 0.5, 0.7)};
        const Summary s = aggregate_seeds(r);
        const SummaryCell* c = s.find("d", Period::post, "none", "ogd");
        REQUIRE(c != nullptr);
        CHECK(c->mean == 0.7);
        CHECK(c->stddev == 0.0);
        CHECK(c->single_seed);
    }

    TEST_CASE("mean and sample std over seeds")
    {
        const std::vector<MetricsReport> r{fake("none", "ogd", 1, 0.5, 1.0), fake("none", "ogd", 2, 0.5, 2.0),
                                           fake("none", "ogd", 3, 0.5, 3.0)};
        const SummaryCell* c = aggregate_seeds(r).find("d", Period::post, "none", "ogd");
        CHECK(c->mean == doctest::Approx(2.0));
        CHECK(c->stddev == doctest::Approx(1.0));
        CHECK_FALSE(c->single_seed);
    }

    TEST_CASE("context deltas: positive means the context helps")
    {
        const std::vector<MetricsReport> r{fake("none", "fsnet", 1, 0.5, 0.9), fake("mobility", "fsnet", 1, 0.5, 0.6),
                                           fake("temperature", "fsnet", 1, 0.5, 0.8),
                                           fake("both", "fsnet", 1, 0.5, 0.5)};
        const Summary s = aggregate_seeds(r);
        const auto it = std::find_if(s.deltas.begin(), s.deltas.end(),
                                     [](const ContextDelta& d) { return d.period == Period::post; });
        REQUIRE(it != s.deltas.end());
        CHECK(*it->plus_m == doctest::Approx(0.3));
        CHECK(*it->plus_t == doctest::Approx(0.1));
        CHECK(*it->t_plus_m == doctest::Approx(0.3));
        const std::string table = render_table(s, TableAxis::context, "fsnet");
        CHECK(table.find("+M") != std::string::npos);
    }

    TEST_CASE("report order does not matter")
    {
        std::vector<MetricsReport> r;
        std::mt19937_64 rng(1);
        std::uniform_real_distribution<Real> u(0.1, 0.9);
        for (const char* ctx : {"none", "both"})
            for (const char* st : {"ogd", "er"})
                for (std::uint64_t seed = 1; seed <= 4; ++seed)
                    r.push_back(fake(ctx, st, seed, u(rng), u(rng)));
        const std::string ref = summary_to_csv(aggregate_seeds(r), "h");
        for (int t = 0; t < 10; ++t) {
            std::shuffle(r.begin(), r.end(), rng);
            CHECK(summary_to_csv(aggregate_seeds(r), "h") == ref);
        }
    }
}

TEST_SUITE("reports")
{
    const std::vector<MetricsReport> reports{fake("none", "ogd", 1, 0.123456789012345, 0.7),
                                             fake("none", "ogd", 2, 0.3, 0.1), fake("both", "er", 1, 0.2, 0.4)};

    TEST_CASE("summary csv round trip")
    {
        const Summary s = aggregate_seeds(reports);
        const std::string text = summary_to_csv(s, "abc123");
        CHECK(text.find("abc123") != std::string::npos);
        const auto cells = parse_summary_csv(text);
        REQUIRE(cells.size() == s.cells.size());
        for (std::size_t i = 0; i < cells.size(); ++i) {
            CHECK(cells[i].dataset == s.cells[i].dataset);
            CHECK(cells[i].period == s.cells[i].period);
            CHECK(cells[i].context == s.cells[i].context);
            CHECK(cells[i].strategy == s.cells[i].strategy);
            CHECK(cells[i].mean == s.cells[i].mean);
            CHECK(cells[i].stddev == s.cells[i].stddev);
            CHECK(cells[i].seeds == s.cells[i].seeds);
            CHECK(cells[i].single_seed == s.cells[i].single_seed);
        }
    }

    TEST_CASE("emitted files carry the config hash")
    {
        const ExperimentConfig c = tiny();
        const Summary s = aggregate_seeds(reports);
        const auto dir = scratch("emit");
        std::filesystem::create_directories(dir);
        for (const auto& fmt : supported_formats()) {
            const std::string path = report_emit(s, fmt, dir.string(), c);
            const std::string text = slurp(path);
            CHECK(text.find(c.hash()) != std::string::npos);
        }
        CHECK(slurp(dir / "summary.json").find("pretrain.epochs") != std::string::npos);
        std::filesystem::remove_all(dir);
    }

    TEST_CASE("unknown format lists the supported ones")
    {
        try {
            report_emit(aggregate_seeds(reports), "xml", ".", tiny());
            FAIL("expected an error");
        } catch (const ConfigError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("xml") != std::string::npos);
            CHECK(msg.find("csv") != std::string::npos);
            CHECK(msg.find("json") != std::string::npos);
        }
    }

    TEST_CASE("write failures surface")
    {
        // a regular file cannot be a parent directory
        const auto dir = scratch("blocked");
        std::filesystem::create_directories(dir);
        write_file_atomic((dir / "file").string(), "x");
        CHECK_THROWS(write_file_atomic((dir / "file" / "out.csv").string(), "x"));
        std::filesystem::remove_all(dir);
    }

    TEST_CASE("per-run files")
    {
        const std::string csv = report_to_csv(reports[0]);
        CHECK(csv.rfind("timestamp,mae,mse,strategy,seed,context,period\n", 0) == 0);
        CHECK(run_file_name(reports[0]) == "none_ogd_seed1.csv");
        ExperimentConfig c = tiny();
        const auto dir = scratch("write");
        c.out = dir.string();
        write_experiment(c, reports, aggregate_seeds(reports));
        CHECK(std::filesystem::exists(dir / "runs" / "both_er_seed1.csv"));
        CHECK(std::filesystem::exists(dir / "summary.csv"));
        CHECK(std::filesystem::exists(dir / "summary.json"));
        std::filesystem::remove_all(dir);
    }
}
