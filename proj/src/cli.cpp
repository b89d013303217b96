#include "fsnet/cli.hpp"

#include "fsnet/gradcheck.hpp"
#include "fsnet/harness.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <ostream>

namespace fsnet {

namespace {

constexpr const char* kConfigHelp = R"(Config files hold one `key = value` per line; `#` starts a comment.
Experiment keys (defaults in brackets):
  name [experiment]            csv [empty: synthetic]       scenario [default|bc1|recoupled]
  scenario_file                scenario.<field> overrides   contexts [both]
  strategies [frozen,ogd,er,derpp,fsnet]                    seeds, or seed [1] + num_seeds [10]
  lookback [24]  horizon [24]  pretrain_hours [2160]        validation_hours [2160]
  boundary [2020-03-30T00:00:00]                            out, threads [1]
  model.channels [32] model.kernel_size [3] model.num_blocks [3] model.convs_per_block [2]
  model.dilations [1,2,4]      pretrain.epochs [20] pretrain.lr [0.02] pretrain.batch_size [16]
  online.lr, or online.lr_factor [0.1] x pretrain.lr
  buffer.capacity [500] buffer.replay_batch [8] derpp.a_logit [0.5] derpp.b_label [0.5]
  fsnet.gamma [0.9] fsnet.gamma_prime [0.3] fsnet.tau [0.7] fsnet.squash [0.5]
  fsnet.memory_slots [32] fsnet.top_k [2] fsnet.memory [true] fsnet.train_adaptor [true]
MAE is reported in normalized energy units (z-score over the pretrain split).)";

struct CommonFlags {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    Index threads = 0;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool config_required)
{
    auto* c = cmd->add_option("--config", f.config, "Config file (key = value)");
    if (config_required)
        c->required();
    cmd->add_option("--out", f.out, "Output path");
    cmd->add_option("--seed", f.seed, "Seed override");
}

ExperimentConfig experiment_from(const CommonFlags& f)
{
    ExperimentConfig c = f.config.empty() ? parse_experiment(KeyValues{}) : load_experiment(f.config);
    if (f.seed)
        c.seeds = {*f.seed};
    if (!f.out.empty())
        c.out = f.out;
    if (f.threads > 0)
        c.threads = f.threads;
    return c;
}

ProgressFn progress_to(std::ostream& err)
{
    return [&err](const std::string& msg) { err << msg << std::endl; };
}

int finish_experiment(const ExperimentConfig& config, const std::vector<MetricsReport>& reports, std::ostream& out,
                      std::ostream& err, std::optional<TableAxis> axis, const std::string& fixed)
{
    const Summary summary = aggregate_seeds(reports);
    if (axis)
        out << render_table(summary, *axis, fixed);
    if (!config.out.empty()) {
        write_experiment(config, reports, summary);
        out << "wrote " << config.out << "\n";
    }
    Index failed = 0;
    for (const auto& r : reports)
        if (r.failed) {
            ++failed;
            err << "failed: " << run_file_name(r) << ": " << r.error << "\n";
        }
    return failed == 0 ? 0 : 1;
}

} // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Continual-learning energy forecaster: TCN backbone with fast adaptation and associative memory,\n"
                 "online baselines and a synthetic regime-shift generator.",
                 "fsnet"};
    app.footer(kConfigHelp);
    app.require_subcommand(1);

    CommonFlags gen_flags;
    std::string preset = "default";
    bool print_scenario = false;
    auto* gen = app.add_subcommand("gen-synthetic", "Generate a synthetic regime-shift CSV");
    add_common(gen, gen_flags, false);
    gen->add_option("--preset", preset, "Scenario preset: default, bc1, recoupled")->capture_default_str();
    gen->add_flag("--print-scenario", print_scenario, "Print the effective scenario and exit");

    CommonFlags pre_flags;
    std::string pre_context;
    auto* pre = app.add_subcommand("pretrain", "Pretrain one checkpoint and save it as JSON");
    add_common(pre, pre_flags, false);
    pre->add_option("--context", pre_context, "Context mode (default: first in config)");

    CommonFlags run_flags;
    auto* run = app.add_subcommand("run", "Run the full experiment matrix from a config");
    add_common(run, run_flags, true);
    run->add_option("--threads", run_flags.threads, "Worker threads over (context, seed) cells");

    CommonFlags abl_flags;
    std::string abl_strategy = "fsnet";
    auto* abl = app.add_subcommand("ablate-context", "Context ablation: none, mobility, temperature, both");
    add_common(abl, abl_flags, false);
    abl->add_option("--threads", abl_flags.threads, "Worker threads");
    abl->add_option("--strategy", abl_strategy, "Strategy to ablate")->capture_default_str();

    CommonFlags cmp_flags;
    std::string cmp_context;
    auto* cmp = app.add_subcommand("compare-strategies", "Compare frozen, OGD, ER, DER++ and FSNet");
    add_common(cmp, cmp_flags, false);
    cmp->add_option("--threads", cmp_flags.threads, "Worker threads");
    cmp->add_option("--context", cmp_context, "Context mode (default: first in config)");

    CommonFlags gc_flags;
    Index trials = 100;
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
    add_common(gc, gc_flags, false);
    gc->add_option("--trials", trials, "Random instances per op")->capture_default_str();

    if (argc <= 1) {
        out << app.help();
        return 2;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n" << "run 'fsnet --help' for usage\n";
        return 2;
    }

    try {
        if (*gen) {
            KeyValues keys;
            if (!gen_flags.config.empty()) {
                if (!std::filesystem::exists(gen_flags.config))
                    throw ConfigError("config file not found: " + gen_flags.config);
                keys = KeyValues::load(gen_flags.config);
            }
            if (gen_flags.seed)
                keys.set("seed", std::to_string(*gen_flags.seed));
            const ShiftScenario scenario = scenario_from_keys(keys, preset);
            if (const auto unused = keys.unused_keys(); !unused.empty())
                throw ConfigError("gen-synthetic: unknown scenario key '" + unused.front() + "'");
            if (print_scenario) {
                out << scenario_to_text(scenario);
                return 0;
            }
            if (gen_flags.out.empty())
                throw ConfigError("gen-synthetic: --out FILE.csv is required");
            const SyntheticFrame syn = gen_synthetic(scenario);
            write_csv(syn.frame, gen_flags.out);
            out << "wrote " << syn.frame.length() << " rows to " << gen_flags.out << "\n";
            return 0;
        }
        if (*pre) {
            ExperimentConfig c = experiment_from(pre_flags);
            const ContextMode mode = pre_context.empty() ? c.contexts.front() : parse_context(pre_context);
            const std::uint64_t seed = c.seeds.front();
            const PreparedData data = prepare_data(c);
            const WindowSets w = make_window_sets(data, c, mode);
            const PretrainResult r = pretrain_cell(c, w, mode, seed);
            out << std::setprecision(6) << "validation MAE " << r.initial_val_mae << " -> " << r.val_mae
                << " (best epoch " << r.best_epoch << ")\n";
            const std::string path = pre_flags.out.empty() ? (c.out.empty() ? "checkpoint.json" : c.out) : pre_flags.out;
            save_model(r.model, path);
            out << "checkpoint " << model_hash(r.model) << " written to " << path << "\n";
            return 0;
        }
        if (*run) {
            const ExperimentConfig c = experiment_from(run_flags);
            const auto reports = run_experiment(c, progress_to(err));
            return finish_experiment(c, reports, out, err, std::nullopt, "");
        }
        if (*abl) {
            ExperimentConfig c = experiment_from(abl_flags);
            c.contexts = {ContextMode::none, ContextMode::mobility, ContextMode::temperature, ContextMode::both};
            c.strategies = {parse_strategy(abl_strategy)};
            const auto reports = run_experiment(c, progress_to(err));
            return finish_experiment(c, reports, out, err, TableAxis::context, to_string(c.strategies.front()));
        }
        if (*cmp) {
            ExperimentConfig c = experiment_from(cmp_flags);
            if (!cmp_context.empty())
                c.contexts = {parse_context(cmp_context)};
            c.contexts.resize(1);
            c.strategies = {StrategyKind::frozen, StrategyKind::ogd, StrategyKind::er, StrategyKind::derpp,
                            StrategyKind::fsnet};
            const auto reports = run_experiment(c, progress_to(err));
            return finish_experiment(c, reports, out, err, TableAxis::strategy, to_string(c.contexts.front()));
        }
        if (*gc) {
            GradcheckOptions opt;
            opt.trials = trials;
            if (gc_flags.seed)
                opt.seed = *gc_flags.seed;
            const GradcheckReport r = run_gradcheck(opt);
            out << r.to_text();
            return r.passed() ? 0 : 1;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

} // namespace fsnet
