#include <doctest.h>

#include "fsnet/cli.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace {

struct Outcome {
    int code;
    std::string out, err;
};

Outcome run(std::vector<std::string> args)
{
    args.insert(args.begin(), "fsnet");
    std::vector<const char*> argv;
    for (const auto& a : args)
        argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = fsnet::cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

} // namespace

TEST_CASE("no arguments prints usage and exits 2")
{
    const Outcome o = run({});
    CHECK(o.code == 2);
    CHECK(o.out.find("gen-synthetic") != std::string::npos);
    CHECK(o.out.find("compare-strategies") != std::string::npos);
}

TEST_CASE("help lists every subcommand and the config keys")
{
    const Outcome o = run({"--help"});
    CHECK(o.code == 0);
    for (const char* s : {"gen-synthetic", "pretrain", "run", "ablate-context", "compare-strategies", "gradcheck",
                          "--seed", "--config", "--out", "pretrain.epochs", "online.lr_factor"})
        CHECK_MESSAGE(o.out.find(s) != std::string::npos, s);
}

TEST_CASE("usage errors exit 2")
{
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({"run"}).code == 2);
    CHECK(run({"gradcheck", "--trials", "many"}).code == 2);
}

TEST_CASE("gradcheck passes")
{
    const Outcome o = run({"gradcheck", "--trials", "20"});
    CHECK(o.code == 0);
    CHECK(o.out.find("tcn_adapted") != std::string::npos);
}

TEST_CASE("a missing config exits 1 naming the path")
{
    const Outcome o = run({"run", "--config", "missing.cfg"});
    CHECK(o.code == 1);
    CHECK(o.err.find("missing.cfg") != std::string::npos);
}

TEST_CASE("gen-synthetic writes a csv and rejects unknown scenario keys")
{
    const auto dir = std::filesystem::temp_directory_path() / "fsnet_cli_test";
    std::filesystem::create_directories(dir);
    const auto cfg = dir / "scenario.cfg";
    {
        std::ofstream(cfg) << "start = 2020-03-01\nduration_hours = 720\n";
    }
    const auto csv = dir / "out.csv";
    const Outcome o = run({"gen-synthetic", "--config", cfg.string(), "--out", csv.string()});
    CHECK(o.code == 0);
    CHECK(std::filesystem::exists(csv));
    {
        std::ofstream(cfg) << "duration = 720\n";
    }
    const Outcome bad = run({"gen-synthetic", "--config", cfg.string(), "--out", csv.string()});
    CHECK(bad.code == 1);
    CHECK(bad.err.find("duration") != std::string::npos);
    CHECK(run({"gen-synthetic", "--print-scenario"}).out.find("mobility_collapse") != std::string::npos);
    std::filesystem::remove_all(dir);
}

TEST_CASE("run writes reports")
{
    const auto dir = std::filesystem::temp_directory_path() / "fsnet_cli_run";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    const auto cfg = dir / "tiny.cfg";
    {
        std::ofstream(cfg) << "scenario.start = 2020-02-20\nscenario.duration_hours = 1000\nlookback = 8\nhorizon = 4\n"
                              "model.channels = 4\nmodel.kernel_size = 2\npretrain.epochs = 1\npretrain_hours = 300\n"
                              "validation_hours = 200\nstrategies = frozen, ogd\nseeds = 1\n";
    }
    const Outcome o = run({"run", "--config", cfg.string(), "--out", (dir / "out").string()});
    CHECK(o.code == 0);
    CHECK(std::filesystem::exists(dir / "out" / "summary.csv"));
    CHECK(std::filesystem::exists(dir / "out" / "runs" / "both_ogd_seed1.csv"));
    std::filesystem::remove_all(dir);
}
