#include "fsnet/gradcheck.hpp"

#include "fsnet/fsnet.hpp"
#include "fsnet/tape.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>

namespace fsnet {

namespace {

using Tape = GradTape<Real>;
using Var = Tape::Var;
using Rng = std::mt19937_64;

constexpr Real kKinkMargin = 1e-3;
constexpr int kMaxRedraws = 200;

Mat random_mat(Index rows, Index cols, Rng& rng, Real scale = 1.0)
{
    std::normal_distribution<Real> n(0.0, scale);
    Mat m(rows, cols);
    for (Index i = 0; i < m.size(); ++i)
        m.data()[i] = n(rng);
    return m;
}

Vec random_vec(Index size, Rng& rng, Real scale = 1.0)
{
    Mat m = random_mat(size, 1, rng, scale);
    return Eigen::Map<const Vec>(m.data(), size);
}

Index pick(Rng& rng, Index lo, Index hi) { return std::uniform_int_distribution<Index>(lo, hi)(rng); }

Real rel_error(Real a, Real n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), Real(1e-6)}); }

struct Instance {
    std::vector<Mat> inputs;
    std::function<Var(Tape&, const std::vector<Var>&)> build;
};

using Maker = std::function<Instance(Rng&)>;

struct Objective {
    Mat targets;
    Vec weights;
};

Real evaluate(const Instance& inst, const std::vector<Mat>& values, const Objective& obj, Real* margin = nullptr)
{
    Tape tape;
    std::vector<Var> vars;
    for (const auto& v : values)
        vars.push_back(tape.variable(v));
    const Var out = inst.build(tape, vars);
    const Var loss = tape.weighted_mse(out, obj.targets, obj.weights);
    if (margin)
        *margin = tape.relu_margin();
    return tape.scalar(loss);
}

void record(GradcheckCase& c, Real analytic, Real numeric, Real tolerance, const std::string& where)
{
    const Real err = rel_error(analytic, numeric);
    ++c.entries;
    c.max_error = std::max(c.max_error, err);
    if (!(err <= tolerance) && c.first_failure.empty()) {
        std::ostringstream msg;
        msg.precision(10);
        msg << where << ": analytic " << analytic << " numeric " << numeric << " rel " << err;
        c.first_failure = msg.str();
    }
}

GradcheckCase check_op(const std::string& name, const Maker& make, const GradcheckOptions& opt, Rng& rng)
{
    GradcheckCase c;
    c.op = name;
    for (Index trial = 0; trial < opt.trials; ++trial) {
        ++c.trials;

        Instance inst;
        Objective obj;
        bool drawn = false;
        for (int attempt = 0; attempt < kMaxRedraws && !drawn; ++attempt) {
            inst = make(rng);
            Tape probe;
            std::vector<Var> vars;
            for (const auto& v : inst.inputs)
                vars.push_back(probe.variable(v));
            const Var out = inst.build(probe, vars);
            obj.targets = random_mat(probe.value(out).rows(), probe.value(out).cols(), rng);
            obj.weights = random_vec(probe.value(out).cols(), rng).cwiseAbs();
            drawn = probe.relu_margin() >= kKinkMargin;
        }
        if (!drawn) {
            ++c.failures;
            if (c.first_failure.empty())
                c.first_failure = "trial " + std::to_string(trial) + ": could not draw an instance away from relu kinks";
            continue;
        }

        Tape tape;
        std::vector<Var> vars;
        for (const auto& v : inst.inputs)
            vars.push_back(tape.variable(v));
        const Var out = inst.build(tape, vars);
        const Var loss = tape.weighted_mse(out, obj.targets, obj.weights);
        tape.backward(loss);

        std::vector<Mat> values = inst.inputs;
        bool trial_failed = false;
        for (std::size_t i = 0; i < values.size(); ++i) {
            const Mat analytic = tape.grad(vars[i]);
            for (Index e = 0; e < values[i].size(); ++e) {
                const Real orig = values[i].data()[e];
                values[i].data()[e] = orig + opt.step;
                const Real up = evaluate(inst, values, obj);
                values[i].data()[e] = orig - opt.step;
                const Real down = evaluate(inst, values, obj);
                values[i].data()[e] = orig;
                const Real numeric = (up - down) / (2 * opt.step);
                const Real a = analytic.data()[e];
                if (!(rel_error(a, numeric) <= opt.tolerance))
                    trial_failed = true;
                record(c, a, numeric, opt.tolerance,
                       "trial " + std::to_string(trial) + " input " + std::to_string(i) + " entry " + std::to_string(e));
            }
        }
        if (trial_failed)
            ++c.failures;
    }
    return c;
}

// ---------------------------------------------------------------------------
// Op instances
// ---------------------------------------------------------------------------

Instance conv_instance(Rng& rng, bool segmented)
{
    const Index cin = pick(rng, 1, 3), cout = pick(rng, 1, 3), k = pick(rng, 1, 3), d = pick(rng, 1, 3);
    const Index steps = pick(rng, 1, 8);
    const Index count = segmented ? pick(rng, 2, 3) : 1;
    Instance inst;
    inst.inputs = {random_mat(cin, steps * count, rng), random_mat(cout, cin * k, rng)};
    const Index segment = segmented ? steps : 0;
    inst.build = [k, d, segment](Tape& t, const std::vector<Var>& v) { return t.conv1d_causal(v[0], v[1], k, d, segment); };
    return inst;
}

Instance bias_instance(Rng& rng)
{
    const Index c = pick(rng, 1, 4), steps = pick(rng, 1, 6);
    Instance inst;
    inst.inputs = {random_mat(c, steps, rng), random_mat(c, 1, rng)};
    inst.build = [](Tape& t, const std::vector<Var>& v) { return t.add_channel_bias(v[0], v[1]); };
    return inst;
}

Instance scale_rows_instance(Rng& rng)
{
    const Index r = pick(rng, 1, 4), cols = pick(rng, 1, 6);
    Instance inst;
    inst.inputs = {random_mat(r, cols, rng), random_mat(r, 1, rng)};
    inst.build = [](Tape& t, const std::vector<Var>& v) { return t.scale_rows(v[0], v[1]); };
    return inst;
}

Instance relu_instance(Rng& rng)
{
    Instance inst;
    inst.inputs = {random_mat(pick(rng, 1, 4), pick(rng, 1, 6), rng)};
    inst.build = [](Tape& t, const std::vector<Var>& v) { return t.relu(v[0]); };
    return inst;
}

Instance add_instance(Rng& rng)
{
    const Index r = pick(rng, 1, 4), c = pick(rng, 1, 6);
    Instance inst;
    inst.inputs = {random_mat(r, c, rng), random_mat(r, c, rng)};
    inst.build = [](Tape& t, const std::vector<Var>& v) { return t.add(v[0], v[1]); };
    return inst;
}

Instance last_columns_instance(Rng& rng)
{
    const Index r = pick(rng, 1, 4), seg = pick(rng, 1, 5), count = pick(rng, 1, 3);
    Instance inst;
    inst.inputs = {random_mat(r, seg * count, rng)};
    inst.build = [seg](Tape& t, const std::vector<Var>& v) { return t.last_columns(v[0], seg); };
    return inst;
}

Instance linear_instance(Rng& rng)
{
    const Index in = pick(rng, 1, 5), out = pick(rng, 1, 4), cols = pick(rng, 1, 3);
    Instance inst;
    inst.inputs = {random_mat(in, cols, rng), random_mat(out, in, rng), random_mat(out, 1, rng)};
    inst.build = [](Tape& t, const std::vector<Var>& v) { return t.linear(v[0], v[1], v[2]); };
    return inst;
}

Instance segment_instance(Rng& rng)
{
    const Index n = pick(rng, 2, 8);
    const Index start = pick(rng, 0, n - 1);
    const Index length = pick(rng, 1, n - start);
    Instance inst;
    inst.inputs = {random_mat(n, 1, rng)};
    inst.build = [start, length](Tape& t, const std::vector<Var>& v) { return t.segment(v[0], start, length); };
    return inst;
}

Instance affine_instance(Rng& rng)
{
    const Index r = pick(rng, 1, 4), c = pick(rng, 1, 4);
    const Real scale = std::uniform_real_distribution<Real>(-2, 2)(rng);
    const Mat offset = random_mat(r, c, rng);
    Instance inst;
    inst.inputs = {random_mat(r, c, rng)};
    inst.build = [scale, offset](Tape& t, const std::vector<Var>& v) { return t.affine(v[0], scale, offset); };
    return inst;
}

Instance chunk_gate_instance(Rng& rng)
{
    const Index count = pick(rng, 1, 6), width = pick(rng, 1, 5);
    const Mat chunks = random_mat(count, width, rng);
    const Real squash = std::uniform_real_distribution<Real>(0.1, 0.9)(rng);
    Instance inst;
    inst.inputs = {random_mat(count, width, rng, 0.5), random_mat(count, 1, rng, 0.5)};
    inst.build = [chunks, squash](Tape& t, const std::vector<Var>& v) { return t.chunk_gate(v[0], v[1], chunks, squash); };
    return inst;
}

Instance mse_instance(Rng& rng)
{
    const Index n = pick(rng, 1, 6);
    const Vec target = random_vec(n, rng);
    Instance inst;
    inst.inputs = {random_mat(n, 1, rng)};
    inst.build = [target](Tape& t, const std::vector<Var>& v) { return t.mse(v[0], target); };
    return inst;
}

Instance weighted_sum_instance(Rng& rng)
{
    const Index n = pick(rng, 1, 4);
    std::vector<Real> weights;
    for (Index i = 0; i < n; ++i)
        weights.push_back(std::normal_distribution<Real>(0, 1)(rng));
    Instance inst;
    for (Index i = 0; i < n; ++i)
        inst.inputs.push_back(random_mat(1, 1, rng));
    inst.build = [weights](Tape& t, const std::vector<Var>& v) { return t.weighted_sum(v, weights); };
    return inst;
}

Instance weighted_mse_instance(Rng& rng)
{
    const Index r = pick(rng, 1, 4), c = pick(rng, 1, 3);
    const Mat targets = random_mat(r, c, rng);
    const Vec weights = random_vec(c, rng);
    Instance inst;
    inst.inputs = {random_mat(r, c, rng)};
    inst.build = [targets, weights](Tape& t, const std::vector<Var>& v) { return t.weighted_mse(v[0], targets, weights); };
    return inst;
}

// ---------------------------------------------------------------------------
// Whole-model checks
// ---------------------------------------------------------------------------

struct ParamRef {
    std::string name;
    Real* data;
    const Real* grad;
    Index size;
};

std::vector<ParamRef> parameter_refs(TcnModel& m, const TcnGradients& g, bool adaptor)
{
    std::vector<ParamRef> refs;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        auto& layer = m.layers[l];
        const auto& lg = g.layers[l];
        const std::string p = "layer" + std::to_string(l) + ".";
        refs.push_back({p + "theta", layer.theta.data(), lg.theta.data(), layer.theta.size()});
        refs.push_back({p + "bias", layer.bias.data(), lg.bias.data(), layer.bias.size()});
        if (adaptor) {
            refs.push_back({p + "phi_weight", layer.phi_weight.data(), lg.phi_weight.data(), layer.phi_weight.size()});
            refs.push_back({p + "phi_bias", layer.phi_bias.data(), lg.phi_bias.data(), layer.phi_bias.size()});
        }
    }
    for (std::size_t b = 0; b < m.skips.size(); ++b)
        if (m.skips[b]) {
            refs.push_back({"skip" + std::to_string(b) + ".weight", m.skips[b]->weight.data(),
                            g.skips[b]->weight.data(), m.skips[b]->weight.size()});
            refs.push_back({"skip" + std::to_string(b) + ".bias", m.skips[b]->bias.data(), g.skips[b]->bias.data(),
                            m.skips[b]->bias.size()});
        }
    refs.push_back({"head.weight", m.head_weight.data(), g.head_weight.data(), m.head_weight.size()});
    refs.push_back({"head.bias", m.head_bias.data(), g.head_bias.data(), m.head_bias.size()});
    return refs;
}

Real model_objective(const TcnModel& m, const std::vector<Mat>& windows, const std::vector<Vec>& targets,
                     const std::vector<Real>& weights, ForwardMode mode)
{
    Real total = 0;
    for (std::size_t i = 0; i < windows.size(); ++i)
        total += weights[i] * mse_loss<Real>(tcn_forward(m, windows[i], mode), targets[i]);
    return total;
}

Real model_margin(const TcnModel& m, const std::vector<Mat>& windows, ForwardMode mode)
{
    Real margin = std::numeric_limits<Real>::infinity();
    for (const auto& w : windows) {
        Tape tape;
        const ForwardGraph params = record_parameters(tape, m, mode);
        record_forward(tape, m, params, w, mode);
        margin = std::min(margin, tape.relu_margin());
    }
    return margin;
}

GradcheckCase check_model(const std::string& name, ForwardMode mode, const GradcheckOptions& opt, Rng& rng)
{
    GradcheckCase c;
    c.op = name;
    for (Index trial = 0; trial < opt.trials; ++trial) {
        ++c.trials;
        TcnConfig cfg;
        cfg.input_channels = pick(rng, 1, 2);
        cfg.channels = pick(rng, 2, 3);
        cfg.kernel_size = 2;
        cfg.num_blocks = 2;
        cfg.convs_per_block = 2;
        cfg.lookback = pick(rng, 3, 6);
        cfg.horizon = pick(rng, 1, 3);
        TcnModel m;
        std::vector<Mat> windows;
        std::vector<Vec> targets;
        std::vector<Real> weights;
        bool drawn = false;
        for (int attempt = 0; attempt < kMaxRedraws && !drawn; ++attempt) {
            m = tcn_init(cfg, rng());
            m.pretrained = true;
            if (mode == ForwardMode::adapted) {
                for (auto& layer : m.layers) {
                    layer.g_fast = random_vec(layer.g_fast.size(), rng);
                    layer.phi_weight = random_mat(layer.phi_weight.rows(), layer.phi_weight.cols(), rng, 0.5);
                    layer.phi_bias = random_vec(layer.phi_bias.size(), rng, 0.5);
                    if (std::bernoulli_distribution(0.5)(rng))
                        layer.recalled = random_vec(layer.coefficient_count(), rng, 0.2);
                }
            }
            const Index count = pick(rng, 1, 2);
            windows.clear();
            targets.clear();
            weights.clear();
            for (Index i = 0; i < count; ++i) {
                windows.push_back(random_mat(cfg.input_channels, cfg.lookback, rng));
                targets.push_back(random_vec(cfg.horizon, rng));
                weights.push_back(std::uniform_real_distribution<Real>(0.2, 1.0)(rng));
            }
            drawn = model_margin(m, windows, mode) >= kKinkMargin;
        }
        if (!drawn) {
            ++c.failures;
            if (c.first_failure.empty())
                c.first_failure = "trial " + std::to_string(trial) + ": could not draw an instance away from relu kinks";
            continue;
        }

        std::vector<LossTerm> terms;
        for (std::size_t i = 0; i < windows.size(); ++i)
            terms.push_back({&windows[i], &targets[i], weights[i]});
        const TcnGradients g = loss_gradients(m, terms, mode);
        bool trial_failed = false;
        for (const auto& ref : parameter_refs(m, g, mode == ForwardMode::adapted)) {
            for (Index e = 0; e < ref.size; ++e) {
                const Real orig = ref.data[e];
                ref.data[e] = orig + opt.step;
                const Real up = model_objective(m, windows, targets, weights, mode);
                ref.data[e] = orig - opt.step;
                const Real down = model_objective(m, windows, targets, weights, mode);
                ref.data[e] = orig;
                const Real numeric = (up - down) / (2 * opt.step);
                if (!(rel_error(ref.grad[e], numeric) <= opt.tolerance))
                    trial_failed = true;
                record(c, ref.grad[e], numeric, opt.tolerance,
                       "trial " + std::to_string(trial) + " " + ref.name + "[" + std::to_string(e) + "]");
            }
        }
        if (trial_failed)
            ++c.failures;
    }
    return c;
}

} // namespace

bool GradcheckReport::passed() const
{
    if (cases.empty())
        return false;
    for (const auto& c : cases)
        if (c.failures > 0 || c.trials == 0)
            return false;
    return true;
}

std::string GradcheckReport::to_text() const
{
    std::ostringstream out;
    out.precision(3);
    for (const auto& c : cases) {
        out << (c.failures == 0 ? "ok   " : "FAIL ") << c.op << ": " << c.trials << " trials, " << c.entries
            << " entries, max rel error " << std::scientific << c.max_error << std::defaultfloat;
        if (c.failures > 0)
            out << ", " << c.failures << " failing trials; first: " << c.first_failure;
        out << "\n";
    }
    out << (passed() ? "gradcheck passed" : "gradcheck FAILED") << " in " << std::fixed << seconds << " s\n";
    return out.str();
}

std::vector<std::string> gradcheck_ops()
{
    return {"conv1d_causal", "conv1d_causal_segmented", "add_channel_bias", "scale_rows", "relu", "add",
            "last_columns", "linear", "segment", "affine", "chunk_gate", "mse", "weighted_sum", "weighted_mse",
            "tcn_plain", "tcn_adapted"};
}

GradcheckReport run_gradcheck(const GradcheckOptions& options)
{
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(options.seed);
    GradcheckReport report;
    const std::vector<std::pair<std::string, Maker>> ops{
        {"conv1d_causal", [](Rng& r) { return conv_instance(r, false); }},
        {"conv1d_causal_segmented", [](Rng& r) { return conv_instance(r, true); }},
        {"add_channel_bias", bias_instance},
        {"scale_rows", scale_rows_instance},
        {"relu", relu_instance},
        {"add", add_instance},
        {"last_columns", last_columns_instance},
        {"linear", linear_instance},
        {"segment", segment_instance},
        {"affine", affine_instance},
        {"chunk_gate", chunk_gate_instance},
        {"mse", mse_instance},
        {"weighted_sum", weighted_sum_instance},
        {"weighted_mse", weighted_mse_instance},
    };
    for (const auto& [name, make] : ops)
        report.cases.push_back(check_op(name, make, options, rng));
    report.cases.push_back(check_model("tcn_plain", ForwardMode::plain, options, rng));
    report.cases.push_back(check_model("tcn_adapted", ForwardMode::adapted, options, rng));
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

} // namespace fsnet
