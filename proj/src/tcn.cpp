#include "fsnet/tcn.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

namespace fsnet {

// ---------------------------------------------------------------------------
// LayerState / AdaptorConfig
// ---------------------------------------------------------------------------

void AdaptorConfig::validate() const
{
    if (!(gamma >= 0 && gamma < 1))
        throw ConfigError("adaptor: gamma must lie in [0, 1)");
    if (!(gamma_prime >= 0 && gamma_prime < 1))
        throw ConfigError("adaptor: gamma_prime must lie in [0, 1)");
    if (gamma_prime > gamma)
        throw ConfigError("adaptor: gamma_prime must not exceed gamma");
    if (!(tau > 0 && tau < 1))
        throw ConfigError("adaptor: tau must lie in (0, 1)");
    if (!(squash > 0 && squash < 1))
        throw ConfigError("adaptor: squash must lie in (0, 1)");
    if (memory_slots < 1 || top_k < 1 || top_k > memory_slots)
        throw ConfigError("adaptor: need 1 <= top_k <= memory_slots");
}

LayerState make_layer(Mat theta, Vec bias, Index kernel_size, Index dilation, const AdaptorConfig& adaptor)
{
    LayerState layer;
    layer.theta = std::move(theta);
    layer.bias = std::move(bias);
    layer.kernel_size = kernel_size;
    layer.dilation = dilation;
    const Index coeffs = layer.coefficient_count();
    layer.phi_weight = Mat::Zero(coeffs, layer.chunk_width());
    layer.phi_bias = Vec::Zero(coeffs);
    layer.g_fast = Vec::Zero(layer.theta.size());
    layer.g_slow = Vec::Zero(layer.theta.size());
    layer.mu_ema = Vec::Ones(coeffs);
    layer.memory.slots = Mat::Zero(adaptor.memory_slots, coeffs);
    layer.memory.tau = adaptor.tau;
    layer.memory.top_k = adaptor.top_k;
    check_layer(layer);
    return layer;
}

void check_layer(const LayerState& layer)
{
    require_shape(layer.kernel_size >= 1 && layer.dilation >= 1, "layer: kernel size and dilation must be >= 1");
    require_shape(layer.theta.cols() % layer.kernel_size == 0, "layer: theta columns not a multiple of kernel size");
    require_shape(layer.bias.size() == layer.out_channels(), "layer: bias length != output channels");
    const Index coeffs = layer.coefficient_count();
    require_shape(layer.phi_weight.rows() == coeffs && layer.phi_weight.cols() == layer.chunk_width()
                      && layer.phi_bias.size() == coeffs,
                  "layer: adaptor shape inconsistent with chunk layout");
    require_shape(layer.g_fast.size() == layer.theta.size() && layer.g_slow.size() == layer.theta.size(),
                  "layer: EMA gradient length != theta size");
    require_shape(layer.mu_ema.size() == coeffs, "layer: coefficient EMA length != 2 * C_out");
    require_shape(layer.memory.dim() == coeffs && layer.memory.slot_count() >= 1,
                  "layer: memory width != coefficient count");
    require_shape(layer.memory.top_k >= 1 && layer.memory.top_k <= layer.memory.slot_count(),
                  "layer: memory top_k out of range");
    if (layer.recalled)
        require_shape(layer.recalled->size() == coeffs, "layer: recalled offset length != coefficient count");
}

// ---------------------------------------------------------------------------
// TcnConfig
// ---------------------------------------------------------------------------

std::vector<Index> TcnConfig::dilation_schedule() const
{
    if (!dilations.empty())
        return dilations;
    std::vector<Index> out;
    for (Index b = 0; b < num_blocks; ++b)
        out.push_back(Index(1) << b);
    return out;
}

Index TcnConfig::receptive_field() const
{
    Index field = 1;
    for (Index d : dilation_schedule())
        field += (kernel_size - 1) * d * convs_per_block;
    return field;
}

void TcnConfig::validate() const
{
    if (input_channels < 1 || channels < 1 || kernel_size < 1 || num_blocks < 1 || convs_per_block < 1)
        throw ConfigError("tcn: channel counts, kernel size, blocks and convs per block must be >= 1");
    if (lookback < 1 || horizon < 1)
        throw ConfigError("tcn: lookback and horizon must be >= 1");
    const auto schedule = dilation_schedule();
    if (static_cast<Index>(schedule.size()) != num_blocks)
        throw ConfigError("tcn: dilation schedule length " + std::to_string(schedule.size())
                          + " != num_blocks " + std::to_string(num_blocks));
    for (Index d : schedule)
        if (d < 1)
            throw ConfigError("tcn: dilations must be >= 1");
    if (receptive_field() < lookback)
        throw ConfigError("tcn: receptive field " + std::to_string(receptive_field())
                          + " is shorter than the lookback " + std::to_string(lookback));
}

std::size_t TcnModel::parameter_count() const
{
    std::size_t n = static_cast<std::size_t>(head_weight.size() + head_bias.size());
    for (const auto& l : layers)
        n += static_cast<std::size_t>(l.theta.size() + l.bias.size() + l.phi_weight.size() + l.phi_bias.size());
    for (const auto& s : skips)
        if (s)
            n += static_cast<std::size_t>(s->weight.size() + s->bias.size());
    return n;
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

namespace {

Mat uniform_matrix(Index rows, Index cols, Real bound, std::mt19937_64& rng)
{
    std::uniform_real_distribution<Real> dist(-bound, bound);
    Mat m(rows, cols);
    for (Index i = 0; i < m.size(); ++i)
        m.data()[i] = dist(rng);
    return m;
}

Vec uniform_vector(Index n, Real bound, std::mt19937_64& rng)
{
    std::uniform_real_distribution<Real> dist(-bound, bound);
    Vec v(n);
    for (Index i = 0; i < n; ++i)
        v(i) = dist(rng);
    return v;
}

} // namespace

TcnModel tcn_init(const TcnConfig& config, std::uint64_t seed, const AdaptorConfig& adaptor)
{
    config.validate();
    adaptor.validate();
    TcnModel model;
    model.config = config;
    model.adaptor = adaptor;
    std::mt19937_64 rng(seed);
    const auto schedule = config.dilation_schedule();
    Index in_channels = config.input_channels;
    for (Index b = 0; b < config.num_blocks; ++b) {
        const Index block_in = in_channels;
        for (Index c = 0; c < config.convs_per_block; ++c) {
            const Index fan_in = in_channels * config.kernel_size;
            const Real bound = 1.0 / std::sqrt(static_cast<Real>(fan_in));
            Mat theta = uniform_matrix(config.channels, fan_in, bound, rng);
            Vec bias = uniform_vector(config.channels, bound, rng);
            model.layers.push_back(
                make_layer(std::move(theta), std::move(bias), config.kernel_size, schedule[b], adaptor));
            in_channels = config.channels;
        }
        if (block_in != config.channels) {
            const Real bound = 1.0 / std::sqrt(static_cast<Real>(block_in));
            Projection p;
            p.weight = uniform_matrix(config.channels, block_in, bound, rng);
            p.bias = uniform_vector(config.channels, bound, rng);
            model.skips.emplace_back(std::move(p));
        } else {
            model.skips.emplace_back(std::nullopt);
        }
    }
    const Real bound = 1.0 / std::sqrt(static_cast<Real>(config.channels));
    model.head_weight = uniform_matrix(config.horizon, config.channels, bound, rng);
    model.head_bias = uniform_vector(config.horizon, bound, rng);
    return model;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

ForwardGraph::LayerVars record_layer_leaves(GradTape<Real>& tape, const LayerState& layer, ForwardMode mode)
{
    ForwardGraph::LayerVars v{tape.variable(layer.theta), tape.variable(layer.bias), std::nullopt, std::nullopt};
    if (mode == ForwardMode::adapted) {
        v.phi_weight = tape.variable(layer.phi_weight);
        v.phi_bias = tape.variable(layer.phi_bias);
    }
    return v;
}

ForwardGraph record_parameters(GradTape<Real>& tape, const TcnModel& model, ForwardMode mode)
{
    ForwardGraph g;
    for (const auto& layer : model.layers)
        g.layers.push_back(record_layer_leaves(tape, layer, mode));
    for (const auto& s : model.skips) {
        if (s)
            g.skips.emplace_back(ForwardGraph::SkipVars{tape.variable(s->weight), tape.variable(s->bias)});
        else
            g.skips.emplace_back(std::nullopt);
    }
    g.head_weight = tape.variable(model.head_weight);
    g.head_bias = tape.variable(model.head_bias);
    return g;
}

namespace {

using Var = GradTape<Real>::Var;

Var record_layer(GradTape<Real>& tape, const LayerState& layer, const ForwardGraph::LayerVars& v, Var input,
                 ForwardMode mode, const AdaptorConfig& adaptor, Index segment)
{
    if (mode == ForwardMode::plain) {
        Var h = tape.conv1d_causal(input, v.theta, layer.kernel_size, layer.dilation, segment);
        return tape.relu(tape.add_channel_bias(h, v.bias));
    }
    const Index channels = layer.out_channels();
    const Mat chunks = chunk_rows<Real>(layer.g_fast, layer.coefficient_count());
    Var mu = tape.chunk_gate(*v.phi_weight, *v.phi_bias, chunks, adaptor.squash);
    if (layer.recalled) {
        const Real tau = layer.memory.tau;
        const Mat offset = ((1 - tau) * (Vec::Ones(layer.coefficient_count()) + *layer.recalled)).eval();
        mu = tape.affine(mu, tau, offset);
    }
    Var alpha = tape.segment(mu, 0, channels);
    Var beta = tape.segment(mu, channels, channels);
    Var theta = tape.scale_rows(v.theta, alpha);
    Var h = tape.conv1d_causal(input, theta, layer.kernel_size, layer.dilation, segment);
    h = tape.add_channel_bias(h, v.bias);
    h = tape.scale_rows(h, beta);
    return tape.relu(h);
}

} // namespace

Var record_forward_batch(GradTape<Real>& tape, const TcnModel& model, const ForwardGraph& params, const Mat& windows,
                         ForwardMode mode)
{
    const auto& cfg = model.config;
    require_shape(windows.rows() == cfg.input_channels && windows.cols() >= cfg.lookback
                      && windows.cols() % cfg.lookback == 0,
                  "tcn_forward: window is [" + std::to_string(windows.rows()) + " x " + std::to_string(windows.cols())
                      + "], model expects [" + std::to_string(cfg.input_channels) + " x "
                      + std::to_string(cfg.lookback) + "]");
    const Index segment = cfg.lookback;
    Var x = tape.variable(windows);
    std::size_t l = 0;
    for (std::size_t b = 0; b < model.skips.size(); ++b) {
        Var h = x;
        for (Index c = 0; c < cfg.convs_per_block; ++c, ++l)
            h = record_layer(tape, model.layers[l], params.layers[l], h, mode, model.adaptor, segment);
        Var skip = x;
        if (params.skips[b]) {
            skip = tape.conv1d_causal(x, params.skips[b]->weight, 1, 1, segment);
            skip = tape.add_channel_bias(skip, params.skips[b]->bias);
        }
        x = tape.add(h, skip);
    }
    return tape.linear(tape.last_columns(x, segment), params.head_weight, params.head_bias);
}

Var record_forward(GradTape<Real>& tape, const TcnModel& model, const ForwardGraph& params, const Mat& window,
                   ForwardMode mode)
{
    const auto& cfg = model.config;
    require_shape(window.rows() == cfg.input_channels && window.cols() == cfg.lookback,
                  "tcn_forward: window is [" + std::to_string(window.rows()) + " x " + std::to_string(window.cols())
                      + "], model expects [" + std::to_string(cfg.input_channels) + " x "
                      + std::to_string(cfg.lookback) + "]");
    return record_forward_batch(tape, model, params, window, mode);
}

Vec tcn_forward(const TcnModel& model, const Mat& window, ForwardMode mode)
{
    GradTape<Real> tape;
    const ForwardGraph params = record_parameters(tape, model, mode);
    const Var out = record_forward(tape, model, params, window, mode);
    return tape.value(out).col(0);
}

AdaptationCoefficients active_coefficients(const TcnModel& model, std::size_t layer_index)
{
    const LayerState& layer = model.layers.at(layer_index);
    const Index channels = layer.out_channels();
    Vec mu = chunk_gate<Real>(layer.phi_weight, layer.phi_bias, chunk_rows<Real>(layer.g_fast, 2 * channels),
                              model.adaptor.squash);
    if (layer.recalled) {
        const Real tau = layer.memory.tau;
        mu = (tau * mu + (1 - tau) * (Vec::Ones(mu.size()) + *layer.recalled)).eval();
    }
    return {mu.head(channels), mu.tail(channels)};
}

TcnGradients loss_gradients(const TcnModel& model, std::span<const LossTerm> terms, ForwardMode mode)
{
    require_shape(!terms.empty(), "loss_gradients: no loss terms");
    GradTape<Real> tape;
    const ForwardGraph params = record_parameters(tape, model, mode);
    const Index lookback = model.config.lookback;
    const Index count = static_cast<Index>(terms.size());
    Mat windows(model.config.input_channels, lookback * count);
    Mat targets(model.config.horizon, count);
    Vec weights(count);
    for (Index b = 0; b < count; ++b) {
        const auto& term = terms[static_cast<std::size_t>(b)];
        require_shape(term.window->rows() == model.config.input_channels && term.window->cols() == lookback,
                      "tcn_forward: window is [" + std::to_string(term.window->rows()) + " x "
                          + std::to_string(term.window->cols()) + "], model expects ["
                          + std::to_string(model.config.input_channels) + " x " + std::to_string(lookback) + "]");
        require_shape(term.target->size() == model.config.horizon, "loss_gradients: target length != horizon");
        windows.middleCols(b * lookback, lookback) = *term.window;
        targets.col(b) = *term.target;
        weights(b) = term.weight;
    }
    Var out = record_forward_batch(tape, model, params, windows, mode);
    Vec first_forecast = tape.value(out).col(0);
    Var total = tape.weighted_mse(out, targets, weights);
    tape.backward(total);

    TcnGradients grads;
    grads.loss = tape.scalar(total);
    grads.forecast = std::move(first_forecast);
    for (const auto& lv : params.layers) {
        LayerGradients lg;
        lg.theta = tape.grad(lv.theta);
        lg.bias = tape.grad(lv.bias).col(0);
        if (lv.phi_weight) {
            lg.phi_weight = tape.grad(*lv.phi_weight);
            lg.phi_bias = tape.grad(*lv.phi_bias).col(0);
        }
        grads.layers.push_back(std::move(lg));
    }
    for (const auto& sv : params.skips) {
        if (sv)
            grads.skips.emplace_back(Projection{tape.grad(sv->weight), tape.grad(sv->bias).col(0)});
        else
            grads.skips.emplace_back(std::nullopt);
    }
    grads.head_weight = tape.grad(params.head_weight);
    grads.head_bias = tape.grad(params.head_bias).col(0);
    return grads;
}

TcnGradients tcn_backward(const TcnModel& model, const Mat& window, const Vec& target, ForwardMode mode)
{
    const LossTerm term{&window, &target, 1.0};
    return loss_gradients(model, std::span<const LossTerm>(&term, 1), mode);
}

void apply_sgd(TcnModel& model, const TcnGradients& grads, Real lr, bool include_adaptor)
{
    require_shape(grads.layers.size() == model.layers.size() && grads.skips.size() == model.skips.size(),
                  "apply_sgd: gradient layout does not match model");
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        auto& layer = model.layers[l];
        const auto& g = grads.layers[l];
        sgd_step(layer.theta, g.theta, lr);
        sgd_step(layer.bias, g.bias, lr);
        if (include_adaptor && g.phi_weight.size() > 0) {
            sgd_step(layer.phi_weight, g.phi_weight, lr);
            sgd_step(layer.phi_bias, g.phi_bias, lr);
        }
    }
    for (std::size_t b = 0; b < model.skips.size(); ++b) {
        if (model.skips[b] && grads.skips[b]) {
            sgd_step(model.skips[b]->weight, grads.skips[b]->weight, lr);
            sgd_step(model.skips[b]->bias, grads.skips[b]->bias, lr);
        }
    }
    sgd_step(model.head_weight, grads.head_weight, lr);
    sgd_step(model.head_bias, grads.head_bias, lr);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr int kCheckpointVersion = 1;
constexpr const char* kCheckpointFormat = "fsnet-checkpoint";

using nlohmann::json;

json encode(const Mat& m)
{
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<Real>(m.data(), m.data() + m.size())}};
}

json encode(const Vec& v) { return std::vector<Real>(v.data(), v.data() + v.size()); }

Mat decode_mat(const json& j)
{
    const Index rows = j.at("rows").get<Index>();
    const Index cols = j.at("cols").get<Index>();
    const auto data = j.at("data").get<std::vector<Real>>();
    require_shape(static_cast<Index>(data.size()) == rows * cols, "checkpoint: matrix data length mismatch");
    Mat m(rows, cols);
    std::copy(data.begin(), data.end(), m.data());
    return m;
}

Vec decode_vec(const json& j)
{
    const auto data = j.get<std::vector<Real>>();
    return Eigen::Map<const Vec>(data.data(), static_cast<Index>(data.size()));
}

} // namespace

std::string serialize_model(const TcnModel& model)
{
    const auto& c = model.config;
    const auto& a = model.adaptor;
    json j;
    j["format"] = kCheckpointFormat;
    j["version"] = kCheckpointVersion;
    j["config"] = {{"input_channels", c.input_channels}, {"channels", c.channels},
                   {"kernel_size", c.kernel_size},       {"num_blocks", c.num_blocks},
                   {"convs_per_block", c.convs_per_block}, {"dilations", c.dilation_schedule()},
                   {"lookback", c.lookback},             {"horizon", c.horizon}};
    j["adaptor"] = {{"gamma", a.gamma},
                    {"gamma_prime", a.gamma_prime},
                    {"tau", a.tau},
                    {"squash", a.squash},
                    {"memory_slots", a.memory_slots},
                    {"top_k", a.top_k},
                    {"memory_enabled", a.memory_enabled},
                    {"train_adaptor", a.train_adaptor}};
    json layers = json::array();
    for (const auto& l : model.layers) {
        json lj{{"kernel_size", l.kernel_size},
                {"dilation", l.dilation},
                {"theta", encode(l.theta)},
                {"bias", encode(l.bias)},
                {"phi_weight", encode(l.phi_weight)},
                {"phi_bias", encode(l.phi_bias)},
                {"g_fast", encode(l.g_fast)},
                {"g_slow", encode(l.g_slow)},
                {"mu_ema", encode(l.mu_ema)},
                {"memory", {{"slots", encode(l.memory.slots)}, {"tau", l.memory.tau}, {"top_k", l.memory.top_k}}},
                {"trigger_count", l.trigger_count}};
        lj["recalled"] = l.recalled ? encode(*l.recalled) : json(nullptr);
        layers.push_back(std::move(lj));
    }
    j["layers"] = std::move(layers);
    json skips = json::array();
    for (const auto& s : model.skips)
        skips.push_back(s ? json{{"weight", encode(s->weight)}, {"bias", encode(s->bias)}} : json(nullptr));
    j["skips"] = std::move(skips);
    j["head"] = {{"weight", encode(model.head_weight)}, {"bias", encode(model.head_bias)}};
    j["pretrained"] = model.pretrained;
    return j.dump();
}

TcnModel deserialize_model(const std::string& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("checkpoint: invalid JSON: ") + e.what());
    }
    if (j.value("format", "") != kCheckpointFormat)
        throw ConfigError("checkpoint: not an fsnet checkpoint");
    if (j.value("version", 0) != kCheckpointVersion)
        throw ConfigError("checkpoint: unsupported version " + std::to_string(j.value("version", 0)));
    try {
        TcnModel m;
        const auto& c = j.at("config");
        m.config.input_channels = c.at("input_channels").get<Index>();
        m.config.channels = c.at("channels").get<Index>();
        m.config.kernel_size = c.at("kernel_size").get<Index>();
        m.config.num_blocks = c.at("num_blocks").get<Index>();
        m.config.convs_per_block = c.at("convs_per_block").get<Index>();
        m.config.dilations = c.at("dilations").get<std::vector<Index>>();
        m.config.lookback = c.at("lookback").get<Index>();
        m.config.horizon = c.at("horizon").get<Index>();
        m.config.validate();
        const auto& a = j.at("adaptor");
        m.adaptor.gamma = a.at("gamma").get<Real>();
        m.adaptor.gamma_prime = a.at("gamma_prime").get<Real>();
        m.adaptor.tau = a.at("tau").get<Real>();
        m.adaptor.squash = a.at("squash").get<Real>();
        m.adaptor.memory_slots = a.at("memory_slots").get<Index>();
        m.adaptor.top_k = a.at("top_k").get<Index>();
        m.adaptor.memory_enabled = a.at("memory_enabled").get<bool>();
        m.adaptor.train_adaptor = a.at("train_adaptor").get<bool>();
        for (const auto& lj : j.at("layers")) {
            LayerState l;
            l.kernel_size = lj.at("kernel_size").get<Index>();
            l.dilation = lj.at("dilation").get<Index>();
            l.theta = decode_mat(lj.at("theta"));
            l.bias = decode_vec(lj.at("bias"));
            l.phi_weight = decode_mat(lj.at("phi_weight"));
            l.phi_bias = decode_vec(lj.at("phi_bias"));
            l.g_fast = decode_vec(lj.at("g_fast"));
            l.g_slow = decode_vec(lj.at("g_slow"));
            l.mu_ema = decode_vec(lj.at("mu_ema"));
            l.memory.slots = decode_mat(lj.at("memory").at("slots"));
            l.memory.tau = lj.at("memory").at("tau").get<Real>();
            l.memory.top_k = lj.at("memory").at("top_k").get<Index>();
            l.trigger_count = lj.at("trigger_count").get<long long>();
            if (!lj.at("recalled").is_null())
                l.recalled = decode_vec(lj.at("recalled"));
            check_layer(l);
            m.layers.push_back(std::move(l));
        }
        for (const auto& sj : j.at("skips")) {
            if (sj.is_null())
                m.skips.emplace_back(std::nullopt);
            else
                m.skips.emplace_back(Projection{decode_mat(sj.at("weight")), decode_vec(sj.at("bias"))});
        }
        m.head_weight = decode_mat(j.at("head").at("weight"));
        m.head_bias = decode_vec(j.at("head").at("bias"));
        m.pretrained = j.at("pretrained").get<bool>();
        require_shape(static_cast<Index>(m.layers.size()) == m.config.num_blocks * m.config.convs_per_block
                          && static_cast<Index>(m.skips.size()) == m.config.num_blocks,
                      "checkpoint: layer count does not match config");
        return m;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("checkpoint: malformed field: ") + e.what());
    }
}

void save_model(const TcnModel& model, const std::string& path)
{
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        out << serialize_model(model);
        if (!out)
            throw std::runtime_error("cannot write checkpoint " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("cannot move checkpoint into place at " + path);
}

TcnModel load_model(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open checkpoint " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return deserialize_model(ss.str());
}

std::string model_hash(const TcnModel& model)
{
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : serialize_model(model)) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace fsnet
