#pragma once

// Temporal convolutional forecaster: stacked residual blocks of two dilated
// causal convolutions each, then a linear head on the newest time step.

#include "fsnet/layer_state.hpp"
#include "fsnet/tape.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fsnet {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct TcnConfig {
    Index input_channels = 1;
    Index channels = 32;
    Index kernel_size = 3;
    Index num_blocks = 3;
    Index convs_per_block = 2;
    std::vector<Index> dilations;  ///< empty means 2^b for block b
    Index lookback = 24;
    Index horizon = 24;

    std::vector<Index> dilation_schedule() const;
    /// 1 + sum over blocks of (k - 1) * dilation * convs_per_block
    Index receptive_field() const;
    /// Throws ConfigError on invalid sizes or a receptive field shorter than the lookback.
    void validate() const;
};

/// 1x1 projection on the residual path of a block whose channel count changes.
struct Projection {
    Mat weight;  ///< [C_out x C_in]
    Vec bias;
};

struct TcnModel {
    TcnConfig config;
    AdaptorConfig adaptor;
    std::vector<LayerState> layers;               ///< num_blocks * convs_per_block, in forward order
    std::vector<std::optional<Projection>> skips;  ///< one per block
    Mat head_weight;                              ///< [H x channels]
    Vec head_bias;                                ///< [H]
    bool pretrained = false;

    std::size_t parameter_count() const;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases, zero adaptor.
TcnModel tcn_init(const TcnConfig& config, std::uint64_t seed, const AdaptorConfig& adaptor = {});

enum class ForwardMode { plain, adapted };

/// Tape handles for every trainable tensor of one recorded forward pass.
struct ForwardGraph {
    using Var = GradTape<Real>::Var;
    struct LayerVars {
        Var theta, bias;
        std::optional<Var> phi_weight, phi_bias;
    };
    struct SkipVars {
        Var weight, bias;
    };
    std::vector<LayerVars> layers;
    std::vector<std::optional<SkipVars>> skips;
    Var head_weight, head_bias;
};

/// Parameter leaves for a model on a tape; share them across samples to accumulate gradients.
ForwardGraph::LayerVars record_layer_leaves(GradTape<Real>& tape, const LayerState& layer, ForwardMode mode);
ForwardGraph record_parameters(GradTape<Real>& tape, const TcnModel& model, ForwardMode mode);

/// Records the forward pass for `window` reusing the parameter leaves in `params`.
GradTape<Real>::Var record_forward(GradTape<Real>& tape, const TcnModel& model, const ForwardGraph& params,
                                   const Mat& window, ForwardMode mode);

/// Batched variant: `windows` is [N x (B * L)], B windows side by side; returns [H x B].
GradTape<Real>::Var record_forward_batch(GradTape<Real>& tape, const TcnModel& model, const ForwardGraph& params,
                                         const Mat& windows, ForwardMode mode);

/// Forecast of the next H target values in normalized units.
Vec tcn_forward(const TcnModel& model, const Mat& window, ForwardMode mode = ForwardMode::plain);

/// Coefficients the adapted forward of `layer` uses right now (recalled offset merged in).
AdaptationCoefficients active_coefficients(const TcnModel& model, std::size_t layer);

struct LayerGradients {
    Mat theta;
    Vec bias;
    Mat phi_weight;  ///< zero-sized in plain mode
    Vec phi_bias;
};

struct TcnGradients {
    std::vector<LayerGradients> layers;
    std::vector<std::optional<Projection>> skips;
    Mat head_weight;
    Vec head_bias;
    Real loss = 0;
    Vec forecast;  ///< forward output of the first sample
};

/// One term of a weighted MSE objective.
struct LossTerm {
    const Mat* window;
    const Vec* target;
    Real weight = 1;
};

/// Gradients of sum_i w_i * MSE(forward(x_i), y_i) with respect to every parameter.
TcnGradients loss_gradients(const TcnModel& model, std::span<const LossTerm> terms, ForwardMode mode);

/// Gradients of MSE(tcn_forward(window), target).
TcnGradients tcn_backward(const TcnModel& model, const Mat& window, const Vec& target,
                          ForwardMode mode = ForwardMode::plain);

/// Plain SGD on the backbone and head; adaptor parameters too when `include_adaptor`.
void apply_sgd(TcnModel& model, const TcnGradients& grads, Real lr, bool include_adaptor);

/// Checkpoint as versioned JSON text; decoding restores every field bit-exactly.
std::string serialize_model(const TcnModel& model);
TcnModel deserialize_model(const std::string& text);
void save_model(const TcnModel& model, const std::string& path);
TcnModel load_model(const std::string& path);

/// FNV-1a over the serialized checkpoint, hex encoded.
std::string model_hash(const TcnModel& model);

} // namespace fsnet
