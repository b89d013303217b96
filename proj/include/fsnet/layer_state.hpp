#pragma once

#include "fsnet/numerics.hpp"

#include <optional>

namespace fsnet {

/// Fast/slow adaptation hyperparameters shared by every layer of a model.
struct AdaptorConfig {
    Real gamma = 0.9;        ///< fast gradient EMA coefficient
    Real gamma_prime = 0.3;  ///< slow gradient EMA coefficient (and coefficient EMA), must be < gamma
    Real tau = 0.7;          ///< memory trigger threshold and merge/write weight
    Real squash = 0.5;       ///< coefficients live in [1 - squash, 1 + squash]
    Index memory_slots = 32;
    Index top_k = 2;
    bool memory_enabled = true;
    bool train_adaptor = true;  ///< when false the adaptor parameters stay fixed online

    void validate() const;
};

/// Per-channel multiplicative modifiers of one convolution layer.
struct AdaptationCoefficients {
    Vec alpha;  ///< weight scaling, one per output channel
    Vec beta;   ///< feature scaling, one per output channel
};

/// Slot matrix of past adaptation coefficients (stored as offsets from identity).
struct AssociativeMemory {
    Mat slots;  ///< [N_mem x d_coeff]
    Real tau = 0.7;
    Index top_k = 2;

    Index slot_count() const { return slots.rows(); }
    Index dim() const { return slots.cols(); }
};

/// One dilated causal convolution plus its fast-adaptation sidecar.
struct LayerState {
    Mat theta;  ///< [C_out x (C_in * k)]
    Vec bias;   ///< [C_out]
    Index kernel_size = 1;
    Index dilation = 1;

    Mat phi_weight;  ///< [2 C_out x chunk width]
    Vec phi_bias;    ///< [2 C_out]
    Vec g_fast;      ///< EMA of flattened theta gradients, coefficient gamma
    Vec g_slow;      ///< EMA of flattened theta gradients, coefficient gamma'
    Vec mu_ema;      ///< EMA of the coefficients (alpha ++ beta), coefficient gamma'
    AssociativeMemory memory;
    /// Offset retrieved on the last trigger; merged into the next adapted forward.
    std::optional<Vec> recalled;
    long long trigger_count = 0;

    Index out_channels() const { return theta.rows(); }
    Index in_channels() const { return theta.cols() / kernel_size; }
    Index coefficient_count() const { return 2 * out_channels(); }
    Index chunk_width() const { return (theta.size() + coefficient_count() - 1) / coefficient_count(); }
};

/// Builds a layer with zero adaptor, zero EMA state, identity coefficient EMA and an empty memory.
LayerState make_layer(Mat theta, Vec bias, Index kernel_size, Index dilation, const AdaptorConfig& adaptor);

/// Throws ShapeError when the sidecar is inconsistent with theta.
void check_layer(const LayerState& layer);

} // namespace fsnet
