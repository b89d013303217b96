#include "fsnet/fsnet.hpp"

#include <stdexcept>

namespace fsnet {

void update_ema_grads(LayerState& layer, const Vec& gradient, const AdaptorConfig& config)
{
    require_shape(gradient.size() == layer.theta.size(),
                  "update_ema_grads: gradient length " + std::to_string(gradient.size()) + " != theta size "
                      + std::to_string(layer.theta.size()));
    layer.g_fast = config.gamma * layer.g_fast + (1 - config.gamma) * gradient;
    layer.g_slow = config.gamma_prime * layer.g_slow + (1 - config.gamma_prime) * gradient;
}

AdaptationCoefficients compute_coefficients(const LayerState& layer, Real squash)
{
    check_layer(layer);
    const Index channels = layer.out_channels();
    const Vec mu = chunk_gate<Real>(layer.phi_weight, layer.phi_bias, chunk_rows<Real>(layer.g_fast, 2 * channels),
                                    squash);
    return {mu.head(channels), mu.tail(channels)};
}

Mat adapt_weights(const Mat& theta, const Vec& alpha)
{
    require_shape(alpha.size() == theta.rows(), "adapt_weights: alpha length != output channels");
    return alpha.asDiagonal() * theta;
}

Mat adapt_features(const Mat& h, const Vec& beta)
{
    require_shape(beta.size() == h.rows(), "adapt_features: beta length != channels");
    return beta.asDiagonal() * h;
}

bool should_trigger(const LayerState& layer, Real tau)
{
    return cosine_similarity(layer.g_fast, layer.g_slow) < -tau;
}

MemoryRead memory_read(const AssociativeMemory& memory, const Vec& mu_hat)
{
    require_shape(mu_hat.size() == memory.dim(), "memory_read: query length != memory width");
    MemoryRead read;
    read.attention = softmax<Real>(memory.slots * mu_hat);
    read.selected = topk<Real>(read.attention, memory.top_k);
    read.recalled = Vec::Zero(memory.dim());
    for (std::size_t i = 0; i < read.selected.indices.size(); ++i)
        read.recalled += read.selected.values(static_cast<Index>(i)) * memory.slots.row(read.selected.indices[i]).transpose();
    require_finite(read.recalled, "memory_read");
    return read;
}

Vec memory_merge(const Vec& mu, const Vec& mu_tilde, Real tau)
{
    require_shape(mu.size() == mu_tilde.size(), "memory_merge: length mismatch");
    return tau * mu + (1 - tau) * mu_tilde;
}

void memory_write(AssociativeMemory& memory, const Vec& value, const TopK<Real>& selected)
{
    require_shape(value.size() == memory.dim(), "memory_write: value length != memory width");
    require_shape(static_cast<Index>(selected.indices.size()) == selected.values.size(),
                  "memory_write: malformed selection");
    const Real tau = memory.tau;
    for (std::size_t i = 0; i < selected.indices.size(); ++i) {
        const Index row = selected.indices[i];
        require_shape(row >= 0 && row < memory.slot_count(), "memory_write: slot index out of range");
        memory.slots.row(row) =
            tau * memory.slots.row(row) + (1 - tau) * selected.values(static_cast<Index>(i)) * value.transpose();
    }
    require_finite(memory.slots, "memory_write");
}

StepResult fsnet_step(TcnModel& model, const Mat& window, const Vec& target, Real lr)
{
    if (!model.pretrained)
        throw std::logic_error("fsnet_step: model has not been pretrained");
    const AdaptorConfig& cfg = model.adaptor;

    TcnGradients grads;
    try {
        grads = tcn_backward(model, window, target, ForwardMode::adapted);
    } catch (const NumericError& e) {
        throw NumericError(std::string("fsnet_step aborted: ") + e.what());
    }

    StepResult result;
    result.forecast = grads.forecast;
    result.loss = grads.loss;

    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        LayerState& layer = model.layers[l];
        const Mat& g = grads.layers[l].theta;
        update_ema_grads(layer, Eigen::Map<const Vec>(g.data(), g.size()), cfg);

        const AdaptationCoefficients mu = compute_coefficients(layer, cfg.squash);
        Vec mu_flat(layer.coefficient_count());
        mu_flat << mu.alpha, mu.beta;
        layer.mu_ema = cfg.gamma_prime * layer.mu_ema + (1 - cfg.gamma_prime) * mu_flat;

        layer.recalled.reset();
        if (cfg.memory_enabled && should_trigger(layer, cfg.tau)) {
            // Memory holds offsets from the identity coefficient.
            const Vec offset = layer.mu_ema - Vec::Ones(layer.mu_ema.size());
            MemoryRead read = memory_read(layer.memory, offset);
            memory_write(layer.memory, offset, read.selected);
            layer.recalled = std::move(read.recalled);
            ++layer.trigger_count;
            ++result.triggers;
        }
    }

    apply_sgd(model, grads, lr, cfg.train_adaptor);
    return result;
}

} // namespace fsnet
