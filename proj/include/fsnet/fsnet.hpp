#pragma once

// Per-layer fast adaptation: dual-timescale gradient EMAs, the chunked adaptor
// that turns the fast EMA into per-channel coefficients, and the associative
// memory that stores and recalls coefficients when the two EMAs disagree.

#include "fsnet/tcn.hpp"

namespace fsnet {

/// g_fast <- gamma g_fast + (1 - gamma) g;  g_slow <- gamma' g_slow + (1 - gamma') g
void update_ema_grads(LayerState& layer, const Vec& gradient, const AdaptorConfig& config);

/// Chunks g_fast, maps each chunk through its affine row of phi and gates into [1 - s, 1 + s].
AdaptationCoefficients compute_coefficients(const LayerState& layer, Real squash);

/// theta[c, :] * alpha[c]
Mat adapt_weights(const Mat& theta, const Vec& alpha);

/// h[c, :] * beta[c]
Mat adapt_features(const Mat& h, const Vec& beta);

/// cosine(g_fast, g_slow) < -tau
bool should_trigger(const LayerState& layer, Real tau);

struct MemoryRead {
    Vec attention;  ///< softmax(M mu_hat) over all slots
    TopK<Real> selected;
    Vec recalled;  ///< sum over the top-k of attention[i] * M[i]
};

/// Attention read; the truncated weights are not renormalized.
MemoryRead memory_read(const AssociativeMemory& memory, const Vec& mu_hat);

/// tau * mu + (1 - tau) * mu_tilde
Vec memory_merge(const Vec& mu, const Vec& mu_tilde, Real tau);

/// Selected rows become tau * M[i] + (1 - tau) * w_i * value; other rows are untouched.
void memory_write(AssociativeMemory& memory, const Vec& value, const TopK<Real>& selected);

struct StepResult {
    Vec forecast;  ///< produced before any parameter or state update
    Real loss = 0;
    int triggers = 0;  ///< layers whose memory fired during this step
};

/// One online update: adapted forward, MSE, backward, EMA and coefficient
/// bookkeeping, memory interaction on trigger, then SGD on the backbone,
/// head and (unless frozen) the adaptor.
StepResult fsnet_step(TcnModel& model, const Mat& window, const Vec& target, Real lr);

} // namespace fsnet
