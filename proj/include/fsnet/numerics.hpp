#pragma once

// Dense kernels with hand-written adjoints for the handful of operations the
// forecaster needs. Everything is templated on the scalar type; the rest of
// the project instantiates it with double.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace fsnet {

using Index = Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Real = double;
using Mat = MatrixX<Real>;
using Vec = VectorX<Real>;

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& values, const char* what)
{
    if (!values.allFinite())
        throw NumericError(std::string("non-finite value produced by ") + what);
}

inline void require_shape(bool ok, const std::string& message)
{
    if (!ok)
        throw ShapeError(message);
}

// ---------------------------------------------------------------------------
// Dilated causal convolution.
//
// Kernels are stored as [C_out x (C_in * k)] with column c * k + m holding the
// tap that reads input[c, i - m * dilation]. Reads before t = 0 see zeros,
// which is the same as left padding by (k - 1) * dilation.
// ---------------------------------------------------------------------------

/// Unrolls the causal receptive field of every output step into a column.
/// With segment > 0 the columns are independent sequences of that length laid
/// side by side, and no tap reads across a segment boundary.
template <typename Scalar>
MatrixX<Scalar> causal_im2col(const MatrixX<Scalar>& input, Index kernel_size, Index dilation, Index segment = 0)
{
    const Index channels = input.rows();
    const Index steps = segment > 0 ? segment : input.cols();
    const Index count = input.cols() / steps;
    MatrixX<Scalar> cols = MatrixX<Scalar>::Zero(channels * kernel_size, input.cols());
    for (Index s = 0; s < count; ++s) {
        const Index base = s * steps;
        for (Index c = 0; c < channels; ++c) {
            for (Index m = 0; m < kernel_size; ++m) {
                const Index shift = m * dilation;
                if (shift >= steps)
                    continue;
                cols.row(c * kernel_size + m).segment(base + shift, steps - shift) =
                    input.row(c).segment(base, steps - shift);
            }
        }
    }
    return cols;
}

/// Adjoint of causal_im2col: scatters column gradients back onto the input.
template <typename Scalar>
MatrixX<Scalar> causal_col2im(const MatrixX<Scalar>& cols, Index channels, Index kernel_size, Index dilation,
                              Index segment = 0)
{
    const Index steps = segment > 0 ? segment : cols.cols();
    const Index count = cols.cols() / steps;
    MatrixX<Scalar> input = MatrixX<Scalar>::Zero(channels, cols.cols());
    for (Index s = 0; s < count; ++s) {
        const Index base = s * steps;
        for (Index c = 0; c < channels; ++c) {
            for (Index m = 0; m < kernel_size; ++m) {
                const Index shift = m * dilation;
                if (shift >= steps)
                    continue;
                input.row(c).segment(base, steps - shift) +=
                    cols.row(c * kernel_size + m).segment(base + shift, steps - shift);
            }
        }
    }
    return input;
}

inline void check_conv_shapes(Index in_channels, Index steps, Index kernel_cols, Index kernel_size, Index dilation,
                              Index segment = 0)
{
    require_shape(segment >= 0 && (segment == 0 || (steps % segment == 0)),
                  "conv1d_causal: input length is not a multiple of the segment length");
    require_shape(kernel_size >= 1, "conv1d_causal: kernel size must be >= 1");
    require_shape(dilation >= 1, "conv1d_causal: dilation must be >= 1");
    require_shape(steps >= 1, "conv1d_causal: input must have at least one time step");
    require_shape(kernel_cols == in_channels * kernel_size,
                  "conv1d_causal: kernel expects " + std::to_string(kernel_cols / kernel_size)
                      + " input channels, input has " + std::to_string(in_channels));
}

/// output[c, i] = sum_{c', m} kernel[c, c', m] * input[c', i - m * dilation]
template <typename Scalar>
MatrixX<Scalar> conv1d_causal(const MatrixX<Scalar>& input, const MatrixX<Scalar>& kernel, Index kernel_size,
                              Index dilation, Index segment = 0)
{
    check_conv_shapes(input.rows(), input.cols(), kernel.cols(), kernel_size, dilation, segment);
    MatrixX<Scalar> out(kernel.rows(), input.cols());
    out.noalias() = kernel * causal_im2col(input, kernel_size, dilation, segment);
    require_finite(out, "conv1d_causal");
    return out;
}

template <typename Scalar>
struct ConvGradients {
    MatrixX<Scalar> input;
    MatrixX<Scalar> kernel;
};

template <typename Scalar>
ConvGradients<Scalar> conv1d_causal_backward(const MatrixX<Scalar>& upstream, const MatrixX<Scalar>& input,
                                             const MatrixX<Scalar>& kernel, Index kernel_size, Index dilation,
                                             Index segment = 0)
{
    check_conv_shapes(input.rows(), input.cols(), kernel.cols(), kernel_size, dilation, segment);
    require_shape(upstream.rows() == kernel.rows() && upstream.cols() == input.cols(),
                  "conv1d_causal_backward: upstream shape does not match the forward output");
    const MatrixX<Scalar> cols = causal_im2col(input, kernel_size, dilation, segment);
    ConvGradients<Scalar> grads;
    grads.kernel.noalias() = upstream * cols.transpose();
    MatrixX<Scalar> grad_cols(cols.rows(), cols.cols());
    grad_cols.noalias() = kernel.transpose() * upstream;
    grads.input = causal_col2im(grad_cols, input.rows(), kernel_size, dilation, segment);
    return grads;
}

// ---------------------------------------------------------------------------
// Affine map, activations, loss.
// ---------------------------------------------------------------------------

template <typename Scalar>
VectorX<Scalar> linear(const VectorX<Scalar>& input, const MatrixX<Scalar>& weight, const VectorX<Scalar>& bias)
{
    require_shape(weight.cols() == input.size(), "linear: weight columns do not match input length");
    require_shape(weight.rows() == bias.size(), "linear: bias length does not match weight rows");
    VectorX<Scalar> out = bias;
    out.noalias() += weight * input;
    require_finite(out, "linear");
    return out;
}

template <typename Scalar>
struct LinearGradients {
    VectorX<Scalar> input;
    MatrixX<Scalar> weight;
    VectorX<Scalar> bias;
};

template <typename Scalar>
LinearGradients<Scalar> linear_backward(const VectorX<Scalar>& upstream, const VectorX<Scalar>& input,
                                        const MatrixX<Scalar>& weight)
{
    require_shape(upstream.size() == weight.rows() && input.size() == weight.cols(),
                  "linear_backward: shape mismatch");
    LinearGradients<Scalar> grads;
    grads.input.noalias() = weight.transpose() * upstream;
    grads.weight.noalias() = upstream * input.transpose();
    grads.bias = upstream;
    return grads;
}

template <typename Derived>
typename Derived::PlainObject relu(const Eigen::MatrixBase<Derived>& input)
{
    return input.cwiseMax(typename Derived::Scalar(0));
}

/// Subgradient at exactly zero is taken as zero.
template <typename Derived, typename OtherDerived>
typename Derived::PlainObject relu_backward(const Eigen::MatrixBase<Derived>& upstream,
                                            const Eigen::MatrixBase<OtherDerived>& input)
{
    using Scalar = typename Derived::Scalar;
    return (input.array() > Scalar(0)).select(upstream, Scalar(0));
}

template <typename Scalar>
Scalar mse_loss(const VectorX<Scalar>& pred, const VectorX<Scalar>& target)
{
    require_shape(pred.size() == target.size() && pred.size() > 0, "mse_loss: length mismatch");
    const Scalar loss = (pred - target).squaredNorm() / static_cast<Scalar>(pred.size());
    if (!std::isfinite(loss))
        throw NumericError("mse_loss: non-finite loss");
    return loss;
}

template <typename Scalar>
VectorX<Scalar> mse_backward(const VectorX<Scalar>& pred, const VectorX<Scalar>& target, Scalar upstream = Scalar(1))
{
    require_shape(pred.size() == target.size() && pred.size() > 0, "mse_backward: length mismatch");
    return (Scalar(2) * upstream / static_cast<Scalar>(pred.size())) * (pred - target);
}

// ---------------------------------------------------------------------------
// Attention helpers used by the associative memory.
// ---------------------------------------------------------------------------

template <typename Scalar>
VectorX<Scalar> softmax(const VectorX<Scalar>& v)
{
    require_shape(v.size() > 0, "softmax: empty input");
    const VectorX<Scalar> e = (v.array() - v.maxCoeff()).exp().matrix();
    return e / e.sum();
}

/// Returns 0 when either vector is (numerically) zero.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b)
{
    using Scalar = typename DerivedA::Scalar;
    require_shape(a.size() == b.size(), "cosine_similarity: length mismatch");
    const Scalar na = a.norm();
    const Scalar nb = b.norm();
    if (na < Scalar(1e-12) || nb < Scalar(1e-12))
        return Scalar(0);
    const Scalar c = a.dot(b) / (na * nb);
    return std::clamp(c, Scalar(-1), Scalar(1));
}

template <typename Scalar>
struct TopK {
    std::vector<Index> indices;
    VectorX<Scalar> values;
};

/// Largest `count` entries in descending order; ties go to the lower index.
template <typename Scalar>
TopK<Scalar> topk(const VectorX<Scalar>& v, Index count)
{
    require_shape(count >= 1 && count <= v.size(), "topk: count must be in [1, N]");
    std::vector<Index> order(static_cast<std::size_t>(v.size()));
    std::iota(order.begin(), order.end(), Index(0));
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return v(a) > v(b); });
    TopK<Scalar> out;
    out.indices.assign(order.begin(), order.begin() + count);
    out.values.resize(count);
    for (Index i = 0; i < count; ++i)
        out.values(i) = v(out.indices[static_cast<std::size_t>(i)]);
    return out;
}

// ---------------------------------------------------------------------------
// Chunked gate: coefficient j = 1 + s * tanh(w_j . chunk_j + b_j).
// ---------------------------------------------------------------------------

/// Splits a flat vector into `count` rows of equal width, zero padding the tail.
template <typename Scalar>
MatrixX<Scalar> chunk_rows(const VectorX<Scalar>& flat, Index count)
{
    require_shape(count >= 1, "chunk_rows: need at least one chunk");
    const Index width = (flat.size() + count - 1) / count;
    MatrixX<Scalar> chunks = MatrixX<Scalar>::Zero(count, std::max<Index>(width, 1));
    for (Index i = 0; i < flat.size(); ++i)
        chunks(i / width, i % width) = flat(i);
    return chunks;
}

template <typename Scalar>
VectorX<Scalar> chunk_gate_preactivation(const MatrixX<Scalar>& weight, const VectorX<Scalar>& bias,
                                         const MatrixX<Scalar>& chunks)
{
    require_shape(weight.rows() == chunks.rows() && weight.cols() == chunks.cols() && bias.size() == weight.rows(),
                  "chunk_gate: adaptor shape does not match chunk layout");
    return (weight.cwiseProduct(chunks).rowwise().sum() + bias).eval();
}

template <typename Scalar>
VectorX<Scalar> chunk_gate(const MatrixX<Scalar>& weight, const VectorX<Scalar>& bias, const MatrixX<Scalar>& chunks,
                           Scalar squash)
{
    const VectorX<Scalar> pre = chunk_gate_preactivation(weight, bias, chunks);
    VectorX<Scalar> out = (Scalar(1) + squash * pre.array().tanh()).matrix();
    require_finite(out, "chunk_gate");
    return out;
}

// ---------------------------------------------------------------------------

/// p <- p - lr * g
template <typename Derived, typename OtherDerived>
void sgd_step(Eigen::PlainObjectBase<Derived>& params, const Eigen::MatrixBase<OtherDerived>& grads,
              typename Derived::Scalar lr)
{
    require_shape(params.rows() == grads.rows() && params.cols() == grads.cols(), "sgd_step: shape mismatch");
    params -= lr * grads;
}

} // namespace fsnet
