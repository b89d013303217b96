#pragma once

// Reverse-mode gradient tape over dense matrices. Each recorded operation
// stores the ids of its operands and a closure that accumulates adjoints;
// backward() replays the closures in exact reverse order of recording.

#include "fsnet/numerics.hpp"

#include <cstddef>
#include <algorithm>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace fsnet {

template <typename Scalar>
class GradTape {
public:
    using Matrix = MatrixX<Scalar>;
    using Vector = VectorX<Scalar>;

    struct Var {
        std::size_t id = 0;
    };

    Var variable(Matrix value) { return push(std::move(value)); }

    Var variable(const Vector& value) { return push(Matrix(Eigen::Map<const Matrix>(value.data(), value.size(), 1))); }

    const Matrix& value(Var v) const { return nodes_.at(v.id).value; }

    Scalar scalar(Var v) const { return value(v)(0, 0); }

    const Matrix& grad(Var v) const
    {
        if (!backward_done_)
            throw std::logic_error("GradTape: gradients requested before backward()");
        return nodes_.at(v.id).grad;
    }

    std::size_t size() const { return nodes_.size(); }

    /// segment > 0 treats the input as independent sequences of that length side by side.
    Var conv1d_causal(Var input, Var kernel, Index kernel_size, Index dilation, Index segment = 0)
    {
        Var out = push(fsnet::conv1d_causal(value(input), value(kernel), kernel_size, dilation, segment));
        record([this, input, kernel, out, kernel_size, dilation, segment] {
            auto g = conv1d_causal_backward(node(out).grad, node(input).value, node(kernel).value, kernel_size,
                                            dilation, segment);
            node(input).grad += g.input;
            node(kernel).grad += g.kernel;
        });
        return out;
    }

    /// h[c, t] + bias[c]
    Var add_channel_bias(Var h, Var bias)
    {
        const Matrix& hv = value(h);
        const Matrix& bv = value(bias);
        require_shape(bv.rows() == hv.rows() && bv.cols() == 1, "add_channel_bias: bias must be [C x 1]");
        Matrix out = hv;
        out.colwise() += Eigen::Map<const Vector>(bv.data(), bv.rows());
        Var o = push(std::move(out));
        record([this, h, bias, o] {
            node(h).grad += node(o).grad;
            node(bias).grad += node(o).grad.rowwise().sum();
        });
        return o;
    }

    /// x[r, :] * scale[r]; used for both weight (alpha) and feature (beta) adaptation.
    Var scale_rows(Var x, Var scale)
    {
        const Matrix& xv = value(x);
        const Matrix& sv = value(scale);
        require_shape(sv.rows() == xv.rows() && sv.cols() == 1, "scale_rows: scale must be [R x 1]");
        Matrix out = Eigen::Map<const Vector>(sv.data(), sv.rows()).asDiagonal() * xv;
        require_finite(out, "scale_rows");
        Var o = push(std::move(out));
        record([this, x, scale, o] {
            const Matrix& up = node(o).grad;
            const Matrix& sv2 = node(scale).value;
            node(x).grad += Eigen::Map<const Vector>(sv2.data(), sv2.rows()).asDiagonal() * up;
            node(scale).grad += up.cwiseProduct(node(x).value).rowwise().sum();
        });
        return o;
    }

    Var relu(Var x)
    {
        if (value(x).size() > 0)
            relu_margin_ = std::min(relu_margin_, value(x).cwiseAbs().minCoeff());
        Var o = push(fsnet::relu(value(x)));
        record([this, x, o] { node(x).grad += relu_backward(node(o).grad, node(x).value); });
        return o;
    }

    Var add(Var a, Var b)
    {
        require_shape(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "add: shape mismatch");
        Var o = push(value(a) + value(b));
        record([this, a, b, o] {
            node(a).grad += node(o).grad;
            node(b).grad += node(o).grad;
        });
        return o;
    }

    /// [R x T] -> [R x 1], the newest time step.
    Var last_column(Var x) { return last_columns(x, value(x).cols()); }

    /// [R x (B * segment)] -> [R x B], the newest step of each segment.
    Var last_columns(Var x, Index segment)
    {
        const Matrix& xv = value(x);
        require_shape(segment >= 1 && xv.cols() % segment == 0, "last_columns: bad segment length");
        const Index count = xv.cols() / segment;
        Matrix out(xv.rows(), count);
        for (Index b = 0; b < count; ++b)
            out.col(b) = xv.col((b + 1) * segment - 1);
        Var o = push(std::move(out));
        record([this, x, o, segment, count] {
            Matrix& g = node(x).grad;
            const Matrix& up = node(o).grad;
            for (Index b = 0; b < count; ++b)
                g.col((b + 1) * segment - 1) += up.col(b);
        });
        return o;
    }

    /// weight * x + bias, bias a column vector broadcast over the columns of x.
    Var linear(Var x, Var weight, Var bias)
    {
        const Matrix& wv = value(weight);
        const Matrix& xv = value(x);
        const Matrix& bv = value(bias);
        require_shape(wv.cols() == xv.rows() && bv.rows() == wv.rows() && bv.cols() == 1, "linear: shape mismatch");
        Matrix out(wv.rows(), xv.cols());
        out.noalias() = wv * xv;
        out.colwise() += Eigen::Map<const Vector>(bv.data(), bv.rows());
        require_finite(out, "linear");
        Var o = push(std::move(out));
        record([this, x, weight, bias, o] {
            const Matrix& up = node(o).grad;
            node(x).grad.noalias() += node(weight).value.transpose() * up;
            node(weight).grad.noalias() += up * node(x).value.transpose();
            node(bias).grad += up.rowwise().sum();
        });
        return o;
    }

    /// Contiguous rows [start, start + length) of a column vector.
    Var segment(Var x, Index start, Index length)
    {
        const Matrix& xv = value(x);
        require_shape(xv.cols() == 1 && start >= 0 && start + length <= xv.rows(), "segment: out of range");
        Var o = push(Matrix(xv.middleRows(start, length)));
        record([this, x, o, start, length] { node(x).grad.middleRows(start, length) += node(o).grad; });
        return o;
    }

    /// scale * x + offset, offset a constant.
    Var affine(Var x, Scalar scale, const Matrix& offset)
    {
        require_shape(offset.rows() == value(x).rows() && offset.cols() == value(x).cols(), "affine: shape mismatch");
        Var o = push(scale * value(x) + offset);
        record([this, x, o, scale] { node(x).grad += scale * node(o).grad; });
        return o;
    }

    /// 1 + squash * tanh(rowwise(weight . chunks) + bias); chunks is a constant.
    Var chunk_gate(Var weight, Var bias, const Matrix& chunks, Scalar squash)
    {
        const Matrix& bv = value(bias);
        const Vector b = Eigen::Map<const Vector>(bv.data(), bv.rows());
        const Vector pre = chunk_gate_preactivation<Scalar>(value(weight), b, chunks);
        Vector gate = (Scalar(1) + squash * pre.array().tanh()).matrix();
        require_finite(gate, "chunk_gate");
        Var o = variable(gate);
        record([this, weight, bias, o, chunks, pre, squash] {
            const Matrix& up = node(o).grad;
            const Vector t = pre.array().tanh().matrix();
            const Vector local =
                (up.col(0).array() * squash * (Scalar(1) - t.array().square())).matrix();
            node(bias).grad.col(0) += local;
            node(weight).grad += local.asDiagonal() * chunks;
        });
        return o;
    }

    /// MSE between a column-vector prediction and a constant target; returns a [1 x 1] node.
    Var mse(Var pred, const Vector& target)
    {
        const Matrix& pv = value(pred);
        require_shape(pv.cols() == 1, "mse: prediction must be a column vector");
        const Vector p = Eigen::Map<const Vector>(pv.data(), pv.rows());
        Matrix out(1, 1);
        out(0, 0) = mse_loss<Scalar>(p, target);
        Var o = push(std::move(out));
        record([this, pred, o, target] {
            const Matrix& pv2 = node(pred).value;
            const Vector p2 = Eigen::Map<const Vector>(pv2.data(), pv2.rows());
            node(pred).grad.col(0) += mse_backward<Scalar>(p2, target, node(o).grad(0, 0));
        });
        return o;
    }

    /// sum_i weights[i] * terms[i] over [1 x 1] nodes.
    Var weighted_sum(std::span<const Var> terms, std::span<const Scalar> weights)
    {
        require_shape(terms.size() == weights.size() && !terms.empty(), "weighted_sum: size mismatch");
        Matrix out = Matrix::Zero(1, 1);
        for (std::size_t i = 0; i < terms.size(); ++i)
            out(0, 0) += weights[i] * scalar(terms[i]);
        Var o = push(std::move(out));
        std::vector<Var> ts(terms.begin(), terms.end());
        std::vector<Scalar> ws(weights.begin(), weights.end());
        record([this, ts = std::move(ts), ws = std::move(ws), o] {
            for (std::size_t i = 0; i < ts.size(); ++i)
                node(ts[i]).grad(0, 0) += ws[i] * node(o).grad(0, 0);
        });
        return o;
    }

    /// sum_b weights[b] * MSE(pred[:, b], targets[:, b]); returns a [1 x 1] node.
    Var weighted_mse(Var pred, const Matrix& targets, const Vector& weights)
    {
        const Matrix& pv = value(pred);
        require_shape(pv.rows() == targets.rows() && pv.cols() == targets.cols() && weights.size() == pv.cols(),
                      "weighted_mse: shape mismatch");
        Matrix out(1, 1);
        out(0, 0) = 0;
        for (Index b = 0; b < pv.cols(); ++b)
            out(0, 0) += weights(b) * mse_loss<Scalar>(pv.col(b), targets.col(b));
        require_finite(out, "weighted_mse");
        Var o = push(std::move(out));
        record([this, pred, o, targets, weights] {
            const Matrix& pv2 = node(pred).value;
            Matrix& g = node(pred).grad;
            const Scalar up = node(o).grad(0, 0);
            for (Index b = 0; b < pv2.cols(); ++b)
                g.col(b) += mse_backward<Scalar>(pv2.col(b), targets.col(b), up * weights(b));
        });
        return o;
    }

    /// Seeds d(root)/d(root) = 1 and replays adjoints newest-first. One shot per recording.
    void backward(Var root)
    {
        if (backward_done_)
            throw std::logic_error("GradTape: backward() called twice on the same recording");
        const Matrix& rv = value(root);
        require_shape(rv.rows() == 1 && rv.cols() == 1, "GradTape: backward root must be a scalar");
        for (auto& n : nodes_)
            n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
        nodes_[root.id].grad(0, 0) = Scalar(1);
        for (auto it = adjoints_.rbegin(); it != adjoints_.rend(); ++it)
            (*it)();
        backward_done_ = true;
    }

    /// Number of recorded operations, in recording order (for replay-order tests).
    std::size_t operation_count() const { return adjoints_.size(); }

    /// Smallest |input| seen by any relu so far; distance of the recording from a kink.
    Scalar relu_margin() const { return relu_margin_; }

private:
    struct Node {
        Matrix value;
        Matrix grad;
    };

    Var push(Matrix value)
    {
        if (backward_done_)
            throw std::logic_error("GradTape: cannot record after backward()");
        nodes_.push_back(Node{std::move(value), Matrix()});
        return Var{nodes_.size() - 1};
    }

    void record(std::function<void()> adjoint) { adjoints_.push_back(std::move(adjoint)); }

    Node& node(Var v) { return nodes_[v.id]; }

    std::vector<Node> nodes_;
    std::vector<std::function<void()>> adjoints_;
    bool backward_done_ = false;
    Scalar relu_margin_ = std::numeric_limits<Scalar>::infinity();
};

} // namespace fsnet
