// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace neurograph {

/// Dense row-major tensor of doubles.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
        return Tensor({rows, cols}, fill);
    }

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    /// Rank-2 accessors; throw ShapeError on other ranks.
    std::size_t rows() const;
    std::size_t cols() const;

    double& operator[](std::size_t i) { return data_[i]; }
    const double& operator[](std::size_t i) const { return data_[i]; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    bool all_finite() const noexcept;
    void fill(double v);
    Tensor reshaped(std::vector<std::size_t> shape) const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

namespace ad {

/// Node in the reverse-mode graph. Op nodes keep their parents alive; the
/// backward closure reads `grad` and accumulates into the parents.
struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    /// Gradient buffer, zero-allocated on first use.
    Tensor& grad_buffer();
};

/// Handle to a node. Copies share the node.
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    const std::shared_ptr<Node>& node() const { return node_; }
    void zero_grad() { node_->grad = Tensor(); }

private:
    std::shared_ptr<Node> node_;
};

/// Trainable leaf.
Var parameter(Tensor value);
/// Non-trainable leaf.
Var constant(Tensor value);

/// Seeds d(loss)/d(loss) = 1 and runs every backward closure in reverse
/// topological order. Throws NumericError naming the op when a non-finite
/// gradient appears.
void backward(const Var& loss);

/// When enabled every op checks its output for NaN/Inf.
void set_nan_check(bool enabled);
bool nan_check_enabled();

using Index = std::vector<std::size_t>;

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
/// a[n x m] + bias[1 x m] broadcast over rows.
Var add_bias(const Var& a, const Var& bias);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var leaky_relu(const Var& a, double slope);
Var elu(const Var& a, double alpha = 1.0);
/// out[i] = a[index[i]] (rows).
Var gather_rows(const Var& a, Index index);
/// out[segment[i]] += a[i] over `num_segments` rows.
Var segment_sum(const Var& a, Index segment, std::size_t num_segments);
/// Row mean per segment; empty segments give zero rows.
Var segment_mean(const Var& a, Index segment, std::size_t num_segments);
/// z[E x H*C], att[H x C] -> out[E x H] with out[e,h] = <z[e, h-block], att[h]>.
Var head_dot(const Var& z, const Var& att);
/// Softmax of scores[E x H] within each segment, per column. Throws
/// StructuralError if a segment id has no entries and `require_nonempty`.
Var segment_softmax(const Var& scores, Index segment, std::size_t num_segments,
                    bool require_nonempty = true);
/// out[target[e], h-block] += alpha[e,h] * msg[e, h-block].
Var attention_aggregate(const Var& alpha, const Var& msg, Index target, std::size_t num_targets);
/// GATv2 edge scores straight from node projections:
/// out[e,h] = <att[h], LeakyReLU(zd[dst_e] + zs[src_e] + type_bias[type_e]) h-block>.
/// Same value as composing gather_rows/add/leaky_relu/head_dot, without the
/// E x H*C intermediates.
Var gatv2_edge_scores(const Var& zd, const Var& zs, const Var& type_bias, const Var& att, Index src,
                      Index dst, Index type, double slope);
/// out[dst_e, h-block] += alpha[e,h] * (zs[src_e] + type_bias[type_e]) h-block.
Var message_aggregate(const Var& alpha, const Var& zs, const Var& type_bias, Index src, Index dst,
                      Index type, std::size_t num_targets);
/// Per-row normalization over `groups` contiguous channel groups, followed by
/// per-channel scale and shift (gamma, beta are 1 x C).
Var group_norm(const Var& x, const Var& gamma, const Var& beta, std::size_t groups,
               double eps = 1e-5);
/// x * mask, mask already holding 0 or 1/(1-p).
Var apply_mask(const Var& x, Tensor mask);
Var concat_cols(const Var& a, const Var& b);
Var reshape(const Var& a, std::vector<std::size_t> shape);
/// Sum of all entries as a 1 x 1 tensor.
Var sum(const Var& a);
/// mean((pred - target)^2) as a 1 x 1 tensor.
Var mse(const Var& pred, const Tensor& target);

} // namespace ad
} // namespace neurograph
