// SPDX-License-Identifier: Apache-2.0
#include "neurograph/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <numeric>
#include <unordered_set>

#include <Eigen/Dense>

#include "neurograph/errors.hpp"

namespace neurograph {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

} // namespace

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != product(shape_)) {
        throw ShapeError("tensor data of length " + std::to_string(data_.size()) +
                         " does not fit shape " + shape_string(shape_));
    }
}

std::size_t Tensor::rows() const {
    if (shape_.size() != 2) throw ShapeError("expected a matrix, got shape " + shape_string(shape_));
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (shape_.size() != 2) throw ShapeError("expected a matrix, got shape " + shape_string(shape_));
    return shape_[1];
}

bool Tensor::all_finite() const noexcept {
    return Eigen::Map<const Eigen::ArrayXd>(data_.data(), static_cast<Eigen::Index>(data_.size())).allFinite();
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
    return Tensor(std::move(shape), data_);
}

namespace ad {

namespace {

std::atomic<bool> g_nan_check{false};

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using MapM = Eigen::Map<RowMat>;

MapC view(const Tensor& t) {
    return MapC(t.values().data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

MapM view(Tensor& t) {
    return MapM(t.values().data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    }
}

void require_index(const Index& idx, std::size_t bound, const char* op) {
    for (auto i : idx) {
        if (i >= bound) throw ShapeError(std::string(op) + ": index " + std::to_string(i) + " >= " + std::to_string(bound));
    }
}

Var make_op(const char* op, Tensor value, std::vector<std::shared_ptr<Node>> parents,
            std::function<void(Node&)> backward_fn) {
    if (g_nan_check.load(std::memory_order_relaxed) && !value.all_finite()) {
        throw NumericError(std::string("non-finite output from op '") + op + "'");
    }
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->op = op;
    node->requires_grad = std::any_of(parents.begin(), parents.end(),
                                      [](const auto& p) { return p->requires_grad; });
    if (node->requires_grad) {
        node->parents = std::move(parents);
        node->backward = std::move(backward_fn);
    }
    return Var(std::move(node));
}

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

} // namespace

Tensor& Node::grad_buffer() {
    if (grad.empty() && !value.empty()) grad = Tensor(value.shape(), 0.0);
    return grad;
}

Var parameter(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = true;
    node->op = "parameter";
    return Var(std::move(node));
}

Var constant(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->op = "constant";
    return Var(std::move(node));
}

void set_nan_check(bool enabled) { g_nan_check.store(enabled); }
bool nan_check_enabled() { return g_nan_check.load(); }

void backward(const Var& loss) {
    if (!loss.node()) throw ArgumentError("backward on an empty variable");
    if (loss.value().size() != 1) {
        throw ShapeError("backward needs a scalar loss, got " + shape_string(loss.value().shape()));
    }
    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    auto run = [&](bool checked) {
        loss.node()->grad_buffer().fill(1.0);
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node* node = *it;
            if (!node->backward) continue;
            node->grad_buffer();
            node->backward(*node);
            if (!checked) continue;
            for (const auto& p : node->parents) {
                if (p->requires_grad && !p->grad.all_finite()) {
                    throw NumericError(std::string("non-finite gradient produced by op '") + node->op + "'");
                }
            }
        }
    };
    // Fast pass; non-finite values reach the leaves, so only they are
    // checked. On failure the pass is repeated with per-op checks to name the
    // culprit.
    std::vector<Tensor> saved;
    for (Node* node : order) {
        if (!node->backward) saved.push_back(node->grad);
    }
    run(false);
    const bool finite = std::all_of(order.begin(), order.end(), [](const Node* node) {
        return node->backward || node->grad.all_finite();
    });
    if (finite) return;
    std::size_t leaf = 0;
    for (Node* node : order) {
        if (node->backward) node->grad = Tensor();
        else node->grad = saved[leaf++];
    }
    run(true);
    throw NumericError("non-finite gradient");
}

// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
    const auto& av = a.value();
    const auto& bv = b.value();
    if (av.cols() != bv.rows()) {
        throw ShapeError("matmul: " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
    }
    Tensor out = Tensor::matrix(av.rows(), bv.cols());
    view(out).noalias() = view(av) * view(bv);
    return make_op("matmul", std::move(out), {a.node(), b.node()}, [](Node& self) {
        Node& pa = parent(self, 0);
        Node& pb = parent(self, 1);
        if (pa.requires_grad) view(pa.grad_buffer()).noalias() += view(self.grad) * view(pb.value).transpose();
        if (pb.requires_grad) view(pb.grad_buffer()).noalias() += view(pa.value).transpose() * view(self.grad);
    });
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    return make_op("add", std::move(out), {a.node(), b.node()}, [](Node& self) {
        for (std::size_t k = 0; k < 2; ++k) {
            Node& p = parent(self, k);
            if (!p.requires_grad) continue;
            auto& g = p.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

Var add_bias(const Var& a, const Var& bias) {
    const auto& av = a.value();
    const auto& bv = bias.value();
    if (bv.size() != av.cols()) {
        throw ShapeError("add_bias: " + shape_string(av.shape()) + " + " + shape_string(bv.shape()));
    }
    Tensor out = av;
    const auto m = av.cols();
    for (std::size_t r = 0; r < av.rows(); ++r) {
        for (std::size_t c = 0; c < m; ++c) out[r * m + c] += bv[c];
    }
    return make_op("add_bias", std::move(out), {a.node(), bias.node()}, [m](Node& self) {
        Node& pa = parent(self, 0);
        Node& pb = parent(self, 1);
        if (pa.requires_grad) {
            auto& g = pa.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            auto& g = pb.grad_buffer();
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % m] += self.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "mul");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    return make_op("mul", std::move(out), {a.node(), b.node()}, [](Node& self) {
        Node& pa = parent(self, 0);
        Node& pb = parent(self, 1);
        if (pa.requires_grad) {
            auto& g = pa.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            auto& g = pb.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
        }
    });
}

Var scale(const Var& a, double s) {
    Tensor out = a.value();
    for (auto& v : out.values()) v *= s;
    return make_op("scale", std::move(out), {a.node()}, [s](Node& self) {
        auto& g = parent(self, 0).grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
    });
}

Var leaky_relu(const Var& a, double slope) {
    Tensor out = a.value();
    for (auto& v : out.values()) v = v > 0.0 ? v : slope * v;
    return make_op("leaky_relu", std::move(out), {a.node()}, [slope](Node& self) {
        Node& p = parent(self, 0);
        auto& g = p.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += self.grad[i] * (p.value[i] > 0.0 ? 1.0 : slope);
        }
    });
}

Var elu(const Var& a, double alpha) {
    Tensor out = a.value();
    for (auto& v : out.values()) v = v > 0.0 ? v : alpha * std::expm1(v);
    return make_op("elu", std::move(out), {a.node()}, [alpha](Node& self) {
        Node& p = parent(self, 0);
        auto& g = p.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += self.grad[i] * (p.value[i] > 0.0 ? 1.0 : self.value[i] + alpha);
        }
    });
}

Var gather_rows(const Var& a, Index index) {
    const auto& av = a.value();
    const auto m = av.cols();
    require_index(index, av.rows(), "gather_rows");
    Tensor out = Tensor::matrix(index.size(), m);
    for (std::size_t i = 0; i < index.size(); ++i) {
        std::copy_n(&av[index[i] * m], m, &out[i * m]);
    }
    return make_op("gather_rows", std::move(out), {a.node()},
                   [index = std::move(index), m](Node& self) {
                       auto& g = parent(self, 0).grad_buffer();
                       for (std::size_t i = 0; i < index.size(); ++i) {
                           double* dst = &g[index[i] * m];
                           const double* src = &self.grad[i * m];
                           for (std::size_t c = 0; c < m; ++c) dst[c] += src[c];
                       }
                   });
}

Var segment_sum(const Var& a, Index segment, std::size_t num_segments) {
    const auto& av = a.value();
    if (segment.size() != av.rows()) throw ShapeError("segment_sum: segment length mismatch");
    require_index(segment, num_segments, "segment_sum");
    const auto m = av.cols();
    Tensor out = Tensor::matrix(num_segments, m);
    for (std::size_t i = 0; i < segment.size(); ++i) {
        for (std::size_t c = 0; c < m; ++c) out[segment[i] * m + c] += av[i * m + c];
    }
    return make_op("segment_sum", std::move(out), {a.node()},
                   [segment = std::move(segment), m](Node& self) {
                       auto& g = parent(self, 0).grad_buffer();
                       for (std::size_t i = 0; i < segment.size(); ++i) {
                           for (std::size_t c = 0; c < m; ++c) g[i * m + c] += self.grad[segment[i] * m + c];
                       }
                   });
}

Var segment_mean(const Var& a, Index segment, std::size_t num_segments) {
    const auto& av = a.value();
    if (segment.size() != av.rows()) throw ShapeError("segment_mean: segment length mismatch");
    require_index(segment, num_segments, "segment_mean");
    const auto m = av.cols();
    std::vector<double> inv_count(num_segments, 0.0);
    for (auto s : segment) inv_count[s] += 1.0;
    for (auto& c : inv_count) c = c > 0.0 ? 1.0 / c : 0.0;
    Tensor out = Tensor::matrix(num_segments, m);
    for (std::size_t i = 0; i < segment.size(); ++i) {
        for (std::size_t c = 0; c < m; ++c) out[segment[i] * m + c] += av[i * m + c];
    }
    for (std::size_t s = 0; s < num_segments; ++s) {
        for (std::size_t c = 0; c < m; ++c) out[s * m + c] *= inv_count[s];
    }
    return make_op("segment_mean", std::move(out), {a.node()},
                   [segment = std::move(segment), inv_count = std::move(inv_count), m](Node& self) {
                       auto& g = parent(self, 0).grad_buffer();
                       for (std::size_t i = 0; i < segment.size(); ++i) {
                           const double w = inv_count[segment[i]];
                           for (std::size_t c = 0; c < m; ++c) {
                               g[i * m + c] += w * self.grad[segment[i] * m + c];
                           }
                       }
                   });
}

Var head_dot(const Var& z, const Var& att) {
    const auto& zv = z.value();
    const auto& av = att.value();
    const auto heads = av.rows();
    const auto ch = av.cols();
    if (zv.cols() != heads * ch) {
        throw ShapeError("head_dot: " + shape_string(zv.shape()) + " vs " + shape_string(av.shape()));
    }
    const auto e_count = zv.rows();
    Tensor out = Tensor::matrix(e_count, heads);
    for (std::size_t e = 0; e < e_count; ++e) {
        const double* zr = &zv[e * heads * ch];
        for (std::size_t h = 0; h < heads; ++h) {
            double s = 0.0;
            for (std::size_t c = 0; c < ch; ++c) s += zr[h * ch + c] * av[h * ch + c];
            out[e * heads + h] = s;
        }
    }
    return make_op("head_dot", std::move(out), {z.node(), att.node()}, [heads, ch](Node& self) {
        Node& pz = parent(self, 0);
        Node& pa = parent(self, 1);
        const auto e_count = self.value.rows();
        if (pz.requires_grad) {
            auto& g = pz.grad_buffer();
            for (std::size_t e = 0; e < e_count; ++e) {
                for (std::size_t h = 0; h < heads; ++h) {
                    const double d = self.grad[e * heads + h];
                    for (std::size_t c = 0; c < ch; ++c) g[e * heads * ch + h * ch + c] += d * pa.value[h * ch + c];
                }
            }
        }
        if (pa.requires_grad) {
            auto& g = pa.grad_buffer();
            for (std::size_t e = 0; e < e_count; ++e) {
                for (std::size_t h = 0; h < heads; ++h) {
                    const double d = self.grad[e * heads + h];
                    for (std::size_t c = 0; c < ch; ++c) g[h * ch + c] += d * pz.value[e * heads * ch + h * ch + c];
                }
            }
        }
    });
}

Var segment_softmax(const Var& scores, Index segment, std::size_t num_segments,
                    bool require_nonempty) {
    const auto& sv = scores.value();
    const auto e_count = sv.rows();
    const auto heads = sv.cols();
    if (segment.size() != e_count) throw ShapeError("segment_softmax: segment length mismatch");
    require_index(segment, num_segments, "segment_softmax");
    std::vector<double> mx(num_segments * heads, -std::numeric_limits<double>::infinity());
    for (std::size_t e = 0; e < e_count; ++e) {
        for (std::size_t h = 0; h < heads; ++h) {
            auto& m = mx[segment[e] * heads + h];
            m = std::max(m, sv[e * heads + h]);
        }
    }
    if (require_nonempty) {
        for (std::size_t s = 0; s < num_segments; ++s) {
            if (heads > 0 && std::isinf(mx[s * heads])) {
                throw StructuralError("softmax over empty neighborhood of node " + std::to_string(s));
            }
        }
    }
    Tensor out = Tensor::matrix(e_count, heads);
    std::vector<double> denom(num_segments * heads, 0.0);
    for (std::size_t e = 0; e < e_count; ++e) {
        for (std::size_t h = 0; h < heads; ++h) {
            const double v = std::exp(sv[e * heads + h] - mx[segment[e] * heads + h]);
            out[e * heads + h] = v;
            denom[segment[e] * heads + h] += v;
        }
    }
    for (std::size_t e = 0; e < e_count; ++e) {
        for (std::size_t h = 0; h < heads; ++h) out[e * heads + h] /= denom[segment[e] * heads + h];
    }
    return make_op("segment_softmax", std::move(out), {scores.node()},
                   [segment = std::move(segment), num_segments, heads](Node& self) {
                       auto& g = parent(self, 0).grad_buffer();
                       const auto e_count = self.value.rows();
                       std::vector<double> dot(num_segments * heads, 0.0);
                       for (std::size_t e = 0; e < e_count; ++e) {
                           for (std::size_t h = 0; h < heads; ++h) {
                               dot[segment[e] * heads + h] += self.value[e * heads + h] * self.grad[e * heads + h];
                           }
                       }
                       for (std::size_t e = 0; e < e_count; ++e) {
                           for (std::size_t h = 0; h < heads; ++h) {
                               const auto i = e * heads + h;
                               g[i] += self.value[i] * (self.grad[i] - dot[segment[e] * heads + h]);
                           }
                       }
                   });
}

Var attention_aggregate(const Var& alpha, const Var& msg, Index target, std::size_t num_targets) {
    const auto& al = alpha.value();
    const auto& mv = msg.value();
    const auto e_count = al.rows();
    const auto heads = al.cols();
    if (mv.rows() != e_count || heads == 0 || mv.cols() % heads != 0 || target.size() != e_count) {
        throw ShapeError("attention_aggregate: " + shape_string(al.shape()) + " vs " +
                         shape_string(mv.shape()));
    }
    require_index(target, num_targets, "attention_aggregate");
    const auto ch = mv.cols() / heads;
    const auto width = heads * ch;
    Tensor out = Tensor::matrix(num_targets, width);
    for (std::size_t e = 0; e < e_count; ++e) {
        double* o = &out[target[e] * width];
        const double* m = &mv[e * width];
        for (std::size_t h = 0; h < heads; ++h) {
            const double a = al[e * heads + h];
            for (std::size_t c = 0; c < ch; ++c) o[h * ch + c] += a * m[h * ch + c];
        }
    }
    return make_op("attention_aggregate", std::move(out), {alpha.node(), msg.node()},
                   [target = std::move(target), heads, ch](Node& self) {
                       Node& pa = parent(self, 0);
                       Node& pm = parent(self, 1);
                       const auto width = heads * ch;
                       const auto e_count = target.size();
                       Tensor* ga = pa.requires_grad ? &pa.grad_buffer() : nullptr;
                       Tensor* gm = pm.requires_grad ? &pm.grad_buffer() : nullptr;
                       for (std::size_t e = 0; e < e_count; ++e) {
                           const double* d = &self.grad[target[e] * width];
                           for (std::size_t h = 0; h < heads; ++h) {
                               if (ga) {
                                   double s = 0.0;
                                   for (std::size_t c = 0; c < ch; ++c) s += d[h * ch + c] * pm.value[e * width + h * ch + c];
                                   (*ga)[e * heads + h] += s;
                               }
                               if (gm) {
                                   const double a = pa.value[e * heads + h];
                                   for (std::size_t c = 0; c < ch; ++c) (*gm)[e * width + h * ch + c] += a * d[h * ch + c];
                               }
                           }
                       }
                   });
}

Var gatv2_edge_scores(const Var& zd, const Var& zs, const Var& type_bias, const Var& att, Index src,
                      Index dst, Index type, double slope) {
    const auto& dv = zd.value();
    const auto& sv = zs.value();
    const auto& bv = type_bias.value();
    const auto& av = att.value();
    const auto heads = av.rows();
    const auto ch = av.cols();
    const auto width = heads * ch;
    const auto e_count = src.size();
    if (dv.cols() != width || sv.cols() != width || bv.cols() != width || dv.rows() != sv.rows() ||
        dst.size() != e_count || type.size() != e_count) {
        throw ShapeError("gatv2_edge_scores: " + shape_string(dv.shape()) + ", " + shape_string(sv.shape()) +
                         ", " + shape_string(bv.shape()) + ", att " + shape_string(av.shape()));
    }
    require_index(src, sv.rows(), "gatv2_edge_scores");
    require_index(dst, dv.rows(), "gatv2_edge_scores");
    require_index(type, bv.rows(), "gatv2_edge_scores");
    Tensor out = Tensor::matrix(e_count, heads);
    for (std::size_t e = 0; e < e_count; ++e) {
        const double* d = &dv[dst[e] * width];
        const double* s = &sv[src[e] * width];
        const double* b = &bv[type[e] * width];
        for (std::size_t h = 0; h < heads; ++h) {
            double acc = 0.0;
            for (std::size_t c = 0; c < ch; ++c) {
                const auto k = h * ch + c;
                const double pre = d[k] + s[k] + b[k];
                acc += av[k] * (pre > 0.0 ? pre : slope * pre);
            }
            out[e * heads + h] = acc;
        }
    }
    return make_op("gatv2_edge_scores", std::move(out), {zd.node(), zs.node(), type_bias.node(), att.node()},
                   [src = std::move(src), dst = std::move(dst), type = std::move(type), heads, ch,
                    slope](Node& self) {
                       Node& pd = parent(self, 0);
                       Node& ps = parent(self, 1);
                       Node& pb = parent(self, 2);
                       Node& pa = parent(self, 3);
                       Tensor* gd = pd.requires_grad ? &pd.grad_buffer() : nullptr;
                       Tensor* gs = ps.requires_grad ? &ps.grad_buffer() : nullptr;
                       Tensor* gb = pb.requires_grad ? &pb.grad_buffer() : nullptr;
                       Tensor* ga = pa.requires_grad ? &pa.grad_buffer() : nullptr;
                       const auto width = heads * ch;
                       std::vector<double> gpre(width);
                       for (std::size_t e = 0; e < src.size(); ++e) {
                           const double* d = &pd.value[dst[e] * width];
                           const double* s = &ps.value[src[e] * width];
                           const double* b = &pb.value[type[e] * width];
                           for (std::size_t h = 0; h < heads; ++h) {
                               const double go = self.grad[e * heads + h];
                               for (std::size_t c = 0; c < ch; ++c) {
                                   const auto k = h * ch + c;
                                   const double pre = d[k] + s[k] + b[k];
                                   if (ga) (*ga)[k] += go * (pre > 0.0 ? pre : slope * pre);
                                   gpre[k] = go * pa.value[k] * (pre > 0.0 ? 1.0 : slope);
                               }
                           }
                           if (gd) {
                               double* o = &(*gd)[dst[e] * width];
                               for (std::size_t k = 0; k < width; ++k) o[k] += gpre[k];
                           }
                           if (gs) {
                               double* o = &(*gs)[src[e] * width];
                               for (std::size_t k = 0; k < width; ++k) o[k] += gpre[k];
                           }
                           if (gb) {
                               double* o = &(*gb)[type[e] * width];
                               for (std::size_t k = 0; k < width; ++k) o[k] += gpre[k];
                           }
                       }
                   });
}

Var message_aggregate(const Var& alpha, const Var& zs, const Var& type_bias, Index src, Index dst,
                      Index type, std::size_t num_targets) {
    const auto& al = alpha.value();
    const auto& sv = zs.value();
    const auto& bv = type_bias.value();
    const auto e_count = al.rows();
    const auto heads = al.cols();
    const auto width = sv.cols();
    if (heads == 0 || width % heads != 0 || bv.cols() != width || src.size() != e_count ||
        dst.size() != e_count || type.size() != e_count) {
        throw ShapeError("message_aggregate: alpha " + shape_string(al.shape()) + ", " + shape_string(sv.shape()) +
                         ", " + shape_string(bv.shape()));
    }
    require_index(src, sv.rows(), "message_aggregate");
    require_index(dst, num_targets, "message_aggregate");
    require_index(type, bv.rows(), "message_aggregate");
    const auto ch = width / heads;
    Tensor out = Tensor::matrix(num_targets, width);
    for (std::size_t e = 0; e < e_count; ++e) {
        double* o = &out[dst[e] * width];
        const double* s = &sv[src[e] * width];
        const double* b = &bv[type[e] * width];
        for (std::size_t h = 0; h < heads; ++h) {
            const double a = al[e * heads + h];
            for (std::size_t c = 0; c < ch; ++c) {
                const auto k = h * ch + c;
                o[k] += a * (s[k] + b[k]);
            }
        }
    }
    return make_op("message_aggregate", std::move(out), {alpha.node(), zs.node(), type_bias.node()},
                   [src = std::move(src), dst = std::move(dst), type = std::move(type), heads, ch](Node& self) {
                       Node& pa = parent(self, 0);
                       Node& ps = parent(self, 1);
                       Node& pb = parent(self, 2);
                       Tensor* ga = pa.requires_grad ? &pa.grad_buffer() : nullptr;
                       Tensor* gs = ps.requires_grad ? &ps.grad_buffer() : nullptr;
                       Tensor* gb = pb.requires_grad ? &pb.grad_buffer() : nullptr;
                       const auto width = heads * ch;
                       for (std::size_t e = 0; e < src.size(); ++e) {
                           const double* g = &self.grad[dst[e] * width];
                           const double* s = &ps.value[src[e] * width];
                           const double* b = &pb.value[type[e] * width];
                           for (std::size_t h = 0; h < heads; ++h) {
                               const double a = pa.value[e * heads + h];
                               double dot = 0.0;
                               for (std::size_t c = 0; c < ch; ++c) {
                                   const auto k = h * ch + c;
                                   dot += g[k] * (s[k] + b[k]);
                                   if (gs) (*gs)[src[e] * width + k] += a * g[k];
                                   if (gb) (*gb)[type[e] * width + k] += a * g[k];
                               }
                               if (ga) (*ga)[e * heads + h] += dot;
                           }
                       }
                   });
}

Var group_norm(const Var& x, const Var& gamma, const Var& beta, std::size_t groups, double eps) {
    const auto& xv = x.value();
    const auto n = xv.rows();
    const auto c = xv.cols();
    if (groups == 0 || c % groups != 0) {
        throw ShapeError("group_norm: " + std::to_string(c) + " channels not divisible into " +
                         std::to_string(groups) + " groups");
    }
    if (gamma.value().size() != c || beta.value().size() != c) {
        throw ShapeError("group_norm: scale/shift must have " + std::to_string(c) + " entries");
    }
    const auto gs = c / groups;
    Tensor xhat = Tensor::matrix(n, c);
    std::vector<double> inv_std(n * groups);
    Tensor out = Tensor::matrix(n, c);
    const auto& gv = gamma.value();
    const auto& bv = beta.value();
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t g = 0; g < groups; ++g) {
            const double* xr = &xv[r * c + g * gs];
            double mean = 0.0;
            for (std::size_t k = 0; k < gs; ++k) mean += xr[k];
            mean /= static_cast<double>(gs);
            double var = 0.0;
            for (std::size_t k = 0; k < gs; ++k) var += (xr[k] - mean) * (xr[k] - mean);
            var /= static_cast<double>(gs);
            const double is = 1.0 / std::sqrt(var + eps);
            inv_std[r * groups + g] = is;
            for (std::size_t k = 0; k < gs; ++k) {
                const auto ch = g * gs + k;
                const double xh = (xr[k] - mean) * is;
                xhat[r * c + ch] = xh;
                out[r * c + ch] = gv[ch] * xh + bv[ch];
            }
        }
    }
    return make_op("group_norm", std::move(out), {x.node(), gamma.node(), beta.node()},
                   [xhat = std::move(xhat), inv_std = std::move(inv_std), groups, gs](Node& self) {
                       Node& px = parent(self, 0);
                       Node& pg = parent(self, 1);
                       Node& pb = parent(self, 2);
                       const auto n = self.value.rows();
                       const auto c = self.value.cols();
                       const auto& dy = self.grad;
                       if (pg.requires_grad || pb.requires_grad) {
                           auto& gg = pg.grad_buffer();
                           auto& gb = pb.grad_buffer();
                           for (std::size_t r = 0; r < n; ++r) {
                               for (std::size_t k = 0; k < c; ++k) {
                                   gg[k] += dy[r * c + k] * xhat[r * c + k];
                                   gb[k] += dy[r * c + k];
                               }
                           }
                       }
                       if (!px.requires_grad) return;
                       auto& gx = px.grad_buffer();
                       const double inv_m = 1.0 / static_cast<double>(gs);
                       for (std::size_t r = 0; r < n; ++r) {
                           for (std::size_t g = 0; g < groups; ++g) {
                               double mean_d = 0.0;
                               double mean_dx = 0.0;
                               for (std::size_t k = 0; k < gs; ++k) {
                                   const auto i = r * c + g * gs + k;
                                   const double dxh = dy[i] * pg.value[g * gs + k];
                                   mean_d += dxh;
                                   mean_dx += dxh * xhat[i];
                               }
                               mean_d *= inv_m;
                               mean_dx *= inv_m;
                               const double is = inv_std[r * groups + g];
                               for (std::size_t k = 0; k < gs; ++k) {
                                   const auto i = r * c + g * gs + k;
                                   const double dxh = dy[i] * pg.value[g * gs + k];
                                   gx[i] += is * (dxh - mean_d - xhat[i] * mean_dx);
                               }
                           }
                       }
                   });
}

Var apply_mask(const Var& x, Tensor mask) {
    require_same_shape(x.value(), mask, "apply_mask");
    Tensor out = x.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
    return make_op("dropout", std::move(out), {x.node()}, [mask = std::move(mask)](Node& self) {
        auto& g = parent(self, 0).grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
    });
}

Var concat_cols(const Var& a, const Var& b) {
    const auto& av = a.value();
    const auto& bv = b.value();
    if (av.rows() != bv.rows()) {
        throw ShapeError("concat_cols: " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
    }
    const auto n = av.rows();
    const auto ca = av.cols();
    const auto cb = bv.cols();
    Tensor out = Tensor::matrix(n, ca + cb);
    for (std::size_t r = 0; r < n; ++r) {
        std::copy_n(&av[r * ca], ca, &out[r * (ca + cb)]);
        std::copy_n(&bv[r * cb], cb, &out[r * (ca + cb) + ca]);
    }
    return make_op("concat_cols", std::move(out), {a.node(), b.node()}, [n, ca, cb](Node& self) {
        Node& pa = parent(self, 0);
        Node& pb = parent(self, 1);
        for (std::size_t r = 0; r < n; ++r) {
            if (pa.requires_grad) {
                auto& g = pa.grad_buffer();
                for (std::size_t k = 0; k < ca; ++k) g[r * ca + k] += self.grad[r * (ca + cb) + k];
            }
            if (pb.requires_grad) {
                auto& g = pb.grad_buffer();
                for (std::size_t k = 0; k < cb; ++k) g[r * cb + k] += self.grad[r * (ca + cb) + ca + k];
            }
        }
    });
}

Var reshape(const Var& a, std::vector<std::size_t> shape) {
    Tensor out = a.value().reshaped(std::move(shape));
    return make_op("reshape", std::move(out), {a.node()}, [](Node& self) {
        auto& g = parent(self, 0).grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a.value().values()) s += v;
    return make_op("sum", Tensor({1, 1}, std::vector<double>{s}), {a.node()}, [](Node& self) {
        auto& g = parent(self, 0).grad_buffer();
        for (auto& v : g.values()) v += self.grad[0];
    });
}

Var mse(const Var& pred, const Tensor& target) {
    if (pred.value().size() != target.size() || target.size() == 0) {
        throw ShapeError("mse: " + shape_string(pred.value().shape()) + " vs " +
                         shape_string(target.shape()));
    }
    const auto n = static_cast<double>(target.size());
    double s = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double d = pred.value()[i] - target[i];
        s += d * d;
    }
    return make_op("mse", Tensor({1, 1}, std::vector<double>{s / n}), {pred.node()},
                   [target, n](Node& self) {
                       Node& p = parent(self, 0);
                       auto& g = p.grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) {
                           g[i] += self.grad[0] * 2.0 * (p.value[i] - target[i]) / n;
                       }
                   });
}

} // namespace ad
} // namespace neurograph
