// SPDX-License-Identifier: Apache-2.0
#include "neurograph/gat.hpp"

#include <algorithm>
#include <cmath>

#include "neurograph/errors.hpp"
#include "neurograph/io.hpp"

namespace neurograph {

std::string_view variant_name(AttentionVariant v) {
    return v == AttentionVariant::gatv2 ? "gatv2" : "gat";
}

AttentionVariant parse_variant(std::string_view name) {
    if (name == "gatv2") return AttentionVariant::gatv2;
    if (name == "gat") return AttentionVariant::gat;
    throw ArgumentError("unknown attention variant '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
    if (input_dim == 0 || hidden == 0 || heads == 0 || num_layers == 0 || mlp_hidden == 0 ||
        num_bands == 0) {
        throw ArgumentError("model dimensions must be positive");
    }
    if (hidden % heads != 0) throw ArgumentError("hidden size must be divisible by the head count");
    if (groups == 0 || hidden % groups != 0) {
        throw ArgumentError("hidden size must be divisible by the GroupNorm group count");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ArgumentError("dropout must lie in [0, 1)");
    if (!(leaky_slope >= 0.0)) throw ArgumentError("leaky slope must be non-negative");
}

nlohmann::ordered_json to_json(const ModelConfig& c) {
    nlohmann::ordered_json j;
    j["input_dim"] = c.input_dim;
    j["hidden"] = c.hidden;
    j["heads"] = c.heads;
    j["num_layers"] = c.num_layers;
    j["groups"] = c.groups;
    j["mlp_hidden"] = c.mlp_hidden;
    j["num_bands"] = c.num_bands;
    j["dropout"] = c.dropout;
    j["leaky_slope"] = c.leaky_slope;
    j["variant"] = variant_name(c.variant);
    return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    for (const auto& [key, value] : j.items()) {
        if (key == "input_dim") c.input_dim = value.get<std::size_t>();
        else if (key == "hidden") c.hidden = value.get<std::size_t>();
        else if (key == "heads") c.heads = value.get<std::size_t>();
        else if (key == "num_layers") c.num_layers = value.get<std::size_t>();
        else if (key == "groups") c.groups = value.get<std::size_t>();
        else if (key == "mlp_hidden") c.mlp_hidden = value.get<std::size_t>();
        else if (key == "num_bands") c.num_bands = value.get<std::size_t>();
        else if (key == "dropout") c.dropout = value.get<double>();
        else if (key == "leaky_slope") c.leaky_slope = value.get<double>();
        else if (key == "variant") c.variant = parse_variant(value.get<std::string>());
        else throw ConfigError("unknown model key '" + key + "'");
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------

namespace {

double leaky(double x, double slope) { return x > 0.0 ? x : slope * x; }

} // namespace

double gatv2_score(std::span<const double> x_v, std::span<const double> x_u, const Tensor& w,
                   std::span<const double> a, double slope) {
    const auto d = x_v.size();
    if (x_u.size() != d || w.cols() != 2 * d || w.rows() != a.size()) {
        throw ShapeError("gatv2_score: dimension mismatch");
    }
    double s = 0.0;
    for (std::size_t o = 0; o < w.rows(); ++o) {
        double z = 0.0;
        for (std::size_t i = 0; i < d; ++i) z += w(o, i) * x_v[i] + w(o, d + i) * x_u[i];
        s += a[o] * leaky(z, slope);
    }
    return s;
}

double gat_score(std::span<const double> x_v, std::span<const double> x_u, const Tensor& w,
                 std::span<const double> a, double slope) {
    const auto d = x_v.size();
    const auto out = w.rows();
    if (x_u.size() != d || w.cols() != d || a.size() != 2 * out) {
        throw ShapeError("gat_score: dimension mismatch");
    }
    double s = 0.0;
    for (std::size_t o = 0; o < out; ++o) {
        double zv = 0.0;
        double zu = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            zv += w(o, i) * x_v[i];
            zu += w(o, i) * x_u[i];
        }
        s += a[o] * zv + a[out + o] * zu;
    }
    return leaky(s, slope);
}

std::vector<double> attention_normalize(std::span<const double> scores) {
    if (scores.empty()) throw StructuralError("attention over an empty neighborhood");
    const double mx = *std::max_element(scores.begin(), scores.end());
    std::vector<double> out(scores.size());
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp(scores[i] - mx);
        total += out[i];
    }
    for (auto& v : out) v /= total;
    return out;
}

// ---------------------------------------------------------------------------

GraphBatch make_batch(std::span<const MultiLayerGraph* const> graphs) {
    if (graphs.empty()) throw ArgumentError("make_batch: no graphs");
    GraphBatch b;
    const auto& first = *graphs.front();
    b.num_graphs = graphs.size();
    b.num_layers = first.layer_count();
    b.nodes_per_layer = first.nodes_per_layer();
    const auto per_graph = first.node_count();
    const auto dim = first.feature_dim();
    if (dim == 0) throw ArgumentError("make_batch: graph has no node features");
    b.num_nodes = per_graph * graphs.size();
    b.features = Tensor::matrix(b.num_nodes, dim);
    b.pool_segment.resize(b.num_nodes);

    for (std::size_t g = 0; g < graphs.size(); ++g) {
        const auto& graph = *graphs[g];
        if (graph.layer_count() != b.num_layers || graph.nodes_per_layer() != b.nodes_per_layer ||
            graph.feature_dim() != dim) {
            throw ShapeError("make_batch: graphs differ in layout or feature size");
        }
        const auto offset = g * per_graph;
        std::copy(graph.features().begin(), graph.features().end(), &b.features[offset * dim]);
        for (std::size_t v = 0; v < per_graph; ++v) {
            b.pool_segment[offset + v] = g * b.num_layers + graph.layer_of(v);
        }
        std::vector<char> self_loop(per_graph, 0);
        for (const auto& e : graph.global_edges()) {
            const auto type = static_cast<std::size_t>(e.type);
            b.src.push_back(offset + e.u);
            b.dst.push_back(offset + e.v);
            b.edge_type.push_back(type);
            if (e.u != e.v) {
                b.src.push_back(offset + e.v);
                b.dst.push_back(offset + e.u);
                b.edge_type.push_back(type);
            } else {
                self_loop[e.u] = 1;
            }
        }
        for (std::size_t v = 0; v < per_graph; ++v) {
            if (!self_loop[v]) {
                throw StructuralError("node " + std::to_string(v) +
                                      " lacks a self-loop; attention needs a nonempty neighborhood");
            }
        }
    }
    return b;
}

GraphBatch make_batch(const MultiLayerGraph& graph) {
    const MultiLayerGraph* ptr = &graph;
    return make_batch(std::span<const MultiLayerGraph* const>(&ptr, 1));
}

// ---------------------------------------------------------------------------

namespace {

Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t = Tensor::matrix(fan_in, fan_out);
    for (auto& v : t.values()) v = rng.uniform(-limit, limit);
    return t;
}

std::string layer_name(std::size_t l, const char* what) {
    return "layer" + std::to_string(l) + "." + what;
}

std::string norm_name(std::size_t l, const char* what) {
    return "norm" + std::to_string(l) + "." + what;
}

} // namespace

GatModel::GatModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    Rng rng(seed);
    const auto hc = config_.hidden;
    const auto c = config_.head_dim();
    for (std::size_t l = 0; l < config_.num_layers; ++l) {
        const auto d_in = l == 0 ? config_.input_dim : hc;
        if (config_.variant == AttentionVariant::gatv2) add(layer_name(l, "w_dst"), glorot(d_in, hc, rng));
        add(layer_name(l, "w_src"), glorot(d_in, hc, rng));
        add(layer_name(l, "w_type"), glorot(kEdgeTypeCount, hc, rng));
        add(layer_name(l, "att"), glorot(config_.heads, c, rng));
        if (config_.variant == AttentionVariant::gat) add(layer_name(l, "att_dst"), glorot(config_.heads, c, rng));
        add(norm_name(l, "gamma"), Tensor::matrix(1, hc, 1.0));
        add(norm_name(l, "beta"), Tensor::matrix(1, hc, 0.0));
    }
    add("head.w1", glorot(config_.num_bands * hc, config_.mlp_hidden, rng));
    add("head.b1", Tensor::matrix(1, config_.mlp_hidden, 0.0));
    add("head.w2", glorot(config_.mlp_hidden, 1, rng));
    add("head.b2", Tensor::matrix(1, 1, 0.0));
}

GatModel::GatModel(ModelConfig config, std::vector<NamedParameter> params)
    : config_(std::move(config)), params_(std::move(params)) {}

void GatModel::add(std::string name, Tensor value) {
    params_.push_back({std::move(name), ad::parameter(std::move(value))});
}

std::size_t GatModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.var.value().size();
    return n;
}

const ad::Var& GatModel::param(std::string_view name) const {
    for (const auto& p : params_) {
        if (p.name == name) return p.var;
    }
    throw ArgumentError("model has no parameter '" + std::string(name) + "'");
}

void GatModel::zero_grad() {
    for (auto& p : params_) p.var.zero_grad();
}

std::vector<Tensor> GatModel::snapshot() const {
    std::vector<Tensor> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.var.value());
    return out;
}

void GatModel::restore(const std::vector<Tensor>& values) {
    if (values.size() != params_.size()) throw ShapeError("restore: parameter count mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i].shape() != params_[i].var.value().shape()) {
            throw ShapeError("restore: shape mismatch for " + params_[i].name);
        }
        params_[i].var.mutable_value() = values[i];
    }
}

void GatModel::set_output_bias(double value) {
    ad::Var bias = param("head.b2");
    bias.mutable_value()[0] = value;
}

GatModel GatModel::clone() const {
    std::vector<NamedParameter> params;
    params.reserve(params_.size());
    for (const auto& p : params_) params.push_back({p.name, ad::parameter(p.var.value())});
    return GatModel(config_, std::move(params));
}

// ---------------------------------------------------------------------------

namespace {

Tensor dropout_mask(const std::vector<std::size_t>& shape, double p, Rng& rng) {
    Tensor mask(shape, 0.0);
    const double keep = 1.0 / (1.0 - p);
    for (auto& v : mask.values()) v = rng.uniform() < p ? 0.0 : keep;
    return mask;
}

} // namespace

ad::Var readout(const GatModel& model, const ad::Var& node_features, const GraphBatch& batch) {
    const auto& cfg = model.config();
    if (batch.num_layers != cfg.num_bands) {
        throw ShapeError("readout: model expects " + std::to_string(cfg.num_bands) +
                         " band layers, batch has " + std::to_string(batch.num_layers));
    }
    const auto width = node_features.value().cols();
    auto pooled = ad::segment_mean(node_features, batch.pool_segment, batch.num_graphs * batch.num_layers);
    auto concat = ad::reshape(pooled, {batch.num_graphs, batch.num_layers * width});
    auto h = ad::elu(ad::add_bias(ad::matmul(concat, model.param("head.w1")), model.param("head.b1")));
    return ad::add_bias(ad::matmul(h, model.param("head.w2")), model.param("head.b2"));
}

ForwardResult forward(const GatModel& model, const GraphBatch& batch, bool train_mode, Rng* rng) {
    const auto& cfg = model.config();
    if (train_mode && cfg.dropout > 0.0 && rng == nullptr) {
        throw ArgumentError("forward: train mode with dropout needs an RNG");
    }
    if (batch.features.cols() != cfg.input_dim) {
        throw ShapeError("forward: model expects " + std::to_string(cfg.input_dim) +
                         " input features, batch has " + std::to_string(batch.features.cols()));
    }
    const bool drop = train_mode && cfg.dropout > 0.0;
    ForwardResult result;
    ad::Var x = ad::constant(batch.features);
    const auto n = batch.num_nodes;

    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        const auto& w_src = model.param(layer_name(l, "w_src"));
        const auto& att = model.param(layer_name(l, "att"));
        const auto& w_type = model.param(layer_name(l, "w_type"));
        auto zs = ad::matmul(x, w_src);
        ad::Var score;
        if (cfg.variant == AttentionVariant::gatv2) {
            auto zd = ad::matmul(x, model.param(layer_name(l, "w_dst")));
            score = ad::gatv2_edge_scores(zd, zs, w_type, att, batch.src, batch.dst, batch.edge_type,
                                          cfg.leaky_slope);
        } else {
            // a^T [W x_v || W x_u] splits into per-node terms, gathered per edge.
            auto target = ad::gather_rows(ad::head_dot(zs, model.param(layer_name(l, "att_dst"))), batch.dst);
            auto source = ad::add(ad::gather_rows(ad::head_dot(zs, att), batch.src),
                                  ad::gather_rows(ad::head_dot(w_type, att), batch.edge_type));
            score = ad::leaky_relu(ad::add(target, source), cfg.leaky_slope);
        }
        auto alpha = ad::segment_softmax(score, batch.dst, n);
        result.attention.push_back({l, alpha.value()});
        if (drop) alpha = ad::apply_mask(alpha, dropout_mask(alpha.value().shape(), cfg.dropout, *rng));

        auto h = ad::message_aggregate(alpha, zs, w_type, batch.src, batch.dst, batch.edge_type, n);
        h = ad::group_norm(h, model.param(norm_name(l, "gamma")), model.param(norm_name(l, "beta")),
                           cfg.groups);
        h = ad::elu(h);
        if (drop) h = ad::apply_mask(h, dropout_mask(h.value().shape(), cfg.dropout, *rng));
        x = h;
    }
    result.node_features = x;
    result.prediction = readout(model, x, batch);
    return result;
}

double predict(const GatModel& model, const MultiLayerGraph& graph) {
    const auto batch = make_batch(graph);
    return forward(model, batch, false).prediction.value()[0];
}

// ---------------------------------------------------------------------------

nlohmann::ordered_json checkpoint_to_json(const GatModel& model) {
    nlohmann::ordered_json j;
    j["format"] = "neurograph-checkpoint";
    j["version"] = 1;
    j["config"] = to_json(model.config());
    nlohmann::ordered_json params = nlohmann::ordered_json::array();
    for (const auto& p : model.parameters()) {
        nlohmann::ordered_json jp;
        jp["name"] = p.name;
        jp["shape"] = p.var.value().shape();
        jp["data"] = p.var.value().storage();
        params.push_back(std::move(jp));
    }
    j["parameters"] = std::move(params);
    return j;
}

GatModel checkpoint_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != "neurograph-checkpoint" ||
            j.at("version").get<int>() != 1) {
            throw DataError("unsupported checkpoint format");
        }
        GatModel model(model_config_from_json(j.at("config")), 0);
        const auto& params = j.at("parameters");
        if (params.size() != model.parameters().size()) {
            throw DataError("checkpoint parameter count does not match its config");
        }
        std::vector<Tensor> values;
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto& jp = params[i];
            if (jp.at("name").get<std::string>() != model.parameters()[i].name) {
                throw DataError("checkpoint parameter order mismatch at " + std::to_string(i));
            }
            Tensor t(jp.at("shape").get<std::vector<std::size_t>>(), jp.at("data").get<std::vector<double>>());
            if (!t.all_finite()) throw NumericError("checkpoint holds non-finite values");
            values.push_back(std::move(t));
        }
        model.restore(values);
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed checkpoint: ") + e.what());
    }
}

void save_checkpoint(const GatModel& model, const std::filesystem::path& path) {
    write_file_atomic(path, checkpoint_to_json(model).dump() + "\n");
}

GatModel load_checkpoint(const std::filesystem::path& path) {
    try {
        return checkpoint_from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed checkpoint " + path.string() + ": " + e.what());
    }
}

} // namespace neurograph
