// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "neurograph/graph.hpp"
#include "neurograph/random.hpp"
#include "neurograph/tensor.hpp"

namespace neurograph {

enum class AttentionVariant : std::uint8_t {
    gatv2,  // a^T LeakyReLU(W [x_v || x_u])
    gat,    // LeakyReLU(a^T [W x_v || W x_u])
};

std::string_view variant_name(AttentionVariant v);
AttentionVariant parse_variant(std::string_view name);

struct ModelConfig {
    std::size_t input_dim = 21;
    std::size_t hidden = 64;
    std::size_t heads = 8;
    std::size_t num_layers = 2;
    std::size_t groups = 8;
    std::size_t mlp_hidden = 64;
    std::size_t num_bands = 3;
    double dropout = 0.5;
    double leaky_slope = 0.2;
    AttentionVariant variant = AttentionVariant::gatv2;

    void validate() const;
    std::size_t head_dim() const { return hidden / heads; }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

nlohmann::ordered_json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Scalar reference scores (one head)

/// a^T LeakyReLU(W [x_v || x_u]) with W of shape [d_out x 2 d_in].
double gatv2_score(std::span<const double> x_v, std::span<const double> x_u, const Tensor& w,
                   std::span<const double> a, double slope = 0.2);

/// LeakyReLU(a^T [W x_v || W x_u]) with W of shape [d_out x d_in] and a of
/// length 2 d_out.
double gat_score(std::span<const double> x_v, std::span<const double> x_u, const Tensor& w,
                 std::span<const double> a, double slope = 0.2);

/// Softmax over one neighborhood. Throws StructuralError when empty.
std::vector<double> attention_normalize(std::span<const double> scores);

// ---------------------------------------------------------------------------
// Batches

/// Disjoint union of graphs. Edges are directed message paths src -> dst:
/// intra and cross edges in both directions, self-loops once.
struct GraphBatch {
    std::size_t num_graphs = 0;
    std::size_t num_layers = 0;
    std::size_t nodes_per_layer = 0;
    std::size_t num_nodes = 0;
    Tensor features;            // num_nodes x feature_dim
    ad::Index src;
    ad::Index dst;
    ad::Index edge_type;        // EdgeType as index
    ad::Index pool_segment;     // node -> graph * num_layers + layer
};

GraphBatch make_batch(std::span<const MultiLayerGraph* const> graphs);
GraphBatch make_batch(const MultiLayerGraph& graph);

// ---------------------------------------------------------------------------
// Model

struct NamedParameter {
    std::string name;
    ad::Var var;
};

/// Two GATv2 layers (8 heads x 8 channels, concatenated), GroupNorm and ELU
/// after each, per-band mean pooling and a 2-layer MLP head.
class GatModel {
public:
    GatModel(ModelConfig config, std::uint64_t seed);

    GatModel(const GatModel&) = delete;
    GatModel& operator=(const GatModel&) = delete;
    GatModel(GatModel&&) = default;
    GatModel& operator=(GatModel&&) = default;

    const ModelConfig& config() const noexcept { return config_; }
    const std::vector<NamedParameter>& parameters() const noexcept { return params_; }
    std::size_t parameter_count() const;

    /// Looks up a parameter by name; throws ArgumentError if absent.
    const ad::Var& param(std::string_view name) const;

    void zero_grad();
    std::vector<Tensor> snapshot() const;
    void restore(const std::vector<Tensor>& values);
    void set_output_bias(double value);

    GatModel clone() const;

private:
    GatModel(ModelConfig config, std::vector<NamedParameter> params);
    void add(std::string name, Tensor value);

    ModelConfig config_;
    std::vector<NamedParameter> params_;
};

/// Attention coefficients of one GAT layer, aligned with the batch edges.
struct AttentionRecord {
    std::size_t layer = 0;
    Tensor alpha;  // E x heads
};

struct ForwardResult {
    ad::Var prediction;  // num_graphs x 1
    std::vector<AttentionRecord> attention;
    ad::Var node_features;  // final layer output, num_nodes x hidden
};

/// Full forward pass. Dropout is active only in train mode and then draws its
/// masks from `rng`, which must be non-null.
ForwardResult forward(const GatModel& model, const GraphBatch& batch, bool train_mode,
                      Rng* rng = nullptr);

/// Readout on externally supplied final-layer node features.
ad::Var readout(const GatModel& model, const ad::Var& node_features, const GraphBatch& batch);

/// Eval-mode prediction for a single graph.
double predict(const GatModel& model, const MultiLayerGraph& graph);

// ---------------------------------------------------------------------------
// Checkpoints

nlohmann::ordered_json checkpoint_to_json(const GatModel& model);
GatModel checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const GatModel& model, const std::filesystem::path& path);
GatModel load_checkpoint(const std::filesystem::path& path);

} // namespace neurograph
