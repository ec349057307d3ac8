#pragma once

#include <vector>

#include "sdlpgc/nn.hpp"

namespace sdlpgc::graph {

using ag::Var;

struct GraphConfig {
    std::size_t num_nodes = 0;
    std::size_t embed_dim = 40;  // d
    std::size_t heads = 4;       // K_h
    std::size_t head_dim = 10;   // d_k
    std::size_t skip_dim = 10;   // d_s, width of the f3/f4 skip projections
    std::size_t input_channels = 1;
    double dropout = 0.2;

    void validate() const;
};

/// row-softmax(ReLU(M M^T)) as a [1, N, N] adjacency.
Var static_adjacency(const Var& embeddings);

/// row-softmax(ReLU(Dropout(LN(edges)) + prior)); prior may be undefined
/// (treated as zero). edges is [B, N, N], prior [1, N, N].
Var dynamic_adjacency(const Var& edges, const Var& prior, const nn::LayerNorm& norm, double dropout,
                      const nn::ForwardContext& ctx);

/// Trainable node embeddings M^s [N, d].
class StaticGraphLearner {
public:
    StaticGraphLearner() = default;
    StaticGraphLearner(nn::ParamBuilder pb, std::size_t num_nodes, std::size_t embed_dim);

    const Var& embeddings() const noexcept { return embeddings_; }
    Var adjacency() const { return static_adjacency(embeddings_); }

private:
    Var embeddings_;
};

/// Per-window adjacency from the input fused with the node embeddings.
class DynamicGraphLearner {
public:
    DynamicGraphLearner() = default;
    DynamicGraphLearner(nn::ParamBuilder pb, const GraphConfig& config);

    /// 1x1 projection of the window to d features per step, then a GRU over
    /// the u steps with hidden state initialized from the embeddings. -> [B, N, d]
    Var fuse_node_state(const Var& window, const Var& embeddings) const;

    /// Scaled inner product of the k-th head projections. -> [B, N, N]
    Var head_similarity(const Var& fused, std::size_t head, const nn::ForwardContext& ctx) const;

    /// LN(<f3(h_i), f4(h_j)>), normalized over the N x N logits.
    Var skip_term(const Var& fused) const;

    /// Sum of the given head similarities plus the skip term.
    Var aggregate_heads(const std::vector<Var>& heads, const Var& fused) const;

    Var edge_weights(const Var& fused, const nn::ForwardContext& ctx) const;

    /// Full pipeline: window [B, 1, N, u] -> [B, N, N].
    Var adjacency(const Var& window, const Var& embeddings, const Var& prior, const nn::ForwardContext& ctx) const;

    const GraphConfig& config() const noexcept { return config_; }
    const nn::Linear& input_proj() const noexcept { return input_proj_; }
    const nn::GRUCell& fusion_cell() const noexcept { return fusion_; }
    const nn::LayerNorm& edge_norm() const noexcept { return edge_norm_; }

private:
    GraphConfig config_;
    nn::Linear input_proj_;
    nn::GRUCell fusion_;
    nn::LayerNorm node_norm_;
    std::vector<nn::Linear> query_;  // f1 per head
    std::vector<nn::Linear> key_;    // f2 per head
    nn::Linear skip_left_;           // f3
    nn::Linear skip_right_;          // f4
    nn::LayerNorm skip_norm_;
    nn::LayerNorm edge_norm_;
};

}  // namespace sdlpgc::graph
