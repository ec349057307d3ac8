#include "sdlpgc/graph_learning.hpp"

#include <cmath>
#include <string>

#include "sdlpgc/errors.hpp"

namespace sdlpgc::graph {

void GraphConfig::validate() const {
    if (num_nodes == 0) throw ConfigError("graph: num_nodes must be >= 1");
    if (embed_dim == 0 || heads == 0 || head_dim == 0 || skip_dim == 0 || input_channels == 0)
        throw ConfigError("graph: embed_dim, heads, head_dim, skip_dim and input_channels must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("graph: dropout must lie in [0, 1)");
}

Var static_adjacency(const Var& embeddings) {
    const Shape& s = embeddings.shape();
    Var m = ag::reshape(embeddings, {1, s.at(0), s.at(1)});
    return ag::softmax(ag::relu(ag::bmm_nt(m, m)));
}

Var dynamic_adjacency(const Var& edges, const Var& prior, const nn::LayerNorm& norm, double dropout,
                      const nn::ForwardContext& ctx) {
    Var logits = norm(edges);
    if (ctx.training && dropout > 0.0) logits = ag::dropout(logits, dropout, true, *ctx.rng);
    if (prior.defined()) logits = ag::add(logits, prior);
    return ag::softmax(ag::relu(logits));
}

StaticGraphLearner::StaticGraphLearner(nn::ParamBuilder pb, std::size_t num_nodes, std::size_t embed_dim) {
    // Scaled so that M M^T starts near unit magnitude.
    embeddings_ = pb.normal("embeddings", {num_nodes, embed_dim}, 1.0 / std::sqrt(static_cast<double>(embed_dim)));
}

DynamicGraphLearner::DynamicGraphLearner(nn::ParamBuilder pb, const GraphConfig& config) : config_(config) {
    config_.validate();
    const std::size_t d = config_.embed_dim;
    input_proj_ = nn::Linear(pb.child("input_proj"), config_.input_channels, d);
    fusion_ = nn::GRUCell(pb.child("gru"), d, d);
    node_norm_ = nn::LayerNorm(pb.child("node_norm"), {d}, 1);
    for (std::size_t k = 0; k < config_.heads; ++k) {
        query_.emplace_back(pb.child("head" + std::to_string(k) + ".f1"), d, config_.head_dim);
        key_.emplace_back(pb.child("head" + std::to_string(k) + ".f2"), d, config_.head_dim);
    }
    skip_left_ = nn::Linear(pb.child("skip.f3"), d, config_.skip_dim);
    skip_right_ = nn::Linear(pb.child("skip.f4"), d, config_.skip_dim);
    skip_norm_ = nn::LayerNorm(pb.child("skip_norm"), {}, 2);
    edge_norm_ = nn::LayerNorm(pb.child("edge_norm"), {}, 2);
}

Var DynamicGraphLearner::fuse_node_state(const Var& window, const Var& embeddings) const {
    const Shape& s = window.shape();
    if (s.size() != 4 || s[1] != config_.input_channels || s[2] != config_.num_nodes || s[3] == 0)
        throw std::invalid_argument("fuse_node_state: window " + shape_str(s) + " does not match [B, " +
                                    std::to_string(config_.input_channels) + ", " + std::to_string(config_.num_nodes) +
                                    ", u]");
    const std::size_t batch = s[0], n = s[2], steps = s[3], d = config_.embed_dim;
    // [B, C, N, u] -> [B, u, N, d]
    Var features = ag::permute(input_proj_(window, 1), {0, 3, 2, 1});
    Var h = ag::broadcast_to(ag::reshape(embeddings, {1, n, d}), {batch, n, d});
    for (std::size_t t = 0; t < steps; ++t) {
        Var x = ag::reshape(ag::slice(features, 1, t, 1), {batch, n, d});
        h = fusion_(x, h);
    }
    return h;
}

Var DynamicGraphLearner::head_similarity(const Var& fused, std::size_t head, const nn::ForwardContext& ctx) const {
    Var normed = node_norm_(fused);
    Var q = ag::tanh(query_.at(head)(normed, 2));
    Var k = ag::tanh(key_.at(head)(normed, 2));
    Var e = ag::scale(ag::bmm_nt(q, k), 1.0 / std::sqrt(static_cast<double>(config_.head_dim)));
    if (ctx.training && config_.dropout > 0.0) e = ag::dropout(e, config_.dropout, true, *ctx.rng);
    return e;
}

Var DynamicGraphLearner::skip_term(const Var& fused) const {
    return skip_norm_(ag::bmm_nt(skip_left_(fused, 2), skip_right_(fused, 2)));
}

Var DynamicGraphLearner::aggregate_heads(const std::vector<Var>& heads, const Var& fused) const {
    std::vector<Var> terms = heads;
    terms.push_back(skip_term(fused));
    return ag::add_n(terms);
}

Var DynamicGraphLearner::edge_weights(const Var& fused, const nn::ForwardContext& ctx) const {
    std::vector<Var> heads;
    for (std::size_t k = 0; k < config_.heads; ++k) heads.push_back(head_similarity(fused, k, ctx));
    return aggregate_heads(heads, fused);
}

Var DynamicGraphLearner::adjacency(const Var& window, const Var& embeddings, const Var& prior,
                                   const nn::ForwardContext& ctx) const {
    return dynamic_adjacency(edge_weights(fuse_node_state(window, embeddings), ctx), prior, edge_norm_,
                             config_.dropout, ctx);
}

}  // namespace sdlpgc::graph
