#include "sdlpgc/model.hpp"

#include <algorithm>
#include <numeric>

#include "sdlpgc/errors.hpp"

namespace sdlpgc {

std::string to_string(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::no_sl: return "no_SL";
        case Variant::no_dl: return "no_DL";
        case Variant::no_lpgc: return "no_LPGC";
        case Variant::sd_gcn: return "SD_GCN";
    }
    return "?";
}

Variant parse_variant(const std::string& text) {
    for (Variant v : all_variants())
        if (text == to_string(v)) return v;
    std::string lower = text;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    for (Variant v : all_variants()) {
        std::string name = to_string(v);
        std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
        if (lower == name) return v;
    }
    throw ConfigError("unknown variant '" + text + "' (expected full, no_SL, no_DL, no_LPGC or SD_GCN)");
}

const std::vector<Variant>& all_variants() {
    static const std::vector<Variant> v{Variant::full, Variant::no_sl, Variant::no_dl, Variant::no_lpgc,
                                        Variant::sd_gcn};
    return v;
}

std::string to_string(PaddingPolicy p) { return p == PaddingPolicy::none ? "none" : "left"; }

PaddingPolicy parse_padding(const std::string& text) {
    if (text == "none") return PaddingPolicy::none;
    if (text == "left") return PaddingPolicy::left;
    throw ConfigError("unknown padding policy '" + text + "' (expected none or left)");
}

std::size_t ModelConfig::max_kernel() const {
    if (kernel_set.empty()) throw ConfigError("kernel_set must not be empty");
    return *std::max_element(kernel_set.begin(), kernel_set.end());
}

std::size_t ModelConfig::receptive_field() const { return tc::receptive_field(blocks, dilation_base, max_kernel()); }

std::size_t ModelConfig::padded_input_len() const {
    const std::size_t rf = receptive_field();
    return padding == PaddingPolicy::left ? std::max(rf, input_len) : input_len;
}

void ModelConfig::validate() const {
    if (num_nodes == 0) throw ConfigError("model: num_nodes must be >= 1");
    if (input_len == 0 || horizon == 0) throw ConfigError("model: input_len and horizon must be >= 1");
    for (auto [name, value] : {std::pair<const char*, std::size_t>{"embed_dim", embed_dim},
                               {"heads", heads},
                               {"head_dim", head_dim},
                               {"skip_proj_dim", skip_proj_dim},
                               {"blocks", blocks},
                               {"depth", depth},
                               {"residual_channels", residual_channels},
                               {"skip_channels", skip_channels},
                               {"end_channels", end_channels},
                               {"lpgc_hidden", lpgc_hidden},
                               {"dilation_base", dilation_base}})
        if (value == 0) throw ConfigError(std::string("model: ") + name + " must be >= 1");
    if (kernel_set.empty() || std::find(kernel_set.begin(), kernel_set.end(), std::size_t{0}) != kernel_set.end())
        throw ConfigError("model: kernel sizes must be >= 1");
    if (residual_channels % kernel_set.size() != 0)
        throw ConfigError("model: residual_channels " + std::to_string(residual_channels) +
                          " must be divisible by the number of kernel sizes (" + std::to_string(kernel_set.size()) + ")");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model: dropout must lie in [0, 1)");
    tc::check_receptive_field(blocks, dilation_base, max_kernel(), padded_input_len());
}

SDLPGCModel::SDLPGCModel(ModelConfig config) : config_(std::move(config)) {
    config_.validate();
    std::mt19937_64 rng(config_.seed);
    nn::ParamBuilder root(params_, rng);
    const auto& c = config_;
    const bool uses_graphs = c.variant != Variant::no_lpgc;
    const bool uses_dynamic = uses_graphs && c.variant != Variant::no_dl;

    if (uses_graphs) static_.emplace(root.child("graph.static"), c.num_nodes, c.embed_dim);
    if (uses_dynamic) {
        graph::GraphConfig g;
        g.num_nodes = c.num_nodes;
        g.embed_dim = c.embed_dim;
        g.heads = c.heads;
        g.head_dim = c.head_dim;
        g.skip_dim = c.skip_proj_dim;
        g.input_channels = 1;
        g.dropout = c.dropout;
        dynamic_.emplace(root.child("graph.dynamic"), g);
    }

    start_ = nn::Linear(root.child("start"), 1, c.residual_channels);
    const auto dilations = tc::dilation_schedule(c.blocks, c.dilation_base);
    for (std::size_t k = 0; k < c.blocks; ++k) {
        auto pb = root.child("block" + std::to_string(k));
        Block block;
        block.temporal = tc::GatedTC(pb.child("tc"), c.residual_channels, c.residual_channels, c.kernel_set, dilations[k]);
        block.residual = nn::Linear(pb.child("residual"), c.residual_channels, c.residual_channels);
        if (uses_graphs) {
            lpgc::BranchConfig bc;
            bc.in_channels = c.residual_channels;
            bc.channels = c.residual_channels;
            bc.hidden = c.lpgc_hidden;
            bc.embed_dim = c.embed_dim;
            bc.out_channels = c.residual_channels;
            bc.depth = c.depth;
            bc.self_evolution = c.variant != Variant::sd_gcn;
            block.propagation.emplace(pb.child("lpgc"), bc);
        }
        block.skip = nn::Linear(pb.child("skip"), c.residual_channels, c.skip_channels);
        blocks_.push_back(std::move(block));
    }
    end_hidden_ = nn::Linear(root.child("end.hidden"), c.skip_channels, c.end_channels);
    end_out_ = nn::Linear(root.child("end.out"), c.end_channels, c.horizon);
}

SDLPGCModel::Graphs SDLPGCModel::graphs(const Var& window, const nn::ForwardContext& ctx) const {
    Graphs g;
    if (!static_) return g;
    const Variant v = config_.variant;
    if (v != Variant::no_sl) g.static_adj = static_->adjacency();
    if (dynamic_) g.dynamic_adj = dynamic_->adjacency(window, static_->embeddings(), g.static_adj, ctx);
    return g;
}

Var SDLPGCModel::forward(const Var& window, const nn::ForwardContext& ctx, ForwardDiagnostics* diag) const {
    const auto& c = config_;
    const Shape& s = window.shape();
    if (s.size() != 4 || s[1] != 1 || s[2] != c.num_nodes || s[3] != c.input_len)
        throw std::invalid_argument("forward: window " + shape_str(s) + " does not match [B, 1, " +
                                    std::to_string(c.num_nodes) + ", " + std::to_string(c.input_len) + "]");
    const std::size_t batch = s[0];

    Graphs g = graphs(window, ctx);
    Var static_adj = g.static_adj.defined() ? g.static_adj : g.dynamic_adj;
    Var dynamic_adj = g.dynamic_adj.defined() ? g.dynamic_adj : g.static_adj;

    Var x = start_(ag::pad_front(window, 3, c.padding_len()), 1);
    std::vector<Var> skips;
    std::vector<lpgc::Propagation> trace;
    for (const auto& block : blocks_) {
        Var h = block.temporal(x);
        const std::size_t t_out = h.dim(3);
        if (block.propagation)
            h = (*block.propagation)(h, static_adj, dynamic_adj, static_->embeddings(), diag ? &trace : nullptr);
        Var res = block.residual(x, 1);
        x = ag::add(h, ag::slice(res, 3, res.dim(3) - t_out, t_out));
        skips.push_back(block.skip(ag::slice(x, 3, t_out - 1, 1), 1));
    }
    Var out = ag::relu(ag::add_n(skips));
    out = ag::relu(end_hidden_(out, 1));
    out = end_out_(out, 1);

    if (diag) {
        diag->alpha_means.clear();
        for (const auto& p : trace)
            for (const auto& a : p.alphas) {
                const auto vals = a.value().values();
                diag->alpha_means.push_back(std::accumulate(vals.begin(), vals.end(), 0.0) /
                                            static_cast<double>(vals.size()));
            }
    }
    return ag::reshape(out, {batch, c.horizon, c.num_nodes});
}

Tensor SDLPGCModel::predict(const Tensor& window, ForwardDiagnostics* diag) const {
    ag::NoGradGuard guard;
    return forward(Var(window), nn::ForwardContext{}, diag).value();
}

std::size_t SDLPGCModel::copy_matching(const nn::ParamStore& source) {
    std::size_t copied = 0;
    for (auto& [name, var] : params_) {
        if (!source.contains(name)) continue;
        const Tensor& src = source.get(name).value();
        if (src.shape() != var.shape()) continue;
        var.mutable_value() = src;
        ++copied;
    }
    return copied;
}

}  // namespace sdlpgc
