#include "sdlpgc/lpgc.hpp"

#include <cmath>
#include <string>

#include "sdlpgc/errors.hpp"

namespace sdlpgc::lpgc {

void BranchConfig::validate() const {
    if (in_channels == 0 || channels == 0 || hidden == 0 || embed_dim == 0 || out_channels == 0)
        throw ConfigError("lpgc: channel widths must be >= 1");
    if (depth == 0) throw ConfigError("lpgc: propagation depth L must be >= 1");
}

void check_row_stochastic(const Tensor& adj, double tol) {
    if (adj.rank() != 3 || adj.dim(1) != adj.dim(2))
        throw std::invalid_argument("adjacency must be [B, N, N], got " + shape_str(adj.shape()));
    const std::size_t n = adj.dim(1);
    for (std::size_t r = 0; r < adj.size() / n; ++r) {
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double w = adj[r * n + j];
            if (!(w >= -tol)) throw std::invalid_argument("adjacency has a negative entry in row " + std::to_string(r % n));
            total += w;
        }
        if (!(std::abs(total - 1.0) <= tol))
            throw std::invalid_argument("adjacency is not row-stochastic: row " + std::to_string(r % n) + " sums to " +
                                        std::to_string(total));
    }
}

Branch::Branch(nn::ParamBuilder pb, const BranchConfig& config) : config_(config) {
    config_.validate();
    const std::size_t c = config_.channels;
    input_map_ = nn::Linear(pb.child("input_map"), config_.in_channels, c);
    if (config_.self_evolution) {
        const std::size_t wide = config_.hidden + config_.embed_dim;
        fc1_ = nn::Linear(pb.child("fc1"), config_.in_channels, config_.hidden);
        fc4_ = nn::Linear(pb.child("fc4"), wide, wide);
        fc3_ = nn::Linear(pb.child("fc3"), wide, wide);
        fc2_ = nn::Linear(pb.child("fc2"), wide, c);
        fc5_ = nn::Linear(pb.child("fc5"), c, 1);
    }
    fc6_ = nn::Linear(pb.child("fc6"), config_.depth * c, config_.out_channels);
}

Var Branch::self_evolution(const Var& x_hat, const Var& embeddings) const {
    if (!config_.self_evolution) throw std::logic_error("self_evolution: branch built without it");
    const Shape& s = x_hat.shape();
    const std::size_t batch = s.at(0), n = s.at(2), t = s.at(3), d = config_.embed_dim;
    if (embeddings.shape() != Shape{n, d})
        throw std::invalid_argument("self_evolution: embeddings " + shape_str(embeddings.shape()) + " vs N=" +
                                    std::to_string(n) + ", d=" + std::to_string(d));
    Var h = fc1_(x_hat, 1);
    Var m = ag::broadcast_to(ag::reshape(ag::permute(embeddings, {1, 0}), {1, d, n, 1}), {batch, d, n, t});
    Var hh = ag::concat({h, m}, 1);
    Var inner = fc3_(ag::relu(fc4_(hh, 1)), 1);
    return fc2_(ag::add(inner, hh), 1);
}

Var Branch::restart_probability(const Var& evolution, const Var& z) const {
    if (!config_.self_evolution) throw std::logic_error("restart_probability: branch built without it");
    return ag::sigmoid(fc5_(ag::add(evolution, z), 1));
}

Propagation Branch::propagate(const Var& x_hat, const Var& adj, const Var& embeddings) const {
    if (x_hat.shape().size() != 4) throw std::invalid_argument("propagate: x_hat must be [B, C, N, T]");
    check_row_stochastic(adj.value());
    Propagation out;
    out.states.push_back(input_map_(x_hat, 1));
    Var evolution;
    if (config_.self_evolution) evolution = self_evolution(x_hat, embeddings);
    for (std::size_t l = 0; l + 1 < config_.depth; ++l) {
        const Var& z = out.states.back();
        Var mixed = ag::node_mix(adj, z);
        if (!config_.self_evolution) {
            out.states.push_back(mixed);
            continue;
        }
        Var alpha = restart_probability(evolution, z);
        out.alphas.push_back(alpha);
        out.states.push_back(ag::add(ag::mul(ag::one_minus(alpha), mixed), ag::mul(alpha, evolution)));
    }
    Var collected = out.states.size() == 1 ? out.states.front() : ag::concat(out.states, 1);
    out.output = fc6_(collected, 1);
    return out;
}

DualBranch::DualBranch(nn::ParamBuilder pb, const BranchConfig& config)
    : static_(pb.child("static"), config), dynamic_(pb.child("dynamic"), config) {}

Var DualBranch::operator()(const Var& x_hat, const Var& static_adj, const Var& dynamic_adj, const Var& embeddings,
                           std::vector<Propagation>* trace) const {
    Propagation s = static_.propagate(x_hat, static_adj, embeddings);
    Propagation d = dynamic_.propagate(x_hat, dynamic_adj, embeddings);
    if (s.output.shape() != d.output.shape()) throw std::logic_error("dual branch: output shape mismatch");
    Var out = ag::add(s.output, d.output);
    if (trace) {
        trace->push_back(std::move(s));
        trace->push_back(std::move(d));
    }
    return out;
}

}  // namespace sdlpgc::lpgc
