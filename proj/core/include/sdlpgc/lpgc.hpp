#pragma once

#include <vector>

#include "sdlpgc/nn.hpp"

namespace sdlpgc::lpgc {

using ag::Var;

struct BranchConfig {
    std::size_t in_channels = 32;
    std::size_t channels = 32;      // C, width of Z^l and of the self-evolution output
    std::size_t hidden = 32;        // C_h, width of FC1 before the embedding is attached
    std::size_t embed_dim = 40;     // d
    std::size_t out_channels = 32;
    std::size_t depth = 3;          // L, number of collected states Z^0..Z^{L-1}
    bool self_evolution = true;     // false: plain GCN propagation Z^{l+1} = A Z^l

    void validate() const;
};

/// Throws std::invalid_argument unless every row of adj [B, N, N] is
/// nonnegative and sums to 1 within tol.
void check_row_stochastic(const Tensor& adj, double tol = 1e-4);

struct Propagation {
    std::vector<Var> states;  // Z^0 .. Z^{L-1}, each [B, C, N, T]
    std::vector<Var> alphas;  // alpha^0 .. alpha^{L-2}, each [B, 1, N, T]
    Var output;               // [B, C_out, N, T]
};

/// One personalized propagation over a single adjacency.
class Branch {
public:
    Branch() = default;
    Branch(nn::ParamBuilder pb, const BranchConfig& config);

    /// FC2(FC3(ReLU(FC4(H^))) + H^) with H^ = concat(FC1(x), embeddings).
    Var self_evolution(const Var& x_hat, const Var& embeddings) const;

    /// Sigmoid(FC5(evolution + z)), one value per node and time step.
    Var restart_probability(const Var& evolution, const Var& z) const;

    /// Z^0 = f(x); Z^{l+1} = (1 - a^l) A Z^l + a^l H''; output = FC6(concat Z^l).
    Propagation propagate(const Var& x_hat, const Var& adj, const Var& embeddings) const;

    Var operator()(const Var& x_hat, const Var& adj, const Var& embeddings) const {
        return propagate(x_hat, adj, embeddings).output;
    }

    const BranchConfig& config() const noexcept { return config_; }
    const nn::Linear& input_map() const noexcept { return input_map_; }
    const nn::Linear& fc1() const noexcept { return fc1_; }
    const nn::Linear& fc2() const noexcept { return fc2_; }
    const nn::Linear& fc3() const noexcept { return fc3_; }
    const nn::Linear& fc4() const noexcept { return fc4_; }
    const nn::Linear& restart_head() const noexcept { return fc5_; }
    const nn::Linear& collect() const noexcept { return fc6_; }

private:
    BranchConfig config_;
    nn::Linear input_map_;  // f_theta
    nn::Linear fc1_, fc2_, fc3_, fc4_;
    nn::Linear fc5_;
    nn::Linear fc6_;
};

/// Static and dynamic branches with separate parameters; outputs are summed.
class DualBranch {
public:
    DualBranch() = default;
    DualBranch(nn::ParamBuilder pb, const BranchConfig& config);

    Var operator()(const Var& x_hat, const Var& static_adj, const Var& dynamic_adj, const Var& embeddings,
                   std::vector<Propagation>* trace = nullptr) const;

    Branch& static_branch() noexcept { return static_; }
    Branch& dynamic_branch() noexcept { return dynamic_; }
    const Branch& static_branch() const noexcept { return static_; }
    const Branch& dynamic_branch() const noexcept { return dynamic_; }

private:
    Branch static_;
    Branch dynamic_;
};

}  // namespace sdlpgc::lpgc
