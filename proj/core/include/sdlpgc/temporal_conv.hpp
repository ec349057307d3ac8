#pragma once

#include <vector>

#include "sdlpgc/nn.hpp"

namespace sdlpgc::tc {

using ag::Var;

inline const std::vector<std::size_t> kDefaultKernels{2, 3, 6, 7};

/// Lookback consumed by `blocks` stacked inception layers where block k
/// (1-based) uses dilation base^(k-1): 1 + sum_k (max_kernel - 1) * dilation_k.
std::size_t receptive_field(std::size_t blocks, std::size_t dilation_base, std::size_t max_kernel = 7);

std::vector<std::size_t> dilation_schedule(std::size_t blocks, std::size_t dilation_base);

/// Throws ConfigError when the stack needs more than input_len steps; the
/// message lists the (blocks, dilation_base) pairs that would fit.
void check_receptive_field(std::size_t blocks, std::size_t dilation_base, std::size_t max_kernel,
                           std::size_t input_len);

/// Parallel dilated causal convolutions, one per kernel size, each producing
/// out_channels / |kernels| channels. Every branch is cropped to the length
/// of the widest kernel (keeping the latest steps) before concatenation.
class DilatedInception {
public:
    DilatedInception() = default;
    DilatedInception(nn::ParamBuilder pb, std::size_t in_channels, std::size_t out_channels,
                     std::vector<std::size_t> kernels, std::size_t dilation);

    Var operator()(const Var& x) const;

    std::size_t dilation() const noexcept { return dilation_; }
    std::size_t max_kernel() const;
    std::size_t output_length(std::size_t input_len) const;
    const std::vector<std::size_t>& kernels() const noexcept { return kernels_; }
    const std::vector<Var>& weights() const noexcept { return weights_; }  // [C_out/|k|, C_in, k]
    const std::vector<Var>& biases() const noexcept { return biases_; }

private:
    std::vector<std::size_t> kernels_;
    std::vector<Var> weights_;
    std::vector<Var> biases_;
    std::size_t dilation_ = 1;
};

/// tanh(filter(x)) * sigmoid(gate(x)).
class GatedTC {
public:
    GatedTC() = default;
    GatedTC(nn::ParamBuilder pb, std::size_t in_channels, std::size_t out_channels,
            const std::vector<std::size_t>& kernels, std::size_t dilation);

    Var operator()(const Var& x) const;

    const DilatedInception& filter() const noexcept { return filter_; }
    const DilatedInception& gate() const noexcept { return gate_; }

private:
    DilatedInception filter_;
    DilatedInception gate_;
};

}  // namespace sdlpgc::tc
