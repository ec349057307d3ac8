#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sdlpgc/ops.hpp"

namespace sdlpgc::nn {

using ag::Var;

/// Ordered, named collection of trainable tensors. Names are dotted paths
/// ("block0.lpgc.static.fc5.weight") and unique within a store.
class ParamStore {
public:
    Var& add(const std::string& name, Tensor init);

    bool contains(const std::string& name) const;
    Var& get(const std::string& name);
    const Var& get(const std::string& name) const;

    std::size_t count() const noexcept { return params_.size(); }
    /// Total number of scalar parameters.
    std::size_t scalar_count() const noexcept;

    auto begin() noexcept { return params_.begin(); }
    auto end() noexcept { return params_.end(); }
    auto begin() const noexcept { return params_.begin(); }
    auto end() const noexcept { return params_.end(); }

    void zero_grad();

private:
    std::vector<std::pair<std::string, Var>> params_;
};

/// Creates and registers parameters under a name prefix.
class ParamBuilder {
public:
    ParamBuilder(ParamStore& store, std::mt19937_64& rng, std::string prefix = {});

    ParamBuilder child(const std::string& name) const;
    std::string path(const std::string& name) const;

    /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    Var uniform(const std::string& name, Shape shape, std::size_t fan_in);
    Var normal(const std::string& name, Shape shape, double stddev);
    Var constant(const std::string& name, Shape shape, double value);

private:
    ParamStore* store_;
    std::mt19937_64* rng_;
    std::string prefix_;
};

/// Per-call forward settings.
struct ForwardContext {
    bool training = false;
    std::mt19937_64* rng = nullptr;  // required when training with dropout
};

struct Linear {
    Var weight;  // [out, in]
    Var bias;    // [out] or undefined

    Linear() = default;
    Linear(ParamBuilder pb, std::size_t in, std::size_t out, bool with_bias = true);

    Var operator()(const Var& x, std::size_t axis) const { return ag::linear(x, weight, bias, axis); }
    std::size_t in_features() const { return weight.dim(1); }
    std::size_t out_features() const { return weight.dim(0); }
};

/// Layer norm over the trailing `dims` axes. Affine parameters are either
/// elementwise over `shape` or a single scalar gain/bias when shape is empty.
struct LayerNorm {
    Var gamma;
    Var beta;
    std::size_t dims = 1;

    LayerNorm() = default;
    LayerNorm(ParamBuilder pb, Shape shape, std::size_t dims);

    Var operator()(const Var& x) const { return ag::layer_norm(x, dims, gamma, beta); }
};

/// Gated recurrent cell over node vectors [B, N, D]. Update rule:
///   h' = (1 - z) * h + z * n,  so a closed update gate (z = 0) keeps h.
struct GRUCell {
    Linear input_gates;   // in -> 3*hidden  (reset, update, candidate)
    Linear hidden_gates;  // hidden -> 3*hidden
    std::size_t hidden = 0;

    GRUCell() = default;
    GRUCell(ParamBuilder pb, std::size_t in, std::size_t hidden);

    Var operator()(const Var& x, const Var& h) const;
};

}  // namespace sdlpgc::nn
