#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sdlpgc/graph_learning.hpp"
#include "sdlpgc/lpgc.hpp"
#include "sdlpgc/nn.hpp"
#include "sdlpgc/temporal_conv.hpp"

namespace sdlpgc {

using ag::Var;

/// Ablation variants.
///   full     both graphs, personalized propagation
///   no_sl    dynamic graph only, no static prior; both branches use it
///   no_dl    static graph only; both branches use it
///   no_lpgc  temporal convolutions only, propagation replaced by identity
///   sd_gcn   both graphs, propagation without restart (Z^{l+1} = A Z^l)
enum class Variant { full, no_sl, no_dl, no_lpgc, sd_gcn };

std::string to_string(Variant v);
Variant parse_variant(const std::string& text);
const std::vector<Variant>& all_variants();

enum class PaddingPolicy {
    none,  // receptive field must fit in the raw input window
    left   // zero-pad the input at the front up to the receptive field
};

std::string to_string(PaddingPolicy p);
PaddingPolicy parse_padding(const std::string& text);

struct ModelConfig {
    std::size_t num_nodes = 0;
    std::size_t input_len = 12;  // u
    std::size_t horizon = 12;    // v
    std::size_t embed_dim = 40;
    std::size_t heads = 4;
    std::size_t head_dim = 10;
    std::size_t skip_proj_dim = 10;
    std::size_t blocks = 2;  // K_blocks
    std::size_t depth = 3;   // L
    std::size_t residual_channels = 32;
    std::size_t skip_channels = 64;
    std::size_t end_channels = 128;
    std::size_t lpgc_hidden = 32;
    std::size_t dilation_base = 1;
    std::vector<std::size_t> kernel_set = tc::kDefaultKernels;
    double dropout = 0.2;
    PaddingPolicy padding = PaddingPolicy::left;
    std::uint64_t seed = 42;
    Variant variant = Variant::full;

    /// Throws ConfigError on any invalid field.
    void validate() const;
    std::size_t max_kernel() const;
    std::size_t receptive_field() const;
    /// Input length after padding; equals input_len when no padding is needed.
    std::size_t padded_input_len() const;
    std::size_t padding_len() const { return padded_input_len() - input_len; }
};

/// Per-forward interpretability record: mean restart probability for every
/// (block, branch, step) in order.
struct ForwardDiagnostics {
    std::vector<double> alpha_means;
};

/// End-to-end forecaster: graph learning, K gated TC + dual-branch LPGC
/// blocks with residual and skip connections, and a two-layer output head.
class SDLPGCModel {
public:
    explicit SDLPGCModel(ModelConfig config);

    SDLPGCModel(const SDLPGCModel&) = delete;
    SDLPGCModel& operator=(const SDLPGCModel&) = delete;
    SDLPGCModel(SDLPGCModel&&) = default;
    SDLPGCModel& operator=(SDLPGCModel&&) = default;

    const ModelConfig& config() const noexcept { return config_; }
    Variant variant() const noexcept { return config_.variant; }

    nn::ParamStore& params() noexcept { return params_; }
    const nn::ParamStore& params() const noexcept { return params_; }
    std::size_t parameter_count() const noexcept { return params_.scalar_count(); }

    struct Graphs {
        Var static_adj;   // [1, N, N]; undefined when the variant has no static graph
        Var dynamic_adj;  // [B, N, N]; undefined when the variant has no dynamic graph
    };
    Graphs graphs(const Var& window, const nn::ForwardContext& ctx) const;

    /// window [B, 1, N, u] (normalized) -> forecast [B, v, N].
    Var forward(const Var& window, const nn::ForwardContext& ctx, ForwardDiagnostics* diag = nullptr) const;

    /// Eval-mode forward without graph recording.
    Tensor predict(const Tensor& window, ForwardDiagnostics* diag = nullptr) const;

    /// Copies every parameter of `source` whose name and shape match one of ours.
    /// Returns how many were copied.
    std::size_t copy_matching(const nn::ParamStore& source);

    const std::optional<graph::StaticGraphLearner>& static_learner() const noexcept { return static_; }
    const std::optional<graph::DynamicGraphLearner>& dynamic_learner() const noexcept { return dynamic_; }

    struct Block {
        tc::GatedTC temporal;
        nn::Linear residual;
        std::optional<lpgc::DualBranch> propagation;
        nn::Linear skip;
    };
    const std::vector<Block>& blocks() const noexcept { return blocks_; }
    std::vector<Block>& blocks() noexcept { return blocks_; }

private:
    ModelConfig config_;
    nn::ParamStore params_;
    std::optional<graph::StaticGraphLearner> static_;
    std::optional<graph::DynamicGraphLearner> dynamic_;
    nn::Linear start_;
    std::vector<Block> blocks_;
    nn::Linear end_hidden_;
    nn::Linear end_out_;
};

}  // namespace sdlpgc
