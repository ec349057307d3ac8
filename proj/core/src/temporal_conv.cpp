#include "sdlpgc/temporal_conv.hpp"

#include <algorithm>
#include <sstream>

#include "sdlpgc/errors.hpp"

namespace sdlpgc::tc {

std::vector<std::size_t> dilation_schedule(std::size_t blocks, std::size_t dilation_base) {
    if (dilation_base == 0) throw ConfigError("dilation_base must be >= 1");
    std::vector<std::size_t> out;
    std::size_t d = 1;
    for (std::size_t k = 0; k < blocks; ++k, d *= dilation_base) out.push_back(d);
    return out;
}

std::size_t receptive_field(std::size_t blocks, std::size_t dilation_base, std::size_t max_kernel) {
    if (blocks == 0) throw ConfigError("receptive_field: blocks must be >= 1");
    if (max_kernel == 0) throw ConfigError("receptive_field: kernel size must be >= 1");
    std::size_t rf = 1;
    for (std::size_t d : dilation_schedule(blocks, dilation_base)) rf += (max_kernel - 1) * d;
    return rf;
}

void check_receptive_field(std::size_t blocks, std::size_t dilation_base, std::size_t max_kernel,
                           std::size_t input_len) {
    const std::size_t rf = receptive_field(blocks, dilation_base, max_kernel);
    if (rf <= input_len) return;
    std::ostringstream msg;
    msg << "receptive field " << rf << " of " << blocks << " block(s) with dilation base " << dilation_base
        << " and max kernel " << max_kernel << " exceeds input length " << input_len << "; valid (blocks, dilation_base):";
    bool any = false;
    for (std::size_t b = 1; b <= 4; ++b)
        for (std::size_t base = 1; base <= 3; ++base)
            if (receptive_field(b, base, max_kernel) <= input_len) {
                msg << " (" << b << ", " << base << ")";
                any = true;
            }
    if (!any) msg << " none; enable input padding";
    throw ConfigError(msg.str());
}

DilatedInception::DilatedInception(nn::ParamBuilder pb, std::size_t in_channels, std::size_t out_channels,
                                   std::vector<std::size_t> kernels, std::size_t dilation)
    : kernels_(std::move(kernels)), dilation_(dilation) {
    if (kernels_.empty()) throw ConfigError("inception: empty kernel set");
    if (dilation_ == 0) throw ConfigError("inception: dilation must be >= 1");
    if (out_channels % kernels_.size() != 0)
        throw ConfigError("inception: out_channels " + std::to_string(out_channels) + " not divisible by " +
                          std::to_string(kernels_.size()) + " kernel sizes");
    const std::size_t per = out_channels / kernels_.size();
    for (std::size_t k : kernels_) {
        if (k == 0) throw ConfigError("inception: kernel size must be >= 1");
        auto branch = pb.child("k" + std::to_string(k));
        weights_.push_back(branch.uniform("weight", {per, in_channels, k}, in_channels * k));
        biases_.push_back(branch.uniform("bias", {per}, in_channels * k));
    }
}

std::size_t DilatedInception::max_kernel() const { return *std::max_element(kernels_.begin(), kernels_.end()); }

std::size_t DilatedInception::output_length(std::size_t input_len) const {
    const std::size_t span = dilation_ * (max_kernel() - 1);
    if (input_len < span + 1)
        throw std::invalid_argument("dilated inception needs at least T=" + std::to_string(span + 1) +
                                    " time steps, got " + std::to_string(input_len));
    return input_len - span;
}

Var DilatedInception::operator()(const Var& x) const {
    if (x.shape().size() != 4) throw std::invalid_argument("dilated inception expects [B, C, N, T]");
    const std::size_t t_in = x.dim(3);
    const std::size_t t_out = output_length(t_in);
    std::vector<Var> parts;
    parts.reserve(kernels_.size());
    for (std::size_t i = 0; i < kernels_.size(); ++i) {
        Var y = ag::conv_time(x, weights_[i], biases_[i], dilation_);
        parts.push_back(ag::slice(y, 3, y.dim(3) - t_out, t_out));
    }
    return parts.size() == 1 ? parts.front() : ag::concat(parts, 1);
}

GatedTC::GatedTC(nn::ParamBuilder pb, std::size_t in_channels, std::size_t out_channels,
                 const std::vector<std::size_t>& kernels, std::size_t dilation)
    : filter_(pb.child("filter"), in_channels, out_channels, kernels, dilation),
      gate_(pb.child("gate"), in_channels, out_channels, kernels, dilation) {}

Var GatedTC::operator()(const Var& x) const { return ag::mul(ag::tanh(filter_(x)), ag::sigmoid(gate_(x))); }

}  // namespace sdlpgc::tc
