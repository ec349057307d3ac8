#pragma once

// Central finite differences against reverse-mode gradients, one relative
// error per named parameter group.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "sdlpgc/nn.hpp"

namespace testing {

struct GroupError {
    std::string name;
    double relative = 0.0;
    double analytic_norm = 0.0;
    double numeric_norm = 0.0;
};

inline std::vector<GroupError> gradcheck(sdlpgc::nn::ParamStore& params,
                                         const std::function<sdlpgc::ag::Var()>& loss_fn, double step = 1e-5) {
    params.zero_grad();
    sdlpgc::ag::backward(loss_fn());

    std::vector<GroupError> out;
    for (auto& [name, var] : params) {
        const std::size_t n = var.value().size();
        const sdlpgc::Tensor analytic = var.has_grad() ? var.grad() : sdlpgc::Tensor(var.shape());
        std::vector<double> numeric(n);
        {
            sdlpgc::ag::NoGradGuard guard;
            for (std::size_t i = 0; i < n; ++i) {
                double& x = var.mutable_value()[i];
                const double saved = x;
                x = saved + step;
                const double up = loss_fn().value().item();
                x = saved - step;
                const double down = loss_fn().value().item();
                x = saved;
                numeric[i] = (up - down) / (2.0 * step);
            }
        }
        double diff = 0.0, na = 0.0, nn = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
            na += analytic[i] * analytic[i];
            nn += numeric[i] * numeric[i];
        }
        GroupError e{name, 0.0, std::sqrt(na), std::sqrt(nn)};
        e.relative = std::sqrt(diff) / std::max({e.analytic_norm, e.numeric_norm, 1e-8});
        out.push_back(e);
    }
    return out;
}

}  // namespace testing
