#pragma once

// Per-node, per-step reference for one propagation branch. Every quantity is
// a scalar loop over explicit indices; nothing is vectorized.

#include <vector>

#include "oracle.hpp"
#include "sdlpgc/lpgc.hpp"

namespace oracle {

struct BranchWeights {
    Mat w_in, w1, w2, w3, w4, w5, w6;
    Vec b_in, b1, b2, b3, b4, b5, b6;
};

inline Mat weight(const sdlpgc::nn::Linear& l) { return to_mat(l.weight.value()); }
inline Vec bias(const sdlpgc::nn::Linear& l) { return to_vec(l.bias.value()); }

inline BranchWeights read_branch(const sdlpgc::lpgc::Branch& br) {
    BranchWeights w;
    w.w_in = weight(br.input_map());
    w.b_in = bias(br.input_map());
    w.w6 = weight(br.collect());
    w.b6 = bias(br.collect());
    if (br.config().self_evolution) {
        w.w1 = weight(br.fc1());
        w.b1 = bias(br.fc1());
        w.w2 = weight(br.fc2());
        w.b2 = bias(br.fc2());
        w.w3 = weight(br.fc3());
        w.b3 = bias(br.fc3());
        w.w4 = weight(br.fc4());
        w.b4 = bias(br.fc4());
        w.w5 = weight(br.restart_head());
        w.b5 = bias(br.restart_head());
    }
    return w;
}

struct PropagationTrace {
    sdlpgc::Tensor output;               // [B, C_out, N, T]
    std::vector<sdlpgc::Tensor> states;  // Z^l, [B, C, N, T]
    std::vector<sdlpgc::Tensor> alphas;  // [B, 1, N, T]
    sdlpgc::Tensor evolution;            // [B, C, N, T], empty without self-evolution
};

// x [B, C_in, N, T], adj [B|1, N, N], emb [N, d].
inline PropagationTrace propagate(const sdlpgc::lpgc::Branch& br, const sdlpgc::Tensor& x, const sdlpgc::Tensor& adj,
                                  const sdlpgc::Tensor& emb) {
    using sdlpgc::Tensor;
    const auto& cfg = br.config();
    const BranchWeights w = read_branch(br);
    const std::size_t B = x.dim(0), Cin = x.dim(1), N = x.dim(2), T = x.dim(3);
    const std::size_t C = cfg.channels, L = cfg.depth, Cout = cfg.out_channels, d = emb.dim(1);
    const bool evolve = cfg.self_evolution;

    PropagationTrace tr;
    tr.output = Tensor({B, Cout, N, T});
    tr.states.assign(L, Tensor({B, C, N, T}));
    if (evolve) {
        tr.alphas.assign(L - 1, Tensor({B, 1, N, T}));
        tr.evolution = Tensor({B, C, N, T});
    }

    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t t = 0; t < T; ++t) {
            const std::size_t ab = adj.dim(0) == 1 ? 0 : b;
            // z[l][i][c]
            std::vector<std::vector<Vec>> z(L, std::vector<Vec>(N, Vec(C)));
            std::vector<Vec> ev(N);
            for (std::size_t i = 0; i < N; ++i) {
                Vec xi(Cin);
                for (std::size_t c = 0; c < Cin; ++c) xi[c] = x.at({b, c, i, t});
                z[0][i] = affine(w.w_in, w.b_in, xi);
                if (evolve) {
                    Vec hat = affine(w.w1, w.b1, xi);
                    for (std::size_t k = 0; k < d; ++k) hat.push_back(emb.at({i, k}));
                    Vec inner = affine(w.w4, w.b4, hat);
                    for (double& v : inner) v = relu(v);
                    inner = affine(w.w3, w.b3, inner);
                    for (std::size_t k = 0; k < inner.size(); ++k) inner[k] += hat[k];
                    ev[i] = affine(w.w2, w.b2, inner);
                }
            }
            for (std::size_t l = 0; l + 1 < L; ++l)
                for (std::size_t i = 0; i < N; ++i) {
                    double alpha = 0.0;
                    if (evolve) {
                        Vec s(C);
                        for (std::size_t c = 0; c < C; ++c) s[c] = ev[i][c] + z[l][i][c];
                        alpha = sigmoid(affine(w.w5, w.b5, s)[0]);
                        tr.alphas[l].at({b, 0, i, t}) = alpha;
                    }
                    for (std::size_t c = 0; c < C; ++c) {
                        double mixed = 0.0;
                        for (std::size_t j = 0; j < N; ++j) mixed += adj.at({ab, i, j}) * z[l][j][c];
                        z[l + 1][i][c] = evolve ? (1.0 - alpha) * mixed + alpha * ev[i][c] : mixed;
                    }
                }
            for (std::size_t i = 0; i < N; ++i) {
                Vec all;
                for (std::size_t l = 0; l < L; ++l) {
                    for (std::size_t c = 0; c < C; ++c) tr.states[l].at({b, c, i, t}) = z[l][i][c];
                    all.insert(all.end(), z[l][i].begin(), z[l][i].end());
                }
                if (evolve)
                    for (std::size_t c = 0; c < C; ++c) tr.evolution.at({b, c, i, t}) = ev[i][c];
                const Vec out = affine(w.w6, w.b6, all);
                for (std::size_t c = 0; c < Cout; ++c) tr.output.at({b, c, i, t}) = out[c];
            }
        }
    return tr;
}

}  // namespace oracle
