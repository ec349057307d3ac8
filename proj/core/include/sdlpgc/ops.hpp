#pragma once

#include <random>
#include <vector>

#include "sdlpgc/autograd.hpp"

// Differentiable tensor ops. Layout conventions used across the model:
//   latent state      [B, C, N, T]   (batch, channel, node, time)
//   node vectors      [B, N, D]
//   adjacency         [B or 1, N, N] (row i = weights of the nodes feeding i)
namespace sdlpgc::ag {

/// Elementwise with broadcasting; ranks must match, each dim equal or 1.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var add_scalar(const Var& a, double s);
Var scale(const Var& a, double s);
/// 1 - a
Var one_minus(const Var& a);

Var relu(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var abs(const Var& a);

/// Softmax over the last axis.
Var softmax(const Var& a);

/// Normalizes over the trailing norm_dims axes. gamma/beta hold either one
/// element (scalar affine) or the trailing shape; pass undefined Vars to skip.
Var layer_norm(const Var& x, std::size_t norm_dims, const Var& gamma, const Var& beta, double eps = 1e-5);

/// Inverted dropout; identity when !training or p == 0.
Var dropout(const Var& x, double p, bool training, std::mt19937_64& rng);

/// Affine map over one axis: out[.., o, ..] = sum_i w[o, i] x[.., i, ..] + b[o].
/// w is [C_out, C_in]; b is [C_out] or undefined.
Var linear(const Var& x, const Var& w, const Var& b, std::size_t axis);

/// out[b] = p[b] * q[b]^T for p [B|1, N, K], q [B|1, M, K].
Var bmm_nt(const Var& p, const Var& q);

/// out[b, c, i, t] = sum_j adj[b, i, j] * z[b, c, j, t]; adj batch may be 1.
Var node_mix(const Var& adj, const Var& z);

/// Causal dilated convolution along the last axis of x [B, C_in, N, T] with
/// w [C_out, C_in, k]. Output time index t reads x[.., t + m*dilation] for
/// m < k, so T' = T - dilation*(k-1) and the last output aligns with the last input.
Var conv_time(const Var& x, const Var& w, const Var& b, std::size_t dilation);

Var slice(const Var& x, std::size_t axis, std::size_t start, std::size_t length);
Var concat(const std::vector<Var>& parts, std::size_t axis);
Var reshape(const Var& x, Shape shape);
Var permute(const Var& x, const std::vector<std::size_t>& perm);
Var broadcast_to(const Var& x, const Shape& shape);
/// Zero padding at the front of one axis.
Var pad_front(const Var& x, std::size_t axis, std::size_t count);

Var sum(const Var& x);
Var mean(const Var& x);
Var add_n(const std::vector<Var>& terms);
Var mean_abs_error(const Var& prediction, const Var& target);
/// Same value, cut from the graph.
Var detach(const Var& x);

}  // namespace sdlpgc::ag
