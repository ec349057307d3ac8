#include "sdlpgc/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace sdlpgc::ag {

namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using CVecMap = Eigen::Map<const Eigen::VectorXd>;

[[noreturn]] void shape_error(const std::string& op, const std::string& what) {
    throw std::invalid_argument(op + ": " + what);
}

std::vector<std::size_t> contiguous_strides(const Shape& shape) {
    std::vector<std::size_t> strides(shape.size(), 1);
    for (std::size_t d = shape.size(); d-- > 1;) strides[d - 1] = strides[d] * shape[d];
    return strides;
}

struct BroadcastPlan {
    Shape out;
    std::vector<std::size_t> stride_a;
    std::vector<std::size_t> stride_b;
};

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
    if (a.size() != b.size()) shape_error(op, "rank mismatch " + shape_str(a) + " vs " + shape_str(b));
    BroadcastPlan plan;
    plan.out.resize(a.size());
    for (std::size_t d = 0; d < a.size(); ++d) {
        if (a[d] != b[d] && a[d] != 1 && b[d] != 1)
            shape_error(op, "cannot broadcast " + shape_str(a) + " with " + shape_str(b));
        plan.out[d] = std::max(a[d], b[d]);
    }
    auto sa = contiguous_strides(a);
    auto sb = contiguous_strides(b);
    for (std::size_t d = 0; d < a.size(); ++d) {
        if (a[d] == 1 && plan.out[d] != 1) sa[d] = 0;
        if (b[d] == 1 && plan.out[d] != 1) sb[d] = 0;
    }
    plan.stride_a = std::move(sa);
    plan.stride_b = std::move(sb);
    return plan;
}

// Calls f(out_index, a_index, b_index) over every output element in order.
template <class F>
void broadcast_loop(const BroadcastPlan& plan, F&& f) {
    const auto& out = plan.out;
    const std::size_t rank = out.size();
    const std::size_t total = shape_size(out);
    if (total == 0) return;
    if (rank == 0) {
        f(0, 0, 0);
        return;
    }
    const std::size_t inner = out[rank - 1];
    const std::size_t step_a = plan.stride_a[rank - 1];
    const std::size_t step_b = plan.stride_b[rank - 1];
    std::vector<std::size_t> idx(rank, 0);
    std::size_t oa = 0, ob = 0;
    for (std::size_t io = 0; io < total; io += inner) {
        for (std::size_t t = 0; t < inner; ++t) f(io + t, oa + t * step_a, ob + t * step_b);
        for (std::size_t d = rank - 1; d-- > 0;) {
            ++idx[d];
            oa += plan.stride_a[d];
            ob += plan.stride_b[d];
            if (idx[d] < out[d]) break;
            oa -= plan.stride_a[d] * out[d];
            ob -= plan.stride_b[d] * out[d];
            idx[d] = 0;
        }
    }
}

template <class Fwd, class Deriv>
Var unary(const Var& a, Fwd fwd, Deriv deriv) {
    const Tensor& x = a.value();
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
    return make_result(std::move(y), {a}, [deriv](Node& self) {
        Node& pa = *self.parents[0];
        Tensor& ga = pa.grad_buffer();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * deriv(pa.value[i], self.value[i]);
    });
}

// Splits a shape around `axis` into (outer, extent, inner).
struct AxisSplit {
    std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
    if (axis >= shape.size()) shape_error(op, "axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
    AxisSplit s;
    for (std::size_t d = 0; d < axis; ++d) s.outer *= shape[d];
    s.extent = shape[axis];
    for (std::size_t d = axis + 1; d < shape.size(); ++d) s.inner *= shape[d];
    return s;
}

}  // namespace

Var add(const Var& a, const Var& b) {
    auto plan = plan_broadcast(a.shape(), b.shape(), "add");
    Tensor y(plan.out);
    const double* pa = a.value().raw();
    const double* pb = b.value().raw();
    double* py = y.raw();
    broadcast_loop(plan, [&](std::size_t o, std::size_t i, std::size_t j) { py[o] = pa[i] + pb[j]; });
    return make_result(std::move(y), {a, b}, [plan](Node& self) {
        Node& na = *self.parents[0];
        Node& nb = *self.parents[1];
        const double* g = self.grad.raw();
        if (na.requires_grad) {
            double* ga = na.grad_buffer().raw();
            broadcast_loop(plan, [&](std::size_t o, std::size_t i, std::size_t) { ga[i] += g[o]; });
        }
        if (nb.requires_grad) {
            double* gb = nb.grad_buffer().raw();
            broadcast_loop(plan, [&](std::size_t o, std::size_t, std::size_t j) { gb[j] += g[o]; });
        }
    });
}

Var sub(const Var& a, const Var& b) { return add(a, scale(b, -1.0)); }

Var mul(const Var& a, const Var& b) {
    auto plan = plan_broadcast(a.shape(), b.shape(), "mul");
    Tensor y(plan.out);
    const double* pa = a.value().raw();
    const double* pb = b.value().raw();
    double* py = y.raw();
    broadcast_loop(plan, [&](std::size_t o, std::size_t i, std::size_t j) { py[o] = pa[i] * pb[j]; });
    return make_result(std::move(y), {a, b}, [plan](Node& self) {
        Node& na = *self.parents[0];
        Node& nb = *self.parents[1];
        const double* g = self.grad.raw();
        const double* va = na.value.raw();
        const double* vb = nb.value.raw();
        if (na.requires_grad) {
            double* ga = na.grad_buffer().raw();
            broadcast_loop(plan, [&](std::size_t o, std::size_t i, std::size_t j) { ga[i] += g[o] * vb[j]; });
        }
        if (nb.requires_grad) {
            double* gb = nb.grad_buffer().raw();
            broadcast_loop(plan, [&](std::size_t o, std::size_t i, std::size_t j) { gb[j] += g[o] * va[i]; });
        }
    });
}

Var add_scalar(const Var& a, double s) {
    return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var scale(const Var& a, double s) {
    return unary(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Var one_minus(const Var& a) {
    return unary(a, [](double x) { return 1.0 - x; }, [](double, double) { return -1.0; });
}

Var relu(const Var& a) {
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(const Var& a) {
    return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& a) {
    return unary(
        a,
        [](double x) {
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Var abs(const Var& a) {
    return unary(a, [](double x) { return std::abs(x); },
                 [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var softmax(const Var& a) {
    const Tensor& x = a.value();
    if (x.rank() == 0) shape_error("softmax", "scalar input");
    const std::size_t width = x.shape().back();
    const std::size_t rows = width ? x.size() / width : 0;
    Tensor y(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.raw() + r * width;
        double* yr = y.raw() + r * width;
        const double m = *std::max_element(xr, xr + width);
        double total = 0.0;
        for (std::size_t j = 0; j < width; ++j) total += (yr[j] = std::exp(xr[j] - m));
        for (std::size_t j = 0; j < width; ++j) yr[j] /= total;
    }
    return make_result(std::move(y), {a}, [rows, width](Node& self) {
        Tensor& ga = self.parents[0]->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* yr = self.value.raw() + r * width;
            const double* gr = self.grad.raw() + r * width;
            double dot = 0.0;
            for (std::size_t j = 0; j < width; ++j) dot += gr[j] * yr[j];
            double* out = ga.raw() + r * width;
            for (std::size_t j = 0; j < width; ++j) out[j] += yr[j] * (gr[j] - dot);
        }
    });
}

Var layer_norm(const Var& x, std::size_t norm_dims, const Var& gamma, const Var& beta, double eps) {
    const Shape& shape = x.shape();
    if (norm_dims == 0 || norm_dims > shape.size()) shape_error("layer_norm", "bad norm_dims for " + shape_str(shape));
    std::size_t group = 1;
    for (std::size_t d = shape.size() - norm_dims; d < shape.size(); ++d) group *= shape[d];
    const std::size_t groups = x.value().size() / group;
    auto check_affine = [&](const Var& p, const char* name) {
        if (p.defined() && p.value().size() != 1 && p.value().size() != group)
            shape_error("layer_norm", std::string(name) + " must have 1 or " + std::to_string(group) + " elements");
    };
    check_affine(gamma, "gamma");
    check_affine(beta, "beta");

    Tensor xhat(shape);
    std::vector<double> inv_std(groups);
    const double* px = x.value().raw();
    for (std::size_t g = 0; g < groups; ++g) {
        const double* xr = px + g * group;
        double mu = 0.0;
        for (std::size_t j = 0; j < group; ++j) mu += xr[j];
        mu /= static_cast<double>(group);
        double var = 0.0;
        for (std::size_t j = 0; j < group; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<double>(group);
        inv_std[g] = 1.0 / std::sqrt(var + eps);
        double* hr = xhat.raw() + g * group;
        for (std::size_t j = 0; j < group; ++j) hr[j] = (xr[j] - mu) * inv_std[g];
    }
    auto coef = [group](const Var& p, std::size_t j, double fallback) {
        if (!p.defined()) return fallback;
        return p.value().size() == 1 ? p.value()[0] : p.value()[j % group];
    };
    Tensor y(shape);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = xhat[i] * coef(gamma, i, 1.0) + coef(beta, i, 0.0);

    std::vector<Var> parents{x};
    const bool has_gamma = gamma.defined();
    const bool has_beta = beta.defined();
    if (has_gamma) parents.push_back(gamma);
    if (has_beta) parents.push_back(beta);
    return make_result(std::move(y), std::move(parents),
                       [xhat = std::move(xhat), inv_std = std::move(inv_std), group, groups, has_gamma,
                        has_beta](Node& self) {
                           Node& nx = *self.parents[0];
                           Node* ng = has_gamma ? self.parents[1].get() : nullptr;
                           Node* nb = has_beta ? self.parents[has_gamma ? 2 : 1].get() : nullptr;
                           const double* g = self.grad.raw();
                           auto gamma_at = [&](std::size_t i) {
                               if (!ng) return 1.0;
                               return ng->value.size() == 1 ? ng->value[0] : ng->value[i % group];
                           };
                           if (ng && ng->requires_grad) {
                               Tensor& gg = ng->grad_buffer();
                               const bool scalar = gg.size() == 1;
                               for (std::size_t i = 0; i < xhat.size(); ++i) gg[scalar ? 0 : i % group] += g[i] * xhat[i];
                           }
                           if (nb && nb->requires_grad) {
                               Tensor& gb = nb->grad_buffer();
                               const bool scalar = gb.size() == 1;
                               for (std::size_t i = 0; i < xhat.size(); ++i) gb[scalar ? 0 : i % group] += g[i];
                           }
                           if (!nx.requires_grad) return;
                           Tensor& gx = nx.grad_buffer();
                           std::vector<double> dxhat(group);
                           for (std::size_t r = 0; r < groups; ++r) {
                               const std::size_t base = r * group;
                               double mean_d = 0.0, mean_dx = 0.0;
                               for (std::size_t j = 0; j < group; ++j) {
                                   dxhat[j] = g[base + j] * gamma_at(base + j);
                                   mean_d += dxhat[j];
                                   mean_dx += dxhat[j] * xhat[base + j];
                               }
                               mean_d /= static_cast<double>(group);
                               mean_dx /= static_cast<double>(group);
                               for (std::size_t j = 0; j < group; ++j)
                                   gx[base + j] += inv_std[r] * (dxhat[j] - mean_d - xhat[base + j] * mean_dx);
                           }
                       });
}

Var dropout(const Var& x, double p, bool training, std::mt19937_64& rng) {
    if (p < 0.0 || p >= 1.0) shape_error("dropout", "rate must lie in [0, 1)");
    if (!training || p == 0.0) return x;
    Tensor mask(x.shape());
    std::bernoulli_distribution keep(1.0 - p);
    const double kept = 1.0 / (1.0 - p);
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = keep(rng) ? kept : 0.0;
    return mul(x, Var(std::move(mask)));
}

Var linear(const Var& x, const Var& w, const Var& b, std::size_t axis) {
    const auto s = split_axis(x.shape(), axis, "linear");
    if (w.value().rank() != 2 || w.dim(1) != s.extent)
        shape_error("linear", "weight " + shape_str(w.shape()) + " does not match input " + shape_str(x.shape()) +
                                  " on axis " + std::to_string(axis));
    const std::size_t c_out = w.dim(0);
    if (b.defined() && b.value().size() != c_out) shape_error("linear", "bias size mismatch");
    Shape out_shape = x.shape();
    out_shape[axis] = c_out;
    Tensor y(out_shape);
    CMapR W(w.value().raw(), c_out, s.extent);
    const double* px = x.value().raw();
    if (s.inner == 1) {
        CMapR X(px, s.outer, s.extent);
        MapR Y(y.raw(), s.outer, c_out);
        Y.noalias() = X * W.transpose();
        if (b.defined()) Y.rowwise() += CVecMap(b.value().raw(), c_out).transpose();
    } else {
        for (std::size_t o = 0; o < s.outer; ++o) {
            CMapR X(px + o * s.extent * s.inner, s.extent, s.inner);
            MapR Y(y.raw() + o * c_out * s.inner, c_out, s.inner);
            Y.noalias() = W * X;
            if (b.defined()) Y.colwise() += CVecMap(b.value().raw(), c_out);
        }
    }
    std::vector<Var> parents{x, w};
    const bool has_bias = b.defined();
    if (has_bias) parents.push_back(b);
    return make_result(std::move(y), std::move(parents), [s, c_out, has_bias](Node& self) {
        Node& nx = *self.parents[0];
        Node& nw = *self.parents[1];
        Node* nb = has_bias ? self.parents[2].get() : nullptr;
        CMapR W(nw.value.raw(), c_out, s.extent);
        const double* g = self.grad.raw();
        if (s.inner == 1) {
            CMapR G(g, s.outer, c_out);
            if (nx.requires_grad) MapR(nx.grad_buffer().raw(), s.outer, s.extent).noalias() += G * W;
            if (nw.requires_grad) {
                CMapR X(nx.value.raw(), s.outer, s.extent);
                MapR(nw.grad_buffer().raw(), c_out, s.extent).noalias() += G.transpose() * X;
            }
            if (nb && nb->requires_grad) VecMap(nb->grad_buffer().raw(), c_out) += G.colwise().sum().transpose();
            return;
        }
        for (std::size_t o = 0; o < s.outer; ++o) {
            CMapR G(g + o * c_out * s.inner, c_out, s.inner);
            if (nx.requires_grad)
                MapR(nx.grad_buffer().raw() + o * s.extent * s.inner, s.extent, s.inner).noalias() += W.transpose() * G;
            if (nw.requires_grad) {
                CMapR X(nx.value.raw() + o * s.extent * s.inner, s.extent, s.inner);
                MapR(nw.grad_buffer().raw(), c_out, s.extent).noalias() += G * X.transpose();
            }
            if (nb && nb->requires_grad) VecMap(nb->grad_buffer().raw(), c_out) += G.rowwise().sum();
        }
    });
}

Var bmm_nt(const Var& p, const Var& q) {
    const Shape& sp = p.shape();
    const Shape& sq = q.shape();
    if (sp.size() != 3 || sq.size() != 3 || sp[2] != sq[2])
        shape_error("bmm_nt", "expects [B,N,K] and [B,M,K], got " + shape_str(sp) + " and " + shape_str(sq));
    if (sp[0] != sq[0] && sp[0] != 1 && sq[0] != 1) shape_error("bmm_nt", "batch mismatch");
    const std::size_t batch = std::max(sp[0], sq[0]);
    const std::size_t n = sp[1], m = sq[1], k = sp[2];
    const bool bp = sp[0] == 1, bq = sq[0] == 1;
    Tensor y({batch, n, m});
    for (std::size_t b = 0; b < batch; ++b) {
        CMapR P(p.value().raw() + (bp ? 0 : b) * n * k, n, k);
        CMapR Q(q.value().raw() + (bq ? 0 : b) * m * k, m, k);
        MapR(y.raw() + b * n * m, n, m).noalias() = P * Q.transpose();
    }
    return make_result(std::move(y), {p, q}, [batch, n, m, k, bp, bq](Node& self) {
        Node& np = *self.parents[0];
        Node& nq = *self.parents[1];
        for (std::size_t b = 0; b < batch; ++b) {
            CMapR G(self.grad.raw() + b * n * m, n, m);
            if (np.requires_grad) {
                CMapR Q(nq.value.raw() + (bq ? 0 : b) * m * k, m, k);
                MapR(np.grad_buffer().raw() + (bp ? 0 : b) * n * k, n, k).noalias() += G * Q;
            }
            if (nq.requires_grad) {
                CMapR P(np.value.raw() + (bp ? 0 : b) * n * k, n, k);
                MapR(nq.grad_buffer().raw() + (bq ? 0 : b) * m * k, m, k).noalias() += G.transpose() * P;
            }
        }
    });
}

Var node_mix(const Var& adj, const Var& z) {
    const Shape& sa = adj.shape();
    const Shape& sz = z.shape();
    if (sz.size() != 4 || sa.size() != 3 || sa[1] != sz[2] || sa[2] != sz[2])
        shape_error("node_mix", "expects adj [B,N,N] and z [B,C,N,T], got " + shape_str(sa) + " and " + shape_str(sz));
    if (sa[0] != 1 && sa[0] != sz[0]) shape_error("node_mix", "adjacency batch must be 1 or match z");
    const std::size_t batch = sz[0], ch = sz[1], n = sz[2], t = sz[3];
    const bool shared = sa[0] == 1;
    Tensor y(sz);
    for (std::size_t b = 0; b < batch; ++b) {
        CMapR A(adj.value().raw() + (shared ? 0 : b) * n * n, n, n);
        for (std::size_t c = 0; c < ch; ++c) {
            const std::size_t off = (b * ch + c) * n * t;
            MapR(y.raw() + off, n, t).noalias() = A * CMapR(z.value().raw() + off, n, t);
        }
    }
    return make_result(std::move(y), {adj, z}, [batch, ch, n, t, shared](Node& self) {
        Node& na = *self.parents[0];
        Node& nz = *self.parents[1];
        for (std::size_t b = 0; b < batch; ++b) {
            CMapR A(na.value.raw() + (shared ? 0 : b) * n * n, n, n);
            for (std::size_t c = 0; c < ch; ++c) {
                const std::size_t off = (b * ch + c) * n * t;
                CMapR G(self.grad.raw() + off, n, t);
                if (nz.requires_grad) MapR(nz.grad_buffer().raw() + off, n, t).noalias() += A.transpose() * G;
                if (na.requires_grad)
                    MapR(na.grad_buffer().raw() + (shared ? 0 : b) * n * n, n, n).noalias() +=
                        G * CMapR(nz.value.raw() + off, n, t).transpose();
            }
        }
    });
}

Var conv_time(const Var& x, const Var& w, const Var& b, std::size_t dilation) {
    const Shape& sx = x.shape();
    const Shape& sw = w.shape();
    if (sx.size() != 4 || sw.size() != 3 || sw[1] != sx[1])
        shape_error("conv_time", "expects x [B,C,N,T] and w [O,C,k], got " + shape_str(sx) + " and " + shape_str(sw));
    if (dilation == 0) shape_error("conv_time", "dilation must be >= 1");
    const std::size_t batch = sx[0], c_in = sx[1], n = sx[2], t_in = sx[3];
    const std::size_t c_out = sw[0], k = sw[2];
    const std::size_t span = dilation * (k - 1);
    if (t_in < span + 1)
        shape_error("conv_time", "input length " + std::to_string(t_in) + " shorter than required " +
                                     std::to_string(span + 1));
    if (b.defined() && b.value().size() != c_out) shape_error("conv_time", "bias size mismatch");
    const std::size_t t_out = t_in - span;
    const std::size_t cols = n * t_out;
    using WMap = Eigen::Map<const MatR, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;
    auto tap = [=](const double* wraw, std::size_t m) {
        return WMap(wraw + m, c_out, c_in, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(c_in * k, k));
    };
    // Gathers the input columns read by tap m into a [C_in, N*T'] matrix.
    auto gather = [=](const double* xb, std::size_t m, MatR& out) {
        out.resize(c_in, cols);
        for (std::size_t i = 0; i < c_in; ++i)
            for (std::size_t node = 0; node < n; ++node) {
                const double* src = xb + (i * n + node) * t_in + m * dilation;
                std::copy(src, src + t_out, out.data() + i * cols + node * t_out);
            }
    };

    Tensor y({batch, c_out, n, t_out});
    MatR cols_buf;
    for (std::size_t bi = 0; bi < batch; ++bi) {
        MapR Y(y.raw() + bi * c_out * cols, c_out, cols);
        if (b.defined())
            Y.colwise() = CVecMap(b.value().raw(), c_out);
        else
            Y.setZero();
        for (std::size_t m = 0; m < k; ++m) {
            gather(x.value().raw() + bi * c_in * n * t_in, m, cols_buf);
            Y.noalias() += tap(w.value().raw(), m) * cols_buf;
        }
    }
    std::vector<Var> parents{x, w};
    const bool has_bias = b.defined();
    if (has_bias) parents.push_back(b);
    return make_result(std::move(y), std::move(parents),
                       [=](Node& self) {
                           Node& nx = *self.parents[0];
                           Node& nw = *self.parents[1];
                           Node* nb = has_bias ? self.parents[2].get() : nullptr;
                           MatR buf, dcols;
                           for (std::size_t bi = 0; bi < batch; ++bi) {
                               CMapR G(self.grad.raw() + bi * c_out * cols, c_out, cols);
                               if (nb && nb->requires_grad) VecMap(nb->grad_buffer().raw(), c_out) += G.rowwise().sum();
                               for (std::size_t m = 0; m < k; ++m) {
                                   if (nw.requires_grad) {
                                       gather(nx.value.raw() + bi * c_in * n * t_in, m, buf);
                                       MatR dw = G * buf.transpose();
                                       double* gw = nw.grad_buffer().raw();
                                       for (std::size_t o = 0; o < c_out; ++o)
                                           for (std::size_t i = 0; i < c_in; ++i) gw[(o * c_in + i) * k + m] += dw(o, i);
                                   }
                                   if (nx.requires_grad) {
                                       dcols.noalias() = tap(nw.value.raw(), m).transpose() * G;
                                       double* gx = nx.grad_buffer().raw() + bi * c_in * n * t_in;
                                       for (std::size_t i = 0; i < c_in; ++i)
                                           for (std::size_t node = 0; node < n; ++node) {
                                               double* dst = gx + (i * n + node) * t_in + m * dilation;
                                               const double* src = dcols.data() + i * cols + node * t_out;
                                               for (std::size_t tt = 0; tt < t_out; ++tt) dst[tt] += src[tt];
                                           }
                                   }
                               }
                           }
                       });
}

Var slice(const Var& x, std::size_t axis, std::size_t start, std::size_t length) {
    const auto s = split_axis(x.shape(), axis, "slice");
    if (start + length > s.extent)
        shape_error("slice", "range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                                 ") exceeds extent " + std::to_string(s.extent));
    Shape out_shape = x.shape();
    out_shape[axis] = length;
    Tensor y(out_shape);
    for (std::size_t o = 0; o < s.outer; ++o) {
        const double* src = x.value().raw() + (o * s.extent + start) * s.inner;
        std::copy(src, src + length * s.inner, y.raw() + o * length * s.inner);
    }
    return make_result(std::move(y), {x}, [s, start, length](Node& self) {
        double* gx = self.parents[0]->grad_buffer().raw();
        for (std::size_t o = 0; o < s.outer; ++o) {
            const double* src = self.grad.raw() + o * length * s.inner;
            double* dst = gx + (o * s.extent + start) * s.inner;
            for (std::size_t i = 0; i < length * s.inner; ++i) dst[i] += src[i];
        }
    });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
    if (parts.empty()) shape_error("concat", "no inputs");
    Shape out_shape = parts.front().shape();
    if (axis >= out_shape.size()) shape_error("concat", "axis out of range");
    std::size_t total = 0;
    std::vector<std::size_t> extents;
    for (const auto& p : parts) {
        Shape probe = p.shape();
        if (probe.size() != out_shape.size()) shape_error("concat", "rank mismatch");
        probe[axis] = out_shape[axis];
        if (probe != out_shape) shape_error("concat", "shape mismatch off the concat axis");
        extents.push_back(p.dim(axis));
        total += p.dim(axis);
    }
    out_shape[axis] = total;
    const auto s = split_axis(out_shape, axis, "concat");
    Tensor y(out_shape);
    std::size_t at = 0;
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
        const std::size_t len = extents[pi] * s.inner;
        for (std::size_t o = 0; o < s.outer; ++o) {
            const double* src = parts[pi].value().raw() + o * len;
            std::copy(src, src + len, y.raw() + (o * total + at) * s.inner);
        }
        at += extents[pi];
    }
    return make_result(std::move(y), parts, [s, extents, total](Node& self) {
        std::size_t at = 0;
        for (std::size_t pi = 0; pi < extents.size(); ++pi) {
            Node& np = *self.parents[pi];
            const std::size_t len = extents[pi] * s.inner;
            if (np.requires_grad) {
                double* gp = np.grad_buffer().raw();
                for (std::size_t o = 0; o < s.outer; ++o) {
                    const double* src = self.grad.raw() + (o * total + at) * s.inner;
                    for (std::size_t i = 0; i < len; ++i) gp[o * len + i] += src[i];
                }
            }
            at += extents[pi];
        }
    });
}

Var reshape(const Var& x, Shape shape) {
    Tensor y = x.value().reshaped(std::move(shape));
    return make_result(std::move(y), {x}, [](Node& self) {
        Tensor& gx = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
    });
}

Var permute(const Var& x, const std::vector<std::size_t>& perm) {
    const Shape& sx = x.shape();
    if (perm.size() != sx.size()) shape_error("permute", "permutation rank mismatch");
    std::vector<bool> used(perm.size(), false);
    Shape out_shape(perm.size());
    for (std::size_t d = 0; d < perm.size(); ++d) {
        if (perm[d] >= perm.size() || used[perm[d]]) shape_error("permute", "invalid permutation");
        used[perm[d]] = true;
        out_shape[d] = sx[perm[d]];
    }
    // Output stride in source coordinates; broadcast_loop walks the output in order.
    const auto src_strides = contiguous_strides(sx);
    BroadcastPlan plan;
    plan.out = out_shape;
    plan.stride_a.resize(perm.size());
    plan.stride_b.assign(perm.size(), 0);
    for (std::size_t d = 0; d < perm.size(); ++d) plan.stride_a[d] = src_strides[perm[d]];
    Tensor y(out_shape);
    const double* px = x.value().raw();
    broadcast_loop(plan, [&](std::size_t o, std::size_t i, std::size_t) { y[o] = px[i]; });
    return make_result(std::move(y), {x}, [plan](Node& self) {
        double* gx = self.parents[0]->grad_buffer().raw();
        const double* g = self.grad.raw();
        broadcast_loop(plan, [&](std::size_t o, std::size_t i, std::size_t) { gx[i] += g[o]; });
    });
}

Var broadcast_to(const Var& x, const Shape& shape) {
    if (x.shape() == shape) return x;
    return add(x, Var(Tensor(shape, 0.0)));
}

Var pad_front(const Var& x, std::size_t axis, std::size_t count) {
    if (count == 0) return x;
    Shape pad_shape = x.shape();
    if (axis >= pad_shape.size()) shape_error("pad_front", "axis out of range");
    pad_shape[axis] = count;
    return concat({Var(Tensor(pad_shape, 0.0)), x}, axis);
}

Var sum(const Var& x) {
    double total = 0.0;
    for (double v : x.value().values()) total += v;
    return make_result(Tensor::scalar(total), {x}, [](Node& self) {
        Tensor& gx = self.parents[0]->grad_buffer();
        const double g = self.grad[0];
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    });
}

Var mean(const Var& x) {
    const double n = static_cast<double>(x.value().size());
    return scale(sum(x), 1.0 / n);
}

Var add_n(const std::vector<Var>& terms) {
    if (terms.empty()) throw std::invalid_argument("add_n: no terms");
    Var acc = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
    return acc;
}

Var mean_abs_error(const Var& prediction, const Var& target) {
    if (prediction.shape() != target.shape())
        shape_error("mean_abs_error", shape_str(prediction.shape()) + " vs " + shape_str(target.shape()));
    return mean(abs(sub(prediction, target)));
}

Var detach(const Var& x) { return Var(x.value(), false); }

}  // namespace sdlpgc::ag
