#pragma once

// Scalar reference implementations written with plain loops over std::vector.
// They share nothing with the library's vectorized kernels.

#include <cmath>
#include <vector>

#include "sdlpgc/tensor.hpp"

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

inline Mat to_mat(const sdlpgc::Tensor& t, std::size_t offset, std::size_t rows, std::size_t cols) {
    Mat m(rows, Vec(cols));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) m[r][c] = t[offset + r * cols + c];
    return m;
}

inline Mat to_mat(const sdlpgc::Tensor& t) { return to_mat(t, 0, t.dim(0), t.dim(1)); }

inline Vec to_vec(const sdlpgc::Tensor& t) { return Vec(t.values().begin(), t.values().end()); }

// y = W x + b with W stored [out][in].
inline Vec affine(const Mat& w, const Vec& b, const Vec& x) {
    Vec y(w.size(), 0.0);
    for (std::size_t o = 0; o < w.size(); ++o) {
        double acc = b.empty() ? 0.0 : b[o];
        for (std::size_t i = 0; i < x.size(); ++i) acc += w[o][i] * x[i];
        y[o] = acc;
    }
    return y;
}

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double relu(double x) { return x > 0.0 ? x : 0.0; }

// Normalizes all entries together; gamma/beta of size 1 apply to every entry.
inline Vec layer_norm(const Vec& x, const Vec& gamma, const Vec& beta, double eps = 1e-5) {
    double mu = 0.0;
    for (double v : x) mu += v;
    mu /= static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mu) * (v - mu);
    var /= static_cast<double>(x.size());
    Vec y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double g = gamma.size() == 1 ? gamma[0] : gamma[i];
        const double b = beta.size() == 1 ? beta[0] : beta[i];
        y[i] = (x[i] - mu) / std::sqrt(var + eps) * g + b;
    }
    return y;
}

inline Vec softmax(const Vec& x) {
    double m = x[0];
    for (double v : x) m = std::max(m, v);
    double z = 0.0;
    Vec y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) z += (y[i] = std::exp(x[i] - m));
    for (double& v : y) v /= z;
    return y;
}

inline Mat row_softmax(const Mat& m) {
    Mat out;
    for (const auto& row : m) out.push_back(softmax(row));
    return out;
}

}  // namespace oracle
